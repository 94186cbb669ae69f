#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "frebis/tensor.hpp"

namespace frebis {

enum class Band : std::size_t { low = 0, mid = 1, high = 2 };
inline constexpr std::array<Band, 3> kBands{Band::low, Band::mid, Band::high};
const char* band_name(Band b);

/// Partition of the L positional-encoding frequencies 2^0..2^(L-1) into
/// low/middle/high bands. The lowest `counts[0]` frequencies go to the low
/// band, the next `counts[1]` to the middle band, the rest to the high band.
struct BandSpec {
  int total_levels = 6;
  std::array<int, 3> counts{2, 2, 2};
  bool include_raw_coords = true;

  /// Throws ValidationError when counts are negative or do not sum to L.
  void validate() const;
  int first_level(Band b) const;
  int level_count(Band b) const { return counts[static_cast<std::size_t>(b)]; }
};

/// One real vector per band. Layout inside a band: for each frequency k in
/// ascending order, sin(2^k x_0..2), then cos(2^k x_0..2); raw x last when
/// enabled.
struct BandedEncoding {
  std::array<std::vector<double>, 3> bands;
  const std::vector<double>& operator[](Band b) const { return bands[static_cast<std::size_t>(b)]; }
};

std::array<std::size_t, 3> banded_dims(const BandSpec& spec);

/// Unsplit sinusoidal encoding of all L frequencies in the same layout
/// (no raw coordinates).
std::vector<double> full_encoding(std::span<const double, 3> x, int total_levels);

BandedEncoding encode_position(std::span<const double, 3> x, const BandSpec& spec);

/// Batched form: points is B x 3 (row per point); returns one B x dim tensor
/// per band. Inputs are data, so the results carry no history.
template <class T>
std::array<Tensor<T>, 3> encode_batch(std::span<const T> points, const BandSpec& spec);

}  // namespace frebis
