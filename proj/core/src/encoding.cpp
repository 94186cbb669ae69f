#include "frebis/encoding.hpp"

#include <cmath>
#include <string>

#include "frebis/errors.hpp"

namespace frebis {

const char* band_name(Band b) {
  switch (b) {
    case Band::low: return "low";
    case Band::mid: return "mid";
    case Band::high: return "high";
  }
  return "?";
}

void BandSpec::validate() const {
  if (total_levels < 1) throw ValidationError("total_levels must be positive");
  int total = 0;
  for (int c : counts) {
    if (c < 0) throw ValidationError("band counts must be non-negative");
    total += c;
  }
  if (total != total_levels) {
    throw ValidationError("band counts sum to " + std::to_string(total) + " but total_levels is " +
                          std::to_string(total_levels));
  }
}

int BandSpec::first_level(Band b) const {
  int first = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(b); ++i) first += counts[i];
  return first;
}

std::array<std::size_t, 3> banded_dims(const BandSpec& spec) {
  spec.validate();
  std::array<std::size_t, 3> dims{};
  for (std::size_t i = 0; i < 3; ++i) {
    dims[i] = static_cast<std::size_t>(6 * spec.counts[i]) + (spec.include_raw_coords ? 3 : 0);
  }
  return dims;
}

namespace {

void check_point(std::span<const double, 3> x) {
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError("encode_position: non-finite coordinate");
  }
}

template <class T, class Out>
void append_levels(const T* x, int first, int count, Out out) {
  for (int k = first; k < first + count; ++k) {
    const T f = std::ldexp(T(1), k);
    for (int a = 0; a < 3; ++a) *out++ = std::sin(f * x[a]);
    for (int a = 0; a < 3; ++a) *out++ = std::cos(f * x[a]);
  }
}

}  // namespace

std::vector<double> full_encoding(std::span<const double, 3> x, int total_levels) {
  check_point(x);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(6 * total_levels));
  append_levels(x.data(), 0, total_levels, std::back_inserter(out));
  return out;
}

BandedEncoding encode_position(std::span<const double, 3> x, const BandSpec& spec) {
  spec.validate();
  check_point(x);
  BandedEncoding enc;
  for (Band b : kBands) {
    auto& v = enc.bands[static_cast<std::size_t>(b)];
    append_levels(x.data(), spec.first_level(b), spec.level_count(b), std::back_inserter(v));
    if (spec.include_raw_coords) v.insert(v.end(), x.begin(), x.end());
  }
  return enc;
}

template <class T>
std::array<Tensor<T>, 3> encode_batch(std::span<const T> points, const BandSpec& spec) {
  if (points.size() % 3 != 0) throw ShapeError("encode_batch: point buffer is not B x 3");
  const auto dims = banded_dims(spec);
  const std::size_t n = points.size() / 3;
  std::array<Tensor<T>, 3> out;
  for (Band b : kBands) {
    const auto bi = static_cast<std::size_t>(b);
    std::vector<T> values(n * dims[bi]);
    for (std::size_t p = 0; p < n; ++p) {
      const T* x = points.data() + 3 * p;
      for (int a = 0; a < 3; ++a) {
        if (!std::isfinite(x[a])) throw NumericError("encode_batch: non-finite coordinate");
      }
      T* row = values.data() + p * dims[bi];
      append_levels(x, spec.first_level(b), spec.level_count(b), row);
      if (spec.include_raw_coords) {
        T* tail = row + dims[bi] - 3;
        tail[0] = x[0];
        tail[1] = x[1];
        tail[2] = x[2];
      }
    }
    out[bi] = Tensor<T>::from({n, dims[bi]}, std::move(values));
  }
  return out;
}

template std::array<Tensor<float>, 3> encode_batch(std::span<const float>, const BandSpec&);
template std::array<Tensor<double>, 3> encode_batch(std::span<const double>, const BandSpec&);

}  // namespace frebis
