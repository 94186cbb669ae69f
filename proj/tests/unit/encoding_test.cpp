#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "frebis/encoding.hpp"
#include "frebis/errors.hpp"
#include "frebis/rng.hpp"

namespace frebis {
namespace {

TEST(BandedDims, DefaultSplit) {
  const auto d = banded_dims(BandSpec{});
  EXPECT_EQ(d, (std::array<std::size_t, 3>{15, 15, 15}));
}

TEST(BandedDims, UnevenSplit) {
  BandSpec s;
  s.counts = {1, 2, 3};
  EXPECT_EQ(banded_dims(s), (std::array<std::size_t, 3>{9, 15, 21}));
}

TEST(BandedDims, WithoutRawCoordinates) {
  BandSpec s;
  s.include_raw_coords = false;
  EXPECT_EQ(banded_dims(s), (std::array<std::size_t, 3>{12, 12, 12}));
}

TEST(BandSpec, RejectsBadCounts) {
  BandSpec s;
  s.counts = {2, 2, 3};
  EXPECT_THROW(s.validate(), ValidationError);
  s.counts = {-1, 4, 3};
  s.total_levels = 6;
  EXPECT_THROW(s.validate(), ValidationError);
}

// Reference layout written out by hand: per frequency, sin xyz then cos xyz.
std::vector<double> reference_levels(const std::array<double, 3>& x, int first, int count) {
  std::vector<double> out;
  for (int k = first; k < first + count; ++k) {
    const double f = std::ldexp(1.0, k);
    for (int a = 0; a < 3; ++a) out.push_back(std::sin(f * x[a]));
    for (int a = 0; a < 3; ++a) out.push_back(std::cos(f * x[a]));
  }
  return out;
}

TEST(EncodePosition, MatchesReferenceLayout) {
  const std::array<double, 3> x{0.3, -0.7, 1.1};
  BandSpec s;
  s.counts = {1, 2, 3};
  const auto enc = encode_position(x, s);
  int first = 0;
  for (Band b : kBands) {
    auto expected = reference_levels(x, first, s.level_count(b));
    expected.insert(expected.end(), x.begin(), x.end());
    ASSERT_EQ(enc[b].size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_DOUBLE_EQ(enc[b][i], expected[i]);
    first += s.level_count(b);
  }
}

TEST(EncodePosition, BandsConcatenateToFullEncoding) {
  Rng rng(3);
  BandSpec s;
  s.include_raw_coords = false;
  s.total_levels = 7;
  s.counts = {2, 3, 2};
  for (int trial = 0; trial < 20; ++trial) {
    const std::array<double, 3> x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto enc = encode_position(x, s);
    std::vector<double> joined;
    for (Band b : kBands) joined.insert(joined.end(), enc[b].begin(), enc[b].end());
    const auto full = full_encoding(x, 7);
    ASSERT_EQ(joined, full);
  }
}

// |sin a - sin b|^2 + |cos a - cos b|^2 <= (a - b)^2 per axis and frequency.
TEST(EncodePosition, BandLipschitzBound) {
  Rng rng(4);
  const BandSpec s;
  for (int trial = 0; trial < 200; ++trial) {
    const std::array<double, 3> x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::array<double, 3> y = x;
    for (auto& v : y) v += rng.uniform(-0.05, 0.05);
    double dx2 = 0;
    for (int a = 0; a < 3; ++a) dx2 += (x[a] - y[a]) * (x[a] - y[a]);
    const auto ex = encode_position(x, s);
    const auto ey = encode_position(y, s);
    for (Band b : kBands) {
      double bound = 1.0;  // raw coordinates
      for (int k = s.first_level(b); k < s.first_level(b) + s.level_count(b); ++k) bound += std::ldexp(1.0, 2 * k);
      double d2 = 0;
      for (std::size_t i = 0; i < ex[b].size(); ++i) d2 += (ex[b][i] - ey[b][i]) * (ex[b][i] - ey[b][i]);
      EXPECT_LE(d2, bound * dx2 * (1 + 1e-12));
    }
  }
}

TEST(EncodeBatch, RowsMatchScalarEncoding) {
  const std::vector<double> pts{0.1, 0.2, 0.3, -0.4, 0.5, -0.6};
  const BandSpec s;
  const auto batch = encode_batch<double>(pts, s);
  for (std::size_t p = 0; p < 2; ++p) {
    const std::array<double, 3> x{pts[3 * p], pts[3 * p + 1], pts[3 * p + 2]};
    const auto enc = encode_position(x, s);
    for (Band b : kBands) {
      const auto& t = batch[static_cast<std::size_t>(b)];
      ASSERT_EQ(t.cols(), enc[b].size());
      for (std::size_t i = 0; i < enc[b].size(); ++i) EXPECT_DOUBLE_EQ(t.at(p, i), enc[b][i]);
    }
  }
}

TEST(EncodeBatch, NonFiniteInputThrows) {
  const std::vector<double> pts{0.1, NAN, 0.3};
  EXPECT_THROW(encode_batch<double>(pts, BandSpec{}), NumericError);
}

}  // namespace
}  // namespace frebis
