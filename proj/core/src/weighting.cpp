#include "frebis/weighting.hpp"

#include <vector>

#include "frebis/errors.hpp"

namespace frebis {

template <class T>
FeatureBatch<T> normalize_columns(const FeatureBatch<T>& f) {
  FeatureBatch<T> out;
  for (std::size_t b = 0; b < 3; ++b) {
    // max(||c||, eps) == sqrt(max(||c||^2, eps^2)); clamping first keeps the
    // gradient of a zero column finite.
    const T floor_sq = static_cast<T>(kColumnNormFloor * kColumnNormFloor);
    const auto norm = sqrt(clamp_min(row_sum(square(f.columns[b])), floor_sq));
    out.columns[b] = div(f.columns[b], norm);
  }
  return out;
}

template <class T>
Tensor<T> similarity(const FeatureBatch<T>& fb) {
  // Compute the upper triangle once and mirror it; S is symmetric.
  std::array<std::array<Tensor<T>, 3>, 3> s;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i; j < 3; ++j) {
      s[i][j] = row_sum(mul(fb.columns[i], fb.columns[j]));
      s[j][i] = s[i][j];
    }
  }
  std::vector<Tensor<T>> parts;
  parts.reserve(9);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) parts.push_back(s[i][j]);
  }
  return concat_cols<T>(parts);
}

template <class T>
Tensor<T> dissimilarity(const Tensor<T>& s) {
  if (s.cols() != 9) throw ShapeError("dissimilarity expects B x 9 similarity entries");
  // S' = S - I, then d = (2I - S') 1.
  std::vector<T> eye(9, T(0));
  eye[0] = eye[4] = eye[8] = T(1);
  const auto s_prime = sub(s, Tensor<T>::from({1, 9}, eye));
  std::vector<Tensor<T>> d;
  d.reserve(3);
  for (std::size_t i = 0; i < 3; ++i) {
    d.push_back(add_scalar(neg(row_sum(slice_cols(s_prime, 3 * i, 3))), T(2)));
  }
  return concat_cols<T>(d);
}

template <class T>
Tensor<T> band_weights(const Tensor<T>& d, T tau) {
  if (!(tau > T(0))) throw ValidationError("weighting temperature must be positive");
  return softmax(scale(d, T(1) / tau));
}

template <class T>
FeatureBatch<T> apply_weights(const FeatureBatch<T>& f, const Tensor<T>& w) {
  if (w.cols() != 3 || w.rows() != f.points()) throw ShapeError("apply_weights: weights must be B x 3");
  FeatureBatch<T> out;
  for (std::size_t b = 0; b < 3; ++b) out.columns[b] = mul(f.columns[b], slice_cols(w, b, 1));
  return out;
}

template <class T>
WeightingResult<T> redundancy_weighting(const FeatureBatch<T>& f, T tau) {
  WeightingResult<T> r;
  r.similarity = similarity(normalize_columns(f));
  r.dissimilarity = dissimilarity(r.similarity);
  r.weights = band_weights(r.dissimilarity, tau);
  r.weighted = apply_weights(f, r.weights);
  return r;
}

template <class T>
FeatureBatch<T> average_weighting(const FeatureBatch<T>& f) {
  FeatureBatch<T> out;
  for (std::size_t b = 0; b < 3; ++b) out.columns[b] = scale(f.columns[b], T(1) / T(3));
  return out;
}

#define FREBIS_INSTANTIATE(T)                                                     \
  template FeatureBatch<T> normalize_columns(const FeatureBatch<T>&);             \
  template Tensor<T> similarity(const FeatureBatch<T>&);                          \
  template Tensor<T> dissimilarity(const Tensor<T>&);                             \
  template Tensor<T> band_weights(const Tensor<T>&, T);                           \
  template FeatureBatch<T> apply_weights(const FeatureBatch<T>&, const Tensor<T>&); \
  template WeightingResult<T> redundancy_weighting(const FeatureBatch<T>&, T);    \
  template FeatureBatch<T> average_weighting(const FeatureBatch<T>&);

FREBIS_INSTANTIATE(float)
FREBIS_INSTANTIATE(double)
#undef FREBIS_INSTANTIATE

}  // namespace frebis
