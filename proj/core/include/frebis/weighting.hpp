#pragma once

// Redundancy-aware weighting of the three band features.
//
// For each point's F = [f_low, f_mid, f_high]:
//   F_bar = F with each column divided by max(||column||_2, eps)
//   S     = F_bar^T F_bar                       (3 x 3)
//   S'    = S - I
//   d     = (2I - S') 1                         (d_i = 2 - sum_j S'_ij)
//   w     = softmax(d / tau)
//   out   = F diag(w)
// Every step is differentiable and batched over points.

#include <array>

#include "frebis/encoders.hpp"

namespace frebis {

inline constexpr double kColumnNormFloor = 1e-12;
inline constexpr double kDefaultTemperature = 0.5;

template <class T>
FeatureBatch<T> normalize_columns(const FeatureBatch<T>& f);

/// B x 9, row-major 3 x 3 similarity per point.
template <class T>
Tensor<T> similarity(const FeatureBatch<T>& normalized);

/// B x 9 similarity -> B x 3 dissimilarity.
template <class T>
Tensor<T> dissimilarity(const Tensor<T>& s);

/// B x 3 dissimilarity -> B x 3 weights. Throws ValidationError if tau <= 0.
template <class T>
Tensor<T> band_weights(const Tensor<T>& d, T tau);

/// Column b of each point scaled by w[:, b].
template <class T>
FeatureBatch<T> apply_weights(const FeatureBatch<T>& f, const Tensor<T>& w);

template <class T>
struct WeightingResult {
  FeatureBatch<T> weighted;
  Tensor<T> similarity;     // B x 9
  Tensor<T> dissimilarity;  // B x 3
  Tensor<T> weights;        // B x 3
};

template <class T>
WeightingResult<T> redundancy_weighting(const FeatureBatch<T>& f, T tau);

/// Ablation path: every column scaled by 1/3 (uniform average).
template <class T>
FeatureBatch<T> average_weighting(const FeatureBatch<T>& f);

}  // namespace frebis
