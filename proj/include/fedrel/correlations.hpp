#pragma once

#include "fedrel/tensor.hpp"

namespace fedrel {

enum class AdjacencyKind {
  kKnn,
  kPcc,
  kPlv,
  kDynamicSpatial,
  kDynamicTemporal,
};

/// Non-negative N x N node-correlation matrix. Static kinds come from the
/// functions below; dynamic kinds are produced row-stochastic by the model's
/// correlation layers.
struct Adjacency {
  Tensor matrix;
  AdjacencyKind kind;
};

/// Directed binary k-nearest-neighbour graph over feature rows (Euclidean
/// distance, self excluded). Ties break toward the lower node index.
Adjacency knn_adjacency(const Tensor& features, int k);

/// Absolute Pearson correlation between feature rows; diagonal 1.
Adjacency pcc_adjacency(const Tensor& features);

/// Phase-locking value between raw signal rows: the magnitude of the mean
/// phase-difference phasor, with instantaneous phase taken from the analytic
/// signal (direct DFT, negative frequencies zeroed). Diagonal 1; values in
/// [0, 1]. Requires at least 4 samples per row and non-constant rows.
Adjacency plv_adjacency(const Tensor& signals);

}  // namespace fedrel
