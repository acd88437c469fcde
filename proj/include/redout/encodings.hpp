#pragma once

#include "redout/graph.hpp"
#include "redout/matrix.hpp"

namespace redout {

/// Structure-derived node encodings: the graph keeps its edges, the feature
/// matrix is replaced by [rw || lp].
struct PositionalView {
  DenseMatrix rw_encoding;  // n x r, column t = diag of RW^(t+1)
  DenseMatrix lp_encoding;  // n x 1, diag of the normalized Laplacian
  DenseMatrix combined;     // n x (r+1)
};

/// Column t holds the diagonal of (A D^-1)^(t+1): the probability that a
/// (t+1)-step random walk returns to its start. Isolated nodes get all-zero
/// rows and a warning.
DenseMatrix rw_diffusion_encoding(const Graph& graph, int walk_length);

/// Diagonal of I - D^-1/2 A D^-1/2: 1 for nodes with degree > 0, else 0.
DenseMatrix laplacian_positional_encoding(const Graph& graph);

PositionalView augmented_view(const Graph& graph, int walk_length);

}  // namespace redout
