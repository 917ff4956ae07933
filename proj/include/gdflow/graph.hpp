#pragma once

#include "gdflow/autodiff.hpp"

#include <vector>

namespace gdflow::graph {

// Row-stochastic adjacency from node embeddings: softmax rows of relu(E E^T).
// embed: (n, d_e) -> (n, n).
ad::Var adjacency(ad::Var embed);

// Chebyshev polynomial stack of the adjacency:
// C_0 = I, C_1 = A, C_k = 2 A C_{k-1} - C_{k-2}. Returns order+1 matrices.
std::vector<ad::Var> chebyshev(ad::Var adj, int order);

// Graph convolution over node states: sum_k C_k X W_k.
// x: (b, n, h_in), weights[k]: (h_in, h_out) -> (b, n, h_out).
ad::Var conv(const std::vector<ad::Var>& cheb, ad::Var x,
             const std::vector<ad::Var>& weights);

} // namespace gdflow::graph
