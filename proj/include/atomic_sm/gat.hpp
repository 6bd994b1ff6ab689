#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "atomic_sm/autodiff.hpp"
#include "atomic_sm/relation_graph.hpp"
#include "atomic_sm/rng.hpp"

namespace atomic_sm::model {

struct GatHead {
  ad::Tensor projection;  // d_f x d_g
  ad::Tensor attention;   // 2*d_g x 1; first half scores the receiving node, second half the sender
};

struct GatParams {
  std::vector<GatHead> heads;
  double negative_slope = 0.2;

  std::size_t head_count() const { return heads.size(); }
  std::size_t input_size() const { return heads.at(0).projection.dim(0); }
  std::size_t head_size() const { return heads.at(0).projection.dim(1); }
  std::size_t output_size() const { return head_count() * head_size(); }

  static GatParams init(std::size_t input, std::size_t head_dim, std::size_t heads, Rng& rng,
                        double negative_slope = 0.2);
  std::vector<ad::NamedTensor> named(const std::string& prefix) const;
};

struct GatOutput {
  ad::Tensor features;                 // N x (H * d_g), heads concatenated
  std::vector<ad::Tensor> attention;   // per head, N x N row-stochastic over N_i
};

/// One multi-head graph attention layer. Per head:
///   e_ij = LeakyReLU(a . [W x_i ++ W x_j]) for j in N_i,
///   alpha_i = softmax over N_i,  out_i = ELU(sum_j alpha_ij W x_j).
/// Rows of `x` align with graph.nodes(); every node must carry a self-loop.
GatOutput gat_forward(ad::Tape& tape, const ad::Tensor& x, const graph::StockGraph& graph, const GatParams& params);

struct HeadParams {
  ad::Tensor weight;  // (H * d_g) x 1
  ad::Tensor bias;    // scalar

  static HeadParams init(std::size_t input, Rng& rng);
  std::vector<ad::NamedTensor> named(const std::string& prefix) const;
};

/// p_i = sigmoid(w . z_i + b), returned as a length-N vector.
ad::Tensor classify(ad::Tape& tape, const ad::Tensor& z, const HeadParams& head);

/// Sparse (i, j, alpha) triplets of one day's attention, for the attention dump file.
std::string attention_triplets(const std::string& date, const graph::StockGraph& graph,
                               const std::vector<ad::Tensor>& attention);

}  // namespace atomic_sm::model
