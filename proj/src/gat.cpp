#include "atomic_sm/gat.hpp"

#include <cmath>

#include "atomic_sm/text_io.hpp"

namespace atomic_sm::model {

namespace {
ad::Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng) {
  std::vector<double> values(ad::shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return ad::Tensor(std::move(shape), std::move(values), true);
}
}  // namespace

GatParams GatParams::init(std::size_t input, std::size_t head_dim, std::size_t heads, Rng& rng, double negative_slope) {
  if (heads == 0) throw std::invalid_argument("GAT needs at least one head");
  GatParams p;
  p.negative_slope = negative_slope;
  // Glorot-uniform bounds
  const double w_bound = std::sqrt(6.0 / static_cast<double>(input + head_dim));
  const double a_bound = std::sqrt(6.0 / static_cast<double>(2 * head_dim + 1));
  for (std::size_t h = 0; h < heads; ++h) {
    GatHead head;
    head.projection = uniform_tensor({input, head_dim}, w_bound, rng);
    head.attention = uniform_tensor({2 * head_dim, 1}, a_bound, rng);
    p.heads.push_back(std::move(head));
  }
  return p;
}

std::vector<ad::NamedTensor> GatParams::named(const std::string& prefix) const {
  std::vector<ad::NamedTensor> out;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const std::string base = prefix + ".head" + std::to_string(h);
    out.push_back({base + ".projection", heads[h].projection});
    out.push_back({base + ".attention", heads[h].attention});
  }
  return out;
}

GatOutput gat_forward(ad::Tape& tape, const ad::Tensor& x, const graph::StockGraph& graph, const GatParams& params) {
  const std::size_t n = graph.size();
  if (x.rank() != 2 || x.dim(0) != n || x.dim(1) != params.input_size()) {
    throw ad::ShapeError("gat_forward: features " + ad::shape_to_string(x.shape()) + " do not align with " +
                         std::to_string(n) + " graph nodes of width " + std::to_string(params.input_size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!graph.has_edge(i, i)) {
      throw ad::ContractViolation("gat_forward: node '" + graph.nodes()[i] + "' has no self-loop");
    }
  }
  const ad::Mask mask = graph.adjacency_mask();
  const std::size_t d = params.head_size();

  GatOutput out;
  std::vector<ad::Tensor> head_outputs;
  for (const auto& head : params.heads) {
    const ad::Tensor wx = ad::matmul(tape, x, head.projection);                             // N x d_g
    const ad::Tensor src = ad::matmul(tape, wx, ad::slice_rows(tape, head.attention, 0, d));  // N x 1
    const ad::Tensor dst = ad::matmul(tape, wx, ad::slice_rows(tape, head.attention, d, 2 * d));
    const ad::Tensor logits = ad::leaky_relu(tape, ad::pairwise_sum(tape, src, dst), params.negative_slope);
    const ad::Tensor alpha = ad::softmax_rows(tape, logits, mask);
    head_outputs.push_back(ad::elu(tape, ad::matmul(tape, alpha, wx)));
    out.attention.push_back(alpha);
  }
  out.features = head_outputs.size() == 1 ? head_outputs.front() : ad::concat(tape, head_outputs);
  return out;
}

HeadParams HeadParams::init(std::size_t input, Rng& rng) {
  HeadParams p;
  p.weight = uniform_tensor({input, 1}, 1.0 / std::sqrt(static_cast<double>(input)), rng);
  p.bias = ad::Tensor::scalar(0.0, true);
  return p;
}

std::vector<ad::NamedTensor> HeadParams::named(const std::string& prefix) const {
  return {{prefix + ".weight", weight}, {prefix + ".bias", bias}};
}

ad::Tensor classify(ad::Tape& tape, const ad::Tensor& z, const HeadParams& head) {
  if (z.rank() != 2 || z.dim(1) != head.weight.dim(0)) {
    throw ad::ShapeError("classify: features " + ad::shape_to_string(z.shape()) + " vs weights " +
                         ad::shape_to_string(head.weight.shape()));
  }
  const ad::Tensor logits = ad::add_scalar(tape, ad::matmul(tape, z, head.weight), head.bias);
  return ad::reshape(tape, ad::sigmoid(tape, logits), {z.dim(0)});
}

std::string attention_triplets(const std::string& date, const graph::StockGraph& graph,
                               const std::vector<ad::Tensor>& attention) {
  std::string out;
  const std::size_t n = graph.size();
  for (std::size_t h = 0; h < attention.size(); ++h)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j : graph.neighbors(i)) {
        out += date + "," + std::to_string(h) + "," + graph.nodes()[i] + "," + graph.nodes()[j] + "," +
               io::format_double(attention[h].at(i, j)) + "\n";
      }
  return out;
}

}  // namespace atomic_sm::model
