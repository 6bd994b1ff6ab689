#include "atomic_sm/encoders.hpp"

#include <cmath>

namespace atomic_sm::model {

namespace {

ad::Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng) {
  std::vector<double> values(ad::shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return ad::Tensor(std::move(shape), std::move(values), true);
}

}  // namespace

TemporalEncoderParams TemporalEncoderParams::init(std::size_t input, std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  TemporalEncoderParams p;
  p.w_input = uniform_tensor({input, 4 * hidden}, bound, rng);
  p.w_hidden = uniform_tensor({hidden, 4 * hidden}, bound, rng);
  std::vector<double> bias(4 * hidden, 0.0);
  for (std::size_t k = hidden; k < 2 * hidden; ++k) bias[k] = 1.0;
  p.bias = ad::Tensor({4 * hidden}, std::move(bias), true);
  p.attention = uniform_tensor({hidden, 1}, bound, rng);
  return p;
}

std::vector<ad::NamedTensor> TemporalEncoderParams::named(const std::string& prefix) const {
  return {{prefix + ".w_input", w_input},
          {prefix + ".w_hidden", w_hidden},
          {prefix + ".bias", bias},
          {prefix + ".attention", attention}};
}

EncoderOutput encode_sequences(ad::Tape& tape, const std::vector<ad::Tensor>& steps,
                               const TemporalEncoderParams& params) {
  if (steps.empty()) throw ad::ShapeError("encoder: empty sequence");
  const std::size_t n = steps.front().dim(0);
  const std::size_t h = params.hidden_size();
  for (const auto& x : steps) {
    if (x.rank() != 2 || x.dim(0) != n || x.dim(1) != params.input_size()) {
      throw ad::ShapeError("encoder: step of shape " + ad::shape_to_string(x.shape()) + ", expected [" +
                           std::to_string(n) + "x" + std::to_string(params.input_size()) + "]");
    }
    for (double v : x.data()) {
      if (!std::isfinite(v)) throw std::domain_error("encoder: non-finite input feature");
    }
  }

  const ad::Tensor bias = ad::broadcast_rows(tape, params.bias, n);
  ad::Tensor hidden = ad::Tensor::zeros({n, h});
  ad::Tensor cell = ad::Tensor::zeros({n, h});
  EncoderOutput out;
  std::vector<ad::Tensor> scores;
  for (const auto& x : steps) {
    ad::Tensor gates = ad::add(tape, ad::matmul(tape, x, params.w_input), ad::matmul(tape, hidden, params.w_hidden));
    gates = ad::add(tape, gates, bias);
    const ad::Tensor in_gate = ad::sigmoid(tape, ad::slice_last(tape, gates, 0, h));
    const ad::Tensor forget_gate = ad::sigmoid(tape, ad::slice_last(tape, gates, h, 2 * h));
    const ad::Tensor candidate = ad::tanh(tape, ad::slice_last(tape, gates, 2 * h, 3 * h));
    const ad::Tensor out_gate = ad::sigmoid(tape, ad::slice_last(tape, gates, 3 * h, 4 * h));
    cell = ad::add(tape, ad::mul(tape, forget_gate, cell), ad::mul(tape, in_gate, candidate));
    hidden = ad::mul(tape, out_gate, ad::tanh(tape, cell));
    out.hidden.push_back(hidden);
    scores.push_back(ad::matmul(tape, hidden, params.attention));  // N x 1
  }

  out.attention = ad::softmax_rows(tape, ad::concat(tape, scores));  // N x T
  ad::Tensor pooled;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const ad::Tensor weighted =
        ad::scale_rows(tape, out.hidden[t], ad::slice_last(tape, out.attention, t, t + 1));
    pooled = t == 0 ? weighted : ad::add(tape, pooled, weighted);
  }
  out.encoding = pooled;
  return out;
}

std::vector<ad::Tensor> to_steps(const std::vector<const ad::Tensor*>& sequences) {
  if (sequences.empty()) throw ad::ShapeError("to_steps: no sequences");
  const auto& first = *sequences.front();
  if (first.rank() != 2) throw ad::ShapeError("to_steps: expected T x in matrices");
  const std::size_t T = first.dim(0), width = first.dim(1), n = sequences.size();
  std::vector<ad::Tensor> steps;
  steps.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> rows(n * width);
    for (std::size_t s = 0; s < n; ++s) {
      const auto& seq = *sequences[s];
      if (seq.shape() != first.shape()) {
        throw ad::ShapeError("to_steps: sequence shape " + ad::shape_to_string(seq.shape()) + " vs " +
                             ad::shape_to_string(first.shape()));
      }
      for (std::size_t k = 0; k < width; ++k) rows[s * width + k] = seq[t * width + k];
    }
    steps.push_back(ad::Tensor::matrix(n, width, std::move(rows)));
  }
  return steps;
}

EncoderOutput encode_sequence(ad::Tape& tape, const ad::Tensor& features, const TemporalEncoderParams& params) {
  if (features.rank() != 2 || features.dim(0) == 0) {
    throw ad::ShapeError("encoder: expected T x in features, got " + ad::shape_to_string(features.shape()));
  }
  return encode_sequences(tape, to_steps({&features}), params);
}

ad::Tensor encode_technical(ad::Tape& tape, const ad::Tensor& price_feats, const TechnicalEncoderParams& params) {
  return encode_sequence(tape, price_feats, params).encoding;
}

ad::Tensor encode_media(ad::Tape& tape, const ad::Tensor& media_feats, const MediaEncoderParams& params) {
  return encode_sequence(tape, media_feats, params).encoding;
}

FusionParams FusionParams::init(std::size_t price_dim, std::size_t fused_dim, std::size_t media_dim, Rng& rng) {
  // fan-in of each output is price_dim * media_dim products
  const double bound = 1.0 / std::sqrt(static_cast<double>(price_dim * media_dim));
  FusionParams p;
  p.weight = uniform_tensor({price_dim, fused_dim, media_dim}, bound, rng);
  p.bias = ad::Tensor::zeros({fused_dim}, true);
  return p;
}

std::vector<ad::NamedTensor> FusionParams::named(const std::string& prefix) const {
  return {{prefix + ".weight", weight}, {prefix + ".bias", bias}};
}

ad::Tensor fuse(ad::Tape& tape, const ad::Tensor& q, const ad::Tensor& c, const FusionParams& params,
                bool apply_tanh) {
  const ad::Tensor raw = ad::bilinear(tape, q, params.weight, c);
  const ad::Tensor biased = ad::add(tape, raw, ad::broadcast_rows(tape, params.bias, q.dim(0)));
  return apply_tanh ? ad::tanh(tape, biased) : biased;
}

}  // namespace atomic_sm::model
