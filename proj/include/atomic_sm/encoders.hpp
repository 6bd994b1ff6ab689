#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "atomic_sm/autodiff.hpp"
#include "atomic_sm/rng.hpp"

namespace atomic_sm::model {

/// LSTM (gate order: input, forget, cell, output) followed by temporal attention
/// over its hidden states. Used for both the price and the media channels.
struct TemporalEncoderParams {
  ad::Tensor w_input;   // in x 4h
  ad::Tensor w_hidden;  // h x 4h
  ad::Tensor bias;      // 4h
  ad::Tensor attention; // h x 1; scores day i as h_i . attention

  std::size_t input_size() const { return w_input.dim(0); }
  std::size_t hidden_size() const { return w_hidden.dim(0); }

  /// Uniform(-1/sqrt(h), 1/sqrt(h)) weights, forget-gate bias 1.
  static TemporalEncoderParams init(std::size_t input, std::size_t hidden, Rng& rng);
  std::vector<ad::NamedTensor> named(const std::string& prefix) const;
};

using TechnicalEncoderParams = TemporalEncoderParams;
using MediaEncoderParams = TemporalEncoderParams;

struct EncoderOutput {
  ad::Tensor encoding;                // N x h, attention-weighted sum of hidden states
  ad::Tensor attention;               // N x T, rows sum to 1
  std::vector<ad::Tensor> hidden;     // T tensors of N x h
};

/// Runs N sequences in lockstep. `steps[t]` is the N x in input for day t.
EncoderOutput encode_sequences(ad::Tape& tape, const std::vector<ad::Tensor>& steps,
                               const TemporalEncoderParams& params);

/// Single sequence: `features` is T x in; returns the 1 x h encoding.
EncoderOutput encode_sequence(ad::Tape& tape, const ad::Tensor& features, const TemporalEncoderParams& params);

/// Price channel: T x 3 day-over-day ratios -> q_t (1 x d_h).
ad::Tensor encode_technical(ad::Tape& tape, const ad::Tensor& price_feats, const TechnicalEncoderParams& params);
/// Media channel: T x 2 score ratios -> c_t (1 x d_m).
ad::Tensor encode_media(ad::Tape& tape, const ad::Tensor& media_feats, const MediaEncoderParams& params);

/// Splits a T x in matrix (or a set of them, one per stock) into per-day N x in inputs.
std::vector<ad::Tensor> to_steps(const std::vector<const ad::Tensor*>& sequences);

struct FusionParams {
  ad::Tensor weight;  // d_h x d_f x d_m
  ad::Tensor bias;    // d_f

  static FusionParams init(std::size_t price_dim, std::size_t fused_dim, std::size_t media_dim, Rng& rng);
  std::vector<ad::NamedTensor> named(const std::string& prefix) const;
};

/// x[n][k] = tanh(q[n] . W[:, k, :] . c[n] + bias[k]). With `apply_tanh` false the
/// raw bilinear form plus bias is returned.
ad::Tensor fuse(ad::Tape& tape, const ad::Tensor& q, const ad::Tensor& c, const FusionParams& params,
                bool apply_tanh = true);

}  // namespace atomic_sm::model
