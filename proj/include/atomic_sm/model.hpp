#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "atomic_sm/autodiff.hpp"
#include "atomic_sm/encoders.hpp"
#include "atomic_sm/gat.hpp"
#include "atomic_sm/market_data.hpp"
#include "atomic_sm/relation_graph.hpp"

namespace atomic_sm::model {

struct ModelConfig {
  std::size_t lookback = 5;
  std::size_t price_hidden = 64;  // d_h
  std::size_t media_hidden = 16;  // d_m
  std::size_t fused_size = 64;    // d_f
  std::size_t gat_head_size = 16; // d_g
  std::size_t gat_heads = 4;
  double leaky_slope = 0.2;

  bool operator==(const ModelConfig&) const = default;
};

/// Per-column affine standardization of raw ratio features, fitted on training
/// windows and frozen afterwards. Not trained by gradient descent.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  static FeatureScaler identity(std::size_t width);
  /// Column means and population standard deviations of the stacked T x width matrices.
  static FeatureScaler fit(std::span<const ad::Tensor* const> matrices);
  ad::Tensor apply(const ad::Tensor& matrix) const;
};

/// One trading day ready for the network: standardized per-day inputs for the
/// present stocks, their labels, and the relation graph aligned to them.
struct DayInput {
  Date date;
  std::vector<std::string> symbols;
  std::vector<ad::Tensor> price_steps;  // T tensors, N x 3
  std::vector<ad::Tensor> media_steps;  // T tensors, N x 2
  std::vector<double> labels;           // 1 positive, 0 negative
  graph::StockGraph graph;
};

struct ForwardResult {
  ad::Tensor probabilities;  // N
  std::vector<ad::Tensor> gat_attention;
};

/// Encoders, bilinear fusion, graph attention and the sigmoid head.
class AtomicModel {
 public:
  AtomicModel() = default;
  static AtomicModel initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  FeatureScaler& price_scaler() { return price_scaler_; }
  FeatureScaler& media_scaler() { return media_scaler_; }
  const FeatureScaler& price_scaler() const { return price_scaler_; }
  const FeatureScaler& media_scaler() const { return media_scaler_; }

  TemporalEncoderParams& technical() { return technical_; }
  TemporalEncoderParams& media() { return media_; }
  FusionParams& fusion() { return fusion_; }
  GatParams& gat() { return gat_; }
  HeadParams& head() { return head_; }

  /// All learnable tensors, in a fixed order with stable names.
  std::vector<ad::NamedTensor> parameters() const;

  /// Fits both scalers on the given training sections.
  void fit_scalers(std::span<const data::CrossSection> sections);

  /// Builds the network input for one cross-section. `graph` must contain every
  /// symbol of the section; it is restricted and reordered to match.
  DayInput prepare(const data::CrossSection& section, const graph::StockGraph& graph) const;

  ForwardResult forward(ad::Tape& tape, const DayInput& day) const;

  /// Deep copy (no shared parameter storage).
  AtomicModel clone() const;

  /// Copies parameter values (not gradients) from a model of identical shape.
  void assign_parameters(const AtomicModel& other);

  /// Metadata carried in checkpoints (e.g. the training date range).
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

 private:
  ModelConfig config_;
  FeatureScaler price_scaler_;
  FeatureScaler media_scaler_;
  TemporalEncoderParams technical_;
  TemporalEncoderParams media_;
  FusionParams fusion_;
  GatParams gat_;
  HeadParams head_;
  std::map<std::string, std::string> metadata_;
};

/// Prepares every section against the snapshot valid on its date. With
/// `drop_edges` the graphs keep only self-loops (relation ablation).
std::vector<DayInput> prepare_days(const AtomicModel& model, std::span<const data::CrossSection> sections,
                                   std::span<const graph::StockGraph> snapshots, bool drop_edges = false);

// ---- checkpoints -----------------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text checkpoint, version 1 (see docs/data-formats.md).
std::string checkpoint_to_string(const AtomicModel& model);
AtomicModel checkpoint_from_string(std::string_view text);
void save_checkpoint(const std::filesystem::path& path, const AtomicModel& model);
AtomicModel load_checkpoint(const std::filesystem::path& path);

}  // namespace atomic_sm::model
