#include "atomic_sm/model.hpp"

#include <cmath>
#include <sstream>

#include "atomic_sm/text_io.hpp"

namespace atomic_sm::model {

// ---- FeatureScaler -------------------------------------------------------------

FeatureScaler FeatureScaler::identity(std::size_t width) {
  return FeatureScaler{std::vector<double>(width, 0.0), std::vector<double>(width, 1.0)};
}

FeatureScaler FeatureScaler::fit(std::span<const ad::Tensor* const> matrices) {
  if (matrices.empty()) throw std::invalid_argument("FeatureScaler::fit: no data");
  const std::size_t width = matrices.front()->dim(1);
  std::vector<double> sum(width, 0.0), sum_sq(width, 0.0);
  std::size_t rows = 0;
  for (const auto* m : matrices) {
    if (m->dim(1) != width) throw ad::ShapeError("FeatureScaler::fit: inconsistent widths");
    for (std::size_t r = 0; r < m->dim(0); ++r)
      for (std::size_t k = 0; k < width; ++k) sum[k] += m->at(r, k);
    rows += m->dim(0);
  }
  FeatureScaler s;
  s.mean.resize(width);
  s.scale.resize(width);
  for (std::size_t k = 0; k < width; ++k) s.mean[k] = sum[k] / static_cast<double>(rows);
  for (const auto* m : matrices)
    for (std::size_t r = 0; r < m->dim(0); ++r)
      for (std::size_t k = 0; k < width; ++k) {
        const double d = m->at(r, k) - s.mean[k];
        sum_sq[k] += d * d;
      }
  for (std::size_t k = 0; k < width; ++k) {
    const double sd = std::sqrt(sum_sq[k] / static_cast<double>(rows));
    s.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

ad::Tensor FeatureScaler::apply(const ad::Tensor& matrix) const {
  if (matrix.rank() != 2 || matrix.dim(1) != mean.size()) {
    throw ad::ShapeError("FeatureScaler: matrix " + ad::shape_to_string(matrix.shape()) + " vs width " +
                         std::to_string(mean.size()));
  }
  std::vector<double> out(matrix.numel());
  const std::size_t w = mean.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (matrix[i] - mean[i % w]) / scale[i % w];
  return ad::Tensor(matrix.shape(), std::move(out));
}

// ---- AtomicModel -------------------------------------------------------------------

AtomicModel AtomicModel::initialize(const ModelConfig& config, std::uint64_t seed) {
  AtomicModel m;
  m.config_ = config;
  m.price_scaler_ = FeatureScaler::identity(3);
  m.media_scaler_ = FeatureScaler::identity(2);
  Rng technical_rng(seed, "init.technical");
  Rng media_rng(seed, "init.media");
  Rng fusion_rng(seed, "init.fusion");
  Rng gat_rng(seed, "init.gat");
  Rng head_rng(seed, "init.head");
  m.technical_ = TemporalEncoderParams::init(3, config.price_hidden, technical_rng);
  m.media_ = TemporalEncoderParams::init(2, config.media_hidden, media_rng);
  m.fusion_ = FusionParams::init(config.price_hidden, config.fused_size, config.media_hidden, fusion_rng);
  m.gat_ = GatParams::init(config.fused_size, config.gat_head_size, config.gat_heads, gat_rng, config.leaky_slope);
  m.head_ = HeadParams::init(config.gat_heads * config.gat_head_size, head_rng);
  return m;
}

std::vector<ad::NamedTensor> AtomicModel::parameters() const {
  std::vector<ad::NamedTensor> out;
  for (auto&& group : {technical_.named("technical"), media_.named("media"), fusion_.named("fusion"),
                       gat_.named("gat"), head_.named("head")}) {
    out.insert(out.end(), group.begin(), group.end());
  }
  return out;
}

void AtomicModel::fit_scalers(std::span<const data::CrossSection> sections) {
  std::vector<const ad::Tensor*> prices, media;
  for (const auto& s : sections)
    for (const auto& w : s.windows) {
      prices.push_back(&w.price_feats);
      media.push_back(&w.media_feats);
    }
  price_scaler_ = FeatureScaler::fit(prices);
  media_scaler_ = FeatureScaler::fit(media);
}

DayInput AtomicModel::prepare(const data::CrossSection& section, const graph::StockGraph& graph) const {
  DayInput day;
  day.date = section.date;
  std::vector<ad::Tensor> prices, media;
  for (const auto& w : section.windows) {
    if (w.price_feats.dim(0) != config_.lookback || w.media_feats.dim(0) != config_.lookback) {
      throw ad::ShapeError("window for " + w.symbol + " has lookback " + std::to_string(w.price_feats.dim(0)) +
                           ", model expects " + std::to_string(config_.lookback));
    }
    day.symbols.push_back(w.symbol);
    prices.push_back(price_scaler_.apply(w.price_feats));
    media.push_back(media_scaler_.apply(w.media_feats));
    day.labels.push_back(w.label == data::Label::positive ? 1.0 : 0.0);
  }
  std::vector<const ad::Tensor*> pp, mp;
  for (const auto& t : prices) pp.push_back(&t);
  for (const auto& t : media) mp.push_back(&t);
  day.price_steps = to_steps(pp);
  day.media_steps = to_steps(mp);
  day.graph = graph.induced(day.symbols);
  return day;
}

ForwardResult AtomicModel::forward(ad::Tape& tape, const DayInput& day) const {
  const auto q = encode_sequences(tape, day.price_steps, technical_).encoding;
  const auto c = encode_sequences(tape, day.media_steps, media_).encoding;
  const auto x = fuse(tape, q, c, fusion_);
  auto gat = gat_forward(tape, x, day.graph, gat_);
  return ForwardResult{classify(tape, gat.features, head_), std::move(gat.attention)};
}

AtomicModel AtomicModel::clone() const {
  AtomicModel m = *this;
  auto deep = [](TemporalEncoderParams& p) {
    p.w_input = p.w_input.clone();
    p.w_hidden = p.w_hidden.clone();
    p.bias = p.bias.clone();
    p.attention = p.attention.clone();
  };
  deep(m.technical_);
  deep(m.media_);
  m.fusion_.weight = m.fusion_.weight.clone();
  m.fusion_.bias = m.fusion_.bias.clone();
  for (auto& h : m.gat_.heads) {
    h.projection = h.projection.clone();
    h.attention = h.attention.clone();
  }
  m.head_.weight = m.head_.weight.clone();
  m.head_.bias = m.head_.bias.clone();
  return m;
}

void AtomicModel::assign_parameters(const AtomicModel& other) {
  auto mine = parameters();
  const auto theirs = other.parameters();
  if (mine.size() != theirs.size()) throw ad::ShapeError("assign_parameters: parameter count mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].tensor.shape() != theirs[i].tensor.shape()) {
      throw ad::ShapeError("assign_parameters: shape mismatch for " + mine[i].name);
    }
    auto dst = mine[i].tensor.mutable_data();
    const auto src = theirs[i].tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  price_scaler_ = other.price_scaler_;
  media_scaler_ = other.media_scaler_;
}

std::vector<DayInput> prepare_days(const AtomicModel& model, std::span<const data::CrossSection> sections,
                                   std::span<const graph::StockGraph> snapshots, bool drop_edges) {
  std::vector<DayInput> days;
  days.reserve(sections.size());
  for (const auto& s : sections) {
    const auto& snapshot = graph::snapshot_for_date(snapshots, s.date);
    days.push_back(drop_edges ? model.prepare(s, snapshot.without_edges()) : model.prepare(s, snapshot));
  }
  return days;
}

// ---- checkpoints -------------------------------------------------------------------

namespace {

constexpr const char* kMagic = "atomic-sm-checkpoint";
constexpr int kVersion = 1;

void write_values(std::string& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += io::format_double(values[i]);
  }
  out += '\n';
}

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string t;
  while (ss >> t) out.push_back(t);
  return out;
}

}  // namespace

std::string checkpoint_to_string(const AtomicModel& model) {
  const auto& c = model.config();
  std::string out = std::string(kMagic) + " " + std::to_string(kVersion) + "\n";
  out += "config lookback " + std::to_string(c.lookback) + "\n";
  out += "config price_hidden " + std::to_string(c.price_hidden) + "\n";
  out += "config media_hidden " + std::to_string(c.media_hidden) + "\n";
  out += "config fused_size " + std::to_string(c.fused_size) + "\n";
  out += "config gat_head_size " + std::to_string(c.gat_head_size) + "\n";
  out += "config gat_heads " + std::to_string(c.gat_heads) + "\n";
  out += "config leaky_slope " + io::format_double(c.leaky_slope) + "\n";
  for (const auto& [k, v] : model.metadata()) out += "meta " + k + " " + v + "\n";
  auto scaler = [&](const char* name, const FeatureScaler& s) {
    out += std::string("scaler ") + name + " mean " + std::to_string(s.mean.size()) + "\n";
    write_values(out, s.mean);
    out += std::string("scaler ") + name + " scale " + std::to_string(s.scale.size()) + "\n";
    write_values(out, s.scale);
  };
  scaler("price", model.price_scaler());
  scaler("media", model.media_scaler());
  for (const auto& p : model.parameters()) {
    out += "tensor " + p.name + " " + std::to_string(p.tensor.rank());
    for (auto d : p.tensor.shape()) out += " " + std::to_string(d);
    out += "\n";
    write_values(out, p.tensor.data());
  }
  out += "end\n";
  return out;
}

AtomicModel checkpoint_from_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    return CheckpointError("checkpoint line " + std::to_string(line_no) + ": " + why);
  };
  auto next = [&]() -> std::vector<std::string> {
    if (!std::getline(in, line)) throw fail("unexpected end of file");
    ++line_no;
    return tokens(line);
  };
  auto read_values = [&](std::size_t count) {
    const auto t = next();
    if (t.size() != count) throw fail("expected " + std::to_string(count) + " values, got " + std::to_string(t.size()));
    std::vector<double> v;
    v.reserve(count);
    for (const auto& s : t) v.push_back(io::parse_double(s, "checkpoint value"));
    return v;
  };
  auto to_size = [&](const std::string& s) { return static_cast<std::size_t>(io::parse_int(s, "checkpoint size")); };

  auto head = next();
  if (head.size() != 2 || head[0] != kMagic) throw fail("not a checkpoint file");
  if (io::parse_int(head[1], "version") != kVersion) throw fail("unsupported checkpoint version " + head[1]);

  ModelConfig config;
  std::map<std::string, std::string> meta;
  std::map<std::string, std::vector<double>> scaler_values;
  std::map<std::string, std::pair<ad::Shape, std::vector<double>>> tensors;
  while (true) {
    const auto t = next();
    if (t.empty()) continue;
    if (t[0] == "end") break;
    if (t[0] == "config" && t.size() == 3) {
      if (t[1] == "lookback") config.lookback = to_size(t[2]);
      else if (t[1] == "price_hidden") config.price_hidden = to_size(t[2]);
      else if (t[1] == "media_hidden") config.media_hidden = to_size(t[2]);
      else if (t[1] == "fused_size") config.fused_size = to_size(t[2]);
      else if (t[1] == "gat_head_size") config.gat_head_size = to_size(t[2]);
      else if (t[1] == "gat_heads") config.gat_heads = to_size(t[2]);
      else if (t[1] == "leaky_slope") config.leaky_slope = io::parse_double(t[2], "leaky_slope");
      else throw fail("unknown config key " + t[1]);
    } else if (t[0] == "meta" && t.size() == 3) {
      meta[t[1]] = t[2];
    } else if (t[0] == "scaler" && t.size() == 4) {
      scaler_values[t[1] + "." + t[2]] = read_values(to_size(t[3]));
    } else if (t[0] == "tensor" && t.size() >= 3) {
      const std::size_t rank = to_size(t[2]);
      if (t.size() != 3 + rank) throw fail("malformed tensor header");
      ad::Shape shape;
      for (std::size_t k = 0; k < rank; ++k) shape.push_back(to_size(t[3 + k]));
      auto values = read_values(ad::shape_numel(shape));
      tensors[t[1]] = {std::move(shape), std::move(values)};
    } else {
      throw fail("unrecognized record '" + line + "'");
    }
  }

  AtomicModel model = AtomicModel::initialize(config, 0);
  model.metadata() = std::move(meta);
  auto scaler = [&](const std::string& name, FeatureScaler& s) {
    const auto m = scaler_values.find(name + ".mean");
    const auto sc = scaler_values.find(name + ".scale");
    if (m == scaler_values.end() || sc == scaler_values.end()) throw CheckpointError("missing scaler " + name);
    if (m->second.size() != s.mean.size() || sc->second.size() != s.scale.size()) {
      throw CheckpointError("scaler " + name + " has wrong width");
    }
    s.mean = m->second;
    s.scale = sc->second;
  };
  scaler("price", model.price_scaler());
  scaler("media", model.media_scaler());
  for (auto& p : model.parameters()) {
    const auto it = tensors.find(p.name);
    if (it == tensors.end()) throw CheckpointError("missing tensor " + p.name);
    if (it->second.first != p.tensor.shape()) {
      throw CheckpointError("tensor " + p.name + " has shape " + ad::shape_to_string(it->second.first) +
                            ", expected " + ad::shape_to_string(p.tensor.shape()));
    }
    std::copy(it->second.second.begin(), it->second.second.end(), p.tensor.mutable_data().begin());
    tensors.erase(it);
  }
  if (!tensors.empty()) throw CheckpointError("unexpected tensor " + tensors.begin()->first);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const AtomicModel& model) {
  io::write_text_file(path, checkpoint_to_string(model));
}

AtomicModel load_checkpoint(const std::filesystem::path& path) {
  try {
    return checkpoint_from_string(io::read_text_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace atomic_sm::model
