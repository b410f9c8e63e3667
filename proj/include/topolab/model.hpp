#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "topolab/autodiff.hpp"
#include "topolab/common.hpp"
#include "topolab/nn.hpp"
#include "topolab/topology.hpp"
#include "topolab/tree.hpp"
#include "topolab/volume.hpp"

namespace topolab {

struct ModelConfig {
  int channels = 64;
  int transformer_blocks = 3;
  int gcn_layers = 4;
  int heads = 4;
  double tau = 0.05;
  std::string feature_backend = "coord-mlp";  // coord-mlp | conv
  bool gcn_raw_adjacency = false;
  std::string aggregator = "transformer";  // transformer | mean
  std::string interaction = "gcn";         // gcn | none
  std::string classifier = "ac";           // ac | linear
  // World box mapped to [-1,1]^3 for the coordinate MLP and positional encoder.
  double coord_scale = 100.0;

  void validate() const {
    if (channels <= 0 || channels % 2 != 0) throw ConfigError("channels must be positive and even");
    if (heads <= 0 || channels % heads != 0)
      throw ConfigError("channels must be divisible by heads");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (transformer_blocks < 1) throw ConfigError("transformer_blocks must be >= 1");
    if (gcn_layers < 1) throw ConfigError("gcn_layers must be >= 1");
    if (feature_backend != "coord-mlp" && feature_backend != "conv")
      throw ConfigError("unknown feature backend: " + feature_backend);
    if (aggregator != "transformer" && aggregator != "mean")
      throw ConfigError("unknown aggregator: " + aggregator);
    if (interaction != "gcn" && interaction != "none")
      throw ConfigError("unknown interaction: " + interaction);
    if (classifier != "ac" && classifier != "linear")
      throw ConfigError("unknown classifier: " + classifier);
    if (!(coord_scale > 0.0)) throw ConfigError("coord_scale must be positive");
  }
};

// A case lowered to model inputs: point geometry per segment, directed
// connections (with synthetic self-connections appended so every segment is
// covered), and resolved gold indices when annotations are present.
struct PreparedCase {
  std::string id;
  std::vector<std::vector<Vec3>> segment_points;
  std::vector<std::pair<int, int>> connections;
  int real_connections = 0;  // prefix of `connections` coming from the tree
  std::vector<int> gold_class;         // per segment, -1 when unlabeled
  std::vector<int> gold_template_row;  // per connection, -1 when unlabeled
  std::shared_ptr<const IntensityVolume> volume;  // conv backend only

  int num_segments() const { return static_cast<int>(segment_points.size()); }
};

inline PreparedCase prepare_case(const VesselTree& tree, const CategoryTopology& topo,
                                 const TemplateSet& templates, const std::string& id,
                                 std::shared_ptr<const IntensityVolume> volume = nullptr) {
  PreparedCase pc;
  pc.id = id;
  pc.volume = std::move(volume);
  int n = static_cast<int>(tree.segments.size());
  pc.segment_points.reserve(n);
  for (const auto& seg : tree.segments) pc.segment_points.push_back(seg.points);

  std::vector<char> covered(n, 0);
  for (const auto& [parent, child] : tree.connections) {
    pc.connections.emplace_back(parent, child);
    covered[parent] = 1;
    covered[child] = 1;
  }
  pc.real_connections = static_cast<int>(pc.connections.size());
  for (int s = 0; s < n; ++s)
    if (!covered[s]) pc.connections.emplace_back(s, s);

  bool labeled = false;
  for (const auto& seg : tree.segments)
    if (!seg.gold_class.empty()) labeled = true;
  if (labeled) {
    pc.gold_class.resize(n);
    for (int s = 0; s < n; ++s) {
      if (tree.segments[s].gold_class.empty())
        throw LabelError("case " + id + ": segment " + std::to_string(s) + " has no gold class");
      pc.gold_class[s] = topo.class_index(tree.segments[s].gold_class);
    }
    pc.gold_template_row.reserve(pc.connections.size());
    for (const auto& [parent, child] : pc.connections) {
      int a = pc.gold_class[parent], b = pc.gold_class[child];
      int row = templates.row_of(a, b);
      if (row < 0)
        throw LabelError("case " + id + ": gold connection pair (" + topo.classes[a] + ", " +
                         topo.classes[b] + ") is not in the topology");
      pc.gold_template_row.push_back(row);
    }
  }
  return pc;
}

struct SegmentPrediction {
  int segment = 0;
  int class_index = 0;
  double confidence = 0.0;
};

struct ConnectionPrediction {
  int parent = 0, child = 0;
  int parent_class = 0, child_class = 0;
  double probability = 0.0;
  int template_row = 0;
};

struct CasePrediction {
  std::string id;
  std::vector<SegmentPrediction> segments;
  std::vector<ConnectionPrediction> connections;
};

// Highest-confidence covering connection decides each segment's class; the
// parent slot's class applies when the segment sits in the parent position.
// Ties break toward the lowest connection index.
inline std::vector<SegmentPrediction> infer_labels(
    const std::vector<ConnectionPrediction>& decoded,
    const std::vector<std::pair<int, int>>& connections, int n_segments) {
  std::vector<SegmentPrediction> out(n_segments);
  std::vector<int> best(n_segments, -1);
  for (std::size_t k = 0; k < connections.size(); ++k) {
    for (int s : {connections[k].first, connections[k].second}) {
      if (best[s] < 0 || decoded[k].probability > decoded[best[s]].probability) best[s] = static_cast<int>(k);
    }
  }
  for (int s = 0; s < n_segments; ++s) {
    if (best[s] < 0) throw LabelError("segment " + std::to_string(s) + " is not covered by any connection");
    const auto& conn = connections[best[s]];
    const auto& dec = decoded[best[s]];
    out[s].segment = s;
    out[s].class_index = (s == conn.first) ? dec.parent_class : dec.child_class;
    out[s].confidence = dec.probability;
  }
  return out;
}

struct CaseForward {
  ad::Tensor prob_rows;  // ac: [N_c, N_g] over templates; linear: [N, K] over classes
  int clamped_samples = 0;
};

class Model {
 public:
  Model(ModelConfig config, CategoryTopology topo, std::uint64_t seed)
      : config_(validated(std::move(config))),
        topo_(std::move(topo)),
        templates_(build_templates(topo_, config_.channels)),
        params_(seed) {
    topo_.validate();
    int c = config_.channels;
    int k = static_cast<int>(topo_.classes.size());

    if (config_.feature_backend == "coord-mlp") {
      feat1_ = nn::DenseParams::create(params_, "feat.mlp1", 3, c);
      feat2_ = nn::DenseParams::create(params_, "feat.mlp2", c, c);
      feat3_ = nn::DenseParams::create(params_, "feat.mlp3", c, c);
    } else {
      conv_ = nn::ConvEncoderParams::create(params_, "feat.conv", c);
    }
    pos1_ = nn::DenseParams::create(params_, "pos.mlp1", 3, c);
    pos2_ = nn::DenseParams::create(params_, "pos.mlp2", c, c);

    if (config_.aggregator == "transformer") {
      query_ = params_.create("agg.query", {1, c}, c);
      query_pos_ = params_.create("agg.query_pos", {1, c}, c);
      for (int b = 0; b < config_.transformer_blocks; ++b)
        blocks_.push_back(nn::TransformerBlockParams::create(
            params_, "agg.block" + std::to_string(b), c, config_.heads));
      agg_ln_ = nn::LayerNormParams::create(params_, "agg.ln_out", c);
    }
    if (config_.interaction == "gcn") {
      for (int l = 0; l < config_.gcn_layers; ++l)
        gcn_w_.push_back(params_.create("gcn.w" + std::to_string(l), {c, c}, c));
      fuse_w_ = params_.create("fuse.w", {2 * c, c}, 2 * c);
    }
    if (config_.classifier == "ac") {
      clf1_ = nn::DenseParams::create(params_, "clf.mlp1", 2 * c, 2 * c);
      clf2_ = nn::DenseParams::create(params_, "clf.mlp2", 2 * c, 2 * c);
      normalized_templates_ = make_normalized_templates();
    } else {
      lin_ = nn::DenseParams::create(params_, "lin.head", c, k);
    }
  }

  const ModelConfig& config() const { return config_; }
  const CategoryTopology& topology() const { return topo_; }
  const TemplateSet& templates() const { return templates_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Per-point features for one segment, positional encoding included.
  ad::Tensor point_features(const std::vector<Vec3>& points, const ad::Tensor& feature_grid,
                            const Vec3& spacing, int* clamped) const {
    int l = static_cast<int>(points.size());
    std::vector<double> coords(static_cast<std::size_t>(l) * 3);
    for (int i = 0; i < l; ++i) {
      coords[3 * i + 0] = 2.0 * points[i].x / config_.coord_scale - 1.0;
      coords[3 * i + 1] = 2.0 * points[i].y / config_.coord_scale - 1.0;
      coords[3 * i + 2] = 2.0 * points[i].z / config_.coord_scale - 1.0;
    }
    ad::Tensor xyz = ad::Tensor::constant({l, 3}, coords);
    ad::Tensor feats;
    if (config_.feature_backend == "coord-mlp") {
      feats = feat3_(ad::relu(feat2_(ad::relu(feat1_(xyz)))));
    } else {
      std::vector<Vec3> grid_pos(points.size());
      for (int i = 0; i < l; ++i)
        grid_pos[i] = {points[i].x / (4.0 * spacing.x), points[i].y / (4.0 * spacing.y),
                       points[i].z / (4.0 * spacing.z)};
      feats = ad::trilinear_sample(feature_grid, grid_pos, clamped);
    }
    ad::Tensor pos = pos2_(ad::relu(pos1_(xyz)));
    return ad::add(feats, pos);
  }

  // Transformer aggregation: query state at slot 0 after the encoder.
  ad::Tensor aggregate_segment(const ad::Tensor& point_feats) const {
    if (config_.aggregator == "mean") return ad::mean_rows(point_feats);
    ad::Tensor q = ad::add(query_, query_pos_);
    ad::Tensor tokens = ad::concat_rows({q, point_feats});
    for (const auto& block : blocks_) tokens = block(tokens);
    tokens = agg_ln_(tokens);
    return ad::slice_rows(tokens, 0, 1);
  }

  // GCN over the undirected connection graph, then fuse with the input.
  ad::Tensor interact_segments(const ad::Tensor& e,
                               const std::vector<std::pair<int, int>>& connections) const {
    if (config_.interaction == "none") return e;
    int n = e.rows();
    ad::Tensor a_hat = nn::gcn_propagation_matrix(n, connections, config_.gcn_raw_adjacency);
    ad::Tensor h = e;
    for (const auto& w : gcn_w_) h = nn::gcn_layer(h, a_hat, w);
    return ad::matmul(ad::concat_cols({h, e}), fuse_w_);
  }

  // Rows of probabilities over the template set for each connection.
  ad::Tensor classify_connections(const ad::Tensor& fused,
                                  const std::vector<std::pair<int, int>>& connections) const {
    if (connections.empty()) throw EmptyInputError("classify_connections: no connections");
    std::vector<int> parents, children;
    parents.reserve(connections.size());
    children.reserve(connections.size());
    for (const auto& [i, j] : connections) {
      parents.push_back(i);
      children.push_back(j);
    }
    ad::Tensor p = ad::concat_cols({ad::gather_rows(fused, parents), ad::gather_rows(fused, children)});
    ad::Tensor p_hat = clf2_(ad::relu(clf1_(p)));
    ad::Tensor sim = ad::matmul_nt(ad::l2_normalize_rows(p_hat), normalized_templates_);
    return ad::softmax_rows(ad::scale(sim, 1.0 / config_.tau));
  }

  CaseForward forward(const PreparedCase& pc) const {
    if (pc.segment_points.empty()) throw EmptyInputError("forward: case has no segments");
    CaseForward cf;
    ad::Tensor feature_grid;
    Vec3 spacing{1.0, 1.0, 1.0};
    if (config_.feature_backend == "conv") {
      if (!pc.volume) throw MalformedCaseError("case " + pc.id + ": conv backend requires a volume");
      feature_grid = encode_volume(*pc.volume);
      spacing = {pc.volume->spacing[0], pc.volume->spacing[1], pc.volume->spacing[2]};
    }
    std::vector<ad::Tensor> aggregated;
    aggregated.reserve(pc.segment_points.size());
    for (const auto& points : pc.segment_points) {
      ad::Tensor feats = point_features(points, feature_grid, spacing, &cf.clamped_samples);
      aggregated.push_back(aggregate_segment(feats));
    }
    ad::Tensor e_hat = ad::concat_rows(aggregated);
    ad::Tensor fused = interact_segments(e_hat, pc.connections);
    if (config_.classifier == "ac") {
      cf.prob_rows = classify_connections(fused, pc.connections);
    } else {
      cf.prob_rows = ad::softmax_rows(lin_(fused));
    }
    return cf;
  }

  // Summed negative log-likelihood over the case's connections (ac) or
  // segments (linear arm).
  ad::Tensor case_loss(const PreparedCase& pc) const {
    CaseForward cf = forward(pc);
    const std::vector<int>& targets =
        config_.classifier == "ac" ? pc.gold_template_row : pc.gold_class;
    if (targets.empty()) throw LabelError("case " + pc.id + ": loss requires gold labels");
    ad::Tensor picked = ad::pick_per_row(cf.prob_rows, targets);
    return ad::scale(ad::sum(ad::log(picked)), -1.0);
  }

  CasePrediction infer(const PreparedCase& pc) const {
    CaseForward cf = forward(pc);
    CasePrediction pred;
    pred.id = pc.id;
    const auto& probs = cf.prob_rows.values();
    if (config_.classifier == "ac") {
      int n_c = cf.prob_rows.rows(), n_g = cf.prob_rows.cols();
      pred.connections.reserve(n_c);
      for (int k = 0; k < n_c; ++k) {
        const double* row = probs.data() + static_cast<std::size_t>(k) * n_g;
        int arg = 0;
        for (int j = 1; j < n_g; ++j)
          if (row[j] > row[arg]) arg = j;
        auto [pc_idx, cc_idx] = templates_.index_map[arg];
        pred.connections.push_back({pc.connections[k].first, pc.connections[k].second, pc_idx,
                                    cc_idx, row[arg], arg});
      }
      pred.segments = infer_labels(pred.connections, pc.connections, pc.num_segments());
    } else {
      int n = cf.prob_rows.rows(), k = cf.prob_rows.cols();
      pred.segments.resize(n);
      for (int s = 0; s < n; ++s) {
        const double* row = probs.data() + static_cast<std::size_t>(s) * k;
        int arg = 0;
        for (int j = 1; j < k; ++j)
          if (row[j] > row[arg]) arg = j;
        pred.segments[s] = {s, arg, row[arg]};
      }
      pred.connections.reserve(pc.connections.size());
      for (const auto& [i, j] : pc.connections) {
        double p = std::min(pred.segments[i].confidence, pred.segments[j].confidence);
        pred.connections.push_back(
            {i, j, pred.segments[i].class_index, pred.segments[j].class_index, p, -1});
      }
    }
    return pred;
  }

  ad::Tensor encode_volume(const IntensityVolume& vol) const {
    vol.validate();
    if (vol.dims[0] % 4 || vol.dims[1] % 4 || vol.dims[2] % 4)
      throw ShapeError("conv backend requires dims divisible by 4 (loader pads)");
    std::vector<double> values(vol.values.begin(), vol.values.end());
    ad::Tensor x = ad::Tensor::constant({vol.dims[0], vol.dims[1], vol.dims[2], 1}, std::move(values));
    return conv_(x);
  }

 private:
  static ModelConfig validated(ModelConfig c) {
    c.validate();
    return c;
  }

  ad::Tensor make_normalized_templates() const {
    int n_g = templates_.size(), dim = templates_.dim;
    std::vector<double> rows(static_cast<std::size_t>(n_g) * dim);
    for (int r = 0; r < n_g; ++r) {
      double* row = rows.data() + static_cast<std::size_t>(r) * dim;
      double sq = 0.0;
      for (int c = 0; c < dim; ++c) {
        row[c] = templates_.templates[r][c];
        sq += row[c] * row[c];
      }
      double norm = std::sqrt(sq);
      if (!(norm > 0.0)) throw NumericalError("template row has zero norm");
      for (int c = 0; c < dim; ++c) row[c] /= norm;
    }
    return ad::Tensor::constant({n_g, dim}, std::move(rows));
  }

  ModelConfig config_;
  CategoryTopology topo_;
  TemplateSet templates_;
  nn::ParamStore params_;

  nn::DenseParams feat1_, feat2_, feat3_;
  nn::ConvEncoderParams conv_;
  nn::DenseParams pos1_, pos2_;
  ad::Tensor query_, query_pos_;
  std::vector<nn::TransformerBlockParams> blocks_;
  nn::LayerNormParams agg_ln_;
  std::vector<ad::Tensor> gcn_w_;
  ad::Tensor fuse_w_;
  nn::DenseParams clf1_, clf2_;
  ad::Tensor normalized_templates_;
  nn::DenseParams lin_;
};

}  // namespace topolab
