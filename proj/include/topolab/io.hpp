#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "topolab/common.hpp"
#include "topolab/metrics.hpp"
#include "topolab/model.hpp"
#include "topolab/synth.hpp"
#include "topolab/topology.hpp"
#include "topolab/trainer.hpp"
#include "topolab/tree.hpp"
#include "topolab/volume.hpp"

namespace topolab::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw MalformedCaseError(path + ": " + e.what());
  }
}

inline void save_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw InputError("write failed: " + path);
}

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
  }
}

inline json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw MalformedCaseError(where + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Topology config.

inline CategoryTopology topology_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"note", "classes", "edges"}, "topology");
  CategoryTopology topo;
  if (!j.contains("classes") || !j.contains("edges"))
    throw ConfigError("topology: requires \"classes\" and \"edges\"");
  for (const auto& c : j.at("classes")) topo.classes.push_back(c.get<std::string>());
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2)
      throw ConfigError("topology: each edge must be [parent, child]");
    topo.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }
  topo.validate();
  return topo;
}

inline json topology_to_json(const CategoryTopology& topo) {
  json j;
  j["classes"] = topo.classes;
  json edges = json::array();
  for (const auto& [p, c] : topo.edges) edges.push_back(json::array({p, c}));
  j["edges"] = edges;
  return j;
}

inline CategoryTopology load_topology(const std::string& path) {
  return topology_from_json(load_json(path));
}

// ---------------------------------------------------------------------------
// Volumes: JSON header + raw little-endian f32 payload, x-fastest layout.

inline void save_volume(const std::string& header_path, const IntensityVolume& vol) {
  vol.validate();
  fs::path hp(header_path);
  fs::path raw = hp;
  raw.replace_extension(".raw");
  json j;
  j["dims"] = vol.dims;
  j["spacing"] = vol.spacing;
  j["dtype"] = "f32";
  j["layout"] = "x-fastest";
  j["payload"] = raw.filename().string();
  save_json(header_path, j);
  std::ofstream out(raw, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + raw.string() + " for writing");
  std::vector<unsigned char> bytes(vol.values.size() * 4);
  for (std::size_t i = 0; i < vol.values.size(); ++i) {
    float f = static_cast<float>(vol.values[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + raw.string());
}

inline IntensityVolume load_volume(const std::string& header_path) {
  json j = load_json(header_path);
  detail::reject_unknown_keys(j, {"dims", "spacing", "dtype", "layout", "payload"}, header_path);
  IntensityVolume vol;
  auto dims = j.at("dims");
  auto spacing = j.at("spacing");
  if (dims.size() != 3 || spacing.size() != 3)
    throw MalformedCaseError(header_path + ": dims/spacing must have 3 entries");
  for (int i = 0; i < 3; ++i) {
    vol.dims[i] = dims[i].get<int>();
    vol.spacing[i] = spacing[i].get<double>();
  }
  if (j.at("dtype").get<std::string>() != "f32")
    throw MalformedCaseError(header_path + ": unsupported dtype");
  fs::path raw = fs::path(header_path).parent_path() / j.at("payload").get<std::string>();
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw InputError("cannot open volume payload " + raw.string());
  std::size_t n = static_cast<std::size_t>(vol.dims[0]) * vol.dims[1] * vol.dims[2];
  std::vector<unsigned char> bytes(n * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size())
    throw MalformedCaseError(raw.string() + ": payload shorter than dims require");
  vol.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    float f;
    std::memcpy(&f, &bits, 4);
    vol.values[i] = static_cast<double>(f);
  }
  vol.validate();
  return vol;
}

// ---------------------------------------------------------------------------
// Case files: exactly one of a centerline graph or a pre-split tree.

struct CaseFile {
  std::string id;
  bool has_tree = false;
  VesselTree tree;
  CenterlineGraph graph;
  std::vector<std::pair<Domain, int>> graph_roots;
  std::string volume_ref;  // path relative to the case file, empty if none
  std::string path;        // where the case was loaded from
};

inline json case_to_json(const CaseFile& cf) {
  json j;
  j["id"] = cf.id;
  json roots = json::array();
  if (cf.has_tree) {
    for (auto [d, s] : cf.tree.roots) roots.push_back({{"domain", domain_name(d)}, {"segment", s}});
    j["roots"] = roots;
    json segments = json::array();
    bool labeled = false;
    for (const auto& seg : cf.tree.segments)
      if (!seg.gold_class.empty()) labeled = true;
    for (const auto& seg : cf.tree.segments) {
      json s;
      s["id"] = seg.id;
      s["domain"] = domain_name(seg.domain);
      json pts = json::array();
      for (const auto& p : seg.points) pts.push_back(detail::vec3_to_json(p));
      s["points"] = pts;
      if (labeled) s["class"] = seg.gold_class;
      segments.push_back(s);
    }
    j["segments"] = segments;
    json conns = json::array();
    for (auto [a, b] : cf.tree.connections) conns.push_back(json::array({a, b}));
    j["connections"] = conns;
  } else {
    for (auto [d, n] : cf.graph_roots) roots.push_back({{"domain", domain_name(d)}, {"node", n}});
    j["roots"] = roots;
    json g;
    json pts = json::array();
    for (const auto& p : cf.graph.positions) pts.push_back(detail::vec3_to_json(p));
    g["positions"] = pts;
    json edges = json::array();
    for (auto [a, b] : cf.graph.edges) edges.push_back(json::array({a, b}));
    g["edges"] = edges;
    if (!cf.graph.voxels.empty()) {
      json vox = json::array();
      for (const auto& v : cf.graph.voxels) vox.push_back(json::array({v[0], v[1], v[2]}));
      g["voxels"] = vox;
    }
    j["centerline"] = g;
  }
  if (!cf.volume_ref.empty()) j["volume"] = cf.volume_ref;
  return j;
}

inline CaseFile case_from_json(const json& j, const std::string& path) {
  detail::reject_unknown_keys(
      j, {"id", "roots", "segments", "connections", "centerline", "volume"}, path);
  CaseFile cf;
  cf.path = path;
  if (!j.contains("id")) throw MalformedCaseError(path + ": missing id");
  cf.id = j.at("id").get<std::string>();
  bool has_segments = j.contains("segments");
  bool has_centerline = j.contains("centerline");
  if (has_segments == has_centerline)
    throw MalformedCaseError(path + ": exactly one of \"segments\" or \"centerline\" required");
  if (!j.contains("roots")) throw MalformedCaseError(path + ": missing roots");

  if (has_segments) {
    cf.has_tree = true;
    int labeled = 0;
    for (const auto& s : j.at("segments")) {
      detail::reject_unknown_keys(s, {"id", "domain", "points", "class"}, path + " segment");
      Segment seg;
      seg.id = s.at("id").get<int>();
      seg.domain = parse_domain(s.at("domain").get<std::string>());
      for (const auto& p : s.at("points"))
        seg.points.push_back(detail::vec3_from_json(p, path + " segment point"));
      if (s.contains("class")) {
        seg.gold_class = s.at("class").get<std::string>();
        ++labeled;
      }
      cf.tree.segments.push_back(std::move(seg));
    }
    if (labeled != 0 && labeled != static_cast<int>(cf.tree.segments.size()))
      throw MalformedCaseError(path + ": gold classes must cover every segment or none");
    if (j.contains("connections"))
      for (const auto& c : j.at("connections")) {
        if (!c.is_array() || c.size() != 2)
          throw MalformedCaseError(path + ": each connection must be [parent, child]");
        cf.tree.connections.emplace_back(c[0].get<int>(), c[1].get<int>());
      }
    for (const auto& r : j.at("roots")) {
      detail::reject_unknown_keys(r, {"domain", "segment"}, path + " root");
      cf.tree.roots.emplace_back(parse_domain(r.at("domain").get<std::string>()),
                                 r.at("segment").get<int>());
    }
    cf.tree.validate();
  } else {
    const json& g = j.at("centerline");
    detail::reject_unknown_keys(g, {"positions", "edges", "voxels"}, path + " centerline");
    for (const auto& p : g.at("positions"))
      cf.graph.positions.push_back(detail::vec3_from_json(p, path + " centerline point"));
    for (const auto& e : g.at("edges")) {
      if (!e.is_array() || e.size() != 2)
        throw MalformedCaseError(path + ": each centerline edge must be [a, b]");
      cf.graph.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    if (g.contains("voxels"))
      for (const auto& v : g.at("voxels"))
        cf.graph.voxels.push_back({v[0].get<int>(), v[1].get<int>(), v[2].get<int>()});
    for (const auto& r : j.at("roots")) {
      detail::reject_unknown_keys(r, {"domain", "node"}, path + " root");
      cf.graph_roots.emplace_back(parse_domain(r.at("domain").get<std::string>()),
                                  r.at("node").get<int>());
    }
    cf.graph.validate();
  }
  if (j.contains("volume")) {
    cf.volume_ref = j.at("volume").get<std::string>();
    fs::path vp = fs::path(path).parent_path() / cf.volume_ref;
    if (!fs::exists(vp))
      throw MalformedCaseError(path + ": referenced volume does not exist: " + vp.string());
  }
  return cf;
}

inline CaseFile load_case(const std::string& path) { return case_from_json(load_json(path), path); }

inline void save_case(const std::string& path, const CaseFile& cf) {
  save_json(path, case_to_json(cf));
}

// ---------------------------------------------------------------------------
// Predictions.

inline json predictions_to_json(const std::vector<CasePrediction>& preds,
                                const CategoryTopology& topo) {
  json cases = json::array();
  for (const auto& cp : preds) {
    json c;
    c["id"] = cp.id;
    json segs = json::array();
    for (const auto& s : cp.segments)
      segs.push_back({{"id", s.segment},
                      {"class", topo.classes.at(s.class_index)},
                      {"confidence", s.confidence}});
    c["segments"] = segs;
    json conns = json::array();
    for (const auto& k : cp.connections)
      conns.push_back({{"pair", json::array({k.parent, k.child})},
                       {"classes", json::array({topo.classes.at(k.parent_class),
                                                topo.classes.at(k.child_class)})},
                       {"probability", k.probability}});
    c["connections"] = conns;
    cases.push_back(c);
  }
  return json{{"cases", cases}};
}

inline std::vector<CasePrediction> predictions_from_json(const json& j,
                                                         const CategoryTopology& topo) {
  std::vector<CasePrediction> out;
  for (const auto& c : j.at("cases")) {
    CasePrediction cp;
    cp.id = c.at("id").get<std::string>();
    for (const auto& s : c.at("segments")) {
      SegmentPrediction sp;
      sp.segment = s.at("id").get<int>();
      sp.class_index = topo.class_index(s.at("class").get<std::string>());
      sp.confidence = s.at("confidence").get<double>();
      cp.segments.push_back(sp);
    }
    if (c.contains("connections"))
      for (const auto& k : c.at("connections")) {
        ConnectionPrediction kp;
        kp.parent = k.at("pair")[0].get<int>();
        kp.child = k.at("pair")[1].get<int>();
        kp.parent_class = topo.class_index(k.at("classes")[0].get<std::string>());
        kp.child_class = topo.class_index(k.at("classes")[1].get<std::string>());
        kp.probability = k.at("probability").get<double>();
        cp.connections.push_back(kp);
      }
    out.push_back(std::move(cp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics report.

inline json report_to_json(const MetricsReport& rep) {
  json per_class = json::array();
  for (const auto& m : rep.per_class)
    per_class.push_back({{"class", m.name},
                         {"support", m.support},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"precision_defined", m.precision_defined},
                         {"recall_defined", m.recall_defined},
                         {"f1_defined", m.f1_defined}});
  return json{{"per_class", per_class},
              {"weighted",
               {{"precision", rep.weighted_precision},
                {"recall", rep.weighted_recall},
                {"f1", rep.weighted_f1}}},
              {"total_segments", rep.total_segments},
              {"total_connections", rep.total_connections},
              {"violating_connections", rep.violating_connections},
              {"viola", rep.viola},
              {"viola_defined", rep.viola_defined},
              {"cases", rep.cases},
              {"violating_cases", rep.violating_cases},
              {"viola_c", rep.viola_c}};
}

inline MetricsReport report_from_json(const json& j) {
  MetricsReport rep;
  for (const auto& m : j.at("per_class")) {
    ClassMetrics cm;
    cm.name = m.at("class").get<std::string>();
    cm.support = m.at("support").get<long>();
    cm.precision = m.at("precision").get<double>();
    cm.recall = m.at("recall").get<double>();
    cm.f1 = m.at("f1").get<double>();
    cm.precision_defined = m.at("precision_defined").get<bool>();
    cm.recall_defined = m.at("recall_defined").get<bool>();
    cm.f1_defined = m.at("f1_defined").get<bool>();
    rep.per_class.push_back(std::move(cm));
  }
  rep.weighted_precision = j.at("weighted").at("precision").get<double>();
  rep.weighted_recall = j.at("weighted").at("recall").get<double>();
  rep.weighted_f1 = j.at("weighted").at("f1").get<double>();
  rep.total_segments = j.at("total_segments").get<long>();
  rep.total_connections = j.at("total_connections").get<long>();
  rep.violating_connections = j.at("violating_connections").get<long>();
  rep.viola = j.at("viola").get<double>();
  rep.viola_defined = j.at("viola_defined").get<bool>();
  rep.cases = j.at("cases").get<long>();
  rep.violating_cases = j.at("violating_cases").get<long>();
  rep.viola_c = j.at("viola_c").get<double>();
  return rep;
}

// ---------------------------------------------------------------------------
// Config sections (strict: unknown keys are rejected).

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  detail::reject_unknown_keys(j,
                              {"channels", "transformer_blocks", "gcn_layers", "heads", "tau",
                               "feature_backend", "aggregator", "interaction", "classifier",
                               "coord_scale", "gcn"},
                              "model config");
  if (j.contains("channels")) c.channels = j.at("channels").get<int>();
  if (j.contains("transformer_blocks")) c.transformer_blocks = j.at("transformer_blocks").get<int>();
  if (j.contains("gcn_layers")) c.gcn_layers = j.at("gcn_layers").get<int>();
  if (j.contains("heads")) c.heads = j.at("heads").get<int>();
  if (j.contains("tau")) c.tau = j.at("tau").get<double>();
  if (j.contains("feature_backend")) c.feature_backend = j.at("feature_backend").get<std::string>();
  if (j.contains("aggregator")) c.aggregator = j.at("aggregator").get<std::string>();
  if (j.contains("interaction")) c.interaction = j.at("interaction").get<std::string>();
  if (j.contains("classifier")) c.classifier = j.at("classifier").get<std::string>();
  if (j.contains("coord_scale")) c.coord_scale = j.at("coord_scale").get<double>();
  if (j.contains("gcn")) {
    detail::reject_unknown_keys(j.at("gcn"), {"raw_adjacency"}, "model config gcn");
    if (j.at("gcn").contains("raw_adjacency"))
      c.gcn_raw_adjacency = j.at("gcn").at("raw_adjacency").get<bool>();
  }
  c.validate();
  return c;
}

inline json model_config_to_json(const ModelConfig& c) {
  return json{{"channels", c.channels},
              {"transformer_blocks", c.transformer_blocks},
              {"gcn_layers", c.gcn_layers},
              {"heads", c.heads},
              {"tau", c.tau},
              {"feature_backend", c.feature_backend},
              {"aggregator", c.aggregator},
              {"interaction", c.interaction},
              {"classifier", c.classifier},
              {"coord_scale", c.coord_scale},
              {"gcn", {{"raw_adjacency", c.gcn_raw_adjacency}}}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  detail::reject_unknown_keys(j,
                              {"base_lr", "batch_size", "total_iterations", "weight_decay", "betas",
                               "eps", "seed", "checkpoint_interval", "grad_clip"},
                              "train config");
  if (j.contains("base_lr")) c.base_lr = j.at("base_lr").get<double>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("total_iterations")) c.total_iterations = j.at("total_iterations").get<long>();
  if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("betas")) {
    if (!j.at("betas").is_array() || j.at("betas").size() != 2)
      throw ConfigError("train config: betas must be [beta1, beta2]");
    c.beta1 = j.at("betas")[0].get<double>();
    c.beta2 = j.at("betas")[1].get<double>();
  }
  if (j.contains("eps")) c.eps = j.at("eps").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("checkpoint_interval")) c.checkpoint_interval = j.at("checkpoint_interval").get<long>();
  if (j.contains("grad_clip")) c.grad_clip = j.at("grad_clip").get<double>();
  return c;
}

inline json train_config_to_json(const TrainConfig& c) {
  return json{{"base_lr", c.base_lr},
              {"batch_size", c.batch_size},
              {"total_iterations", c.total_iterations},
              {"weight_decay", c.weight_decay},
              {"betas", json::array({c.beta1, c.beta2})},
              {"eps", c.eps},
              {"seed", c.seed},
              {"checkpoint_interval", c.checkpoint_interval},
              {"grad_clip", c.grad_clip}};
}

inline synth::GeneratorConfig generator_config_from_json(const json& j) {
  synth::GeneratorConfig c;
  detail::reject_unknown_keys(j,
                              {"seed", "cases", "default_presence", "presence", "curvature",
                               "jitter", "ambiguity", "step_mm", "extent_mm", "emit_volumes",
                               "volume_dims", "radius_mm", "label_noise"},
                              "generator config");
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("cases")) c.cases = j.at("cases").get<int>();
  if (j.contains("default_presence")) c.default_presence = j.at("default_presence").get<double>();
  if (j.contains("presence"))
    for (auto it = j.at("presence").begin(); it != j.at("presence").end(); ++it)
      c.presence[it.key()] = it.value().get<double>();
  if (j.contains("curvature")) c.curvature = j.at("curvature").get<double>();
  if (j.contains("jitter")) c.jitter = j.at("jitter").get<double>();
  if (j.contains("ambiguity")) c.ambiguity = j.at("ambiguity").get<double>();
  if (j.contains("step_mm")) c.step_mm = j.at("step_mm").get<double>();
  if (j.contains("extent_mm")) c.extent_mm = j.at("extent_mm").get<double>();
  if (j.contains("emit_volumes")) c.emit_volumes = j.at("emit_volumes").get<bool>();
  if (j.contains("volume_dims")) {
    if (!j.at("volume_dims").is_array() || j.at("volume_dims").size() != 3)
      throw ConfigError("generator config: volume_dims must be [H, W, D]");
    for (int i = 0; i < 3; ++i) c.volume_dims[i] = j.at("volume_dims")[i].get<int>();
  }
  if (j.contains("radius_mm")) c.radius_mm = j.at("radius_mm").get<double>();
  if (j.contains("label_noise")) c.label_noise = j.at("label_noise").get<double>();
  return c;
}

inline json generator_config_to_json(const synth::GeneratorConfig& c) {
  json presence = json::object();
  for (const auto& [k, v] : c.presence) presence[k] = v;
  return json{{"seed", c.seed},
              {"cases", c.cases},
              {"default_presence", c.default_presence},
              {"presence", presence},
              {"curvature", c.curvature},
              {"jitter", c.jitter},
              {"ambiguity", c.ambiguity},
              {"step_mm", c.step_mm},
              {"extent_mm", c.extent_mm},
              {"emit_volumes", c.emit_volumes},
              {"volume_dims", c.volume_dims},
              {"radius_mm", c.radius_mm},
              {"label_noise", c.label_noise}};
}

// ---------------------------------------------------------------------------
// Dataset directories: an index plus one JSON per case.

inline void save_dataset(const std::string& dir, const std::vector<synth::SynthCase>& cases) {
  fs::create_directories(dir);
  json index;
  json names = json::array();
  for (const auto& sc : cases) {
    CaseFile cf;
    cf.id = sc.id;
    cf.has_tree = true;
    cf.tree = sc.tree;
    std::string name = sc.id + ".json";
    if (sc.volume) {
      cf.volume_ref = sc.id + ".vol.json";
      save_volume(dir + "/" + cf.volume_ref, *sc.volume);
    }
    save_case(dir + "/" + name, cf);
    names.push_back(name);
  }
  index["cases"] = names;
  save_json(dir + "/dataset.json", index);
}

inline std::vector<CaseFile> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("dataset directory does not exist: " + dir);
  fs::path index_path = fs::path(dir) / "dataset.json";
  std::vector<std::string> names;
  if (fs::exists(index_path)) {
    json index = load_json(index_path.string());
    for (const auto& n : index.at("cases")) names.push_back(n.get<std::string>());
  } else {
    for (const auto& entry : fs::directory_iterator(dir)) {
      std::string fn = entry.path().filename().string();
      if (fn.size() > 5 && fn.substr(fn.size() - 5) == ".json" && fn.rfind("case", 0) == 0 &&
          fn.find(".vol.") == std::string::npos)
        names.push_back(fn);
    }
    std::sort(names.begin(), names.end());
  }
  if (names.empty()) throw EmptyInputError("no cases found in " + dir);
  std::vector<CaseFile> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(load_case((fs::path(dir) / n).string()));
  return out;
}

// Lower case files to model inputs, excluding invalid cases with diagnostics.
// More than max_excluded_frac exclusions is a hard error.
struct PreparedDataset {
  std::vector<PreparedCase> cases;
  std::vector<std::string> diagnostics;
};

inline PreparedDataset prepare_dataset(const std::vector<CaseFile>& files,
                                       const CategoryTopology& topo, const TemplateSet& templates,
                                       bool need_volume, double max_excluded_frac = 0.10) {
  PreparedDataset out;
  for (const auto& cf : files) {
    try {
      VesselTree tree = cf.has_tree ? cf.tree : build_vessel_tree(cf.graph, cf.graph_roots);
      tree.validate();
      std::shared_ptr<const IntensityVolume> vol;
      if (need_volume) {
        if (cf.volume_ref.empty())
          throw MalformedCaseError("case " + cf.id + ": conv backend requires a volume reference");
        fs::path vp = fs::path(cf.path).parent_path() / cf.volume_ref;
        vol = std::make_shared<IntensityVolume>(load_volume(vp.string()));
      }
      out.cases.push_back(prepare_case(tree, topo, templates, cf.id, vol));
    } catch (const Error& e) {
      out.diagnostics.push_back(cf.id + ": " + e.what());
    }
  }
  if (!files.empty() &&
      static_cast<double>(out.diagnostics.size()) > max_excluded_frac * files.size()) {
    std::string msg = "too many invalid cases (" + std::to_string(out.diagnostics.size()) + "/" +
                      std::to_string(files.size()) + "):";
    for (const auto& d : out.diagnostics) msg += "\n  " + d;
    throw MalformedCaseError(msg);
  }
  return out;
}

}  // namespace topolab::io
