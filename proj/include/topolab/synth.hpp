#pragma once

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "topolab/common.hpp"
#include "topolab/topology.hpp"
#include "topolab/tree.hpp"
#include "topolab/volume.hpp"

namespace topolab::synth {

// Class-conditional geometry prior: a characteristic world-frame direction
// cone, a point-count range, and where along the parent the branch attaches.
// These corridors are what make labels learnable from geometry alone; RI and D
// deliberately share one wide corridor so only parent context separates them.
struct GeometryPrior {
  Vec3 direction{0, 0, -1};
  double sigma = 0.25;
  int len_min = 4, len_max = 6;
  double attach_frac = 0.5;
};

struct GeneratorConfig {
  std::uint64_t seed = 0;
  int cases = 1;
  double default_presence = 0.9;
  std::map<std::string, double> presence;  // per-class overrides
  double curvature = 0.12;   // per-step direction walk (unitless)
  double jitter = 2.0;       // root start position noise (mm)
  double ambiguity = 0.45;   // direction sigma of the shared RI/D corridor
  double step_mm = 1.4;
  double extent_mm = 100.0;  // world box edge; tree scaled in if exceeded
  bool emit_volumes = false;
  std::array<int, 3> volume_dims{64, 64, 64};
  double radius_mm = 1.7;
  double label_noise = 0.0;  // metric testing only, never in training configs

  double presence_of(const std::string& cls, const CategoryTopology& topo) const {
    for (const auto& [p, c] : topo.edges)
      if (p == cls) return 1.0;  // classes with children are always present
    auto it = presence.find(cls);
    double v = it != presence.end() ? it->second : default_presence;
    return v;
  }

  void validate(const CategoryTopology& topo) const {
    if (cases < 0) throw ConfigError("generator: cases must be >= 0");
    if (!(step_mm > 0.0) || step_mm > 2.0)
      throw ConfigError("generator: step_mm must be in (0, 2]");
    if (!(extent_mm > 0.0)) throw ConfigError("generator: extent_mm must be positive");
    if (label_noise < 0.0 || label_noise > 1.0)
      throw ConfigError("generator: label_noise must be in [0, 1]");
    for (const auto& [cls, p] : presence) {
      if (!topo.has_class(cls)) throw ConfigError("generator: presence for unknown class " + cls);
      if (p < 0.0 || p > 1.0) throw ConfigError("generator: presence must be in [0, 1]");
    }
    for (const auto& [parent, child] : topo.edges) {
      auto it = presence.find(parent);
      bool parent_forced_absent = it != presence.end() && it->second == 0.0;
      if (parent_forced_absent && presence_of(child, topo) > 0.0)
        throw ConfigError("generator: class " + child + " can be present while its parent " +
                          parent + " is forced absent");
    }
    for (int d : volume_dims)
      if (d < 8 || d % 4 != 0) throw ConfigError("generator: volume dims must be >= 8 and multiples of 4");
    if (!(radius_mm > 0.0)) throw ConfigError("generator: radius_mm must be positive");
  }
};

namespace detail {

inline Vec3 unit(Vec3 v) {
  double n = v.norm();
  if (n == 0.0) return {0, 0, -1};
  return {v.x / n, v.y / n, v.z / n};
}

inline GeometryPrior prior_for(const std::string& cls, double ambiguity) {
  static const std::map<std::string, GeometryPrior> table = {
      {"LM", {{-0.55, 0.15, -0.82}, 0.12, 9, 11, 0.0}},
      {"LAD", {{-0.20, 0.60, -0.77}, 0.15, 7, 9, 0.45}},
      {"LCX", {{-0.85, -0.35, -0.40}, 0.15, 8, 10, 0.70}},
      {"RI", {{-0.55, 0.35, -0.76}, 0.0, 4, 6, 0.88}},  // sigma set from `ambiguity`
      {"D", {{-0.55, 0.35, -0.76}, 0.0, 4, 6, 0.30}},   // shares RI's corridor
      {"S", {{0.12, 0.25, -0.96}, 0.20, 4, 5, 0.60}},
      {"OM", {{-0.80, 0.12, -0.58}, 0.20, 4, 6, 0.35}},
      {"L-PDA", {{-0.10, -0.80, -0.59}, 0.20, 5, 7, 0.65}},
      {"L-PLB", {{-0.55, -0.55, -0.63}, 0.20, 4, 6, 0.88}},
      {"RCA", {{0.35, -0.25, -0.90}, 0.12, 10, 12, 0.0}},
      {"CB", {{0.75, 0.40, -0.53}, 0.20, 4, 5, 0.20}},
      {"AM", {{0.80, -0.15, -0.58}, 0.20, 4, 6, 0.45}},
      {"R-PDA", {{-0.15, -0.70, -0.70}, 0.20, 5, 7, 0.70}},
      {"R-PLB", {{0.35, -0.80, -0.49}, 0.20, 4, 6, 0.88}},
  };
  auto it = table.find(cls);
  if (it != table.end()) {
    GeometryPrior p = it->second;
    if (cls == "RI" || cls == "D") p.sigma = ambiguity;
    return p;
  }
  // Unknown class (non-default topology): hash-derived but deterministic cone.
  std::uint64_t h = Rng::mix(0x70726931, std::hash<std::string>{}(cls));
  Rng r(h);
  GeometryPrior p;
  p.direction = unit({r.uniform(-1, 1), r.uniform(-1, 1), -std::abs(r.uniform(0.3, 1.0))});
  p.sigma = 0.2;
  p.len_min = 4;
  p.len_max = 7;
  p.attach_frac = r.uniform(0.2, 0.9);
  return p;
}

inline Vec3 domain_root_start(int domain_index, double extent) {
  if (domain_index == 0) return {0.58 * extent, 0.50 * extent, 0.74 * extent};
  return {0.82 * extent, 0.46 * extent, 0.74 * extent};
}

}  // namespace detail

// One generated case: the raw centerline graph (form (a)), the resulting
// split tree with gold classes (form (b)), and optional volumes.
struct SynthCase {
  std::string id;
  CenterlineGraph graph;
  std::vector<std::pair<Domain, int>> graph_roots;  // node index per domain
  VesselTree tree;
  std::shared_ptr<BinaryVolume> mask;
  std::shared_ptr<IntensityVolume> volume;
};

inline BinaryVolume rasterize(const VesselTree& tree, std::array<int, 3> dims, double radius_mm,
                              double extent_mm, bool* scaled = nullptr) {
  if (tree.segments.empty()) throw EmptyInputError("rasterize: empty tree");
  double max_coord = 0.0;
  for (const auto& s : tree.segments)
    for (const auto& p : s.points) max_coord = std::max({max_coord, p.x, p.y, p.z});
  double world = extent_mm;
  if (max_coord > extent_mm) {
    world = max_coord * 1.01;
    if (scaled) *scaled = true;
  }
  BinaryVolume vol;
  vol.dims = dims;
  vol.spacing = {world / dims[0], world / dims[1], world / dims[2]};
  std::set<Voxel> fg;
  for (const auto& seg : tree.segments) {
    for (const auto& p : seg.points) {
      int cx = static_cast<int>(p.x / vol.spacing[0]);
      int cy = static_cast<int>(p.y / vol.spacing[1]);
      int cz = static_cast<int>(p.z / vol.spacing[2]);
      // The containing voxel is always foreground, so a tube narrower than
      // the voxel pitch still rasterizes its centerline.
      fg.insert(Voxel{std::clamp(cx, 0, vol.dims[0] - 1), std::clamp(cy, 0, vol.dims[1] - 1),
                      std::clamp(cz, 0, vol.dims[2] - 1)});
      int rx = static_cast<int>(radius_mm / vol.spacing[0]) + 1;
      int ry = static_cast<int>(radius_mm / vol.spacing[1]) + 1;
      int rz = static_cast<int>(radius_mm / vol.spacing[2]) + 1;
      for (int z = cz - rz; z <= cz + rz; ++z)
        for (int y = cy - ry; y <= cy + ry; ++y)
          for (int x = cx - rx; x <= cx + rx; ++x) {
            Voxel v{x, y, z};
            if (!vol.in_bounds(v)) continue;
            Vec3 world{x * vol.spacing[0], y * vol.spacing[1], z * vol.spacing[2]};
            if (distance(world, p) <= radius_mm) fg.insert(v);
          }
    }
  }
  vol.foreground.assign(fg.begin(), fg.end());
  return vol;
}

inline IntensityVolume intensity_from_mask(const BinaryVolume& mask, Rng& rng) {
  IntensityVolume out;
  out.dims = mask.dims;
  out.spacing = mask.spacing;
  std::size_t n = static_cast<std::size_t>(mask.dims[0]) * mask.dims[1] * mask.dims[2];
  std::vector<double> raw(n, 0.0);
  for (const auto& v : mask.foreground)
    raw[static_cast<std::size_t>(v[0]) +
        static_cast<std::size_t>(mask.dims[0]) *
            (static_cast<std::size_t>(v[1]) + static_cast<std::size_t>(mask.dims[1]) * v[2])] = 1.0;
  out.values.assign(n, 0.0);
  // 3x3x3 box smoothing followed by mild noise, clipped to [0, 1].
  auto idx = [&](int x, int y, int z) {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(mask.dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(mask.dims[1]) * z);
  };
  for (int z = 0; z < mask.dims[2]; ++z)
    for (int y = 0; y < mask.dims[1]; ++y)
      for (int x = 0; x < mask.dims[0]; ++x) {
        double acc = 0.0;
        int cnt = 0;
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              int nx = x + dx, ny = y + dy, nz = z + dz;
              if (nx < 0 || ny < 0 || nz < 0 || nx >= mask.dims[0] || ny >= mask.dims[1] ||
                  nz >= mask.dims[2])
                continue;
              acc += raw[idx(nx, ny, nz)];
              ++cnt;
            }
        double v = acc / cnt + rng.normal(0.0, 0.03);
        out.values[idx(x, y, z)] = std::min(1.0, std::max(0.0, v));
      }
  return out;
}

namespace detail {

struct Builder {
  const GeneratorConfig& cfg;
  const CategoryTopology& topo;
  Rng rng;
  CenterlineGraph graph;
  std::vector<int> node_class;  // class index per node

  // Returns the node range [first, first + count) of the emitted polyline.
  std::pair<int, int> emit_polyline(Vec3 start_pos, Vec3 dir, int count, int cls,
                                    int attach_node) {
    int first = static_cast<int>(graph.positions.size());
    Vec3 pos = start_pos;
    Vec3 d = dir;
    for (int i = 0; i < count; ++i) {
      pos = pos + d * cfg.step_mm;
      graph.positions.push_back(pos);
      node_class.push_back(cls);
      int self = first + i;
      if (i == 0) {
        if (attach_node >= 0) graph.edges.emplace_back(attach_node, self);
      } else {
        graph.edges.emplace_back(self - 1, self);
      }
      d = unit(d + Vec3{rng.normal(0.0, cfg.curvature), rng.normal(0.0, cfg.curvature),
                        rng.normal(0.0, cfg.curvature)});
    }
    return {first, count};
  }

  // Recursively emit `cls` and its present children. `attach_node` < 0 roots
  // the polyline at `start_pos` itself.
  void emit_class(const std::string& cls, Vec3 start_pos, int attach_node) {
    GeometryPrior prior = prior_for(cls, cfg.ambiguity);
    int cls_idx = topo.class_index(cls);
    int len = prior.len_min + static_cast<int>(rng.uniform_int(
                                  static_cast<std::uint64_t>(prior.len_max - prior.len_min + 1)));
    Vec3 dir = unit(prior.direction + Vec3{rng.normal(0.0, prior.sigma),
                                           rng.normal(0.0, prior.sigma),
                                           rng.normal(0.0, prior.sigma)});
    int first;
    if (attach_node < 0) {
      // Root: the start position is the first node.
      first = static_cast<int>(graph.positions.size());
      graph.positions.push_back(start_pos);
      node_class.push_back(cls_idx);
      for (int i = 1; i < len; ++i) {
        Vec3 pos = graph.positions.back() + dir * cfg.step_mm;
        graph.positions.push_back(pos);
        node_class.push_back(cls_idx);
        graph.edges.emplace_back(first + i - 1, first + i);
        dir = unit(dir + Vec3{rng.normal(0.0, cfg.curvature), rng.normal(0.0, cfg.curvature),
                              rng.normal(0.0, cfg.curvature)});
      }
    } else {
      auto [f, n] = emit_polyline(start_pos, dir, len, cls_idx, attach_node);
      first = f;
    }

    // Children present this case, in config edge order, with interior
    // attachment indices spaced >= 2 apart (keeps branch nodes at degree 3).
    std::vector<std::pair<std::string, GeometryPrior>> kids;
    for (const auto& [p, c] : topo.edges) {
      if (p != cls) continue;
      double prob = cfg.presence_of(c, topo);
      bool present = prob >= 1.0 || rng.uniform() < prob;
      if (present) kids.emplace_back(c, prior_for(c, cfg.ambiguity));
    }
    if (kids.empty()) return;
    std::vector<int> attach(kids.size());
    int prev = -1;
    for (std::size_t k = 0; k < kids.size(); ++k) {
      int desired = static_cast<int>(std::lround(kids[k].second.attach_frac * (len - 1)));
      desired = std::max({desired, 1, prev + 2});
      attach[k] = std::min(desired, len - 2);
      prev = attach[k];
    }
    for (std::size_t k = 1; k < kids.size(); ++k)
      if (attach[k] <= attach[k - 1])
        throw MalformedCaseError("generator: parent " + cls + " too short for its branches");
    for (std::size_t k = 0; k < kids.size(); ++k) {
      int node = first + attach[k];
      emit_class(kids[k].first, graph.positions[node], node);
    }
  }
};

}  // namespace detail

inline SynthCase generate_case(const GeneratorConfig& cfg, const CategoryTopology& topo,
                               int case_index) {
  cfg.validate(topo);
  detail::Builder b{cfg, topo, Rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(case_index)))};

  // Category-tree roots become vessel domains; two-domain topologies only.
  std::vector<std::string> category_roots;
  for (const auto& cls : topo.classes) {
    bool has_parent = false;
    for (const auto& [p, c] : topo.edges)
      if (c == cls) has_parent = true;
    if (!has_parent) category_roots.push_back(cls);
  }
  if (category_roots.size() != 2)
    throw ConfigError("generator: topology must have exactly two category roots (domains)");

  SynthCase out;
  out.id = "case_" + std::to_string(case_index);
  for (int d = 0; d < 2; ++d) {
    Vec3 start = detail::domain_root_start(d, cfg.extent_mm);
    start = start + Vec3{b.rng.normal(0.0, cfg.jitter), b.rng.normal(0.0, cfg.jitter),
                         b.rng.normal(0.0, cfg.jitter)};
    int root_node = static_cast<int>(b.graph.positions.size());
    out.graph_roots.emplace_back(d == 0 ? Domain::LD : Domain::RD, root_node);
    b.emit_class(category_roots[d], start, -1);
  }
  std::sort(b.graph.edges.begin(), b.graph.edges.end());
  out.graph = std::move(b.graph);
  out.graph.validate();

  out.tree = build_vessel_tree(out.graph, out.graph_roots);

  // Gold class of a segment = class of its last point (the first point may be
  // a duplicated branch node belonging to the parent).
  std::map<std::array<double, 3>, int> class_at;
  for (std::size_t i = 0; i < out.graph.positions.size(); ++i) {
    const Vec3& p = out.graph.positions[i];
    class_at[{p.x, p.y, p.z}] = b.node_class[i];
  }
  for (auto& seg : out.tree.segments) {
    const Vec3& last = seg.points.back();
    auto it = class_at.find({last.x, last.y, last.z});
    if (it == class_at.end()) throw MalformedCaseError("generator: split produced an unknown point");
    seg.gold_class = topo.classes[it->second];
  }

  if (cfg.label_noise > 0.0) {
    for (auto& seg : out.tree.segments)
      if (b.rng.uniform() < cfg.label_noise)
        seg.gold_class = topo.classes[b.rng.uniform_int(topo.classes.size())];
  }

  if (cfg.emit_volumes) {
    out.mask = std::make_shared<BinaryVolume>(
        rasterize(out.tree, cfg.volume_dims, cfg.radius_mm, cfg.extent_mm));
    out.volume = std::make_shared<IntensityVolume>(intensity_from_mask(*out.mask, b.rng));
  }
  return out;
}

inline std::vector<SynthCase> generate_dataset(const GeneratorConfig& cfg,
                                               const CategoryTopology& topo, int threads = 1) {
  cfg.validate(topo);
  std::vector<SynthCase> cases(cfg.cases);
  parallel_for(static_cast<std::size_t>(cfg.cases), threads,
               [&](std::size_t i) { cases[i] = generate_case(cfg, topo, static_cast<int>(i)); });
  return cases;
}

}  // namespace topolab::synth
