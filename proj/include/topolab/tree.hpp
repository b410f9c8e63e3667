#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "topolab/common.hpp"
#include "topolab/volume.hpp"

namespace topolab {

enum class Domain { LD, RD };

inline std::string domain_name(Domain d) { return d == Domain::LD ? "LD" : "RD"; }

inline Domain parse_domain(const std::string& s) {
  if (s == "LD") return Domain::LD;
  if (s == "RD") return Domain::RD;
  throw InputError("unknown domain: " + s);
}

// Ordered run of centerline points. The first point of a non-root segment
// duplicates its parent's last point.
struct Segment {
  int id = 0;
  Domain domain = Domain::LD;
  std::vector<Vec3> points;
  std::string gold_class;  // empty when the case is unlabeled
};

// Case-level forest: both domains merged, segment ids are indices into
// `segments`, connections are directed parent -> child.
struct VesselTree {
  std::vector<Segment> segments;
  std::vector<std::pair<int, int>> connections;
  std::vector<std::pair<Domain, int>> roots;  // one root segment per domain present

  int segment_count() const { return static_cast<int>(segments.size()); }
  int connection_count() const { return static_cast<int>(connections.size()); }

  void validate(double max_step = 2.0) const {
    int n = segment_count();
    std::vector<int> parent_count(n, 0);
    for (int i = 0; i < n; ++i) {
      if (segments[i].id != i) throw MalformedCaseError("segment ids must be 0..N-1 in order");
      if (segments[i].points.empty()) throw MalformedCaseError("segment with no points");
      for (std::size_t k = 1; k < segments[i].points.size(); ++k) {
        if (distance(segments[i].points[k - 1], segments[i].points[k]) > max_step + 1e-9)
          throw MalformedCaseError("segment step exceeds max step");
      }
    }
    for (auto [p, c] : connections) {
      if (p < 0 || p >= n || c < 0 || c >= n || p == c)
        throw MalformedCaseError("connection references invalid segment");
      if (segments[p].domain != segments[c].domain)
        throw MalformedCaseError("connection crosses domains");
      ++parent_count[c];
      if (distance(segments[p].points.back(), segments[c].points.front()) > 1e-6)
        throw MalformedCaseError("parent/child segments do not share an endpoint");
    }
    std::vector<char> is_root(n, 0);
    for (auto [d, r] : roots) {
      (void)d;
      if (r < 0 || r >= n) throw MalformedCaseError("root id out of range");
      is_root[r] = 1;
    }
    for (int i = 0; i < n; ++i) {
      if (is_root[i] && parent_count[i] != 0) throw MalformedCaseError("root has a parent");
      if (!is_root[i] && parent_count[i] != 1)
        throw MalformedCaseError("non-root segment must have exactly one parent");
    }
  }
};

// ---------------------------------------------------------------------------
// Minimum spanning forest (Kruskal). Edge weight is Euclidean world distance;
// ties break on the (a, b) index pair so the result is deterministic.

inline CenterlineGraph minimum_spanning_tree(const CenterlineGraph& graph) {
  graph.validate();
  struct WeightedEdge {
    double w;
    int a, b;
    bool operator<(const WeightedEdge& o) const {
      if (w != o.w) return w < o.w;
      if (a != o.a) return a < o.a;
      return b < o.b;
    }
  };
  std::vector<WeightedEdge> edges;
  edges.reserve(graph.edges.size());
  for (auto [a, b] : graph.edges)
    edges.push_back({distance(graph.positions[a], graph.positions[b]), a, b});
  std::sort(edges.begin(), edges.end());

  std::vector<int> parent(graph.positions.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };

  CenterlineGraph out;
  out.positions = graph.positions;
  out.voxels = graph.voxels;
  for (const auto& e : edges) {
    int ra = find(e.a), rb = find(e.b);
    if (ra == rb) continue;
    parent[ra] = rb;
    out.edges.emplace_back(e.a, e.b);
  }
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

// ---------------------------------------------------------------------------
// Domain splitting: assign each connected component of the forest to the root
// supplied for it.

struct RootedComponent {
  Domain domain;
  int root;  // index into `graph`
  CenterlineGraph graph;
  std::vector<int> original_index;  // component index -> index in the input graph
};

inline std::vector<RootedComponent> split_domains(
    const CenterlineGraph& forest, const std::vector<std::pair<Domain, int>>& roots) {
  forest.validate();
  int n = static_cast<int>(forest.positions.size());
  if (n == 0) throw EmptyInputError("split_domains: empty graph");

  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : forest.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }

  std::vector<int> component(n, -1);
  int component_count = 0;
  for (int i = 0; i < n; ++i) {
    if (component[i] != -1) continue;
    std::vector<int> stack{i};
    component[i] = component_count;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int u : adj[v])
        if (component[u] == -1) {
          component[u] = component_count;
          stack.push_back(u);
        }
    }
    ++component_count;
  }
  if (component_count > 2) throw MalformedCaseError("more than two connected components");
  if (static_cast<int>(roots.size()) != component_count)
    throw InvalidRootError("expected exactly one root per connected component");

  std::vector<int> root_of_component(component_count, -1);
  std::vector<Domain> domain_of_component(component_count, Domain::LD);
  for (auto [dom, r] : roots) {
    if (r < 0 || r >= n) throw InvalidRootError("root index out of range");
    int c = component[r];
    if (root_of_component[c] != -1)
      throw InvalidRootError("two roots assigned to the same component");
    root_of_component[c] = r;
    domain_of_component[c] = dom;
  }

  std::vector<RootedComponent> out(component_count);
  std::vector<int> remap(n, -1);
  for (int c = 0; c < component_count; ++c) {
    RootedComponent& rc = out[c];
    rc.domain = domain_of_component[c];
    for (int i = 0; i < n; ++i) {
      if (component[i] != c) continue;
      remap[i] = static_cast<int>(rc.graph.positions.size());
      rc.graph.positions.push_back(forest.positions[i]);
      if (!forest.voxels.empty()) rc.graph.voxels.push_back(forest.voxels[i]);
      rc.original_index.push_back(i);
    }
    rc.root = remap[root_of_component[c]];
  }
  for (auto [a, b] : forest.edges) {
    int c = component[a];
    int ra = remap[a], rb = remap[b];
    out[c].graph.edges.emplace_back(std::min(ra, rb), std::max(ra, rb));
  }
  for (auto& rc : out) std::sort(rc.graph.edges.begin(), rc.graph.edges.end());
  return out;
}

// ---------------------------------------------------------------------------
// Segment splitting. Break nodes are the root, leaves, and nodes with two or
// more children; every maximal run of pass-through nodes between break nodes
// becomes one segment, and the branch point is duplicated as the shared
// endpoint of parent and child segments. Children are visited in lexicographic
// order of their first point so the decomposition is deterministic.

inline VesselTree split_segments(const RootedComponent& rc) {
  const CenterlineGraph& g = rc.graph;
  int n = static_cast<int>(g.positions.size());
  if (n == 0) throw EmptyInputError("split_segments: empty component");

  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : g.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }

  // Orient away from the root.
  std::vector<int> parent(n, -1);
  std::vector<std::vector<int>> children(n);
  {
    std::vector<int> order{rc.root};
    std::vector<char> seen(n, 0);
    seen[rc.root] = 1;
    for (std::size_t i = 0; i < order.size(); ++i) {
      int v = order[i];
      for (int u : adj[v]) {
        if (seen[u]) continue;
        seen[u] = 1;
        parent[u] = v;
        children[v].push_back(u);
        order.push_back(u);
      }
    }
    for (int i = 0; i < n; ++i)
      if (!seen[i]) throw MalformedCaseError("component not connected to its root");
  }
  auto pos_less = [&](int a, int b) {
    const Vec3 &p = g.positions[a], &q = g.positions[b];
    if (p.x != q.x) return p.x < q.x;
    if (p.y != q.y) return p.y < q.y;
    return p.z < q.z;
  };
  for (auto& ch : children) std::sort(ch.begin(), ch.end(), pos_less);

  VesselTree tree;
  // Walk stack. `shared` is the branch point duplicated as the segment's first
  // point (-1 for the root segment), `first` the node the run continues from.
  struct Job {
    int shared;
    int first;
    int parent_segment;
  };
  std::vector<Job> stack;

  auto emit_segment = [&](const std::vector<int>& nodes, int shared, int parent_segment) {
    Segment s;
    s.id = tree.segment_count();
    s.domain = rc.domain;
    if (shared >= 0) s.points.push_back(g.positions[shared]);
    for (int v : nodes) s.points.push_back(g.positions[v]);
    tree.segments.push_back(std::move(s));
    int id = tree.segments.back().id;
    if (parent_segment >= 0) tree.connections.emplace_back(parent_segment, id);
    return id;
  };

  if (children[rc.root].size() >= 2) {
    // The root itself is a branch point: it forms a single-point segment.
    int root_seg = emit_segment({rc.root}, -1, -1);
    tree.roots.emplace_back(rc.domain, root_seg);
    for (auto it = children[rc.root].rbegin(); it != children[rc.root].rend(); ++it)
      stack.push_back({rc.root, *it, root_seg});
  } else {
    stack.push_back({-1, rc.root, -1});
  }

  while (!stack.empty()) {
    Job job = stack.back();
    stack.pop_back();
    std::vector<int> nodes{job.first};
    int v = job.first;
    while (children[v].size() == 1) {
      v = children[v][0];
      nodes.push_back(v);
    }
    int seg = emit_segment(nodes, job.shared, job.parent_segment);
    if (job.parent_segment < 0) tree.roots.emplace_back(rc.domain, seg);
    for (auto it = children[v].rbegin(); it != children[v].rend(); ++it)
      stack.push_back({v, *it, seg});
  }
  return tree;
}

// Merge per-domain trees into one case-level forest, renumbering ids.
inline VesselTree merge_domains(const std::vector<VesselTree>& trees) {
  VesselTree merged;
  for (const auto& t : trees) {
    int offset = merged.segment_count();
    for (const auto& s : t.segments) {
      Segment copy = s;
      copy.id = s.id + offset;
      merged.segments.push_back(std::move(copy));
    }
    for (auto [p, c] : t.connections) merged.connections.emplace_back(p + offset, c + offset);
    for (auto [d, r] : t.roots) merged.roots.emplace_back(d, r + offset);
  }
  return merged;
}

// Full centerline-to-segments path: MST, per-domain rooting, splitting.
inline VesselTree build_vessel_tree(const CenterlineGraph& graph,
                                    const std::vector<std::pair<Domain, int>>& roots) {
  CenterlineGraph forest = minimum_spanning_tree(graph);
  std::vector<RootedComponent> components = split_domains(forest, roots);
  std::vector<VesselTree> trees;
  trees.reserve(components.size());
  for (const auto& rc : components) trees.push_back(split_segments(rc));
  return merge_domains(trees);
}

}  // namespace topolab
