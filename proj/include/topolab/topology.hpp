#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "topolab/common.hpp"

namespace topolab {

// The fixed anatomical parent->child relation among artery categories, as
// opposed to the per-patient geometric tree.
struct CategoryTopology {
  std::vector<std::string> classes;
  std::vector<std::pair<std::string, std::string>> edges;  // (parent class, child class)

  int class_count() const { return static_cast<int>(classes.size()); }

  int class_index(const std::string& name) const {
    for (int i = 0; i < class_count(); ++i)
      if (classes[i] == name) return i;
    throw UnknownClassError("unknown class: " + name);
  }

  bool has_class(const std::string& name) const {
    return std::find(classes.begin(), classes.end(), name) != classes.end();
  }

  void validate() const {
    std::map<std::string, int> seen;
    for (const auto& c : classes) {
      if (++seen[c] > 1) throw ConfigError("duplicate class name: " + c);
    }
    std::map<std::string, int> parent_count;
    for (const auto& [p, c] : edges) {
      if (!has_class(p)) throw ConfigError("edge parent not a listed class: " + p);
      if (!has_class(c)) throw ConfigError("edge child not a listed class: " + c);
      if (p == c) throw ConfigError("self-loop edge in topology: " + p);
      if (++parent_count[c] > 1) throw ConfigError("class has two parents: " + c);
    }
    // Forest check: no directed cycles.
    std::map<std::string, std::string> parent;
    for (const auto& [p, c] : edges) parent[c] = p;
    for (const auto& c : classes) {
      std::string cur = c;
      int hops = 0;
      while (parent.count(cur)) {
        cur = parent[cur];
        if (++hops > class_count()) throw ConfigError("cycle in topology edges");
      }
    }
  }

  // True iff (parent, child) is a topology edge or parent == child.
  bool is_valid_connection(const std::string& parent_class, const std::string& child_class) const {
    if (!has_class(parent_class)) throw UnknownClassError("unknown class: " + parent_class);
    if (!has_class(child_class)) throw UnknownClassError("unknown class: " + child_class);
    if (parent_class == child_class) return true;
    for (const auto& [p, c] : edges)
      if (p == parent_class && c == child_class) return true;
    return false;
  }
};

// Built-in copy of config/topology_14.json, used when no --topology is given.
inline CategoryTopology default_topology() {
  CategoryTopology topo;
  topo.classes = {"LM", "LAD", "D",  "S",  "RI",    "LCX",   "OM",
                  "L-PDA", "L-PLB", "RCA", "CB", "AM", "R-PDA", "R-PLB"};
  topo.edges = {{"LM", "LAD"},    {"LM", "LCX"},    {"LM", "RI"},    {"LAD", "D"},
                {"LAD", "S"},     {"LCX", "OM"},    {"LCX", "L-PDA"}, {"LCX", "L-PLB"},
                {"RCA", "CB"},    {"RCA", "AM"},    {"RCA", "R-PDA"}, {"RCA", "R-PLB"}};
  return topo;
}

// out[2k] = sin(idx / 10000^(2k/C)), out[2k+1] = cos(idx / 10000^(2k/C)).
inline std::vector<double> sinusoidal_encode(int class_index, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("sinusoidal encoding dimension must be even");
  std::vector<double> out(dim);
  for (int k = 0; 2 * k < dim; ++k) {
    double freq = std::pow(10000.0, -2.0 * k / dim);
    out[2 * k] = std::sin(class_index * freq);
    out[2 * k + 1] = std::cos(class_index * freq);
  }
  return out;
}

// Frozen template embeddings: one row of dimension 2C per ground-truth
// connection. Rows cover every directed edge (in config order) followed by one
// self-connection per class (in class order).
struct TemplateSet {
  int dim = 0;  // 2C
  std::vector<std::vector<double>> templates;
  std::vector<std::pair<int, int>> index_map;  // row -> (parent class idx, child class idx)

  int size() const { return static_cast<int>(templates.size()); }

  int row_of(int parent_class, int child_class) const {
    for (int i = 0; i < size(); ++i)
      if (index_map[i].first == parent_class && index_map[i].second == child_class) return i;
    return -1;
  }
};

inline TemplateSet build_templates(const CategoryTopology& topo, int channels) {
  topo.validate();
  TemplateSet set;
  set.dim = 2 * channels;

  auto add_row = [&](int parent_idx, int child_idx) {
    std::vector<double> row = sinusoidal_encode(parent_idx, channels);
    std::vector<double> child = sinusoidal_encode(child_idx, channels);
    row.insert(row.end(), child.begin(), child.end());
    set.templates.push_back(std::move(row));
    set.index_map.emplace_back(parent_idx, child_idx);
  };

  for (const auto& [p, c] : topo.edges) add_row(topo.class_index(p), topo.class_index(c));
  for (int c = 0; c < topo.class_count(); ++c) add_row(c, c);
  return set;
}

}  // namespace topolab
