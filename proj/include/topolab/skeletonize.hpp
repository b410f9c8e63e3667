#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "topolab/common.hpp"
#include "topolab/volume.hpp"

namespace topolab {

namespace detail {

// Dense occupancy grid used by the thinning loop.
struct Grid {
  std::array<int, 3> dims;
  std::vector<std::uint8_t> cells;

  explicit Grid(const std::array<int, 3>& d)
      : dims(d), cells(static_cast<std::size_t>(d[0]) * d[1] * d[2], 0) {}

  static Grid from_volume(const BinaryVolume& vol) {
    Grid g(vol.dims);
    for (const auto& v : vol.foreground) g.set(v, 1);
    return g;
  }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
  }

  bool fg(int x, int y, int z) const {
    if (x < 0 || x >= dims[0] || y < 0 || y >= dims[1] || z < 0 || z >= dims[2]) return false;
    return cells[index(x, y, z)] != 0;
  }

  bool fg(const Voxel& v) const { return fg(v[0], v[1], v[2]); }
  void set(const Voxel& v, std::uint8_t val) { cells[index(v[0], v[1], v[2])] = val; }
};

// Cell adjacency inside the 3x3x3 block. Cell i encodes offset
// (i%3-1, i/3%3-1, i/9-1); cell 13 is the center.
struct BlockAdjacency {
  std::array<std::uint32_t, 27> adj26{};
  std::array<std::uint32_t, 27> adj6{};

  BlockAdjacency() {
    for (int i = 0; i < 27; ++i) {
      int ix = i % 3, iy = (i / 3) % 3, iz = i / 9;
      for (int j = 0; j < 27; ++j) {
        if (i == j) continue;
        int jx = j % 3, jy = (j / 3) % 3, jz = j / 9;
        int dx = std::abs(ix - jx), dy = std::abs(iy - jy), dz = std::abs(iz - jz);
        if (std::max({dx, dy, dz}) == 1) adj26[i] |= 1u << j;
        if (dx + dy + dz == 1) adj6[i] |= 1u << j;
      }
    }
  }
};

inline const BlockAdjacency& block_adjacency() {
  static const BlockAdjacency tables;
  return tables;
}

inline int count_components(std::uint32_t mask, const std::array<std::uint32_t, 27>& adj) {
  int components = 0;
  std::uint32_t remaining = mask;
  while (remaining) {
    ++components;
    std::uint32_t frontier = remaining & (~remaining + 1);  // lowest set bit
    std::uint32_t comp = 0;
    while (frontier) {
      comp |= frontier;
      std::uint32_t next = 0;
      std::uint32_t f = frontier;
      while (f) {
        int i = __builtin_ctz(f);
        f &= f - 1;
        next |= adj[i] & mask;
      }
      frontier = next & ~comp;
    }
    remaining &= ~comp;
  }
  return components;
}

inline std::uint32_t neighborhood_mask(const Grid& g, const Voxel& p) {
  std::uint32_t mask = 0;
  for (int i = 0; i < 27; ++i) {
    int dx = i % 3 - 1, dy = (i / 3) % 3 - 1, dz = i / 9 - 1;
    if (g.fg(p[0] + dx, p[1] + dy, p[2] + dz)) mask |= 1u << i;
  }
  return mask;
}

constexpr std::uint32_t kCenterBit = 1u << 13;
constexpr std::uint32_t kAllBits = (1u << 27) - 1;

// Deleting p must keep both the number of 26-connected foreground components
// and the number of 6-connected background components of the 3x3x3 block
// unchanged.
inline bool preserves_local_topology(std::uint32_t fg_mask) {
  const auto& adj = block_adjacency();
  std::uint32_t fg_without = fg_mask & ~kCenterBit;
  if (count_components(fg_mask, adj.adj26) != count_components(fg_without, adj.adj26))
    return false;
  std::uint32_t bg_before = ~fg_mask & kAllBits;
  std::uint32_t bg_after = bg_before | kCenterBit;
  if (count_components(bg_before, adj.adj6) != count_components(bg_after, adj.adj6))
    return false;
  return true;
}

inline int count_fg_neighbors(std::uint32_t fg_mask) {
  return __builtin_popcount(fg_mask & ~kCenterBit);
}

inline bool deletable(const Grid& g, const Voxel& p) {
  std::uint32_t mask = neighborhood_mask(g, p);
  if (!(mask & kCenterBit)) return false;
  if (count_fg_neighbors(mask) <= 1) return false;  // endpoints survive
  return preserves_local_topology(mask);
}

}  // namespace detail

// True if the voxel could still be peeled by the thinning rule. A converged
// skeleton has none.
inline bool simple_deletable(const BinaryVolume& vol, const Voxel& p) {
  detail::Grid g = detail::Grid::from_volume(vol);
  return detail::deletable(g, p);
}

// 3D thinning by boundary peeling. Each pass runs six directional
// sub-iterations. Candidates are the voxels whose face neighbor in that
// direction is background at the start of the sub-iteration, so a pass peels
// at most one layer per direction; each candidate is then re-tested against
// the up-to-date volume before deletion, which keeps topology exact.
inline BinaryVolume skeletonize(const BinaryVolume& mask) {
  if (mask.foreground.empty()) throw EmptyInputError("skeletonize: empty mask");
  mask.validate();

  detail::Grid grid = detail::Grid::from_volume(mask);
  std::vector<Voxel> alive = mask.foreground;
  std::sort(alive.begin(), alive.end());

  static constexpr std::array<std::array<int, 3>, 6> kDirections{{
      {{-1, 0, 0}}, {{1, 0, 0}}, {{0, -1, 0}}, {{0, 1, 0}}, {{0, 0, -1}}, {{0, 0, 1}},
  }};

  bool changed = true;
  std::vector<Voxel> candidates;
  while (changed) {
    changed = false;
    for (const auto& d : kDirections) {
      candidates.clear();
      for (const auto& p : alive) {
        if (!grid.fg(p)) continue;
        if (grid.fg(p[0] + d[0], p[1] + d[1], p[2] + d[2])) continue;  // not a d-boundary voxel
        candidates.push_back(p);
      }
      for (const auto& p : candidates) {
        if (detail::deletable(grid, p)) {
          grid.set(p, 0);
          changed = true;
        }
      }
    }
    if (changed) {
      alive.erase(std::remove_if(alive.begin(), alive.end(),
                                 [&](const Voxel& v) { return !grid.fg(v); }),
                  alive.end());
    }
  }

  BinaryVolume out;
  out.dims = mask.dims;
  out.spacing = mask.spacing;
  out.foreground = std::move(alive);
  return out;
}

// One node per foreground voxel, one edge per 26-adjacent pair. World
// positions are voxel index times spacing.
inline CenterlineGraph to_centerline_graph(const BinaryVolume& skeleton) {
  skeleton.validate();
  std::vector<Voxel> voxels = skeleton.foreground;
  std::sort(voxels.begin(), voxels.end());

  CenterlineGraph graph;
  graph.voxels = voxels;
  graph.positions.reserve(voxels.size());
  for (const auto& v : voxels) graph.positions.push_back(skeleton.world(v));

  std::unordered_map<std::uint64_t, int> lookup;
  lookup.reserve(voxels.size() * 2);
  auto key = [](const Voxel& v) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[0])) << 42) |
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[1])) << 21) |
           static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[2]));
  };
  for (int i = 0; i < static_cast<int>(voxels.size()); ++i) lookup[key(voxels[i])] = i;

  for (int i = 0; i < static_cast<int>(voxels.size()); ++i) {
    const Voxel& v = voxels[i];
    for (int dz = -1; dz <= 1; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          Voxel n{v[0] + dx, v[1] + dy, v[2] + dz};
          if (n[0] < 0 || n[1] < 0 || n[2] < 0) continue;
          auto it = lookup.find(key(n));
          if (it != lookup.end() && it->second > i) graph.edges.emplace_back(i, it->second);
        }
      }
    }
  }
  std::sort(graph.edges.begin(), graph.edges.end());
  return graph;
}

// Number of 26-connected foreground components; used by tests and the
// generator round trip.
inline int count_components_26(const BinaryVolume& vol) {
  std::vector<Voxel> voxels = vol.foreground;
  std::sort(voxels.begin(), voxels.end());
  std::unordered_map<std::uint64_t, int> lookup;
  auto key = [](const Voxel& v) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[0])) << 42) |
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[1])) << 21) |
           static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[2]));
  };
  for (int i = 0; i < static_cast<int>(voxels.size()); ++i) lookup[key(voxels[i])] = i;

  std::vector<char> seen(voxels.size(), 0);
  int components = 0;
  std::vector<int> stack;
  for (int i = 0; i < static_cast<int>(voxels.size()); ++i) {
    if (seen[i]) continue;
    ++components;
    stack.push_back(i);
    seen[i] = 1;
    while (!stack.empty()) {
      Voxel v = voxels[stack.back()];
      stack.pop_back();
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            Voxel n{v[0] + dx, v[1] + dy, v[2] + dz};
            if (n[0] < 0 || n[1] < 0 || n[2] < 0) continue;
            auto it = lookup.find(key(n));
            if (it != lookup.end() && !seen[it->second]) {
              seen[it->second] = 1;
              stack.push_back(it->second);
            }
          }
    }
  }
  return components;
}

}  // namespace topolab
