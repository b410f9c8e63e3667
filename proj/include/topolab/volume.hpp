#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "topolab/common.hpp"

namespace topolab {

using Voxel = std::array<int, 3>;  // (x, y, z), 0 <= x < dims[0] etc.

// Binary voxel mask. Foreground is kept sorted and duplicate-free.
struct BinaryVolume {
  std::array<int, 3> dims{0, 0, 0};          // (H, W, D)
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm per voxel
  std::vector<Voxel> foreground;

  bool in_bounds(const Voxel& v) const {
    return v[0] >= 0 && v[0] < dims[0] && v[1] >= 0 && v[1] < dims[1] &&
           v[2] >= 0 && v[2] < dims[2];
  }

  void normalize() {
    std::sort(foreground.begin(), foreground.end());
    foreground.erase(std::unique(foreground.begin(), foreground.end()), foreground.end());
  }

  void validate() const {
    for (const auto& v : foreground) {
      if (!in_bounds(v)) throw InputError("BinaryVolume: foreground voxel out of bounds");
    }
    for (std::size_t i = 1; i < foreground.size(); ++i) {
      if (foreground[i] == foreground[i - 1])
        throw InputError("BinaryVolume: duplicate foreground voxel");
    }
  }

  Vec3 world(const Voxel& v) const {
    return {v[0] * spacing[0], v[1] * spacing[1], v[2] * spacing[2]};
  }
};

// Dense scalar grid. Linear index: x fastest, i.e. idx = x + H*(y + W*z).
struct IntensityVolume {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<double> values;

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
  }

  double at(int x, int y, int z) const { return values[index(x, y, z)]; }
  double& at(int x, int y, int z) { return values[index(x, y, z)]; }

  void validate() const {
    std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    if (values.size() != n) throw InputError("IntensityVolume: value count != H*W*D");
    for (double v : values) {
      if (!std::isfinite(v)) throw InputError("IntensityVolume: non-finite value");
    }
  }
};

// Skeleton point graph. Voxel coordinates are present only when the graph was
// derived from a voxel volume; positions are always world-space (mm).
struct CenterlineGraph {
  std::vector<Vec3> positions;
  std::vector<Voxel> voxels;  // empty, or one entry per position
  std::vector<std::pair<int, int>> edges;  // undirected, a < b

  bool voxel_backed() const { return !voxels.empty(); }

  void validate() const {
    if (!voxels.empty() && voxels.size() != positions.size())
      throw InputError("CenterlineGraph: voxel/position count mismatch");
    int n = static_cast<int>(positions.size());
    for (auto [a, b] : edges) {
      if (a < 0 || a >= n || b < 0 || b >= n)
        throw InputError("CenterlineGraph: edge references invalid point index");
      if (a == b) throw InputError("CenterlineGraph: self-edge");
      if (!voxels.empty()) {
        int dx = std::abs(voxels[a][0] - voxels[b][0]);
        int dy = std::abs(voxels[a][1] - voxels[b][1]);
        int dz = std::abs(voxels[a][2] - voxels[b][2]);
        if (std::max({dx, dy, dz}) != 1)
          throw InputError("CenterlineGraph: edge joins voxels outside the 26-neighborhood");
      }
    }
  }
};

}  // namespace topolab
