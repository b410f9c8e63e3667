#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "topolab/autodiff.hpp"
#include "topolab/common.hpp"

namespace topolab::nn {

using ad::Tensor;

// Owns every learnable tensor, keyed by a hierarchical name. Creation order
// drives initialization draws; serialization order is lexicographic by name.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  // Weight init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
  Tensor create(const std::string& name, std::vector<int> shape, int fan_in) {
    if (fan_in <= 0) throw ConfigError("ParamStore: fan_in must be positive for " + name);
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    std::vector<double> values(n);
    for (double& v : values) v = rng_.uniform(-bound, bound);
    return insert(name, Tensor::leaf(std::move(shape), std::move(values), true));
  }

  Tensor create_zeros(const std::string& name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return insert(name, Tensor::leaf(std::move(shape), std::vector<double>(n, 0.0), true));
  }

  Tensor at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("ParamStore: unknown parameter " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }

  // Lexicographic (map) order; stable across runs.
  std::vector<std::pair<std::string, Tensor>> items() const {
    return {params_.begin(), params_.end()};
  }

  void zero_grads() {
    for (auto& [name, t] : params_) {
      auto& g = t.grad();
      std::fill(g.begin(), g.end(), 0.0);
    }
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open checkpoint for writing: " + path);
    out.write("TLAB", 4);
    write_u32(out, 1);
    for (const auto& [name, t] : params_) {
      write_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(out, static_cast<std::uint32_t>(t.shape().size()));
      for (int e : t.shape()) write_u64(out, static_cast<std::uint64_t>(e));
      for (double v : t.values()) write_f64(out, v);
    }
    if (!out) throw InputError("checkpoint write failed: " + path);
  }

  // Loads values into the already-constructed parameter set; the file must
  // cover exactly the same names and shapes.
  void load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "TLAB", 4) != 0)
      throw InputError("not a checkpoint file (bad magic): " + path);
    std::uint32_t version = read_u32(in, path);
    if (version != 1) throw InputError("unsupported checkpoint version in " + path);
    std::size_t loaded = 0;
    while (true) {
      int peeked = in.peek();
      if (peeked == std::char_traits<char>::eof()) break;
      std::uint32_t name_len = read_u32(in, path);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      std::uint32_t rank = read_u32(in, path);
      std::vector<int> shape(rank);
      std::size_t n = 1;
      for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<int>(read_u64(in, path));
        n *= static_cast<std::size_t>(shape[i]);
      }
      auto it = params_.find(name);
      if (it == params_.end())
        throw ConfigError("checkpoint parameter not in model: " + name);
      if (it->second.shape() != shape)
        throw ShapeError("checkpoint shape mismatch for " + name);
      auto& dst = it->second.mutable_values();
      for (std::size_t i = 0; i < n; ++i) dst[i] = read_f64(in, path);
      if (!in) throw InputError("truncated checkpoint: " + path);
      ++loaded;
    }
    if (loaded != params_.size())
      throw ConfigError("checkpoint covers " + std::to_string(loaded) + " of " +
                        std::to_string(params_.size()) + " model parameters");
  }

 private:
  Tensor insert(const std::string& name, Tensor t) {
    auto [it, fresh] = params_.emplace(name, t);
    if (!fresh) throw ConfigError("ParamStore: duplicate parameter " + name);
    return it->second;
  }

  static void write_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  static void write_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
  static void write_f64(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
  }
  static std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw InputError("truncated checkpoint: " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  static std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw InputError("truncated checkpoint: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  static double read_f64(std::ifstream& in, const std::string& path) {
    std::uint64_t bits = read_u64(in, path);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::map<std::string, Tensor> params_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Layer parameter bundles. `create` draws fresh parameters; handles stay valid
// for the store's lifetime, so checkpoint loads update them in place.

inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ad::add_rowvec(ad::matmul(x, w), b);
}

struct DenseParams {
  Tensor w, b;
  static DenseParams create(ParamStore& ps, const std::string& prefix, int in, int out) {
    return {ps.create(prefix + ".w", {in, out}, in), ps.create_zeros(prefix + ".b", {out})};
  }
  Tensor operator()(const Tensor& x) const { return dense(x, w, b); }
};

struct LayerNormParams {
  Tensor gamma, beta;
  static LayerNormParams create(ParamStore& ps, const std::string& prefix, int dim) {
    std::vector<double> ones(static_cast<std::size_t>(dim), 1.0);
    Tensor g = ps.create_zeros(prefix + ".gamma", {dim});
    g.mutable_values() = ones;
    Tensor b = ps.create_zeros(prefix + ".beta", {dim});
    return {g, b};
  }
  Tensor operator()(const Tensor& x) const { return ad::layer_norm_rows(x, gamma, beta); }
};

struct MhaParams {
  DenseParams q, k, v, o;
  int heads = 1;
  static MhaParams create(ParamStore& ps, const std::string& prefix, int c, int heads) {
    if (heads <= 0 || c % heads != 0)
      throw ConfigError("multi_head_attention: channel dim must be divisible by heads");
    return {DenseParams::create(ps, prefix + ".q", c, c),
            DenseParams::create(ps, prefix + ".k", c, c),
            DenseParams::create(ps, prefix + ".v", c, c),
            DenseParams::create(ps, prefix + ".o", c, c), heads};
  }
};

inline Tensor multi_head_attention(const Tensor& x, const MhaParams& p) {
  int c = x.cols();
  if (c % p.heads != 0)
    throw ConfigError("multi_head_attention: channel dim must be divisible by heads");
  int dh = c / p.heads;
  Tensor q = p.q(x), k = p.k(x), v = p.v(x);
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(p.heads);
  for (int h = 0; h < p.heads; ++h) {
    Tensor qh = ad::slice_cols(q, h * dh, dh);
    Tensor kh = ad::slice_cols(k, h * dh, dh);
    Tensor vh = ad::slice_cols(v, h * dh, dh);
    Tensor scores = ad::scale(ad::matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor attn = ad::softmax_rows(scores);
    head_outputs.push_back(ad::matmul(attn, vh));
  }
  return p.o(ad::concat_cols(head_outputs));
}

struct FfnParams {
  DenseParams inner, outer;
  static FfnParams create(ParamStore& ps, const std::string& prefix, int c) {
    return {DenseParams::create(ps, prefix + ".inner", c, 4 * c),
            DenseParams::create(ps, prefix + ".outer", 4 * c, c)};
  }
  Tensor operator()(const Tensor& x) const { return outer(ad::relu(inner(x))); }
};

// Pre-norm residual transformer block.
struct TransformerBlockParams {
  LayerNormParams ln1, ln2;
  MhaParams mha;
  FfnParams ffn;
  static TransformerBlockParams create(ParamStore& ps, const std::string& prefix, int c, int heads) {
    return {LayerNormParams::create(ps, prefix + ".ln1", c),
            LayerNormParams::create(ps, prefix + ".ln2", c),
            MhaParams::create(ps, prefix + ".mha", c, heads),
            FfnParams::create(ps, prefix + ".ffn", c)};
  }
  Tensor operator()(const Tensor& x) const {
    Tensor y = ad::add(x, multi_head_attention(ln1(x), mha));
    return ad::add(y, ffn(ln2(y)));
  }
};

inline Tensor gcn_layer(const Tensor& e, const Tensor& a_hat, const Tensor& w) {
  return ad::relu(ad::matmul(ad::matmul(a_hat, e), w));
}

// Propagation matrix over the case's undirected segment adjacency. Default is
// symmetric renormalization with self-loops; raw_adjacency keeps A untouched.
inline Tensor gcn_propagation_matrix(int n, const std::vector<std::pair<int, int>>& connections,
                                     bool raw_adjacency) {
  std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
  for (auto [i, j] : connections) {
    if (i < 0 || i >= n || j < 0 || j >= n) throw ShapeError("gcn adjacency: index out of range");
    if (i == j) continue;
    a[static_cast<std::size_t>(i) * n + j] = 1.0;
    a[static_cast<std::size_t>(j) * n + i] = 1.0;
  }
  if (raw_adjacency) return Tensor::constant({n, n}, std::move(a));
  for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i) * n + i] = 1.0;
  std::vector<double> inv_sqrt_deg(n);
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n; ++j) deg += a[static_cast<std::size_t>(i) * n + j];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a[static_cast<std::size_t>(i) * n + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
  return Tensor::constant({n, n}, std::move(a));
}

// Two-stage stride-2 convolutional image encoder: {H,W,D,1} -> {H/4,W/4,D/4,C}.
struct ConvEncoderParams {
  Tensor w1, b1, w2, b2;
  static ConvEncoderParams create(ParamStore& ps, const std::string& prefix, int c) {
    if (c < 2 || c % 2 != 0) throw ConfigError("conv encoder: channel dim must be even");
    int mid = c / 2;
    return {ps.create(prefix + ".w1", {3, 3, 3, 1, mid}, 27),
            ps.create_zeros(prefix + ".b1", {mid}),
            ps.create(prefix + ".w2", {3, 3, 3, mid, c}, 27 * mid),
            ps.create_zeros(prefix + ".b2", {c})};
  }
  Tensor operator()(const Tensor& volume) const {
    return ad::conv3d_s2p1(ad::relu(ad::conv3d_s2p1(volume, w1, b1)), w2, b2);
  }
};

}  // namespace topolab::nn
