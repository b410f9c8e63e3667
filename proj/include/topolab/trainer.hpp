#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "topolab/common.hpp"
#include "topolab/model.hpp"
#include "topolab/optim.hpp"

namespace topolab {

struct TrainConfig {
  double base_lr = 5e-4;
  int batch_size = 4;
  long total_iterations = 0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  long checkpoint_interval = 0;  // 0: final checkpoint only
  double grad_clip = 0.0;        // 0: disabled

  void validate() const {
    if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (total_iterations < 1) throw ConfigError("total_iterations must be >= 1");
    if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
  }
};

// Seeded shuffled epoch iterator: a fresh permutation per epoch, one RNG
// stream, so batch composition depends only on (seed, dataset size).
class EpochIterator {
 public:
  EpochIterator(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    if (n == 0) throw EmptyInputError("EpochIterator: empty dataset");
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }

  std::size_t next() {
    if (cursor_ == order_.size()) {
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

struct TrainResult {
  std::vector<double> losses;  // summed batch loss per iteration
  std::vector<double> lrs;
  std::string final_checkpoint;
};

inline void clip_gradients(nn::ParamStore& params, double max_norm) {
  double sq = 0.0;
  auto items = params.items();
  for (auto& [name, p] : items)
    for (double g : p.grad()) sq += g * g;
  double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  double factor = max_norm / norm;
  for (auto& [name, p] : items)
    for (double& g : p.grad()) g *= factor;
}

// Iteration loop: gradients accumulate over the batch's cases, one AdamW step
// per iteration. Writes train_log.csv and checkpoints under out_dir when
// out_dir is non-empty.
inline TrainResult train(Model& model, const std::vector<PreparedCase>& dataset,
                         const TrainConfig& cfg, const std::string& out_dir = "") {
  cfg.validate();
  if (dataset.empty()) throw EmptyInputError("train: empty dataset");
  for (const auto& pc : dataset)
    if (pc.gold_class.empty())
      throw LabelError("train: case " + pc.id + " has no gold labels");

  AdamW opt(model.params(), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
  EpochIterator it(dataset.size(), cfg.seed);
  TrainResult result;
  result.losses.reserve(cfg.total_iterations);
  result.lrs.reserve(cfg.total_iterations);

  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir + "/train_log.csv", std::ios::trunc);
    if (!log) throw InputError("cannot open training log in " + out_dir);
    log << "iter,lr,loss\n";
    log.precision(17);
  }

  for (long t = 0; t < cfg.total_iterations; ++t) {
    double lr = cosine_lr(t, cfg.total_iterations, cfg.base_lr);
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const PreparedCase& pc = dataset[it.next()];
      ad::Tensor loss = model.case_loss(pc);
      batch_loss += loss.item();
      ad::backward(loss);
    }
    if (cfg.grad_clip > 0.0) clip_gradients(model.params(), cfg.grad_clip);
    opt.step(lr);
    result.losses.push_back(batch_loss);
    result.lrs.push_back(lr);
    if (log) log << t << ',' << lr << ',' << batch_loss << '\n';
    if (!out_dir.empty() && cfg.checkpoint_interval > 0 && (t + 1) % cfg.checkpoint_interval == 0 &&
        t + 1 < cfg.total_iterations) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06ld.tlab", t + 1);
      model.params().save(out_dir + "/" + name);
    }
  }
  if (!out_dir.empty()) {
    result.final_checkpoint = out_dir + "/final.tlab";
    model.params().save(result.final_checkpoint);
  }
  return result;
}

}  // namespace topolab
