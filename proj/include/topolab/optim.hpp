#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "topolab/common.hpp"
#include "topolab/nn.hpp"

namespace topolab {

// lr(t) = 0.5 * base * (1 + cos(pi * t / T)), clamped to the final value past T.
inline double cosine_lr(long t, long total, double base_lr) {
  if (total < 1) throw ConfigError("cosine_lr: total iterations must be >= 1");
  if (t < 0) throw ConfigError("cosine_lr: negative step");
  if (t > total) t = total;
  constexpr double pi = 3.14159265358979323846;
  return 0.5 * base_lr * (1.0 + std::cos(pi * static_cast<double>(t) / static_cast<double>(total)));
}

// Decoupled weight decay: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
class AdamW {
 public:
  AdamW(nn::ParamStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
        double weight_decay = 0.01)
      : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
    for (auto& [name, t] : params_.items()) {
      state_[name] = Moments{std::vector<double>(t.numel(), 0.0), std::vector<double>(t.numel(), 0.0)};
    }
  }

  long steps() const { return t_; }

  // One update over all parameters; aborts (state untouched) on non-finite
  // gradients. Gradients are zeroed afterwards.
  void step(double lr) {
    auto items = params_.items();
    for (auto& [name, p] : items) {
      for (double g : p.grad())
        if (!std::isfinite(g))
          throw NumericalError("AdamW: non-finite gradient in parameter " + name);
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : items) {
      Moments& mo = state_.at(name);
      auto& theta = p.mutable_values();
      auto& grad = p.grad();
      for (std::size_t i = 0; i < theta.size(); ++i) {
        double g = grad[i];
        mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * g;
        mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * g * g;
        double m_hat = mo.m[i] / bc1;
        double v_hat = mo.v[i] / bc2;
        theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps_) + weight_decay_ * theta[i]);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
    }
  }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  nn::ParamStore& params_;
  double beta1_, beta2_, eps_, weight_decay_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace topolab
