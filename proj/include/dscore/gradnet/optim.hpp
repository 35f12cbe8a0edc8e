// Adam with decoupled weight decay and a step-halving learning-rate schedule.
#pragma once

#include <cmath>
#include <vector>

#include "dscore/gradnet/tensor.hpp"

namespace dscore::nn {

struct OptimState {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double weight_decay = 0.005;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;  // first moments, one per parameter
  std::vector<std::vector<double>> v;  // second moments
};

/// lr0 halved every `period` epochs.
inline double halving_lr(double lr0, int epoch, int period = 5) {
  return lr0 * std::pow(0.5, epoch / period);
}

/// w <- w * (1 - lr * wd), then the bias-corrected Adam update. Gradients are
/// zeroed afterwards.
template <typename T>
void adam_step(const std::vector<Param<T>*>& params, OptimState& opt) {
  if (opt.m.size() != params.size()) {
    opt.m.assign(params.size(), {});
    opt.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      opt.m[i].assign(params[i]->value.size(), 0.0);
      opt.v[i].assign(params[i]->value.size(), 0.0);
    }
  }
  ++opt.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  const double decay = 1.0 - opt.lr * opt.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    auto& m = opt.m[i];
    auto& v = opt.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      double w = static_cast<double>(p.value[j]) * decay;
      m[j] = opt.beta1 * m[j] + (1 - opt.beta1) * g;
      v[j] = opt.beta2 * v[j] + (1 - opt.beta2) * g * g;
      const double mh = m[j] / bc1, vh = v[j] / bc2;
      w -= opt.lr * mh / (std::sqrt(vh) + opt.eps);
      p.value[j] = static_cast<T>(w);
    }
    p.zero_grad();
  }
}

}  // namespace dscore::nn
