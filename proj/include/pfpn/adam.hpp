#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "pfpn/layers.hpp"
#include "pfpn/tensor.hpp"

namespace pfpn {

/// Adam with bias correction. Moment buffers are keyed by parameter name and
/// allocated lazily on the first step.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamRef<Scalar>>& params) {
    ++t_;
    const Scalar b1 = static_cast<Scalar>(beta1_);
    const Scalar b2 = static_cast<Scalar>(beta2_);
    const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(beta1_, t_));
    const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(beta2_, t_));
    for (const auto& p : params) {
      auto& mv = moments_[p.name];
      if (mv.m.size() != p.value->size()) {
        mv.m.setZero(p.value->size());
        mv.v.setZero(p.value->size());
      }
      mv.m = b1 * mv.m + (Scalar(1) - b1) * (*p.grad);
      mv.v = b2 * mv.v + (Scalar(1) - b2) * p.grad->square();
      *p.value -= static_cast<Scalar>(lr_) * (mv.m / c1) /
                  ((mv.v / c2).sqrt() + static_cast<Scalar>(eps_));
    }
  }

  std::int64_t step_count() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  struct Moments {
    VecX<Scalar> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace pfpn
