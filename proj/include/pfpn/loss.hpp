#pragma once

#include <cmath>
#include <vector>

#include "pfpn/tensor.hpp"

namespace pfpn {

/// Deep-supervision weights: the finest side output carries 0.5, every other
/// side output 0.3, on top of the final-map loss.
constexpr double kSideWeightFirst = 0.5;
constexpr double kSideWeightRest = 0.3;

/// Predictions are clamped to [kBceClamp, 1-kBceClamp] inside the logs.
constexpr double kBceClamp = 1e-7;

struct LossBreakdown {
  double final_loss = 0.0;
  std::vector<double> side_losses;
  double total = 0.0;
};

/// total = final + 0.5 * side[0] + 0.3 * sum(side[1:]).
inline double combine_losses(double final_loss,
                             const std::vector<double>& side_losses) {
  double rest = 0.0;
  for (std::size_t i = 1; i < side_losses.size(); ++i) rest += side_losses[i];
  double total = final_loss;
  if (!side_losses.empty()) total += kSideWeightFirst * side_losses[0];
  total += kSideWeightRest * rest;
  return total;
}

template <typename Scalar>
void check_loss_shapes(const Tensor<Scalar>& pred, const Tensor<Scalar>& target) {
  if (!pred.same_shape(target)) {
    throw std::invalid_argument("loss: prediction " + pred.shape_str() +
                                " vs target " + target.shape_str());
  }
}

/// Mean binary cross-entropy over all elements. Accumulated in double
/// regardless of the tensor scalar type.
template <typename Scalar>
double bce_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target) {
  check_loss_shapes(pred, target);
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  double sum = 0.0;
  for (Index i = 0; i < pred.size(); ++i) {
    double p = static_cast<double>(pred.data[i]);
    p = p < lo ? lo : (p > hi ? hi : p);
    const double g = static_cast<double>(target.data[i]);
    sum -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(pred.size());
}

/// d(mean bce)/d(pred); zero where the clamp is active.
template <typename Scalar>
Tensor<Scalar> bce_loss_backward(const Tensor<Scalar>& pred,
                                 const Tensor<Scalar>& target,
                                 double weight = 1.0) {
  check_loss_shapes(pred, target);
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  const double scale = weight / static_cast<double>(pred.size());
  Tensor<Scalar> dx(pred.n(), pred.c(), pred.h(), pred.w());
  for (Index i = 0; i < pred.size(); ++i) {
    const double p = static_cast<double>(pred.data[i]);
    if (p <= lo || p >= hi) {
      dx.data[i] = Scalar(0);
      continue;
    }
    const double g = static_cast<double>(target.data[i]);
    dx.data[i] = static_cast<Scalar>(scale * (-g / p + (1.0 - g) / (1.0 - p)));
  }
  return dx;
}

/// Full deep-supervision objective for one batch.
template <typename Scalar>
LossBreakdown total_loss(const Tensor<Scalar>& final_map,
                         const std::vector<Tensor<Scalar>>& side_maps,
                         const Tensor<Scalar>& target, int num_levels) {
  if (static_cast<int>(side_maps.size()) != num_levels) {
    throw ConfigError("loss: got " + std::to_string(side_maps.size()) +
                      " side outputs, expected " + std::to_string(num_levels));
  }
  LossBreakdown out;
  out.final_loss = bce_loss(final_map, target);
  for (const auto& s : side_maps) out.side_losses.push_back(bce_loss(s, target));
  out.total = combine_losses(out.final_loss, out.side_losses);
  return out;
}

/// Gradients of the total loss w.r.t. the final map and each side map.
template <typename Scalar>
std::pair<Tensor<Scalar>, std::vector<Tensor<Scalar>>> total_loss_backward(
    const Tensor<Scalar>& final_map, const std::vector<Tensor<Scalar>>& side_maps,
    const Tensor<Scalar>& target) {
  std::pair<Tensor<Scalar>, std::vector<Tensor<Scalar>>> out;
  out.first = bce_loss_backward(final_map, target, 1.0);
  for (std::size_t i = 0; i < side_maps.size(); ++i) {
    const double w = i == 0 ? kSideWeightFirst : kSideWeightRest;
    out.second.push_back(bce_loss_backward(side_maps[i], target, w));
  }
  return out;
}

}  // namespace pfpn
