#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pfpn/tensor.hpp"

namespace pfpn {

/// Real-valued saliency map in [0,1].
using SaliencyMap = Plane<double>;
/// Binary ground-truth mask, values {0,1}.
using GroundTruthMask = Plane<std::uint8_t>;

/// Precision/recall at the 256 integer binarization thresholds. A pixel
/// counts as positive at threshold t when value*255 > t (strict).
///
/// Degenerate cases: an image with no predicted positives contributes
/// precision 0; an image whose ground truth is empty contributes recall 1
/// and is excluded from the precision average.
struct PRCurve {
  std::array<int, 256> thresholds{};
  std::array<double, 256> precision{};
  std::array<double, 256> recall{};
};

struct MetricsReport {
  double mae = 0.0;
  double max_f = 0.0;
  double mean_f = 0.0;  // over thresholds with dataset-wide predicted positives
  double s_measure = 0.0;
  PRCurve pr;
  int num_images = 0;
};

double mae(const SaliencyMap& pred, const GroundTruthMask& target);

PRCurve pr_curve(const std::vector<SaliencyMap>& preds,
                 const std::vector<GroundTruthMask>& targets);

/// Weighted harmonic mean of precision and recall; beta2 = 0.3 biases toward
/// precision. Returns 0 when the weighted denominator vanishes.
double f_measure(double precision, double recall, double beta2 = 0.3);

/// Max and plain mean of F over all 256 thresholds of the curve.
std::pair<double, double> max_mean_f(const PRCurve& pr);

/// Structure measure: 0.5 * object-aware + 0.5 * region-aware similarity.
double s_measure(const SaliencyMap& pred, const GroundTruthMask& target);

/// Full dataset evaluation. The reported mean_f averages F only over
/// thresholds at which the dataset has at least one predicted positive pixel
/// (so an exact prediction of a binary mask scores mean_f = 1).
MetricsReport evaluate_dataset(const std::vector<SaliencyMap>& preds,
                               const std::vector<GroundTruthMask>& targets);

void write_report(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_report(const std::filesystem::path& path);

}  // namespace pfpn
