#include "pfpn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace pfpn {

namespace {

constexpr double kEps = 2.220446049250313e-16;

void check_pair(const SaliencyMap& pred, const GroundTruthMask& target,
                const char* who) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument(std::string(who) + ": resolution mismatch " +
                                std::to_string(pred.rows()) + "x" +
                                std::to_string(pred.cols()) + " vs " +
                                std::to_string(target.rows()) + "x" +
                                std::to_string(target.cols()));
  }
}

}  // namespace

double mae(const SaliencyMap& pred, const GroundTruthMask& target) {
  check_pair(pred, target, "mae");
  return (pred - target.cast<double>()).abs().mean();
}

double f_measure(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

namespace {

/// Per-image threshold profile: for t in 0..255, predicted-positive and
/// true-positive counts, via one histogram pass. A pixel is positive at
/// threshold t iff value*255 > t, i.e. for all t < ceil(value*255).
struct ThresholdCounts {
  std::array<std::int64_t, 256> predicted{};
  std::array<std::int64_t, 256> true_positive{};
  std::int64_t gt_positive = 0;
};

ThresholdCounts count_thresholds(const SaliencyMap& pred,
                                 const GroundTruthMask& target) {
  std::array<std::int64_t, 257> hist_pred{}, hist_tp{};
  ThresholdCounts out;
  const double* p = pred.data();
  const std::uint8_t* g = target.data();
  const Eigen::Index n = pred.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = p[i] * 255.0;
    long cutoff = static_cast<long>(std::ceil(v));
    cutoff = std::clamp(cutoff, 0L, 256L);
    hist_pred[cutoff] += 1;
    if (g[i]) {
      hist_tp[cutoff] += 1;
      out.gt_positive += 1;
    }
  }
  std::int64_t acc_pred = 0, acc_tp = 0;
  for (int t = 255; t >= 0; --t) {
    acc_pred += hist_pred[t + 1];
    acc_tp += hist_tp[t + 1];
    out.predicted[t] = acc_pred;
    out.true_positive[t] = acc_tp;
  }
  return out;
}

}  // namespace

PRCurve pr_curve(const std::vector<SaliencyMap>& preds,
                 const std::vector<GroundTruthMask>& targets) {
  if (preds.empty()) throw std::invalid_argument("pr_curve: empty dataset");
  if (preds.size() != targets.size()) {
    throw std::invalid_argument("pr_curve: prediction/target count mismatch");
  }
  std::array<double, 256> prec_sum{}, rec_sum{};
  std::array<std::int64_t, 256> prec_count{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    check_pair(preds[i], targets[i], "pr_curve");
    const ThresholdCounts tc = count_thresholds(preds[i], targets[i]);
    for (int t = 0; t < 256; ++t) {
      if (tc.gt_positive == 0) {
        rec_sum[t] += 1.0;
        continue;  // excluded from the precision average
      }
      rec_sum[t] += double(tc.true_positive[t]) / double(tc.gt_positive);
      prec_sum[t] += tc.predicted[t] == 0
                         ? 0.0
                         : double(tc.true_positive[t]) / double(tc.predicted[t]);
      prec_count[t] += 1;
    }
  }
  PRCurve out;
  for (int t = 0; t < 256; ++t) {
    out.thresholds[t] = t;
    out.precision[t] = prec_count[t] ? prec_sum[t] / double(prec_count[t]) : 0.0;
    out.recall[t] = rec_sum[t] / double(preds.size());
  }
  return out;
}

std::pair<double, double> max_mean_f(const PRCurve& pr) {
  double best = 0.0, sum = 0.0;
  for (int t = 0; t < 256; ++t) {
    const double f = f_measure(pr.precision[t], pr.recall[t]);
    best = std::max(best, f);
    sum += f;
  }
  return {best, sum / 256.0};
}

// ---------------------------------------------------------------------------
// Structure measure
// ---------------------------------------------------------------------------

namespace {

double object_score(const SaliencyMap& values, const GroundTruthMask& region,
                    bool invert_region) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if ((region.data()[i] != 0) != invert_region) {
      sum += values.data()[i];
      ++n;
    }
  }
  if (n == 0) return 0.0;
  const double mean = sum / double(n);
  double sq = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if ((region.data()[i] != 0) != invert_region) {
      const double d = values.data()[i] - mean;
      sq += d * d;
    }
  }
  const double sd = n > 1 ? std::sqrt(sq / double(n - 1)) : 0.0;
  return 2.0 * mean / (mean * mean + 1.0 + sd + kEps);
}

double s_object(const SaliencyMap& pred, const GroundTruthMask& gt) {
  // Foreground similarity on pred, background similarity on 1-pred.
  SaliencyMap inv = 1.0 - pred;
  const double fg = object_score(pred, gt, false);
  const double bg = object_score(inv, gt, true);
  const double u = gt.cast<double>().mean();
  return u * fg + (1.0 - u) * bg;
}

/// Region similarity via a normalized cross-correlation form: with means x, y
/// and (co)variances over the region, 4*x*y*sxy / ((x^2+y^2)*(sx2+sy2)).
double region_ssim(const SaliencyMap& pred, const GroundTruthMask& gt) {
  const double n = static_cast<double>(pred.size());
  if (n == 0) return 0.0;
  const SaliencyMap g = gt.cast<double>();
  const double x = pred.mean();
  const double y = g.mean();
  const double sx2 = ((pred - x) * (pred - x)).sum() / (n - 1.0 + kEps);
  const double sy2 = ((g - y) * (g - y)).sum() / (n - 1.0 + kEps);
  const double sxy = ((pred - x) * (g - y)).sum() / (n - 1.0 + kEps);
  const double a = 4.0 * x * y * sxy;
  const double b = (x * x + y * y) * (sx2 + sy2);
  if (a != 0.0) return a / (b + kEps);
  return b == 0.0 ? 1.0 : 0.0;
}

double s_region(const SaliencyMap& pred, const GroundTruthMask& gt) {
  const Eigen::Index rows = gt.rows(), cols = gt.cols();
  const double total = gt.cast<double>().sum();
  // Centroid in 1-indexed coordinates, rounded half away from zero.
  Eigen::Index cx, cy;
  if (total == 0.0) {
    cx = static_cast<Eigen::Index>(std::round(double(cols) / 2.0));
    cy = static_cast<Eigen::Index>(std::round(double(rows) / 2.0));
  } else {
    double sx = 0.0, sy = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (gt(r, c)) {
          sx += double(c + 1);
          sy += double(r + 1);
        }
      }
    }
    cx = static_cast<Eigen::Index>(std::round(sx / total));
    cy = static_cast<Eigen::Index>(std::round(sy / total));
  }
  const double area = double(rows) * double(cols);
  const double w1 = double(cx) * double(cy) / area;
  const double w2 = double(cols - cx) * double(cy) / area;
  const double w3 = double(cx) * double(rows - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  auto quad = [&](Eigen::Index r0, Eigen::Index r1, Eigen::Index c0,
                  Eigen::Index c1) {
    if (r1 <= r0 || c1 <= c0) return 0.0;  // empty quadrant has zero weight
    SaliencyMap p = pred.block(r0, c0, r1 - r0, c1 - c0);
    GroundTruthMask g = gt.block(r0, c0, r1 - r0, c1 - c0);
    return region_ssim(p, g);
  };
  return w1 * quad(0, cy, 0, cx) + w2 * quad(0, cy, cx, cols) +
         w3 * quad(cy, rows, 0, cx) + w4 * quad(cy, rows, cx, cols);
}

}  // namespace

double s_measure(const SaliencyMap& pred, const GroundTruthMask& target) {
  check_pair(pred, target, "s_measure");
  const double y = target.cast<double>().mean();
  if (y == 0.0) return 1.0 - pred.mean();
  if (y == 1.0) return pred.mean();
  const double q = 0.5 * s_object(pred, target) + 0.5 * s_region(pred, target);
  return q < 0.0 ? 0.0 : q;
}

MetricsReport evaluate_dataset(const std::vector<SaliencyMap>& preds,
                               const std::vector<GroundTruthMask>& targets) {
  if (preds.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (preds.size() != targets.size()) {
    throw std::invalid_argument("evaluate: prediction/target count mismatch");
  }
  MetricsReport rep;
  rep.num_images = static_cast<int>(preds.size());
  double mae_sum = 0.0, s_sum = 0.0;
  std::array<std::int64_t, 256> dataset_pred_pos{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    mae_sum += mae(preds[i], targets[i]);
    s_sum += s_measure(preds[i], targets[i]);
    const ThresholdCounts tc = count_thresholds(preds[i], targets[i]);
    for (int t = 0; t < 256; ++t) dataset_pred_pos[t] += tc.predicted[t];
  }
  rep.mae = mae_sum / double(preds.size());
  rep.s_measure = s_sum / double(preds.size());
  rep.pr = pr_curve(preds, targets);
  double f_sum = 0.0;
  int f_count = 0;
  for (int t = 0; t < 256; ++t) {
    const double f = f_measure(rep.pr.precision[t], rep.pr.recall[t]);
    rep.max_f = std::max(rep.max_f, f);
    if (dataset_pred_pos[t] > 0) {
      f_sum += f;
      ++f_count;
    }
  }
  rep.mean_f = f_count ? f_sum / double(f_count) : 0.0;
  return rep;
}

void write_report(const std::filesystem::path& path, const MetricsReport& r) {
  nlohmann::json j;
  j["mae"] = r.mae;
  j["max_f"] = r.max_f;
  j["mean_f"] = r.mean_f;
  j["s_measure"] = r.s_measure;
  j["num_images"] = r.num_images;
  j["pr"]["threshold"] = r.pr.thresholds;
  j["pr"]["precision"] = r.pr.precision;
  j["pr"]["recall"] = r.pr.recall;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << j.dump(2) << "\n";
}

MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read report: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed report " + path.string() + ": " +
                             e.what());
  }
  MetricsReport r;
  try {
    r.mae = j.at("mae").get<double>();
    r.max_f = j.at("max_f").get<double>();
    r.mean_f = j.at("mean_f").get<double>();
    r.s_measure = j.at("s_measure").get<double>();
    r.num_images = j.at("num_images").get<int>();
    auto th = j.at("pr").at("threshold").get<std::vector<int>>();
    auto pr = j.at("pr").at("precision").get<std::vector<double>>();
    auto rc = j.at("pr").at("recall").get<std::vector<double>>();
    if (th.size() != 256 || pr.size() != 256 || rc.size() != 256) {
      throw std::runtime_error("malformed report " + path.string() +
                               ": PR table must have 256 rows");
    }
    std::copy(th.begin(), th.end(), r.pr.thresholds.begin());
    std::copy(pr.begin(), pr.end(), r.pr.precision.begin());
    std::copy(rc.begin(), rc.end(), r.pr.recall.begin());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed report " + path.string() + ": " +
                             e.what());
  }
  return r;
}

}  // namespace pfpn
