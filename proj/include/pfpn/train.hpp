#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfpn/adam.hpp"
#include "pfpn/checkpoint.hpp"
#include "pfpn/config.hpp"
#include "pfpn/data.hpp"
#include "pfpn/loss.hpp"
#include "pfpn/metrics.hpp"
#include "pfpn/model.hpp"

namespace pfpn {

template <typename Scalar>
struct Batch {
  Tensor<Scalar> images;   // normalized, (B,3,S,S)
  Tensor<Scalar> targets;  // binary, (B,1,S,S)
};

/// Draws, augments and normalizes one batch. All randomness comes from
/// per-step derived streams, so batch t is the same no matter how earlier
/// steps were scheduled.
template <typename Scalar>
Batch<Scalar> make_batch(const std::vector<Sample>& data, const TrainConfig& cfg,
                         int step) {
  const int size = cfg.model.input_size;
  Batch<Scalar> out;
  out.images = Tensor<Scalar>(cfg.batch_size, 3, size, size);
  out.targets = Tensor<Scalar>(cfg.batch_size, 1, size, size);
  Rng rng(Rng::derive(cfg.seed, 0x1000000ULL + static_cast<std::uint64_t>(step)));
  for (int b = 0; b < cfg.batch_size; ++b) {
    const int idx = rng.uniform_int(0, static_cast<int>(data.size()) - 1);
    Sample aug = augment_train(data[idx], cfg.aug_resize, size, rng);
    Tensor<double> norm =
        normalize_image(aug.image, cfg.model.norm_mean, cfg.model.norm_std);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          out.images.at(b, c, y, x) = static_cast<Scalar>(norm.at(0, c, y, x));
        }
      }
    }
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        out.targets.at(b, 0, y, x) = static_cast<Scalar>(aug.mask(y, x));
      }
    }
  }
  return out;
}

inline nlohmann::json loss_record(int step, const LossBreakdown& lb,
                                  double wall_time_s) {
  return {{"step", step},
          {"total", lb.total},
          {"final", lb.final_loss},
          {"side", lb.side_losses},
          {"wall_time_s", wall_time_s}};
}

template <typename Scalar>
struct TrainArtifacts {
  PfpnNet<Scalar> net;
  std::filesystem::path checkpoint;
  std::vector<LossBreakdown> log;
};

/// Runs the full optimization loop and writes checkpoints plus an append-only
/// JSON-lines loss log under out_dir. Single-threaded and reproducible from
/// cfg.seed.
template <typename Scalar>
TrainArtifacts<Scalar> train(const TrainConfig& cfg,
                             const std::filesystem::path& out_dir,
                             std::ostream* progress = nullptr) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const std::vector<Sample> data = cfg.dataset_path.empty()
                                       ? generate_synthetic(cfg.data)
                                       : load_dataset(cfg.dataset_path);
  TrainArtifacts<Scalar> art;
  art.net = PfpnNet<Scalar>(cfg.model);
  art.net.init_params(cfg.seed);
  if (cfg.freeze_backbone_norm) art.net.freeze_backbone_normalization();

  Adam<Scalar> opt(cfg.learning_rate);
  std::ofstream log_file(out_dir / "train_log.jsonl", std::ios::app);
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = 1; step <= cfg.max_iterations; ++step) {
    const Batch<Scalar> batch = make_batch<Scalar>(data, cfg, step);
    art.net.zero_grads();
    typename PfpnNet<Scalar>::Cache cache;
    auto out = art.net.forward(batch.images, Mode::kTrain, &cache);
    const LossBreakdown lb = total_loss(out.final_map, out.side_maps,
                                        batch.targets, cfg.model.num_levels);
    if (!std::isfinite(lb.total)) {
      throw std::runtime_error("training aborted: non-finite loss at step " +
                               std::to_string(step));
    }
    auto grads = total_loss_backward(out.final_map, out.side_maps, batch.targets);
    art.net.backward(grads.first, grads.second, cache);
    auto params = art.net.params();
    opt.step(params);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    log_file << loss_record(step, lb, wall).dump() << "\n";
    art.log.push_back(lb);
    if (progress && (step % cfg.log_every == 0 || step == 1)) {
      (*progress) << "step " << step << "/" << cfg.max_iterations
                  << "  total " << std::fixed << std::setprecision(4)
                  << lb.total << "\n";
    }
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.max_iterations) {
      save_checkpoint(out_dir / ("checkpoint_" + std::to_string(step) + ".pfpn"),
                      art.net, step);
    }
  }
  art.checkpoint = out_dir / "model.pfpn";
  save_checkpoint(art.checkpoint, art.net, cfg.max_iterations);
  return art;
}

/// Full test-time protocol for one sample: resize to the network input,
/// forward in eval mode, bilinearly upsample the map back to the sample's
/// original resolution.
template <typename Scalar>
SaliencyMap predict_sample(PfpnNet<Scalar>& net, const Sample& sample) {
  const PreparedInput prep =
      prepare_test(sample, net.config.input_size, net.config.norm_mean,
                   net.config.norm_std);
  auto out = net.forward(prep.image.template cast<Scalar>(), Mode::kEval);
  Tensor<double> map = out.final_map.template cast<double>();
  map = upsample_bilinear(map, prep.orig_height, prep.orig_width);
  SaliencyMap result(prep.orig_height, prep.orig_width);
  for (Index y = 0; y < result.rows(); ++y) {
    for (Index x = 0; x < result.cols(); ++x) {
      result(y, x) = std::clamp(map.at(0, 0, y, x), 0.0, 1.0);
    }
  }
  return result;
}

template <typename Scalar>
MetricsReport evaluate_model(PfpnNet<Scalar>& net,
                             const std::vector<Sample>& samples) {
  std::vector<SaliencyMap> preds;
  std::vector<GroundTruthMask> masks;
  preds.reserve(samples.size());
  for (const auto& s : samples) {
    preds.push_back(predict_sample(net, s));
    masks.push_back(s.mask);
  }
  return evaluate_dataset(preds, masks);
}

// ---------------------------------------------------------------------------
// Ablation driver
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string label;
  int num_fpms = 0;
  bool shared = false;
  MetricsReport metrics;
};

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "setting" << std::right << std::setw(9)
     << "MAE" << std::setw(9) << "maxF" << std::setw(9) << "meanF"
     << std::setw(9) << "S" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(24) << r.label << std::right << std::fixed
       << std::setprecision(4) << std::setw(9) << r.metrics.mae << std::setw(9)
       << r.metrics.max_f << std::setw(9) << r.metrics.mean_f << std::setw(9)
       << r.metrics.s_measure << "\n";
  }
  return os.str();
}

/// Trains one model per polishing-depth setting (plus an optional
/// shared-weights variant) with identical seed and data, then evaluates each
/// on the same held-out synthetic split.
template <typename Scalar>
std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      const std::vector<int>& t_values,
                                      bool include_shared_variant,
                                      const std::filesystem::path& out_dir,
                                      std::ostream* progress = nullptr) {
  if (t_values.empty()) {
    throw std::invalid_argument("ablation: t_values must be non-empty");
  }
  std::filesystem::create_directories(out_dir);
  SyntheticSpec test_spec = base.data;
  test_spec.num_samples = base.test_samples;
  test_spec.seed = Rng::derive(base.data.seed, 0x7e57ULL);
  const std::vector<Sample> test_set = generate_synthetic(test_spec);

  struct Setting {
    int t;
    bool shared;
    std::string label, dir;
  };
  std::vector<Setting> settings;
  for (int t : t_values) {
    if (t < 0) throw std::invalid_argument("ablation: negative T");
    settings.push_back({t, false, "PFPN (" + std::to_string(t) + " FPM)",
                        "t" + std::to_string(t)});
  }
  if (include_shared_variant) {
    settings.push_back({2, true, "PFPN (2 FPM, shared)", "t2_shared"});
  }

  std::vector<AblationRow> rows;
  for (const auto& s : settings) {
    TrainConfig cfg = base;
    cfg.model.num_fpms = s.t;
    cfg.model.share_fpm_weights = s.shared;
    if (progress) (*progress) << "== training " << s.label << "\n";
    TrainArtifacts<Scalar> art = train<Scalar>(cfg, out_dir / s.dir, progress);
    AblationRow row;
    row.label = s.label;
    row.num_fpms = s.t;
    row.shared = s.shared;
    row.metrics = evaluate_model(art.net, test_set);
    write_report(out_dir / s.dir / "report.json", row.metrics);
    rows.push_back(std::move(row));
  }

  std::ofstream table(out_dir / "ablation.txt");
  table << ablation_table(rows);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"label", r.label},
                 {"num_fpms", r.num_fpms},
                 {"shared", r.shared},
                 {"mae", r.metrics.mae},
                 {"max_f", r.metrics.max_f},
                 {"mean_f", r.metrics.mean_f},
                 {"s_measure", r.metrics.s_measure}});
  }
  std::ofstream jf(out_dir / "ablation.json");
  jf << j.dump(2) << "\n";
  if (progress) (*progress) << ablation_table(rows);
  return rows;
}

}  // namespace pfpn
