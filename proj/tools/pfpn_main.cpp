#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pfpn/checkpoint.hpp"
#include "pfpn/data.hpp"
#include "pfpn/metrics.hpp"
#include "pfpn/model.hpp"
#include "pfpn/plot.hpp"
#include "pfpn/run_config.hpp"
#include "pfpn/train.hpp"

namespace fs = std::filesystem;
using Scalar = float;

namespace {

/// Pulls `--section.key=value` style config overrides out of argv; everything
/// else is left for the regular flag parser.
std::vector<std::pair<std::string, std::string>> extract_overrides(
    std::vector<std::string>& args) {
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<std::string> rest;
  for (const auto& arg : args) {
    if (arg.rfind("--", 0) == 0) {
      const auto eq = arg.find('=');
      const std::string key = arg.substr(2, eq == std::string::npos
                                                ? std::string::npos
                                                : eq - 2);
      if (eq != std::string::npos && key.find('.') != std::string::npos) {
        overrides.emplace_back(key, arg.substr(eq + 1));
        continue;
      }
    }
    rest.push_back(arg);
  }
  args = rest;
  return overrides;
}

pfpn::RunConfig load_run_config(
    const std::string& config_path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::optional<fs::path> cfg;
  if (!config_path.empty()) cfg = fs::path(config_path);
  return pfpn::RunConfig::load(cfg, overrides);
}

int cmd_train(const pfpn::RunConfig& rc, bool print_config) {
  if (print_config) {
    std::cout << pfpn::describe_run_config(rc);
    return 0;
  }
  fs::create_directories(rc.out_dir);
  std::ofstream echo(rc.out_dir / "config_used.txt");
  echo << pfpn::describe_run_config(rc);
  auto art = pfpn::train<Scalar>(rc.train, rc.out_dir, &std::cout);
  std::cout << "checkpoint: " << art.checkpoint.string() << "\n";
  return 0;
}

int cmd_ablate(const pfpn::RunConfig& rc, bool print_config) {
  if (print_config) {
    std::cout << pfpn::describe_run_config(rc);
    return 0;
  }
  fs::create_directories(rc.out_dir);
  std::ofstream echo(rc.out_dir / "config_used.txt");
  echo << pfpn::describe_run_config(rc);
  pfpn::run_ablation<Scalar>(rc.train, rc.ablate_t, rc.ablate_shared,
                             rc.out_dir, &std::cout);
  std::cout << "report: " << (rc.out_dir / "ablation.json").string() << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& input,
                const std::string& out_dir) {
  pfpn::PfpnNet<Scalar> net;
  pfpn::load_checkpoint<Scalar>(checkpoint, net);
  std::vector<fs::path> inputs;
  if (fs::is_directory(input)) {
    for (const auto& entry : fs::directory_iterator(input)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
        inputs.push_back(entry.path());
      }
    }
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) {
      throw std::invalid_argument("predict: no images under " + input);
    }
  } else if (fs::exists(input)) {
    inputs.push_back(input);
  } else {
    throw std::invalid_argument("predict: no such file or directory: " + input);
  }
  fs::create_directories(out_dir);
  for (const auto& path : inputs) {
    pfpn::Sample s;
    s.id = path.stem().string();
    const pfpn::ImageU8 img = pfpn::read_image(path);
    s.image = pfpn::Tensor<double>(1, 3, img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          s.image.at(0, c, y, x) =
              img.at(y, x, img.channels == 1 ? 0 : c) / 255.0;
        }
      }
    }
    const pfpn::SaliencyMap pred = pfpn::predict_sample(net, s);
    const fs::path out = fs::path(out_dir) / (s.id + ".png");
    pfpn::write_saliency_png(out, pred);
    std::cout << out.string() << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& mask_dir,
             const std::string& report_path) {
  if (!fs::is_directory(pred_dir)) {
    throw std::invalid_argument("eval: not a directory: " + pred_dir);
  }
  if (!fs::is_directory(mask_dir)) {
    throw std::invalid_argument("eval: not a directory: " + mask_dir);
  }
  std::map<std::string, fs::path> preds, masks;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      preds.emplace(entry.path().stem().string(), entry.path());
    }
  }
  for (const auto& entry : fs::directory_iterator(mask_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      masks.emplace(entry.path().stem().string(), entry.path());
    }
  }
  if (preds.empty()) {
    throw std::invalid_argument("eval: no predictions under " + pred_dir);
  }
  for (const auto& [stem, path] : preds) {
    if (!masks.count(stem)) {
      throw std::invalid_argument("eval: prediction '" + stem +
                                  "' has no mask in " + mask_dir);
    }
  }
  for (const auto& [stem, path] : masks) {
    if (!preds.count(stem)) {
      throw std::invalid_argument("eval: mask '" + stem +
                                  "' has no prediction in " + pred_dir);
    }
  }
  std::vector<pfpn::SaliencyMap> pred_maps;
  std::vector<pfpn::GroundTruthMask> mask_maps;
  for (const auto& [stem, path] : preds) {
    pred_maps.push_back(pfpn::load_saliency_png(path));
    const pfpn::SaliencyMap raw = pfpn::load_saliency_png(masks.at(stem));
    pfpn::GroundTruthMask m(raw.rows(), raw.cols());
    for (Eigen::Index y = 0; y < raw.rows(); ++y) {
      for (Eigen::Index x = 0; x < raw.cols(); ++x) {
        m(y, x) = raw(y, x) * 255.0 >= 128.0 ? 1 : 0;
      }
    }
    mask_maps.push_back(std::move(m));
  }
  const pfpn::MetricsReport rep = pfpn::evaluate_dataset(pred_maps, mask_maps);
  pfpn::write_report(report_path, rep);
  std::cout << "images:    " << rep.num_images << "\n"
            << "MAE:       " << rep.mae << "\n"
            << "max F:     " << rep.max_f << "\n"
            << "mean F:    " << rep.mean_f << "\n"
            << "S-measure: " << rep.s_measure << "\n"
            << "report:    " << report_path << "\n";
  return 0;
}

int cmd_plot(const std::vector<std::string>& report_paths,
             const std::string& out_image) {
  std::vector<pfpn::MetricsReport> reports;
  std::vector<std::string> labels;
  for (const auto& p : report_paths) {
    reports.push_back(pfpn::read_report(p));
    labels.push_back(fs::path(p).stem().string());
  }
  pfpn::render_pr_plot(reports, labels, out_image);
  std::cout << out_image << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  const auto overrides = extract_overrides(args);

  CLI::App app{
      "Progressive feature polishing network for salient object detection.\n"
      "Config files are flat `key = value` text (dotted sections); any key\n"
      "can also be passed as --key=value. PFPN_OUT_DIR overrides the default\n"
      "output directory."};
  app.require_subcommand(1);

  std::string config_path, checkpoint, input, out_dir = "predictions";
  std::string pred_dir, mask_dir, report_path, out_image;
  std::vector<std::string> report_paths;
  bool print_config = false;

  auto* train_cmd = app.add_subcommand(
      "train", "Train a model (synthetic data unless data.path is set)");
  train_cmd->add_option("-c,--config", config_path,
                        "Config file (key = value lines)");
  train_cmd->add_flag("--print-config", print_config,
                      "Print the effective configuration and exit");

  auto* ablate_cmd = app.add_subcommand(
      "ablate", "Train and evaluate one model per polishing-depth setting");
  ablate_cmd->add_option("-c,--config", config_path, "Config file");
  ablate_cmd->add_flag("--print-config", print_config,
                       "Print the effective configuration and exit");

  auto* predict_cmd =
      app.add_subcommand("predict", "Write saliency maps for images");
  predict_cmd->add_option("checkpoint", checkpoint, "Trained checkpoint")
      ->required();
  predict_cmd->add_option("input", input, "Image file or directory")
      ->required();
  predict_cmd->add_option("-o,--out", out_dir,
                          "Output directory (default: predictions)");

  auto* eval_cmd = app.add_subcommand(
      "eval", "Score predictions against masks and write a metrics report");
  eval_cmd->add_option("pred_dir", pred_dir, "Directory of prediction PNGs")
      ->required();
  eval_cmd->add_option("mask_dir", mask_dir, "Directory of mask PNGs")
      ->required();
  eval_cmd->add_option("report", report_path, "Output report (JSON)")
      ->required();

  auto* plot_cmd =
      app.add_subcommand("plot", "Overlay PR curves from metrics reports");
  plot_cmd->add_option("reports", report_paths, "Report files")
      ->required()
      ->expected(-1);
  plot_cmd->add_option("-o,--out", out_image, "Output PNG")->required();

  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed()) {
      return cmd_train(load_run_config(config_path, overrides), print_config);
    }
    if (ablate_cmd->parsed()) {
      return cmd_ablate(load_run_config(config_path, overrides), print_config);
    }
    if (!overrides.empty()) {
      throw pfpn::ConfigError("--key=value overrides only apply to train/ablate");
    }
    if (predict_cmd->parsed()) return cmd_predict(checkpoint, input, out_dir);
    if (eval_cmd->parsed()) return cmd_eval(pred_dir, mask_dir, report_path);
    if (plot_cmd->parsed()) return cmd_plot(report_paths, out_image);
  } catch (const pfpn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
