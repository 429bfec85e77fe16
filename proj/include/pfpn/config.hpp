#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfpn/tensor.hpp"

namespace pfpn {

/// Level structure of the feature extractor: per-level output channels and
/// entry strides (first level 1 or 2, every later level 2).
struct BackboneSpec {
  int num_levels = 5;
  std::vector<int> channels{8, 16, 32, 64, 64};
  std::vector<int> strides{1, 2, 2, 2, 2};

  /// Small five-level extractor, deep enough to drive the full wiring on CPU.
  static BackboneSpec tiny(int levels = 5) {
    BackboneSpec s;
    s.num_levels = levels;
    s.channels.assign(levels, 8);
    for (int i = 1; i < levels; ++i) {
      s.channels[i] = std::min(64, s.channels[i - 1] * 2);
    }
    s.strides.assign(levels, 2);
    s.strides[0] = 1;
    return s;
  }

  /// Six-level variant mirroring a VGG-style block split.
  static BackboneSpec vgg_style() {
    BackboneSpec s;
    s.num_levels = 6;
    s.channels = {8, 16, 32, 48, 64, 64};
    s.strides = {1, 2, 2, 2, 2, 2};
    return s;
  }

  void validate() const {
    if (num_levels < 2) throw ConfigError("backbone: num_levels must be >= 2");
    if (static_cast<int>(channels.size()) != num_levels) {
      throw ConfigError("backbone: channels list must have num_levels entries");
    }
    if (static_cast<int>(strides.size()) != num_levels) {
      throw ConfigError("backbone: strides list must have num_levels entries");
    }
    if (strides[0] != 1 && strides[0] != 2) {
      throw ConfigError("backbone: first stride must be 1 or 2");
    }
    for (int i = 1; i < num_levels; ++i) {
      if (strides[i] != 2) throw ConfigError("backbone: inner strides must be 2");
    }
    for (int c : channels) {
      if (c <= 0) throw ConfigError("backbone: channels must be positive");
    }
  }
};

enum class BackboneId { kTiny, kExternal };

inline std::string to_string(BackboneId id) {
  return id == BackboneId::kTiny ? "tiny" : "external";
}

inline BackboneId backbone_id_from_string(const std::string& s) {
  if (s == "tiny") return BackboneId::kTiny;
  if (s == "external") return BackboneId::kExternal;
  throw ConfigError("unknown backbone id: " + s);
}

/// All architectural hyperparameters of the network.
struct ModelConfig {
  int num_levels = 5;
  int num_fpms = 2;
  int tm1_channels = 256;
  int tm2_channels = 32;
  int fm_channels = 32;  // width of the fusion head's two 3x3 layers
  int input_size = 256;
  bool share_fpm_weights = false;
  BackboneId backbone_id = BackboneId::kTiny;
  BackboneSpec backbone;
  std::array<double, 3> norm_mean{0.5, 0.5, 0.5};
  std::array<double, 3> norm_std{0.5, 0.5, 0.5};

  void validate() const {
    if (num_levels < 2) throw ConfigError("model: num_levels must be >= 2");
    if (num_fpms < 0) throw ConfigError("model: num_fpms must be >= 0");
    if (tm1_channels <= 0 || tm2_channels <= 0 || fm_channels <= 0) {
      throw ConfigError("model: channel widths must be positive");
    }
    if (input_size <= 0) throw ConfigError("model: input_size must be positive");
    int div = 1;
    for (int i = 1; i < num_levels; ++i) div *= 2;
    if (input_size % div != 0) {
      throw ConfigError("model: input_size " + std::to_string(input_size) +
                        " not divisible by 2^(num_levels-1) = " +
                        std::to_string(div));
    }
    backbone.validate();
    if (backbone.num_levels != num_levels) {
      throw ConfigError("model: backbone level count " +
                        std::to_string(backbone.num_levels) +
                        " != num_levels " + std::to_string(num_levels));
    }
    for (double s : norm_std) {
      if (s <= 0) throw ConfigError("model: norm_std must be positive");
    }
  }
};

enum class ShapeKind { kEllipse, kRectangle, kBlob };

inline std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kEllipse: return "ellipse";
    case ShapeKind::kRectangle: return "rectangle";
    default: return "blob";
  }
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "ellipse") return ShapeKind::kEllipse;
  if (s == "rectangle") return ShapeKind::kRectangle;
  if (s == "blob") return ShapeKind::kBlob;
  throw ConfigError("unknown shape kind: " + s);
}

/// Parameters of the synthetic saliency dataset generator.
struct SyntheticSpec {
  int num_samples = 600;
  int canvas_size = 64;
  std::set<ShapeKind> shapes{ShapeKind::kEllipse, ShapeKind::kRectangle,
                             ShapeKind::kBlob};
  double clutter_level = 0.35;
  std::uint64_t seed = 7;

  void validate() const {
    if (num_samples <= 0) throw ConfigError("data: num_samples must be > 0");
    if (canvas_size < 64) throw ConfigError("data: canvas_size must be >= 64");
    if (clutter_level < 0 || clutter_level > 1) {
      throw ConfigError("data: clutter_level must be in [0,1]");
    }
    if (shapes.empty()) throw ConfigError("data: shape set must be non-empty");
  }
};

/// Everything one training run needs.
struct TrainConfig {
  double learning_rate = 1e-4;
  int max_iterations = 600;
  int batch_size = 8;
  std::uint64_t seed = 1;
  int checkpoint_every = 200;
  int log_every = 10;
  int aug_resize = 96;  // resize edge before the random crop to input_size
  bool freeze_backbone_norm = false;
  ModelConfig model;
  SyntheticSpec data;
  std::string dataset_path;  // empty: use the synthetic generator
  int test_samples = 100;    // held-out synthetic split used by ablation eval

  void validate() const {
    // learning_rate == 0 is allowed (useful as a no-op optimizer check);
    // negative rates are rejected.
    if (learning_rate < 0) throw ConfigError("train: learning_rate must be >= 0");
    if (max_iterations <= 0) throw ConfigError("train: max_iterations must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (aug_resize < model.input_size) {
      throw ConfigError("train: aug_resize must be >= model.input_size");
    }
    model.validate();
    if (dataset_path.empty()) data.validate();
    if (test_samples <= 0) throw ConfigError("train: test_samples must be > 0");
  }
};

// JSON round-trips for checkpoint headers and config echoes.

inline void to_json(nlohmann::json& j, const BackboneSpec& s) {
  j = {{"num_levels", s.num_levels},
       {"channels", s.channels},
       {"strides", s.strides}};
}

inline void from_json(const nlohmann::json& j, BackboneSpec& s) {
  j.at("num_levels").get_to(s.num_levels);
  j.at("channels").get_to(s.channels);
  j.at("strides").get_to(s.strides);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"num_levels", c.num_levels},
       {"num_fpms", c.num_fpms},
       {"tm1_channels", c.tm1_channels},
       {"tm2_channels", c.tm2_channels},
       {"fm_channels", c.fm_channels},
       {"input_size", c.input_size},
       {"share_fpm_weights", c.share_fpm_weights},
       {"backbone_id", to_string(c.backbone_id)},
       {"backbone", c.backbone},
       {"norm_mean", c.norm_mean},
       {"norm_std", c.norm_std}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("num_levels").get_to(c.num_levels);
  j.at("num_fpms").get_to(c.num_fpms);
  j.at("tm1_channels").get_to(c.tm1_channels);
  j.at("tm2_channels").get_to(c.tm2_channels);
  j.at("fm_channels").get_to(c.fm_channels);
  j.at("input_size").get_to(c.input_size);
  j.at("share_fpm_weights").get_to(c.share_fpm_weights);
  c.backbone_id = backbone_id_from_string(j.at("backbone_id").get<std::string>());
  j.at("backbone").get_to(c.backbone);
  j.at("norm_mean").get_to(c.norm_mean);
  j.at("norm_std").get_to(c.norm_std);
}

}  // namespace pfpn
