#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pfpn/config.hpp"
#include "pfpn/metrics.hpp"
#include "pfpn/rng.hpp"
#include "pfpn/tensor.hpp"

namespace pfpn {

/// One (image, mask) pair. Image is (1,3,H,W) with values in [0,1]; the mask
/// is strictly binary at the same resolution.
struct Sample {
  Tensor<double> image;
  GroundTruthMask mask;
  std::string id;
};

/// Deterministic per (spec.seed, sample index); safe to generate in any order.
std::vector<Sample> generate_synthetic(const SyntheticSpec& spec);
Sample synthetic_sample(const SyntheticSpec& spec, int index);

struct AugmentDraw {
  int off_y = 0;
  int off_x = 0;
  bool flip = false;
};

AugmentDraw draw_augment(Rng& rng, int resize_to, int crop);

/// Resize to (resize_to, resize_to), crop a (crop, crop) patch at the draw's
/// offset, optionally mirror horizontally. The same geometric transform is
/// applied to image (bilinear) and mask (nearest).
Sample apply_augment(const Sample& s, int resize_to, int crop,
                     const AugmentDraw& draw);

Sample augment_train(const Sample& s, int resize_to, int crop, Rng& rng);

/// Loads root/images/*.png|jpg with masks root/masks/<stem>.png, sorted by
/// id. Masks binarize at 128/255.
std::vector<Sample> load_dataset(const std::filesystem::path& root);

struct PreparedInput {
  Tensor<double> image;  // normalized, (1,3,input_size,input_size)
  int orig_width = 0;
  int orig_height = 0;
};

/// Test-time preprocessing: bilinear resize to the network input size and
/// per-channel standardization; the original (width, height) is recorded for
/// upsampling the prediction back.
PreparedInput prepare_test(const Sample& s, int input_size,
                           const std::array<double, 3>& mean,
                           const std::array<double, 3>& stddev);

Tensor<double> normalize_image(const Tensor<double>& image,
                               const std::array<double, 3>& mean,
                               const std::array<double, 3>& stddev);

Tensor<double> resize_image_bilinear(const Tensor<double>& image, Index out_h,
                                     Index out_w);
GroundTruthMask resize_mask_nearest(const GroundTruthMask& mask, Index out_h,
                                    Index out_w);

/// Round-trips between samples and 8-bit image files
/// (prediction/mask value = round(v * 255)).
void write_sample(const Sample& s, const std::filesystem::path& image_path,
                  const std::filesystem::path& mask_path);
SaliencyMap load_saliency_png(const std::filesystem::path& path);
void write_saliency_png(const std::filesystem::path& path, const SaliencyMap& map);

}  // namespace pfpn
