#pragma once

#include <vector>

#include "pfpn/tensor.hpp"

namespace pfpn {

/// Ordered multi-resolution feature maps, level 0 finest to level N-1
/// coarsest. Each level halves the previous level's spatial size (ceiling
/// division, matching stride-2 downsampling).
template <typename Scalar>
struct FeaturePyramid {
  std::vector<Tensor<Scalar>> levels;

  Index num_levels() const { return static_cast<Index>(levels.size()); }
};

template <typename Scalar>
void validate_pyramid(const FeaturePyramid<Scalar>& p) {
  const Index n = p.num_levels();
  if (n < 2) throw ConfigError("pyramid: need at least 2 levels");
  for (Index k = 0; k + 1 < n; ++k) {
    const auto& a = p.levels[k];
    const auto& b = p.levels[k + 1];
    if (b.n() != a.n()) throw ConfigError("pyramid: batch mismatch");
    if (b.h() != (a.h() + 1) / 2 || b.w() != (a.w() + 1) / 2) {
      throw ConfigError("pyramid: level " + std::to_string(k + 1) +
                        " is not half the size of level " + std::to_string(k));
    }
  }
}

/// Checks the uniform-width contract that holds after the input transition.
template <typename Scalar>
void validate_uniform_channels(const FeaturePyramid<Scalar>& p, Index channels) {
  for (const auto& level : p.levels) {
    if (level.c() != channels) {
      throw ConfigError("pyramid: expected uniform " + std::to_string(channels) +
                        " channels, got " + level.shape_str());
    }
  }
}

}  // namespace pfpn
