#pragma once

#include <string>
#include <vector>

#include "pfpn/config.hpp"
#include "pfpn/layers.hpp"
#include "pfpn/pyramid.hpp"

namespace pfpn {

/// Conv3x3 + batch norm + ReLU, the building unit of the tiny backbone.
template <typename Scalar>
struct ConvBnRelu {
  Conv2d<Scalar> conv;
  BatchNorm2d<Scalar> bn;

  ConvBnRelu() = default;
  ConvBnRelu(Index in_ch, Index out_ch, Index stride)
      : conv(in_ch, out_ch, 3, stride), bn(out_ch) {}

  struct Cache {
    typename Conv2d<Scalar>::Cache conv_c;
    typename BatchNorm2d<Scalar>::Cache bn_c;
    Tensor<Scalar> pre;  // bn output, pre-ReLU
  };

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode, Cache* c) {
    Tensor<Scalar> t = conv.forward(x, c ? &c->conv_c : nullptr);
    t = bn.forward(t, mode, c ? &c->bn_c : nullptr);
    if (c) c->pre = t;
    return relu(t);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache& c) {
    Tensor<Scalar> d = relu_backward(dy, c.pre);
    d = bn.backward(d, c.bn_c);
    return conv.backward(d, c.conv_c);
  }

  void init(Rng& rng) { conv.init(rng); }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<Scalar>>& out) {
    conv.collect_params(prefix + ".conv", out);
    bn.collect_params(prefix + ".bn", out);
  }

  void collect_stats(const std::string& prefix,
                     std::vector<StatRef<Scalar>>& out) {
    bn.collect_stats(prefix + ".bn", out);
  }
};

/// Small trainable feature extractor: each level is a stride-controlled entry
/// conv plus one more conv, both 3x3 with norm and ReLU. Level spatial sizes
/// halve from level to level per the spec's strides.
template <typename Scalar>
class TinyBackbone {
 public:
  TinyBackbone() = default;
  explicit TinyBackbone(const BackboneSpec& spec) : spec_(spec) {
    spec.validate();
    int in_ch = 3;
    for (int i = 0; i < spec.num_levels; ++i) {
      entry_.emplace_back(in_ch, spec.channels[i], spec.strides[i]);
      inner_.emplace_back(spec.channels[i], spec.channels[i], 1);
      in_ch = spec.channels[i];
    }
  }

  struct Cache {
    std::vector<typename ConvBnRelu<Scalar>::Cache> entry_c, inner_c;
  };

  FeaturePyramid<Scalar> forward(const Tensor<Scalar>& image, Mode mode,
                                 Cache* cache = nullptr) {
    check_input(image);
    if (cache) {
      cache->entry_c.resize(entry_.size());
      cache->inner_c.resize(inner_.size());
    }
    FeaturePyramid<Scalar> pyr;
    Tensor<Scalar> x = image;
    for (std::size_t i = 0; i < entry_.size(); ++i) {
      x = entry_[i].forward(x, mode, cache ? &cache->entry_c[i] : nullptr);
      x = inner_[i].forward(x, mode, cache ? &cache->inner_c[i] : nullptr);
      pyr.levels.push_back(x);
    }
    return pyr;
  }

  Tensor<Scalar> backward(const FeaturePyramid<Scalar>& dpyr, const Cache& cache) {
    Tensor<Scalar> dx;
    for (int i = static_cast<int>(entry_.size()) - 1; i >= 0; --i) {
      Tensor<Scalar> d = dpyr.levels[i];
      if (dx.size() > 0) d.data += dx.data;
      d = inner_[i].backward(d, cache.inner_c[i]);
      dx = entry_[i].backward(d, cache.entry_c[i]);
    }
    return dx;
  }

  /// Pins every normalization layer to its stored statistics, in training as
  /// well as evaluation mode. Idempotent; affine terms stay trainable.
  void freeze_normalization() {
    for (auto& b : entry_) b.bn.frozen = true;
    for (auto& b : inner_) b.bn.frozen = true;
  }

  bool normalization_frozen() const {
    for (const auto& b : entry_) {
      if (!b.bn.frozen) return false;
    }
    for (const auto& b : inner_) {
      if (!b.bn.frozen) return false;
    }
    return true;
  }

  void init(Rng& rng) {
    for (std::size_t i = 0; i < entry_.size(); ++i) {
      entry_[i].init(rng);
      inner_[i].init(rng);
    }
  }

  void collect_params(std::vector<ParamRef<Scalar>>& out) {
    for (std::size_t i = 0; i < entry_.size(); ++i) {
      entry_[i].collect_params("backbone." + std::to_string(i) + ".0", out);
      inner_[i].collect_params("backbone." + std::to_string(i) + ".1", out);
    }
  }

  void collect_stats(std::vector<StatRef<Scalar>>& out) {
    for (std::size_t i = 0; i < entry_.size(); ++i) {
      entry_[i].collect_stats("backbone." + std::to_string(i) + ".0", out);
      inner_[i].collect_stats("backbone." + std::to_string(i) + ".1", out);
    }
  }

  const BackboneSpec& spec() const { return spec_; }

 private:
  void check_input(const Tensor<Scalar>& image) const {
    if (image.c() != 3) {
      throw std::invalid_argument("backbone: expected a 3-channel image, got " +
                                  image.shape_str());
    }
    int div = spec_.strides[0];
    for (int i = 1; i < spec_.num_levels; ++i) div *= spec_.strides[i];
    if (image.h() % div != 0 || image.w() % div != 0) {
      throw std::invalid_argument(
          "backbone: input " + image.shape_str() +
          " not divisible by the total stride " + std::to_string(div));
    }
  }

  BackboneSpec spec_;
  std::vector<ConvBnRelu<Scalar>> entry_, inner_;
};

}  // namespace pfpn
