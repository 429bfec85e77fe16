#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "pfpn/backbone.hpp"
#include "pfpn/config.hpp"
#include "pfpn/layers.hpp"
#include "pfpn/pyramid.hpp"

namespace pfpn {

// ---------------------------------------------------------------------------
// Input transition: parallel 1x1 convolutions onto a uniform channel width.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct Tm1 {
  std::vector<Conv2d<Scalar>> convs;

  struct Cache {
    std::vector<typename Conv2d<Scalar>::Cache> conv_c;
  };
};

template <typename Scalar>
Tm1<Scalar> make_tm1(const std::vector<int>& in_channels, int out_channels) {
  Tm1<Scalar> tm;
  for (int c : in_channels) tm.convs.emplace_back(c, out_channels, 1);
  return tm;
}

template <typename Scalar>
FeaturePyramid<Scalar> tm1_forward(Tm1<Scalar>& tm,
                                   const FeaturePyramid<Scalar>& raw,
                                   typename Tm1<Scalar>::Cache* cache = nullptr) {
  if (raw.num_levels() != static_cast<Index>(tm.convs.size())) {
    throw ConfigError("tm1: got " + std::to_string(raw.num_levels()) +
                      " levels, configured for " +
                      std::to_string(tm.convs.size()));
  }
  if (cache) cache->conv_c.resize(tm.convs.size());
  FeaturePyramid<Scalar> out;
  for (Index k = 0; k < raw.num_levels(); ++k) {
    out.levels.push_back(
        tm.convs[k].forward(raw.levels[k], cache ? &cache->conv_c[k] : nullptr));
  }
  return out;
}

template <typename Scalar>
FeaturePyramid<Scalar> tm1_backward(Tm1<Scalar>& tm,
                                    const FeaturePyramid<Scalar>& dout,
                                    const typename Tm1<Scalar>::Cache& cache) {
  FeaturePyramid<Scalar> din;
  for (Index k = 0; k < dout.num_levels(); ++k) {
    din.levels.push_back(tm.convs[k].backward(dout.levels[k], cache.conv_c[k]));
  }
  return din;
}

// ---------------------------------------------------------------------------
// Feature polishing
// ---------------------------------------------------------------------------

/// One polishing block. Block k reads levels k..N-1: every source level goes
/// through conv3x3 + norm + ReLU, deeper levels are bilinearly upsampled to
/// level k's size, the stack is concatenated and fused by a 1x1 conv + norm,
/// and the result updates f_k through a residual addition followed by ReLU.
template <typename Scalar>
struct FpmBlock {
  Index level = 0;  // k
  std::vector<Conv2d<Scalar>> branch_conv;   // one per source level k..N-1
  std::vector<BatchNorm2d<Scalar>> branch_bn;
  Conv2d<Scalar> fuse_conv;
  BatchNorm2d<Scalar> fuse_bn;

  struct Cache {
    std::vector<typename Conv2d<Scalar>::Cache> conv_c;
    std::vector<typename BatchNorm2d<Scalar>::Cache> bn_c;
    std::vector<Tensor<Scalar>> branch_pre;  // norm output, pre-ReLU
    std::vector<std::pair<Index, Index>> src_sizes;
    typename Conv2d<Scalar>::Cache fuse_conv_c;
    typename BatchNorm2d<Scalar>::Cache fuse_bn_c;
    Tensor<Scalar> pre_residual;  // p + f_k, pre-ReLU
  };
};

template <typename Scalar>
FpmBlock<Scalar> make_fpm_block(Index level, Index num_levels, Index channels) {
  FpmBlock<Scalar> b;
  b.level = level;
  const Index sources = num_levels - level;
  for (Index j = 0; j < sources; ++j) {
    b.branch_conv.emplace_back(channels, channels, 3);
    b.branch_bn.emplace_back(channels);
  }
  b.fuse_conv = Conv2d<Scalar>(sources * channels, channels, 1);
  b.fuse_bn = BatchNorm2d<Scalar>(channels);
  return b;
}

template <typename Scalar>
Tensor<Scalar> fpm_block_forward(FpmBlock<Scalar>& block,
                                 const FeaturePyramid<Scalar>& pyr, Mode mode,
                                 typename FpmBlock<Scalar>::Cache* cache = nullptr) {
  const Index n_levels = pyr.num_levels();
  const Index k = block.level;
  if (k < 0 || k >= n_levels) {
    throw std::out_of_range("fpm block: level " + std::to_string(k) +
                            " out of range for " + std::to_string(n_levels) +
                            " levels");
  }
  if (static_cast<Index>(block.branch_conv.size()) != n_levels - k) {
    throw ConfigError("fpm block: built for a different level count");
  }
  const Tensor<Scalar>& fk = pyr.levels[k];
  if (cache) {
    cache->conv_c.resize(block.branch_conv.size());
    cache->bn_c.resize(block.branch_bn.size());
    cache->branch_pre.resize(block.branch_conv.size());
    cache->src_sizes.resize(block.branch_conv.size());
  }
  std::vector<Tensor<Scalar>> ups;
  ups.reserve(block.branch_conv.size());
  for (Index j = k; j < n_levels; ++j) {
    const Index b = j - k;
    Tensor<Scalar> c = block.branch_conv[b].forward(
        pyr.levels[j], cache ? &cache->conv_c[b] : nullptr);
    c = block.branch_bn[b].forward(c, mode, cache ? &cache->bn_c[b] : nullptr);
    if (cache) {
      cache->branch_pre[b] = c;
      cache->src_sizes[b] = {pyr.levels[j].h(), pyr.levels[j].w()};
    }
    c = relu(c);
    ups.push_back(j > k ? upsample_bilinear(c, fk.h(), fk.w()) : std::move(c));
  }
  std::vector<const Tensor<Scalar>*> parts;
  for (const auto& u : ups) parts.push_back(&u);
  Tensor<Scalar> p = block.fuse_conv.forward(concat_channels(parts),
                                             cache ? &cache->fuse_conv_c : nullptr);
  p = block.fuse_bn.forward(p, mode, cache ? &cache->fuse_bn_c : nullptr);
  p.data += fk.data;
  if (cache) cache->pre_residual = p;
  return relu(p);
}

template <typename Scalar>
void fpm_block_backward(FpmBlock<Scalar>& block, const Tensor<Scalar>& dout,
                        const typename FpmBlock<Scalar>::Cache& cache,
                        FeaturePyramid<Scalar>& dpyr) {
  const Index k = block.level;
  Tensor<Scalar> dsum = relu_backward(dout, cache.pre_residual);
  dpyr.levels[k].data += dsum.data;  // residual path
  Tensor<Scalar> dp = block.fuse_bn.backward(dsum, cache.fuse_bn_c);
  Tensor<Scalar> dcat = block.fuse_conv.backward(dp, cache.fuse_conv_c);
  const Index width = block.fuse_bn.channels;
  std::vector<Index> counts(block.branch_conv.size(), width);
  std::vector<Tensor<Scalar>> dparts = split_channels(dcat, counts);
  for (Index b = static_cast<Index>(block.branch_conv.size()) - 1; b >= 0; --b) {
    Tensor<Scalar> du = std::move(dparts[b]);
    const auto [sh, sw] = cache.src_sizes[b];
    Tensor<Scalar> dc =
        b > 0 ? upsample_bilinear_backward(du, sh, sw) : std::move(du);
    dc = relu_backward(dc, cache.branch_pre[b]);
    dc = block.branch_bn[b].backward(dc, cache.bn_c[b]);
    dc = block.branch_conv[b].backward(dc, cache.conv_c[b]);
    dpyr.levels[k + b].data += dc.data;
  }
}

/// One full polishing stage: N parallel blocks, all reading the same input
/// pyramid, producing a pyramid of identical shape.
template <typename Scalar>
struct Fpm {
  std::vector<FpmBlock<Scalar>> blocks;

  struct Cache {
    std::vector<typename FpmBlock<Scalar>::Cache> block_c;
  };
};

template <typename Scalar>
Fpm<Scalar> make_fpm(Index num_levels, Index channels) {
  Fpm<Scalar> f;
  for (Index k = 0; k < num_levels; ++k) {
    f.blocks.push_back(make_fpm_block<Scalar>(k, num_levels, channels));
  }
  return f;
}

template <typename Scalar>
FeaturePyramid<Scalar> fpm_forward(Fpm<Scalar>& fpm,
                                   const FeaturePyramid<Scalar>& pyr, Mode mode,
                                   typename Fpm<Scalar>::Cache* cache = nullptr) {
  if (pyr.num_levels() != static_cast<Index>(fpm.blocks.size())) {
    throw ConfigError("fpm: pyramid has " + std::to_string(pyr.num_levels()) +
                      " levels, stage built for " +
                      std::to_string(fpm.blocks.size()));
  }
  if (cache) cache->block_c.resize(fpm.blocks.size());
  FeaturePyramid<Scalar> out;
  for (Index k = 0; k < pyr.num_levels(); ++k) {
    out.levels.push_back(fpm_block_forward(
        fpm.blocks[k], pyr, mode, cache ? &cache->block_c[k] : nullptr));
  }
  return out;
}

template <typename Scalar>
FeaturePyramid<Scalar> fpm_backward(Fpm<Scalar>& fpm,
                                    const FeaturePyramid<Scalar>& dout,
                                    const typename Fpm<Scalar>::Cache& cache) {
  FeaturePyramid<Scalar> dpyr;
  for (const auto& lvl : dout.levels) {
    dpyr.levels.push_back(Tensor<Scalar>::zeros(lvl.n(), lvl.c(), lvl.h(), lvl.w()));
  }
  for (Index k = 0; k < dout.num_levels(); ++k) {
    fpm_block_backward(fpm.blocks[k], dout.levels[k], cache.block_c[k], dpyr);
  }
  return dpyr;
}

/// Applies T polishing stages in sequence. With shared weights there is one
/// parameter set applied T times; gradients then accumulate across
/// applications. T = 0 returns the input unchanged.
template <typename Scalar>
FeaturePyramid<Scalar> polish_chain(
    std::vector<Fpm<Scalar>>& stages, bool share_weights, int num_fpms,
    const FeaturePyramid<Scalar>& pyr, Mode mode,
    std::vector<typename Fpm<Scalar>::Cache>* caches = nullptr) {
  if (!share_weights && static_cast<int>(stages.size()) != num_fpms) {
    throw ConfigError("polish chain: expected one stage per application");
  }
  if (share_weights && num_fpms > 0 && stages.size() != 1) {
    throw ConfigError("polish chain: shared weights need exactly one stage");
  }
  if (caches) caches->resize(num_fpms);
  FeaturePyramid<Scalar> x = pyr;
  for (int t = 0; t < num_fpms; ++t) {
    Fpm<Scalar>& stage = share_weights ? stages[0] : stages[t];
    x = fpm_forward(stage, x, mode, caches ? &(*caches)[t] : nullptr);
  }
  return x;
}

template <typename Scalar>
FeaturePyramid<Scalar> polish_chain_backward(
    std::vector<Fpm<Scalar>>& stages, bool share_weights, int num_fpms,
    const FeaturePyramid<Scalar>& dout,
    const std::vector<typename Fpm<Scalar>::Cache>& caches) {
  FeaturePyramid<Scalar> d = dout;
  for (int t = num_fpms - 1; t >= 0; --t) {
    Fpm<Scalar>& stage = share_weights ? stages[0] : stages[t];
    d = fpm_backward(stage, d, caches[t]);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Output transition: bilinear upsample to input resolution, then 1x1 conv
// down to the decoder width.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct Tm2 {
  std::vector<Conv2d<Scalar>> convs;
  Index out_size = 0;

  struct Cache {
    std::vector<typename Conv2d<Scalar>::Cache> conv_c;
    std::vector<std::pair<Index, Index>> in_sizes;
  };
};

template <typename Scalar>
Tm2<Scalar> make_tm2(Index num_levels, int in_channels, int out_channels,
                     Index out_size) {
  Tm2<Scalar> tm;
  tm.out_size = out_size;
  for (Index k = 0; k < num_levels; ++k) {
    tm.convs.emplace_back(in_channels, out_channels, 1);
  }
  return tm;
}

template <typename Scalar>
FeaturePyramid<Scalar> tm2_forward(Tm2<Scalar>& tm,
                                   const FeaturePyramid<Scalar>& pyr,
                                   typename Tm2<Scalar>::Cache* cache = nullptr) {
  if (pyr.num_levels() != static_cast<Index>(tm.convs.size())) {
    throw ConfigError("tm2: level count mismatch");
  }
  if (cache) {
    cache->conv_c.resize(tm.convs.size());
    cache->in_sizes.resize(tm.convs.size());
  }
  FeaturePyramid<Scalar> out;
  for (Index k = 0; k < pyr.num_levels(); ++k) {
    if (cache) cache->in_sizes[k] = {pyr.levels[k].h(), pyr.levels[k].w()};
    Tensor<Scalar> up = upsample_bilinear(pyr.levels[k], tm.out_size, tm.out_size);
    out.levels.push_back(
        tm.convs[k].forward(up, cache ? &cache->conv_c[k] : nullptr));
  }
  return out;
}

template <typename Scalar>
FeaturePyramid<Scalar> tm2_backward(Tm2<Scalar>& tm,
                                    const FeaturePyramid<Scalar>& dout,
                                    const typename Tm2<Scalar>::Cache& cache) {
  FeaturePyramid<Scalar> din;
  for (Index k = 0; k < dout.num_levels(); ++k) {
    Tensor<Scalar> dup = tm.convs[k].backward(dout.levels[k], cache.conv_c[k]);
    const auto [h, w] = cache.in_sizes[k];
    din.levels.push_back(upsample_bilinear_backward(dup, h, w));
  }
  return din;
}

// ---------------------------------------------------------------------------
// Side output heads: per-level 1x1 conv + sigmoid for deep supervision.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct SideHeads {
  std::vector<Conv2d<Scalar>> convs;

  struct Cache {
    std::vector<typename Conv2d<Scalar>::Cache> conv_c;
    std::vector<Tensor<Scalar>> sig_out;
  };
};

template <typename Scalar>
SideHeads<Scalar> make_side_heads(Index num_levels, int in_channels) {
  SideHeads<Scalar> sh;
  for (Index k = 0; k < num_levels; ++k) {
    sh.convs.emplace_back(in_channels, 1, 1);
  }
  return sh;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> side_output_heads(
    SideHeads<Scalar>& sh, const FeaturePyramid<Scalar>& pyr,
    typename SideHeads<Scalar>::Cache* cache = nullptr) {
  if (pyr.num_levels() != static_cast<Index>(sh.convs.size())) {
    throw ConfigError("side heads: level count mismatch");
  }
  if (cache) {
    cache->conv_c.resize(sh.convs.size());
    cache->sig_out.resize(sh.convs.size());
  }
  std::vector<Tensor<Scalar>> maps;
  for (Index k = 0; k < pyr.num_levels(); ++k) {
    Tensor<Scalar> t =
        sh.convs[k].forward(pyr.levels[k], cache ? &cache->conv_c[k] : nullptr);
    t = sigmoid(t);
    if (cache) cache->sig_out[k] = t;
    maps.push_back(std::move(t));
  }
  return maps;
}

template <typename Scalar>
FeaturePyramid<Scalar> side_heads_backward(
    SideHeads<Scalar>& sh, const std::vector<Tensor<Scalar>>& dmaps,
    const typename SideHeads<Scalar>::Cache& cache) {
  FeaturePyramid<Scalar> din;
  for (Index k = 0; k < static_cast<Index>(dmaps.size()); ++k) {
    Tensor<Scalar> d = sigmoid_backward(dmaps[k], cache.sig_out[k]);
    din.levels.push_back(sh.convs[k].backward(d, cache.conv_c[k]));
  }
  return din;
}

// ---------------------------------------------------------------------------
// Fusion head: concatenate all levels, two 3x3 conv+ReLU layers, then a 1x1
// conv + sigmoid producing the final map.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct FusionModule {
  Conv2d<Scalar> conv1, conv2, conv3;

  struct Cache {
    typename Conv2d<Scalar>::Cache c1, c2, c3;
    Tensor<Scalar> pre1, pre2, sig_out;
    std::vector<Index> split;
  };
};

template <typename Scalar>
FusionModule<Scalar> make_fusion(Index num_levels, int in_channels, int width) {
  FusionModule<Scalar> fm;
  fm.conv1 = Conv2d<Scalar>(num_levels * in_channels, width, 3);
  fm.conv2 = Conv2d<Scalar>(width, width, 3);
  fm.conv3 = Conv2d<Scalar>(width, 1, 1);
  return fm;
}

template <typename Scalar>
Tensor<Scalar> fusion_forward(FusionModule<Scalar>& fm,
                              const FeaturePyramid<Scalar>& pyr,
                              typename FusionModule<Scalar>::Cache* cache = nullptr) {
  const auto& first = pyr.levels.front();
  for (const auto& lvl : pyr.levels) {
    if (lvl.h() != first.h() || lvl.w() != first.w()) {
      throw ConfigError("fusion: levels must share one resolution, got " +
                        lvl.shape_str() + " vs " + first.shape_str());
    }
  }
  std::vector<const Tensor<Scalar>*> parts;
  std::vector<Index> split;
  for (const auto& lvl : pyr.levels) {
    parts.push_back(&lvl);
    split.push_back(lvl.c());
  }
  Tensor<Scalar> x =
      fm.conv1.forward(concat_channels(parts), cache ? &cache->c1 : nullptr);
  if (cache) cache->pre1 = x;
  x = relu(x);
  x = fm.conv2.forward(x, cache ? &cache->c2 : nullptr);
  if (cache) cache->pre2 = x;
  x = relu(x);
  x = fm.conv3.forward(x, cache ? &cache->c3 : nullptr);
  x = sigmoid(x);
  if (cache) {
    cache->sig_out = x;
    cache->split = split;
  }
  return x;
}

template <typename Scalar>
FeaturePyramid<Scalar> fusion_backward(FusionModule<Scalar>& fm,
                                       const Tensor<Scalar>& dmap,
                                       const typename FusionModule<Scalar>::Cache& cache) {
  Tensor<Scalar> d = sigmoid_backward(dmap, cache.sig_out);
  d = fm.conv3.backward(d, cache.c3);
  d = relu_backward(d, cache.pre2);
  d = fm.conv2.backward(d, cache.c2);
  d = relu_backward(d, cache.pre1);
  d = fm.conv1.backward(d, cache.c1);
  FeaturePyramid<Scalar> din;
  for (auto& part : split_channels(d, cache.split)) {
    din.levels.push_back(std::move(part));
  }
  return din;
}

// ---------------------------------------------------------------------------
// Full network
// ---------------------------------------------------------------------------

/// The complete network: backbone -> input transition -> polishing chain ->
/// output transition -> (side heads, fusion head). Forward evaluation is a
/// pure function of (parameters, input, mode); parameter mutation must not
/// overlap forward passes on the same instance.
template <typename Scalar>
class PfpnNet {
 public:
  PfpnNet() = default;

  explicit PfpnNet(const ModelConfig& cfg) : config(cfg) {
    cfg.validate();
    if (cfg.backbone_id == BackboneId::kTiny) {
      backbone = TinyBackbone<Scalar>(cfg.backbone);
    }
    tm1 = make_tm1<Scalar>(cfg.backbone.channels, cfg.tm1_channels);
    const int stage_count =
        cfg.share_fpm_weights ? (cfg.num_fpms > 0 ? 1 : 0) : cfg.num_fpms;
    for (int t = 0; t < stage_count; ++t) {
      fpms.push_back(make_fpm<Scalar>(cfg.num_levels, cfg.tm1_channels));
    }
    tm2 = make_tm2<Scalar>(cfg.num_levels, cfg.tm1_channels, cfg.tm2_channels,
                           cfg.input_size);
    side = make_side_heads<Scalar>(cfg.num_levels, cfg.tm2_channels);
    fm = make_fusion<Scalar>(cfg.num_levels, cfg.tm2_channels, cfg.fm_channels);
  }

  struct Cache {
    typename TinyBackbone<Scalar>::Cache backbone_c;
    typename Tm1<Scalar>::Cache tm1_c;
    std::vector<typename Fpm<Scalar>::Cache> chain_c;
    typename Tm2<Scalar>::Cache tm2_c;
    typename SideHeads<Scalar>::Cache side_c;
    typename FusionModule<Scalar>::Cache fm_c;
    bool from_image = false;
  };

  struct Output {
    Tensor<Scalar> final_map;             // (n, 1, S, S), values in (0,1)
    std::vector<Tensor<Scalar>> side_maps;  // one per level, finest first
  };

  /// Forward from a normalized image batch (tiny backbone only).
  Output forward(const Tensor<Scalar>& image, Mode mode, Cache* cache = nullptr) {
    if (config.backbone_id != BackboneId::kTiny) {
      throw ConfigError("model: image input requires the tiny backbone; "
                        "external pyramids enter via forward_pyramid");
    }
    if (image.c() != 3 || image.h() != config.input_size ||
        image.w() != config.input_size) {
      throw std::invalid_argument("model: expected 3x" +
                                  std::to_string(config.input_size) + "x" +
                                  std::to_string(config.input_size) +
                                  " input, got " + image.shape_str());
    }
    FeaturePyramid<Scalar> raw =
        backbone.forward(image, mode, cache ? &cache->backbone_c : nullptr);
    if (cache) cache->from_image = true;
    return forward_pyramid_impl(raw, mode, cache);
  }

  /// Forward from an externally produced raw feature pyramid.
  Output forward_pyramid(const FeaturePyramid<Scalar>& raw, Mode mode,
                         Cache* cache = nullptr) {
    if (cache) cache->from_image = false;
    return forward_pyramid_impl(raw, mode, cache);
  }

  /// Accumulates parameter gradients; returns the image gradient when the
  /// forward started from an image, otherwise an empty tensor (the raw
  /// pyramid gradient is available through backward_to_pyramid).
  Tensor<Scalar> backward(const Tensor<Scalar>& d_final,
                          const std::vector<Tensor<Scalar>>& d_sides,
                          const Cache& cache) {
    FeaturePyramid<Scalar> draw = backward_to_pyramid(d_final, d_sides, cache);
    if (!cache.from_image) return {};
    return backbone.backward(draw, cache.backbone_c);
  }

  FeaturePyramid<Scalar> backward_to_pyramid(
      const Tensor<Scalar>& d_final, const std::vector<Tensor<Scalar>>& d_sides,
      const Cache& cache) {
    FeaturePyramid<Scalar> d_tm2 = fusion_backward(fm, d_final, cache.fm_c);
    FeaturePyramid<Scalar> d_side = side_heads_backward(side, d_sides, cache.side_c);
    for (Index k = 0; k < d_tm2.num_levels(); ++k) {
      d_tm2.levels[k].data += d_side.levels[k].data;
    }
    FeaturePyramid<Scalar> d_pol = tm2_backward(tm2, d_tm2, cache.tm2_c);
    d_pol = polish_chain_backward(fpms, config.share_fpm_weights,
                                  config.num_fpms, d_pol, cache.chain_c);
    return tm1_backward(tm1, d_pol, cache.tm1_c);
  }

  void init_params(std::uint64_t seed) {
    Rng rng(seed);
    if (config.backbone_id == BackboneId::kTiny) backbone.init(rng);
    for (auto& conv : tm1.convs) conv.init(rng);
    for (auto& stage : fpms) {
      for (auto& block : stage.blocks) {
        for (auto& conv : block.branch_conv) conv.init(rng);
        block.fuse_conv.init(rng);
      }
    }
    for (auto& conv : tm2.convs) conv.init(rng);
    for (auto& conv : side.convs) conv.init(rng);
    fm.conv1.init(rng);
    fm.conv2.init(rng);
    fm.conv3.init(rng);
  }

  std::vector<ParamRef<Scalar>> params() {
    std::vector<ParamRef<Scalar>> out;
    if (config.backbone_id == BackboneId::kTiny) backbone.collect_params(out);
    for (std::size_t k = 0; k < tm1.convs.size(); ++k) {
      tm1.convs[k].collect_params("tm1." + std::to_string(k), out);
    }
    for (std::size_t t = 0; t < fpms.size(); ++t) {
      for (std::size_t k = 0; k < fpms[t].blocks.size(); ++k) {
        auto& block = fpms[t].blocks[k];
        const std::string base =
            "fpm." + std::to_string(t) + "." + std::to_string(k);
        for (std::size_t b = 0; b < block.branch_conv.size(); ++b) {
          const std::string branch =
              base + ".branch" + std::to_string(block.level + static_cast<Index>(b));
          block.branch_conv[b].collect_params(branch + ".conv", out);
          block.branch_bn[b].collect_params(branch + ".bn", out);
        }
        block.fuse_conv.collect_params(base + ".fuse.conv", out);
        block.fuse_bn.collect_params(base + ".fuse.bn", out);
      }
    }
    for (std::size_t k = 0; k < tm2.convs.size(); ++k) {
      tm2.convs[k].collect_params("tm2." + std::to_string(k), out);
    }
    for (std::size_t k = 0; k < side.convs.size(); ++k) {
      side.convs[k].collect_params("side." + std::to_string(k), out);
    }
    fm.conv1.collect_params("fm.0", out);
    fm.conv2.collect_params("fm.1", out);
    fm.conv3.collect_params("fm.2", out);
    return out;
  }

  std::vector<StatRef<Scalar>> stats() {
    std::vector<StatRef<Scalar>> out;
    if (config.backbone_id == BackboneId::kTiny) backbone.collect_stats(out);
    for (std::size_t t = 0; t < fpms.size(); ++t) {
      for (std::size_t k = 0; k < fpms[t].blocks.size(); ++k) {
        auto& block = fpms[t].blocks[k];
        const std::string base =
            "fpm." + std::to_string(t) + "." + std::to_string(k);
        for (std::size_t b = 0; b < block.branch_bn.size(); ++b) {
          const std::string branch =
              base + ".branch" + std::to_string(block.level + static_cast<Index>(b));
          block.branch_bn[b].collect_stats(branch + ".bn", out);
        }
        block.fuse_bn.collect_stats(base + ".fuse.bn", out);
      }
    }
    return out;
  }

  void zero_grads() {
    for (auto& p : params()) p.grad->setZero();
  }

  void freeze_backbone_normalization() {
    if (config.backbone_id == BackboneId::kTiny) backbone.freeze_normalization();
  }

  ModelConfig config;
  TinyBackbone<Scalar> backbone;
  Tm1<Scalar> tm1;
  std::vector<Fpm<Scalar>> fpms;
  Tm2<Scalar> tm2;
  SideHeads<Scalar> side;
  FusionModule<Scalar> fm;

 private:
  Output forward_pyramid_impl(const FeaturePyramid<Scalar>& raw, Mode mode,
                              Cache* cache) {
    validate_pyramid(raw);
    FeaturePyramid<Scalar> x =
        tm1_forward(tm1, raw, cache ? &cache->tm1_c : nullptr);
    x = polish_chain(fpms, config.share_fpm_weights, config.num_fpms, x, mode,
                     cache ? &cache->chain_c : nullptr);
    x = tm2_forward(tm2, x, cache ? &cache->tm2_c : nullptr);
    Output out;
    out.side_maps = side_output_heads(side, x, cache ? &cache->side_c : nullptr);
    out.final_map = fusion_forward(fm, x, cache ? &cache->fm_c : nullptr);
    return out;
  }
};

/// Smallest distance of any pre-ReLU activation from zero in a cached
/// forward pass. Finite-difference tests require this to be comfortably
/// larger than the probe step.
template <typename Scalar>
double min_relu_margin(const typename PfpnNet<Scalar>::Cache& cache) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : cache.backbone_c.entry_c) m = std::min(m, min_abs(c.pre));
  for (const auto& c : cache.backbone_c.inner_c) m = std::min(m, min_abs(c.pre));
  for (const auto& stage : cache.chain_c) {
    for (const auto& b : stage.block_c) {
      for (const auto& pre : b.branch_pre) m = std::min(m, min_abs(pre));
      m = std::min(m, min_abs(b.pre_residual));
    }
  }
  m = std::min(m, min_abs(cache.fm_c.pre1));
  m = std::min(m, min_abs(cache.fm_c.pre2));
  return m;
}

}  // namespace pfpn
