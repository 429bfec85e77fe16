#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pfpn/rng.hpp"
#include "pfpn/tensor.hpp"

namespace pfpn {

enum class Mode { kTrain, kEval };

/// Named view of one trainable tensor (value + gradient accumulator).
template <typename Scalar>
struct ParamRef {
  std::string name;
  VecX<Scalar>* value;
  VecX<Scalar>* grad;
};

/// Named view of one non-trainable state tensor (normalization statistics).
template <typename Scalar>
struct StatRef {
  std::string name;
  VecX<Scalar>* value;
};

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename Scalar>
void im2col(const Scalar* img, Index channels, Index h, Index w, Index ksize,
            Index stride, Index pad, MatX<Scalar>& col) {
  const Index out_h = (h + 2 * pad - ksize) / stride + 1;
  const Index out_w = (w + 2 * pad - ksize) / stride + 1;
  col.resize(channels * ksize * ksize, out_h * out_w);
  for (Index oy = 0; oy < out_h; ++oy) {
    for (Index ox = 0; ox < out_w; ++ox) {
      Scalar* dst = col.data() + (oy * out_w + ox) * col.rows();
      for (Index c = 0; c < channels; ++c) {
        const Scalar* src = img + c * h * w;
        for (Index ky = 0; ky < ksize; ++ky) {
          const Index iy = oy * stride + ky - pad;
          for (Index kx = 0; kx < ksize; ++kx) {
            const Index ix = ox * stride + kx - pad;
            *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                         ? src[iy * w + ix]
                         : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const MatX<Scalar>& col, Index channels, Index h, Index w,
                Index ksize, Index stride, Index pad, Scalar* img) {
  const Index out_h = (h + 2 * pad - ksize) / stride + 1;
  const Index out_w = (w + 2 * pad - ksize) / stride + 1;
  for (Index oy = 0; oy < out_h; ++oy) {
    for (Index ox = 0; ox < out_w; ++ox) {
      const Scalar* src = col.data() + (oy * out_w + ox) * col.rows();
      for (Index c = 0; c < channels; ++c) {
        Scalar* dst = img + c * h * w;
        for (Index ky = 0; ky < ksize; ++ky) {
          const Index iy = oy * stride + ky - pad;
          for (Index kx = 0; kx < ksize; ++kx) {
            const Index ix = ox * stride + kx - pad;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
              dst[iy * w + ix] += *src;
            }
            ++src;
          }
        }
      }
    }
  }
}

/// 2-D convolution with square kernel and zero padding ksize/2. Weight layout
/// is (out, in, ky, kx) flattened, which doubles as an (out) x (in*k*k)
/// row-major matrix for the im2col product.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Index in_ch, Index out_ch, Index ksize, Index stride = 1)
      : in_channels(in_ch),
        out_channels(out_ch),
        ksize(ksize),
        stride(stride),
        pad(ksize / 2) {
    weight.setZero(out_ch * in_ch * ksize * ksize);
    bias.setZero(out_ch);
    grad_weight.setZero(weight.size());
    grad_bias.setZero(bias.size());
  }

  /// Fan-in scaled uniform weights, zero bias.
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(double(in_channels) * ksize * ksize);
    for (Index i = 0; i < weight.size(); ++i) {
      weight[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
    bias.setZero();
  }

  struct Cache {
    Tensor<Scalar> input;
  };

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache* cache = nullptr) const {
    if (x.c() != in_channels) {
      throw ConfigError("conv: expected " + std::to_string(in_channels) +
                        " input channels, got " + std::to_string(x.c()));
    }
    const Index out_h = (x.h() + 2 * pad - ksize) / stride + 1;
    const Index out_w = (x.w() + 2 * pad - ksize) / stride + 1;
    Tensor<Scalar> y(x.n(), out_channels, out_h, out_w);
    Eigen::Map<const RowMajorMat<Scalar>> wmat(weight.data(), out_channels,
                                               in_channels * ksize * ksize);
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bvec(
        bias.data(), out_channels);
    MatX<Scalar> col;
    for (Index i = 0; i < x.n(); ++i) {
      auto ymat = y.image_mat(i);
      if (ksize == 1 && stride == 1) {
        ymat.noalias() = wmat * x.image_mat(i);
      } else {
        im2col(x.image_ptr(i), in_channels, x.h(), x.w(), ksize, stride, pad,
               col);
        ymat.noalias() = wmat * col;
      }
      ymat.colwise() += bvec;
    }
    if (cache) cache->input = x;
    return y;
  }

  /// Accumulates weight/bias gradients and returns the input gradient.
  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache& cache) {
    const Tensor<Scalar>& x = cache.input;
    Tensor<Scalar> dx = Tensor<Scalar>::zeros(x.n(), x.c(), x.h(), x.w());
    Eigen::Map<const RowMajorMat<Scalar>> wmat(weight.data(), out_channels,
                                               in_channels * ksize * ksize);
    Eigen::Map<RowMajorMat<Scalar>> dwmat(grad_weight.data(), out_channels,
                                          in_channels * ksize * ksize);
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> dbvec(grad_bias.data(),
                                                               out_channels);
    MatX<Scalar> col, dcol;
    for (Index i = 0; i < x.n(); ++i) {
      auto dymat = dy.image_mat(i);
      dbvec += dymat.rowwise().sum();
      if (ksize == 1 && stride == 1) {
        dwmat.noalias() += dymat * x.image_mat(i).transpose();
        dx.image_mat(i).noalias() = wmat.transpose() * dymat;
      } else {
        im2col(x.image_ptr(i), in_channels, x.h(), x.w(), ksize, stride, pad,
               col);
        dwmat.noalias() += dymat * col.transpose();
        dcol.noalias() = wmat.transpose() * dymat;
        col2im_add(dcol, in_channels, x.h(), x.w(), ksize, stride, pad,
                   dx.image_ptr(i));
      }
    }
    return dx;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<Scalar>>& out) {
    out.push_back({prefix + ".weight", &weight, &grad_weight});
    out.push_back({prefix + ".bias", &bias, &grad_bias});
  }

  Index in_channels = 0, out_channels = 0, ksize = 1, stride = 1, pad = 0;
  VecX<Scalar> weight, bias, grad_weight, grad_bias;
};

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// Per-channel batch normalization over (batch, height, width).
///
/// Training mode normalizes with batch statistics (biased variance) and
/// updates running statistics with momentum; the running variance stores the
/// unbiased estimate. A frozen layer uses its stored statistics in both modes
/// and never updates them; gamma/beta stay trainable.
template <typename Scalar>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(Index channels) : channels(channels) {
    gamma.setOnes(channels);
    beta.setZero(channels);
    grad_gamma.setZero(channels);
    grad_beta.setZero(channels);
    running_mean.setZero(channels);
    running_var.setOnes(channels);
  }

  struct Cache {
    Tensor<Scalar> xhat;
    VecX<Scalar> invstd;
    bool batch_stats = false;
  };

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode,
                         Cache* cache = nullptr) {
    if (x.c() != channels) {
      throw ConfigError("batchnorm: channel mismatch");
    }
    const bool use_batch = (mode == Mode::kTrain) && !frozen;
    const Index m = x.n() * x.h() * x.w();
    Tensor<Scalar> y(x.n(), x.c(), x.h(), x.w());
    Tensor<Scalar> xhat(x.n(), x.c(), x.h(), x.w());
    VecX<Scalar> invstd(channels);
    for (Index c = 0; c < channels; ++c) {
      Scalar mean, var;
      if (use_batch) {
        double sum = 0.0, sumsq = 0.0;
        for (Index i = 0; i < x.n(); ++i) {
          auto p = x.plane(i, c);
          sum += static_cast<double>(p.sum());
          sumsq += static_cast<double>((p * p).sum());
        }
        const double mu = sum / double(m);
        const double v = sumsq / double(m) - mu * mu;
        mean = static_cast<Scalar>(mu);
        var = static_cast<Scalar>(v < 0 ? 0 : v);
        running_mean[c] =
            (Scalar(1) - momentum) * running_mean[c] + momentum * mean;
        const Scalar unbiased =
            m > 1 ? var * Scalar(m) / Scalar(m - 1) : var;
        running_var[c] =
            (Scalar(1) - momentum) * running_var[c] + momentum * unbiased;
      } else {
        mean = running_mean[c];
        var = running_var[c];
      }
      const Scalar istd = Scalar(1) / std::sqrt(var + eps);
      invstd[c] = istd;
      for (Index i = 0; i < x.n(); ++i) {
        auto xp = x.plane(i, c);
        xhat.plane(i, c) = (xp - mean) * istd;
        y.plane(i, c) = gamma[c] * xhat.plane(i, c) + beta[c];
      }
    }
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->invstd = std::move(invstd);
      cache->batch_stats = use_batch;
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache& cache) {
    const Tensor<Scalar>& xhat = cache.xhat;
    const Index m = dy.n() * dy.h() * dy.w();
    Tensor<Scalar> dx(dy.n(), dy.c(), dy.h(), dy.w());
    for (Index c = 0; c < channels; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (Index i = 0; i < dy.n(); ++i) {
        auto d = dy.plane(i, c);
        auto xh = xhat.plane(i, c);
        sum_dy += static_cast<double>(d.sum());
        sum_dy_xhat += static_cast<double>((d * xh).sum());
      }
      grad_beta[c] += static_cast<Scalar>(sum_dy);
      grad_gamma[c] += static_cast<Scalar>(sum_dy_xhat);
      const Scalar g = gamma[c] * cache.invstd[c];
      if (cache.batch_stats) {
        const Scalar mean_dy = static_cast<Scalar>(sum_dy / double(m));
        const Scalar mean_dy_xhat =
            static_cast<Scalar>(sum_dy_xhat / double(m));
        for (Index i = 0; i < dy.n(); ++i) {
          dx.plane(i, c) = g * (dy.plane(i, c) - mean_dy -
                                xhat.plane(i, c) * mean_dy_xhat);
        }
      } else {
        for (Index i = 0; i < dy.n(); ++i) {
          dx.plane(i, c) = g * dy.plane(i, c);
        }
      }
    }
    return dx;
  }

  void collect_params(const std::string& prefix,
                      std::vector<ParamRef<Scalar>>& out) {
    out.push_back({prefix + ".gamma", &gamma, &grad_gamma});
    out.push_back({prefix + ".beta", &beta, &grad_beta});
  }

  void collect_stats(const std::string& prefix,
                     std::vector<StatRef<Scalar>>& out) {
    out.push_back({prefix + ".running_mean", &running_mean});
    out.push_back({prefix + ".running_var", &running_var});
  }

  Index channels = 0;
  Scalar eps = Scalar(1e-5);
  Scalar momentum = Scalar(0.1);
  bool frozen = false;
  VecX<Scalar> gamma, beta, grad_gamma, grad_beta;
  VecX<Scalar> running_mean, running_var;
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.n(), x.c(), x.h(), x.w());
  y.data = x.data.max(Scalar(0));
  return y;
}

/// dx = dy where the pre-activation was positive. ReLU'(0) := 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& dy,
                             const Tensor<Scalar>& pre) {
  Tensor<Scalar> dx(dy.n(), dy.c(), dy.h(), dy.w());
  dx.data = (pre.data > Scalar(0)).select(dy.data, Scalar(0));
  return dx;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.n(), x.c(), x.h(), x.w());
  y.data = Scalar(1) / (Scalar(1) + (-x.data).exp());
  return y;
}

template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& dy,
                                const Tensor<Scalar>& y) {
  Tensor<Scalar> dx(dy.n(), dy.c(), dy.h(), dy.w());
  dx.data = dy.data * y.data * (Scalar(1) - y.data);
  return dx;
}

/// Smallest |pre-activation| in a tensor; used to confirm that a forward pass
/// stays away from the ReLU kink before finite-difference checks.
template <typename Scalar>
double min_abs(const Tensor<Scalar>& t) {
  return static_cast<double>(t.data.abs().minCoeff());
}

// ---------------------------------------------------------------------------
// Bilinear interpolation (half-pixel centers)
// ---------------------------------------------------------------------------

struct InterpAxis {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

inline InterpAxis make_interp_axis(Index in, Index out) {
  InterpAxis ax;
  ax.lo.resize(out);
  ax.hi.resize(out);
  ax.frac.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double fl = std::floor(src);
    const Index i = static_cast<Index>(fl);
    ax.lo[o] = std::min(std::max(i, Index(0)), in - 1);
    ax.hi[o] = std::min(std::max(i + 1, Index(0)), in - 1);
    ax.frac[o] = src - fl;
  }
  return ax;
}

template <typename Scalar>
Tensor<Scalar> upsample_bilinear(const Tensor<Scalar>& x, Index out_h,
                                 Index out_w) {
  if (x.h() == out_h && x.w() == out_w) return x;
  const InterpAxis ay = make_interp_axis(x.h(), out_h);
  const InterpAxis ax = make_interp_axis(x.w(), out_w);
  Tensor<Scalar> y(x.n(), x.c(), out_h, out_w);
  for (Index i = 0; i < x.n(); ++i) {
    for (Index c = 0; c < x.c(); ++c) {
      const Scalar* src = x.channel_ptr(i, c);
      Scalar* dst = y.channel_ptr(i, c);
      for (Index oy = 0; oy < out_h; ++oy) {
        const Index y0 = ay.lo[oy], y1 = ay.hi[oy];
        const double ty = ay.frac[oy];
        for (Index ox = 0; ox < out_w; ++ox) {
          const Index x0 = ax.lo[ox], x1 = ax.hi[ox];
          const double tx = ax.frac[ox];
          const double top = (1.0 - tx) * double(src[y0 * x.w() + x0]) +
                             tx * double(src[y0 * x.w() + x1]);
          const double bot = (1.0 - tx) * double(src[y1 * x.w() + x0]) +
                             tx * double(src[y1 * x.w() + x1]);
          dst[oy * out_w + ox] =
              static_cast<Scalar>((1.0 - ty) * top + ty * bot);
        }
      }
    }
  }
  return y;
}

/// Adjoint of upsample_bilinear back to an (in_h, in_w) grid.
template <typename Scalar>
Tensor<Scalar> upsample_bilinear_backward(const Tensor<Scalar>& dy, Index in_h,
                                          Index in_w) {
  if (dy.h() == in_h && dy.w() == in_w) return dy;
  const InterpAxis ay = make_interp_axis(in_h, dy.h());
  const InterpAxis ax = make_interp_axis(in_w, dy.w());
  Tensor<Scalar> dx = Tensor<Scalar>::zeros(dy.n(), dy.c(), in_h, in_w);
  for (Index i = 0; i < dy.n(); ++i) {
    for (Index c = 0; c < dy.c(); ++c) {
      const Scalar* src = dy.channel_ptr(i, c);
      Scalar* dst = dx.channel_ptr(i, c);
      for (Index oy = 0; oy < dy.h(); ++oy) {
        const Index y0 = ay.lo[oy], y1 = ay.hi[oy];
        const double ty = ay.frac[oy];
        for (Index ox = 0; ox < dy.w(); ++ox) {
          const Index x0 = ax.lo[ox], x1 = ax.hi[ox];
          const double tx = ax.frac[ox];
          const double g = double(src[oy * dy.w() + ox]);
          dst[y0 * in_w + x0] += static_cast<Scalar>((1.0 - ty) * (1.0 - tx) * g);
          dst[y0 * in_w + x1] += static_cast<Scalar>((1.0 - ty) * tx * g);
          dst[y1 * in_w + x0] += static_cast<Scalar>(ty * (1.0 - tx) * g);
          dst[y1 * in_w + x1] += static_cast<Scalar>(ty * tx * g);
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Channel concatenation
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<const Tensor<Scalar>*>& parts) {
  Index total_c = 0;
  for (const auto* p : parts) total_c += p->c();
  const Tensor<Scalar>& first = *parts.front();
  Tensor<Scalar> out(first.n(), total_c, first.h(), first.w());
  for (Index i = 0; i < first.n(); ++i) {
    Index c0 = 0;
    for (const auto* p : parts) {
      if (p->h() != first.h() || p->w() != first.w() || p->n() != first.n()) {
        throw ConfigError("concat: spatial/batch mismatch " + p->shape_str() +
                          " vs " + first.shape_str());
      }
      std::copy(p->image_ptr(i), p->image_ptr(i) + p->c() * p->h() * p->w(),
                out.channel_ptr(i, c0));
      c0 += p->c();
    }
  }
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> split_channels(const Tensor<Scalar>& t,
                                           const std::vector<Index>& counts) {
  std::vector<Tensor<Scalar>> parts;
  parts.reserve(counts.size());
  Index c0 = 0;
  for (Index cnt : counts) {
    Tensor<Scalar> part(t.n(), cnt, t.h(), t.w());
    for (Index i = 0; i < t.n(); ++i) {
      std::copy(t.channel_ptr(i, c0), t.channel_ptr(i, c0) + cnt * t.h() * t.w(),
                part.image_ptr(i));
    }
    parts.push_back(std::move(part));
    c0 += cnt;
  }
  return parts;
}

}  // namespace pfpn
