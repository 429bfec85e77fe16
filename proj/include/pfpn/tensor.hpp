#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <utility>

namespace pfpn {

using Index = Eigen::Index;

template <typename Scalar>
using VecX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMajorMat =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense NCHW tensor backed by a flat Eigen array. Element (n, c, y, x) lives
/// at ((n*C + c)*H + y)*W + x, so one image's CHW block and one channel plane
/// are both contiguous.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Index n, Index c, Index h, Index w)
      : n_(n), c_(c), h_(h), w_(w), data(n * c * h * w) {}

  static Tensor zeros(Index n, Index c, Index h, Index w) {
    Tensor t(n, c, h, w);
    t.data.setZero();
    return t;
  }

  static Tensor constant(Index n, Index c, Index h, Index w, Scalar v) {
    Tensor t(n, c, h, w);
    t.data.setConstant(v);
    return t;
  }

  Index n() const { return n_; }
  Index c() const { return c_; }
  Index h() const { return h_; }
  Index w() const { return w_; }
  Index size() const { return data.size(); }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  Scalar& at(Index n, Index c, Index y, Index x) {
    return data[((n * c_ + c) * h_ + y) * w_ + x];
  }
  Scalar at(Index n, Index c, Index y, Index x) const {
    return data[((n * c_ + c) * h_ + y) * w_ + x];
  }

  Scalar* image_ptr(Index n) { return data.data() + n * c_ * h_ * w_; }
  const Scalar* image_ptr(Index n) const { return data.data() + n * c_ * h_ * w_; }

  Scalar* channel_ptr(Index n, Index c) {
    return data.data() + (n * c_ + c) * h_ * w_;
  }
  const Scalar* channel_ptr(Index n, Index c) const {
    return data.data() + (n * c_ + c) * h_ * w_;
  }

  /// One image as a (channels) x (h*w) row-major matrix view.
  Eigen::Map<RowMajorMat<Scalar>> image_mat(Index n) {
    return {image_ptr(n), c_, h_ * w_};
  }
  Eigen::Map<const RowMajorMat<Scalar>> image_mat(Index n) const {
    return {image_ptr(n), c_, h_ * w_};
  }

  /// One channel plane as an h x w row-major array view.
  Eigen::Map<Plane<Scalar>> plane(Index n, Index c) {
    return {channel_ptr(n, c), h_, w_};
  }
  Eigen::Map<const Plane<Scalar>> plane(Index n, Index c) const {
    return {channel_ptr(n, c), h_, w_};
  }

  std::string shape_str() const {
    return "(" + std::to_string(n_) + "," + std::to_string(c_) + "," +
           std::to_string(h_) + "," + std::to_string(w_) + ")";
  }

  template <typename To>
  Tensor<To> cast() const {
    Tensor<To> out(n_, c_, h_, w_);
    out.data = data.template cast<To>();
    return out;
  }

 private:
  Index n_ = 0, c_ = 0, h_ = 0, w_ = 0;

 public:
  VecX<Scalar> data;
};

/// Configuration problems (wrong level counts, channel mismatches, bad
/// config files) are reported as ConfigError; shape/value problems on data
/// paths as std::invalid_argument; bad indices as std::out_of_range.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pfpn
