#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace smile::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Batched feature map. Rows are channels; columns enumerate (sample, y, x)
/// in row-major order, so each sample occupies a contiguous column block of
/// height * width entries.
template <typename Scalar>
struct Tensor {
  Mat<Scalar> data;
  int batch = 0;
  int height = 0;
  int width = 0;

  Tensor() = default;
  Tensor(int channels, int batch_, int height_, int width_)
      : data(Mat<Scalar>::Zero(channels, Eigen::Index(batch_) * height_ * width_)),
        batch(batch_),
        height(height_),
        width(width_) {}

  [[nodiscard]] int channels() const { return static_cast<int>(data.rows()); }
  [[nodiscard]] Eigen::Index plane() const { return Eigen::Index(height) * width; }

  /// Column block holding sample `b` (all channels).
  auto sample(int b) { return data.middleCols(b * plane(), plane()); }
  auto sample(int b) const { return data.middleCols(b * plane(), plane()); }

  [[nodiscard]] bool same_shape(const Tensor& other) const {
    return data.rows() == other.data.rows() && batch == other.batch &&
           height == other.height && width == other.width;
  }

  template <typename Other>
  [[nodiscard]] Tensor<Other> cast() const {
    Tensor<Other> out;
    out.data = data.template cast<Other>();
    out.batch = batch;
    out.height = height;
    out.width = width;
    return out;
  }
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stacks channel rows of `a` over those of `b` (skip-connection concat).
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.batch != b.batch || a.height != b.height || a.width != b.width) {
    throw ShapeError("concat_channels: spatial/batch shape mismatch");
  }
  Tensor<Scalar> out;
  out.batch = a.batch;
  out.height = a.height;
  out.width = a.width;
  out.data.resize(a.data.rows() + b.data.rows(), a.data.cols());
  out.data.topRows(a.data.rows()) = a.data;
  out.data.bottomRows(b.data.rows()) = b.data;
  return out;
}

}  // namespace smile::nn
