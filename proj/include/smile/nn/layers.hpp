#pragma once

#include "smile/nn/conv_direct.hpp"
#include "smile/nn/tensor.hpp"

#include <cmath>

namespace smile::nn {

// Primitive layers with explicit forward/backward. Every layer operates on a
// whole batch; nothing mixes information across samples.

/// im2col for a 3x3 kernel with zero padding of 1.
template <typename Scalar>
void im2col3x3(const Tensor<Scalar>& in, Mat<Scalar>& col) {
  const int c_in = in.channels();
  const int h = in.height;
  const int w = in.width;
  const Eigen::Index plane = in.plane();
  col.resize(Eigen::Index(c_in) * 9, in.data.cols());
  for (int c = 0; c < c_in; ++c) {
    const Scalar* src_row = in.data.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        Scalar* dst_row = col.row(Eigen::Index(c) * 9 + ky * 3 + kx).data();
        const int dy = ky - 1;
        const int dx = kx - 1;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int b = 0; b < in.batch; ++b) {
          const Scalar* src = src_row + b * plane;
          Scalar* dst = dst_row + b * plane;
          for (int y = 0; y < h; ++y) {
            Scalar* d = dst + Eigen::Index(y) * w;
            const int sy = y + dy;
            if (sy < 0 || sy >= h) {
              std::fill(d, d + w, Scalar(0));
              continue;
            }
            const Scalar* s = src + Eigen::Index(sy) * w + dx;
            for (int x = 0; x < x_lo; ++x) d[x] = Scalar(0);
            for (int x = x_lo; x < x_hi; ++x) d[x] = s[x];
            for (int x = x_hi; x < w; ++x) d[x] = Scalar(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col3x3: scatters column gradients back onto the input grid.
template <typename Scalar>
void col2im3x3(const Mat<Scalar>& col, Tensor<Scalar>& out) {
  const int c_in = out.channels();
  const int h = out.height;
  const int w = out.width;
  const Eigen::Index plane = out.plane();
  out.data.setZero();
  for (int c = 0; c < c_in; ++c) {
    Scalar* dst_row = out.data.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Scalar* src_row = col.row(Eigen::Index(c) * 9 + ky * 3 + kx).data();
        const int dy = ky - 1;
        const int dx = kx - 1;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int b = 0; b < out.batch; ++b) {
          const Scalar* src = src_row + b * plane;
          Scalar* dst = dst_row + b * plane;
          for (int y = 0; y < h; ++y) {
            const int sy = y + dy;
            if (sy < 0 || sy >= h) continue;
            const Scalar* s = src + Eigen::Index(y) * w;
            Scalar* d = dst + Eigen::Index(sy) * w + dx;
            for (int x = x_lo; x < x_hi; ++x) d[x] += s[x];
          }
        }
      }
    }
  }
}

/// 3x3 "same" convolution without bias (every use is followed by a
/// normalization). weight: c_out x (c_in*9).
///
/// Rows whose width fits a SIMD register use the register-blocked kernels in
/// conv_direct.hpp; anything else (tiny coarse levels) goes through
/// im2col + GEMM. Both paths are exposed so they can be checked against each
/// other.
template <typename Scalar>
struct Conv3x3 {
  struct Cache {
    bool direct = false;
    Mat<Scalar> buffer;  // padded input (direct) or im2col matrix
    int c_in = 0, batch = 0, height = 0, width = 0;
  };

  static bool direct_applicable(int width) { return direct::vector_bytes_for<Scalar>(width) != 0; }

  static Tensor<Scalar> forward(const Mat<Scalar>& weight, const Tensor<Scalar>& in, Cache* cache) {
    return direct_applicable(in.width) ? forward_direct(weight, in, cache) : forward_im2col(weight, in, cache);
  }

  static Tensor<Scalar> forward_direct(const Mat<Scalar>& weight, const Tensor<Scalar>& in, Cache* cache) {
    Mat<Scalar> local;
    Mat<Scalar>& pad = cache ? cache->buffer : local;
    direct::pad_input(in, pad);
    Tensor<Scalar> out;
    out.batch = in.batch;
    out.height = in.height;
    out.width = in.width;
    out.data.resize(weight.rows(), in.data.cols());
    direct::forward(pad, weight, in.batch, in.height, in.width, out.data);
    if (cache) fill(*cache, in, true);
    return out;
  }

  static Tensor<Scalar> forward_im2col(const Mat<Scalar>& weight, const Tensor<Scalar>& in, Cache* cache) {
    Mat<Scalar> local;
    Mat<Scalar>& col = cache ? cache->buffer : local;
    im2col3x3(in, col);
    Tensor<Scalar> out;
    out.batch = in.batch;
    out.height = in.height;
    out.width = in.width;
    out.data.noalias() = weight * col;
    if (cache) fill(*cache, in, false);
    return out;
  }

  /// Accumulates into grad_weight when non-null. Returns the input gradient
  /// when `want_input` is set.
  static Tensor<Scalar> backward(const Mat<Scalar>& weight, const Cache& cache, const Mat<Scalar>& grad_out,
                                 Mat<Scalar>* grad_weight, bool want_input) {
    Tensor<Scalar> grad_in;
    if (cache.direct) {
      if (grad_weight) {
        direct::weight_grad(grad_out, cache.buffer, cache.c_in, cache.batch, cache.height, cache.width,
                            *grad_weight);
      }
      if (want_input) {
        Tensor<Scalar> g;
        g.batch = cache.batch;
        g.height = cache.height;
        g.width = cache.width;
        g.data = grad_out;
        Mat<Scalar> pad;
        direct::pad_input(g, pad);
        grad_in = Tensor<Scalar>(cache.c_in, cache.batch, cache.height, cache.width);
        direct::forward(pad, direct::adjoint_weights(weight), cache.batch, cache.height, cache.width,
                        grad_in.data);
      }
      return grad_in;
    }
    if (grad_weight) grad_weight->noalias() += grad_out * cache.buffer.transpose();
    if (want_input) {
      grad_in = Tensor<Scalar>(cache.c_in, cache.batch, cache.height, cache.width);
      Mat<Scalar> grad_col = weight.transpose() * grad_out;
      col2im3x3(grad_col, grad_in);
    }
    return grad_in;
  }

 private:
  static void fill(Cache& cache, const Tensor<Scalar>& in, bool direct) {
    cache.direct = direct;
    cache.c_in = in.channels();
    cache.batch = in.batch;
    cache.height = in.height;
    cache.width = in.width;
  }
};

/// 1x1 convolution (a per-pixel linear map across channels).
template <typename Scalar>
struct Conv1x1 {
  struct Cache {
    Mat<Scalar> input;
  };

  static Tensor<Scalar> forward(const Mat<Scalar>& weight, const Mat<Scalar>& bias, const Tensor<Scalar>& in,
                                Cache* cache) {
    Tensor<Scalar> out;
    out.batch = in.batch;
    out.height = in.height;
    out.width = in.width;
    out.data.noalias() = weight * in.data;
    out.data.colwise() += bias.col(0);
    if (cache) cache->input = in.data;
    return out;
  }

  static Mat<Scalar> backward(const Mat<Scalar>& weight, const Cache& cache, const Mat<Scalar>& grad_out,
                              Mat<Scalar>* grad_weight, Mat<Scalar>* grad_bias, bool want_input) {
    if (grad_weight) grad_weight->noalias() += grad_out * cache.input.transpose();
    if (grad_bias) *grad_bias += grad_out.rowwise().sum();
    if (!want_input) return {};
    return weight.transpose() * grad_out;
  }
};

/// Per-sample, per-channel normalization with a learned affine.
/// gamma, beta: channels x 1.
template <typename Scalar>
struct InstanceNorm {
  static constexpr Scalar kEps = Scalar(1e-5);

  struct Cache {
    Mat<Scalar> normalized;  // x_hat
    Mat<Scalar> inv_std;     // channels x batch
  };

  static Tensor<Scalar> forward(const Mat<Scalar>& gamma, const Mat<Scalar>& beta, const Tensor<Scalar>& in,
                                Cache* cache) {
    const Eigen::Index plane = in.plane();
    const int channels = in.channels();
    Tensor<Scalar> out = in;
    Mat<Scalar> inv_std(channels, in.batch);
    for (int c = 0; c < channels; ++c) {
      for (int b = 0; b < in.batch; ++b) {
        auto seg = out.data.row(c).segment(b * plane, plane);
        const Scalar mean = seg.mean();
        seg.array() -= mean;
        const Scalar var = seg.squaredNorm() / Scalar(plane);
        const Scalar is = Scalar(1) / std::sqrt(var + kEps);
        seg *= is;
        inv_std(c, b) = is;
      }
    }
    if (cache) {
      cache->normalized = out.data;
      cache->inv_std = std::move(inv_std);
    }
    for (int c = 0; c < channels; ++c) {
      out.data.row(c).array() = out.data.row(c).array() * gamma(c, 0) + beta(c, 0);
    }
    return out;
  }

  static Mat<Scalar> backward(const Mat<Scalar>& gamma, const Cache& cache, const Mat<Scalar>& grad_out, int batch,
                              Mat<Scalar>* grad_gamma, Mat<Scalar>* grad_beta, bool want_input) {
    const int channels = static_cast<int>(grad_out.rows());
    const Eigen::Index plane = grad_out.cols() / batch;
    if (grad_gamma) *grad_gamma += (grad_out.cwiseProduct(cache.normalized)).rowwise().sum();
    if (grad_beta) *grad_beta += grad_out.rowwise().sum();
    if (!want_input) return {};
    Mat<Scalar> grad_in(grad_out.rows(), grad_out.cols());
    const Scalar n = Scalar(plane);
    for (int c = 0; c < channels; ++c) {
      for (int b = 0; b < batch; ++b) {
        const auto dy = grad_out.row(c).segment(b * plane, plane).array();
        const auto xhat = cache.normalized.row(c).segment(b * plane, plane).array();
        const Scalar sum_d = dy.sum() * gamma(c, 0);
        const Scalar sum_dx = (dy * xhat).sum() * gamma(c, 0);
        grad_in.row(c).segment(b * plane, plane).array() =
            (cache.inv_std(c, b) / n) * (n * gamma(c, 0) * dy - sum_d - xhat * sum_dx);
      }
    }
    return grad_in;
  }
};

template <typename Scalar>
struct LeakyRelu {
  static constexpr Scalar kSlope = Scalar(0.2);

  static void forward_inplace(Tensor<Scalar>& t) {
    t.data.array() = t.data.array().max(t.data.array() * kSlope);
  }

  /// `output` is the activated tensor; its sign equals the pre-activation sign.
  static void backward_inplace(const Mat<Scalar>& output, Mat<Scalar>& grad) {
    grad.array() *= (output.array() > Scalar(0)).template cast<Scalar>() * (Scalar(1) - kSlope) + kSlope;
  }
};

/// 2x2 mean pooling, stride 2.
template <typename Scalar>
Tensor<Scalar> avg_pool2(const Tensor<Scalar>& in) {
  const int h = in.height / 2;
  const int w = in.width / 2;
  Tensor<Scalar> out(in.channels(), in.batch, h, w);
  const Eigen::Index in_plane = in.plane();
  const Eigen::Index out_plane = out.plane();
  for (int c = 0; c < in.channels(); ++c) {
    for (int b = 0; b < in.batch; ++b) {
      const Scalar* src = in.data.row(c).data() + b * in_plane;
      Scalar* dst = out.data.row(c).data() + b * out_plane;
      for (int y = 0; y < h; ++y) {
        const Scalar* r0 = src + Eigen::Index(2 * y) * in.width;
        const Scalar* r1 = r0 + in.width;
        for (int x = 0; x < w; ++x) {
          dst[Eigen::Index(y) * w + x] = Scalar(0.25) * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> avg_pool2_backward(const Tensor<Scalar>& grad_out) {
  Tensor<Scalar> grad_in(grad_out.channels(), grad_out.batch, grad_out.height * 2, grad_out.width * 2);
  const Eigen::Index in_plane = grad_in.plane();
  const Eigen::Index out_plane = grad_out.plane();
  const int w_in = grad_in.width;
  for (int c = 0; c < grad_out.channels(); ++c) {
    for (int b = 0; b < grad_out.batch; ++b) {
      const Scalar* src = grad_out.data.row(c).data() + b * out_plane;
      Scalar* dst = grad_in.data.row(c).data() + b * in_plane;
      for (int y = 0; y < grad_out.height; ++y) {
        Scalar* r0 = dst + Eigen::Index(2 * y) * w_in;
        Scalar* r1 = r0 + w_in;
        for (int x = 0; x < grad_out.width; ++x) {
          const Scalar g = Scalar(0.25) * src[Eigen::Index(y) * grad_out.width + x];
          r0[2 * x] = g;
          r0[2 * x + 1] = g;
          r1[2 * x] = g;
          r1[2 * x + 1] = g;
        }
      }
    }
  }
  return grad_in;
}

/// Nearest-neighbour 2x upsampling.
template <typename Scalar>
Tensor<Scalar> upsample2(const Tensor<Scalar>& in) {
  Tensor<Scalar> out(in.channels(), in.batch, in.height * 2, in.width * 2);
  const Eigen::Index in_plane = in.plane();
  const Eigen::Index out_plane = out.plane();
  const int w_out = out.width;
  for (int c = 0; c < in.channels(); ++c) {
    for (int b = 0; b < in.batch; ++b) {
      const Scalar* src = in.data.row(c).data() + b * in_plane;
      Scalar* dst = out.data.row(c).data() + b * out_plane;
      for (int y = 0; y < in.height; ++y) {
        Scalar* r0 = dst + Eigen::Index(2 * y) * w_out;
        Scalar* r1 = r0 + w_out;
        for (int x = 0; x < in.width; ++x) {
          const Scalar v = src[Eigen::Index(y) * in.width + x];
          r0[2 * x] = v;
          r0[2 * x + 1] = v;
          r1[2 * x] = v;
          r1[2 * x + 1] = v;
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> upsample2_backward(const Tensor<Scalar>& grad_out) {
  Tensor<Scalar> pooled = avg_pool2(grad_out);
  pooled.data *= Scalar(4);
  return pooled;
}

}  // namespace smile::nn
