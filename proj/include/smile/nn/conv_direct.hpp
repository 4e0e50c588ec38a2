#pragma once

#include "smile/nn/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace smile::nn::direct {

// Register-blocked 3x3 convolution kernels. A block of CB output channels is
// accumulated over one row segment of `lanes` pixels held in a GCC vector
// register, which keeps the low-channel, full-resolution layers compute bound
// instead of streaming a 9x im2col buffer through memory.

template <typename Scalar, int Bytes>
struct Vec {
  typedef Scalar type __attribute__((vector_size(Bytes)));
  static constexpr int lanes = Bytes / int(sizeof(Scalar));
};

/// Copies `in` into a zero-bordered buffer: channels x (batch*(h+2)*(w+2)).
template <typename Scalar>
void pad_input(const Tensor<Scalar>& in, Mat<Scalar>& pad) {
  const int pw = in.width + 2;
  const Eigen::Index pp = Eigen::Index(in.height + 2) * pw;
  pad.resize(in.channels(), pp * in.batch);
  for (int c = 0; c < in.channels(); ++c) {
    Scalar* dst_row = pad.row(c).data();
    const Scalar* src_row = in.data.row(c).data();
    for (int b = 0; b < in.batch; ++b) {
      Scalar* d = dst_row + b * pp;
      std::fill(d, d + pw, Scalar(0));
      std::fill(d + pp - pw, d + pp, Scalar(0));
      for (int y = 0; y < in.height; ++y) {
        Scalar* r = d + Eigen::Index(y + 1) * pw;
        r[0] = Scalar(0);
        r[pw - 1] = Scalar(0);
        std::memcpy(r + 1, src_row + b * in.plane() + Eigen::Index(y) * in.width, sizeof(Scalar) * in.width);
      }
    }
  }
}

/// Weight layout [co / CB][ci][tap][co % CB]; c_out must be a multiple of CB.
template <typename Scalar, int CB>
std::vector<Scalar> pack_weights(const Mat<Scalar>& weight) {
  const auto c_out = weight.rows();
  const auto c_in = weight.cols() / 9;
  std::vector<Scalar> packed(static_cast<std::size_t>(weight.size()));
  for (Eigen::Index co = 0; co < c_out; ++co) {
    for (Eigen::Index ci = 0; ci < c_in; ++ci) {
      for (int t = 0; t < 9; ++t) {
        packed[static_cast<std::size_t>(((co / CB) * c_in * 9 + ci * 9 + t) * CB + co % CB)] = weight(co, ci * 9 + t);
      }
    }
  }
  return packed;
}

/// Weights of the adjoint convolution: swaps in/out channels and flips taps.
template <typename Scalar>
Mat<Scalar> adjoint_weights(const Mat<Scalar>& weight) {
  const auto c_out = weight.rows();
  const auto c_in = weight.cols() / 9;
  Mat<Scalar> adj(c_in, c_out * 9);
  for (Eigen::Index co = 0; co < c_out; ++co) {
    for (Eigen::Index ci = 0; ci < c_in; ++ci) {
      for (int t = 0; t < 9; ++t) adj(ci, co * 9 + (8 - t)) = weight(co, ci * 9 + t);
    }
  }
  return adj;
}

/// NT adjacent row segments are processed together so that small channel
/// blocks still expose enough independent accumulator chains.
template <typename Scalar, int CB, int Bytes, int NT>
void forward_kernel(const Mat<Scalar>& pad, int c_in, int batch, int h, int w, const Scalar* packed, int c_out,
                    Mat<Scalar>& out) {
  using V = typename Vec<Scalar, Bytes>::type;
  constexpr int L = Vec<Scalar, Bytes>::lanes;
  const int pw = w + 2;
  const Eigen::Index pp = Eigen::Index(h + 2) * pw;
  const Eigen::Index plane = Eigen::Index(h) * w;
  for (int co0 = 0; co0 < c_out; co0 += CB) {
    const Scalar* wb = packed + Eigen::Index(co0) * c_in * 9;
    for (int b = 0; b < batch; ++b) {
      for (int y = 0; y < h; ++y) {
        for (int x0 = 0; x0 < w; x0 += L * NT) {
          V acc[CB][NT];
          for (int co = 0; co < CB; ++co) {
            for (int t = 0; t < NT; ++t) acc[co][t] = V{};
          }
          for (int ci = 0; ci < c_in; ++ci) {
            const Scalar* base = pad.row(ci).data() + b * pp + Eigen::Index(y) * pw + x0;
            const Scalar* wc = wb + Eigen::Index(ci) * 9 * CB;
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                V v[NT];
                for (int t = 0; t < NT; ++t) std::memcpy(&v[t], base + ky * pw + kx + t * L, sizeof(V));
                const Scalar* wt = wc + (ky * 3 + kx) * CB;
                for (int co = 0; co < CB; ++co) {
                  for (int t = 0; t < NT; ++t) acc[co][t] += wt[co] * v[t];
                }
              }
            }
          }
          for (int co = 0; co < CB; ++co) {
            Scalar* o = out.row(co0 + co).data() + b * plane + Eigen::Index(y) * w + x0;
            for (int t = 0; t < NT; ++t) std::memcpy(o + t * L, &acc[co][t], sizeof(V));
          }
        }
      }
    }
  }
}

/// grad_weight(co, ci*9 + tap) += sum_pixels grad(co, p) * pad(ci, p + tap).
/// Pixels are walked in row chunks small enough for the gradient rows of one
/// channel block to stay in L1 while every (ci, ky) pair is visited.
template <typename Scalar, int CB, int Bytes>
void weight_grad_kernel(const Mat<Scalar>& grad, const Mat<Scalar>& pad, int c_in, int batch, int h, int w,
                        Mat<Scalar>& grad_weight) {
  using V = typename Vec<Scalar, Bytes>::type;
  constexpr int L = Vec<Scalar, Bytes>::lanes;
  const int c_out = static_cast<int>(grad.rows());
  const int pw = w + 2;
  const Eigen::Index pp = Eigen::Index(h + 2) * pw;
  const int rows = batch * h;
  const int chunk_rows = std::clamp(int(16384 / (Eigen::Index(w) * CB * Eigen::Index(sizeof(Scalar)))), 1, rows);
  std::vector<V> sums(static_cast<std::size_t>(c_in) * 9 * CB);
  for (int co0 = 0; co0 < c_out; co0 += CB) {
    std::fill(sums.begin(), sums.end(), V{});
    // Flat row index r = b*h + y, so small images share one chunk.
    for (int r0 = 0; r0 < rows; r0 += chunk_rows) {
      const int r1 = std::min(rows, r0 + chunk_rows);
      for (int ci = 0; ci < c_in; ++ci) {
        for (int ky = 0; ky < 3; ++ky) {
          V acc[CB][3];
          for (int co = 0; co < CB; ++co) acc[co][0] = acc[co][1] = acc[co][2] = V{};
          for (int r = r0; r < r1; ++r) {
            const int b = r / h;
            const int y = r - b * h;
            const Scalar* prow = pad.row(ci).data() + b * pp + Eigen::Index(y + ky) * pw;
            const Eigen::Index off = Eigen::Index(r) * w;
            for (int x0 = 0; x0 < w; x0 += L) {
              V v0, v1, v2;
              std::memcpy(&v0, prow + x0, sizeof(V));
              std::memcpy(&v1, prow + x0 + 1, sizeof(V));
              std::memcpy(&v2, prow + x0 + 2, sizeof(V));
              for (int co = 0; co < CB; ++co) {
                V g;
                std::memcpy(&g, grad.row(co0 + co).data() + off + x0, sizeof(V));
                acc[co][0] += g * v0;
                acc[co][1] += g * v1;
                acc[co][2] += g * v2;
              }
            }
          }
          V* dst = sums.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3) * CB;
          for (int kx = 0; kx < 3; ++kx) {
            for (int co = 0; co < CB; ++co) dst[kx * CB + co] += acc[co][kx];
          }
        }
      }
    }
    for (int ci = 0; ci < c_in; ++ci) {
      for (int t = 0; t < 9; ++t) {
        for (int co = 0; co < CB; ++co) {
          const V& v = sums[(static_cast<std::size_t>(ci) * 9 + t) * CB + co];
          Scalar s = 0;
          for (int l = 0; l < L; ++l) s += v[l];
          grad_weight(co0 + co, Eigen::Index(ci) * 9 + t) += s;
        }
      }
    }
  }
}

/// Widest vector (in bytes) whose lane count divides `width`; 0 if none.
template <typename Scalar>
constexpr int vector_bytes_for(int width) {
  for (int bytes : {64, 32, 16}) {
    const int lanes = bytes / int(sizeof(Scalar));
    if (lanes >= 2 && width % lanes == 0) return bytes;
  }
  return 0;
}

constexpr int channel_block_for(int c_out) {
  if (c_out % 8 == 0) return 8;
  if (c_out % 4 == 0) return 4;
  if (c_out % 2 == 0) return 2;
  return 1;
}

template <typename Scalar, int CB>
void forward_cb(const Mat<Scalar>& pad, const Mat<Scalar>& weight, int batch, int h, int w, Mat<Scalar>& out) {
  const auto packed = pack_weights<Scalar, CB>(weight);
  const int c_in = static_cast<int>(weight.cols() / 9);
  const int c_out = static_cast<int>(weight.rows());
  switch (vector_bytes_for<Scalar>(w)) {
    case 64: forward_kernel<Scalar, CB, 64, 1>(pad, c_in, batch, h, w, packed.data(), c_out, out); break;
    case 32: forward_kernel<Scalar, CB, 32, 1>(pad, c_in, batch, h, w, packed.data(), c_out, out); break;
    case 16: forward_kernel<Scalar, CB, 16, 1>(pad, c_in, batch, h, w, packed.data(), c_out, out); break;
    default: throw ShapeError("direct conv: unsupported width");
  }
}

/// out = conv3x3(pad, weight); out must be sized c_out x (batch*h*w).
template <typename Scalar>
void forward(const Mat<Scalar>& pad, const Mat<Scalar>& weight, int batch, int h, int w, Mat<Scalar>& out) {
  switch (channel_block_for(static_cast<int>(weight.rows()))) {
    case 8: forward_cb<Scalar, 8>(pad, weight, batch, h, w, out); break;
    case 4: forward_cb<Scalar, 4>(pad, weight, batch, h, w, out); break;
    case 2: forward_cb<Scalar, 2>(pad, weight, batch, h, w, out); break;
    default: forward_cb<Scalar, 1>(pad, weight, batch, h, w, out); break;
  }
}

template <typename Scalar, int CB>
void weight_grad_cb(const Mat<Scalar>& grad, const Mat<Scalar>& pad, int c_in, int batch, int h, int w,
                    Mat<Scalar>& grad_weight) {
  switch (vector_bytes_for<Scalar>(w)) {
    case 64: weight_grad_kernel<Scalar, CB, 64>(grad, pad, c_in, batch, h, w, grad_weight); break;
    case 32: weight_grad_kernel<Scalar, CB, 32>(grad, pad, c_in, batch, h, w, grad_weight); break;
    case 16: weight_grad_kernel<Scalar, CB, 16>(grad, pad, c_in, batch, h, w, grad_weight); break;
    default: throw ShapeError("direct conv: unsupported width");
  }
}

/// im2col rows (ci*9 + tap) gathered straight from a padded buffer.
template <typename Scalar>
void columns_from_pad(const Mat<Scalar>& pad, int c_in, int batch, int h, int w, Mat<Scalar>& col) {
  const int pw = w + 2;
  const Eigen::Index pp = Eigen::Index(h + 2) * pw;
  col.resize(Eigen::Index(c_in) * 9, Eigen::Index(batch) * h * w);
  for (int c = 0; c < c_in; ++c) {
    for (int t = 0; t < 9; ++t) {
      Scalar* d = col.row(Eigen::Index(c) * 9 + t).data();
      for (int b = 0; b < batch; ++b) {
        for (int y = 0; y < h; ++y) {
          std::memcpy(d, pad.row(c).data() + b * pp + Eigen::Index(y + t / 3) * pw + t % 3, sizeof(Scalar) * w);
          d += w;
        }
      }
    }
  }
}

/// Accumulates the weight gradient into grad_weight. Narrow images go
/// through a GEMM, which beats the register kernel once rows are short.
template <typename Scalar>
void weight_grad(const Mat<Scalar>& grad, const Mat<Scalar>& pad, int c_in, int batch, int h, int w,
                 Mat<Scalar>& grad_weight) {
  if (w <= 16) {
    Mat<Scalar> col;
    columns_from_pad(pad, c_in, batch, h, w, col);
    grad_weight.noalias() += grad * col.transpose();
    return;
  }
  switch (channel_block_for(static_cast<int>(grad.rows()))) {
    case 8: weight_grad_cb<Scalar, 8>(grad, pad, c_in, batch, h, w, grad_weight); break;
    case 4: weight_grad_cb<Scalar, 4>(grad, pad, c_in, batch, h, w, grad_weight); break;
    case 2: weight_grad_cb<Scalar, 2>(grad, pad, c_in, batch, h, w, grad_weight); break;
    default: weight_grad_cb<Scalar, 1>(grad, pad, c_in, batch, h, w, grad_weight); break;
  }
}

}  // namespace smile::nn::direct
