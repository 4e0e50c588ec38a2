#include <doctest.h>

#include "smile/nn/layers.hpp"

#include <random>

using namespace smile::nn;

namespace {

template <typename Scalar>
Tensor<Scalar> random_tensor(int c, int b, int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<Scalar> t(c, b, h, w);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = Scalar(u(rng));
  return t;
}

template <typename Scalar>
Mat<Scalar> random_mat(Eigen::Index r, Eigen::Index c, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat<Scalar> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar(u(rng));
  return m;
}

// Textbook zero-padded 3x3 cross-correlation in double.
template <typename Scalar>
Mat<double> naive_conv(const Mat<Scalar>& w, const Tensor<Scalar>& in) {
  const int c_out = int(w.rows());
  Mat<double> out = Mat<double>::Zero(c_out, in.data.cols());
  for (int co = 0; co < c_out; ++co)
    for (int ci = 0; ci < in.channels(); ++ci)
      for (int b = 0; b < in.batch; ++b)
        for (int y = 0; y < in.height; ++y)
          for (int x = 0; x < in.width; ++x) {
            double acc = 0;
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int yy = y + ky - 1, xx = x + kx - 1;
                if (yy < 0 || xx < 0 || yy >= in.height || xx >= in.width) continue;
                acc += double(w(co, ci * 9 + ky * 3 + kx)) *
                       double(in.data(ci, b * in.plane() + yy * in.width + xx));
              }
            out(co, b * in.plane() + y * in.width + x) += acc;
          }
  return out;
}

template <typename Scalar>
double dot(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  return (a.template cast<double>().array() * b.template cast<double>().array()).sum();
}

}  // namespace

TEST_CASE("conv3x3 direct and im2col paths match a naive oracle") {
  for (int width : {16, 6}) {
    for (int c_out : {1, 2, 5, 8}) {
      const auto in = random_tensor<float>(3, 2, 8, width, 11 + width);
      const auto w = random_mat<float>(c_out, 27, 17 + c_out);
      const Mat<double> ref = naive_conv(w, in);
      const auto a = Conv3x3<float>::forward(w, in, nullptr);
      const auto b = Conv3x3<float>::forward_im2col(w, in, nullptr);
      CHECK((a.data.cast<double>() - ref).cwiseAbs().maxCoeff() < 1e-5);
      CHECK((b.data.cast<double>() - ref).cwiseAbs().maxCoeff() < 1e-5);
    }
  }
}

TEST_CASE("conv3x3 backward is the adjoint of forward on both paths") {
  for (int width : {16, 6}) {
    const auto in = random_tensor<double>(3, 2, 8, width, 5);
    const auto w = random_mat<double>(4, 27, 6);
    const auto g = random_mat<double>(4, in.data.cols(), 7);
    typename Conv3x3<double>::Cache cache;
    const auto out = Conv3x3<double>::forward(w, in, &cache);
    Mat<double> gw = Mat<double>::Zero(4, 27);
    const auto gi = Conv3x3<double>::backward(w, cache, g, &gw, true);
    // <conv(x), g> is bilinear in (x, w): both gradients reproduce it.
    const double lhs = dot(out.data, g);
    CHECK(dot(gi.data, in.data) == doctest::Approx(lhs).epsilon(1e-10));
    CHECK(dot(gw, w) == doctest::Approx(lhs).epsilon(1e-10));
  }
}

TEST_CASE("conv1x1 and instance norm gradients match finite differences") {
  const auto in = random_tensor<double>(3, 2, 4, 4, 21);
  const auto w = random_mat<double>(2, 3, 22);
  const auto bias = random_mat<double>(2, 1, 23);
  const auto gamma = random_mat<double>(3, 1, 24);
  const auto beta = random_mat<double>(3, 1, 25);
  const auto r = random_mat<double>(2, in.data.cols(), 26);

  auto loss = [&](const Tensor<double>& x) {
    typename InstanceNorm<double>::Cache nc;
    const auto n = InstanceNorm<double>::forward(gamma, beta, x, &nc);
    const auto y = Conv1x1<double>::forward(w, bias, n, nullptr);
    return dot(y.data, r);
  };
  typename InstanceNorm<double>::Cache nc;
  typename Conv1x1<double>::Cache cc;
  const auto n = InstanceNorm<double>::forward(gamma, beta, in, &nc);
  Conv1x1<double>::forward(w, bias, n, &cc);
  Mat<double> gw = Mat<double>::Zero(2, 3), gb = Mat<double>::Zero(2, 1);
  const Mat<double> gn = Conv1x1<double>::backward(w, cc, r, &gw, &gb, true);
  Mat<double> gg = Mat<double>::Zero(3, 1), gbeta = Mat<double>::Zero(3, 1);
  const Mat<double> gx = InstanceNorm<double>::backward(gamma, nc, gn, in.batch, &gg, &gbeta, true);

  const double h = 1e-6;
  for (Eigen::Index i = 0; i < in.data.size(); i += 7) {
    auto p = in, m = in;
    p.data.data()[i] += h;
    m.data.data()[i] -= h;
    CHECK(gx.data()[i] == doctest::Approx((loss(p) - loss(m)) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("pooling and upsampling are mutually consistent") {
  const auto x = random_tensor<double>(2, 2, 8, 8, 31);
  const auto p = avg_pool2(x);
  CHECK(p.height == 4);
  CHECK(p.data(0, 0) == doctest::Approx((x.data(0, 0) + x.data(0, 1) + x.data(0, 8) + x.data(0, 9)) / 4));
  const auto g = random_tensor<double>(2, 2, 4, 4, 32);
  CHECK(dot(avg_pool2_backward(g).data, x.data) == doctest::Approx(dot(g.data, p.data)));
  const auto u = upsample2(g);
  CHECK(dot(upsample2_backward(x).data, g.data) == doctest::Approx(dot(u.data, x.data)));
}
