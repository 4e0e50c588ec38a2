#include <doctest.h>

#include "smile/model.hpp"
#include "smile/nn/unet.hpp"

#include <filesystem>
#include <random>

using namespace smile;
using namespace smile::nn;

namespace {

Tensor<double> random_input(int c, int b, int h, int w, unsigned seed, double lo = 0.1, double hi = 0.9) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(c, b, h, w);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = u(rng);
  return t;
}

// Adds noise to every tensor so no gradient is trivially zero.
void jitter(ParameterSet<double>& p, unsigned seed, double scale) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& t : p.tensors)
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += n(rng);
}

double objective(const UNet<double>& net, const ParameterSet<double>& p, const Tensor<double>& x,
                 const Mat<double>& r) {
  return (net.forward(p, x).data.array() * r.array()).sum();
}

void gradient_check(const NetworkSpec& spec, unsigned seed) {
  UNet<double> net(spec);
  auto params = net.init(seed);
  jitter(params, seed + 1, 0.05);
  const auto x = random_input(spec.in_channels, 2, 8, 8, seed + 2);
  typename UNet<double>::Tape tape;
  const auto y = net.forward(params, x, &tape);
  std::mt19937 rng(seed + 3);
  std::uniform_real_distribution<double> u(-1, 1);
  Mat<double> r(y.data.rows(), y.data.cols());
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = u(rng);

  auto grads = params.zeros_like();
  const auto gx = net.backward(params, tape, r, &grads, true);

  const double h = 1e-6;
  int checked = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& tensor = params.tensors[t];
    const Eigen::Index stride = std::max<Eigen::Index>(1, tensor.size() / 3);
    for (Eigen::Index i = 0; i < tensor.size(); i += stride) {
      const double keep = tensor.data()[i];
      tensor.data()[i] = keep + h;
      const double fp = objective(net, params, x, r);
      tensor.data()[i] = keep - h;
      const double fm = objective(net, params, x, r);
      tensor.data()[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      INFO(params.names[t] << "[" << i << "]");
      CHECK(grads.tensors[t].data()[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
      ++checked;
    }
  }
  CHECK(checked > 3 * int(params.size()) - 1);
  for (Eigen::Index i = 0; i < x.data.size(); i += 13) {
    auto xp = x, xm = x;
    xp.data.data()[i] += h;
    xm.data.data()[i] -= h;
    const double fd = (objective(net, params, xp, r) - objective(net, params, xm, r)) / (2 * h);
    CHECK(gx.data.data()[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
  }
}

}  // namespace

TEST_CASE("unet gradients match central differences in double precision") {
  gradient_check(segmentor_spec(2, 2), 1);
  // Two input channels and the clamped head; outputs stay inside (0,1) for
  // this input range, away from the clamp.
  gradient_check(reconstructor_spec(2, 2), 2);
}

TEST_CASE("image heads start as an exact pass-through; softmax starts at the prior") {
  const Network g(generator_spec(3, 4), 9);
  const auto x = random_input(1, 3, 16, 16, 4, 0.0, 1.0).cast<float>();
  CHECK(g.net.forward(g.params, x).data == x.data);

  const Network r(reconstructor_spec(3, 4), 9);
  auto x2 = random_input(2, 1, 16, 16, 5, 0.0, 1.0).cast<float>();
  CHECK(r.net.forward(r.params, x2).data == x2.data.topRows(1));

  const Network s(segmentor_spec(3, 4), 9);
  const auto p = s.net.forward(s.params, x).data;
  CHECK(((p.row(0) + p.row(1)).array() - 1.0f).abs().maxCoeff() < 1e-5f);
  CHECK(p.row(1).mean() == doctest::Approx(0.02).epsilon(0.5));
}

TEST_CASE("init is deterministic per seed") {
  UNet<float> net(segmentor_spec(3, 4));
  CHECK(net.init(3) == net.init(3));
  CHECK_FALSE(net.init(3) == net.init(4));
  CHECK(parameter_hash(net.init(3)) == parameter_hash(net.init(3)));
}

TEST_CASE("spec validation and input shape checks") {
  NetworkSpec bad = segmentor_spec(3, 4);
  bad.depth = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  UNet<float> net(segmentor_spec(3, 4));
  CHECK_THROWS_AS(net.check_input(Tensor<float>(1, 1, 12, 12)), ShapeError);
  CHECK_THROWS_AS(net.check_input(Tensor<float>(2, 1, 16, 16)), ShapeError);
  CHECK(spec_from_string(spec_to_string(reconstructor_spec(3, 4))) == reconstructor_spec(3, 4));
}

TEST_CASE("network save/load round-trips parameters and spec") {
  const auto path = std::filesystem::temp_directory_path() / "smile_unet_roundtrip.smt";
  const Network s(segmentor_spec(2, 4), 42);
  save_network(s, path);
  const Network back = load_network(path);
  CHECK(back.spec() == s.spec());
  CHECK(back.params == s.params);
  CHECK(back.id() == s.id());
  std::filesystem::remove(path);
}
