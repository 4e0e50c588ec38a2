#include <doctest.h>

#include "../common/msssim_pairs.hpp"
#include "smile/errors.hpp"
#include "smile/metrics.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

using namespace smile;
using namespace smile::metrics;

namespace {

nn::Mat<double> random_image(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  nn::Mat<double> m(n, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("standard weights are the renormalized prefix") {
  const auto w = SsimConfig::standard_weights(3);
  REQUIRE(w.size() == 3);
  const double s = 0.0448 + 0.2856 + 0.3001;
  CHECK(w[0] == doctest::Approx(0.0448 / s));
  CHECK(w[2] == doctest::Approx(0.3001 / s));
  CHECK(SsimConfig::for_size(64, 64).scales == 3);
  CHECK(SsimConfig::for_size(256, 256).scales == 5);
  SsimConfig too_many;
  too_many.scales = 5;
  too_many.scale_weights = SsimConfig::standard_weights(5);
  CHECK_THROWS_AS(too_many.validate(64, 64), std::invalid_argument);
}

TEST_CASE("ms_ssim of an image with itself is 1") {
  const auto a = random_image(64, 1);
  CHECK(ms_ssim(a, a, SsimConfig{}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant images reduce to the luminance term at the coarsest scale") {
  const double c1 = 0.3, c2 = 0.7;
  const nn::Mat<double> a = nn::Mat<double>::Constant(64, 64, c1);
  const nn::Mat<double> b = nn::Mat<double>::Constant(64, 64, c2);
  const double C1 = 0.01 * 0.01;
  const double l = (2 * c1 * c2 + C1) / (c1 * c1 + c2 * c2 + C1);
  const double w3 = SsimConfig::standard_weights(3)[2];
  CHECK(ms_ssim(a, b, SsimConfig{}) == doctest::Approx(std::pow(l, w3)).epsilon(1e-10));
  CHECK(ssim_map(a, b, SsimConfig{}).ssim == doctest::Approx(l).epsilon(1e-10));
}

TEST_CASE("anti-correlated structure clamps to zero") {
  const auto a = random_image(64, 2);
  const nn::Mat<double> b = (1.0 - a.array()).matrix();
  CHECK(ms_ssim(a, b, SsimConfig{}) == 0.0);
}

TEST_CASE("ms_ssim falls as noise grows") {
  const auto a = random_image(64, 3);
  std::mt19937 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  nn::Mat<double> noise(64, 64);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = n(rng);
  double last = 1.0;
  for (double sigma : {0.01, 0.05, 0.1, 0.2, 0.4}) {
    const double v = ms_ssim(a, (a + sigma * noise).eval(), SsimConfig{});
    CHECK(v < last);
    last = v;
  }
}

TEST_CASE("masked identity ignores changes inside the mask") {
  const data::Image img = random_image(64, 5).cast<float>();
  data::LesionMask m = data::LesionMask::Zero(64, 64);
  m.block(20, 20, 8, 8).setOnes();
  data::Image gen = img;
  gen.block(20, 20, 8, 8).setConstant(0.0f);
  CHECK(masked_identity(gen, img, m, SsimConfig{}) == doctest::Approx(1.0).epsilon(1e-12));
  gen(0, 0) += 0.5f;
  CHECK(masked_identity(gen, img, m, SsimConfig{}) < 1.0);
}

TEST_CASE("healthiness endpoints and the degenerate case") {
  const std::vector<double> real{10, 20, 30};
  CHECK(healthiness_from_areas({0, 0, 0}, real).ratio_of_means == 1.0);
  CHECK(healthiness_from_areas(real, real).ratio_of_means == 0.0);
  const auto h = healthiness_from_areas({5, 0, 30}, real);
  CHECK(h.ratio_of_means == doctest::Approx(1.0 - 35.0 / 60.0));
  CHECK(h.mean_of_ratios == doctest::Approx(1.0 - (0.5 + 0.0 + 1.0) / 3.0));
  CHECK(healthiness_from_areas({40, 40, 40}, real).ratio_of_means < 0.0);
  CHECK_THROWS_AS(healthiness_from_areas({1, 2}, {0, 0}), EvalSegmentorDegenerateError);
}

TEST_CASE("dice and lesion area") {
  data::LesionMask a = data::LesionMask::Zero(4, 4), b = data::LesionMask::Zero(4, 4);
  CHECK(dice(a, b) == 1.0);
  a(0, 0) = a(0, 1) = 1;
  b(0, 1) = b(1, 1) = b(2, 2) = 1;
  CHECK(dice(a, b) == doctest::Approx(2.0 / 5.0));
  CHECK(lesion_area(b) == 3);
  nn::Mat<float> p(2, 3);
  p << 0.4f, 0.6f, 0.5f, 0.6f, 0.4f, 0.5f;
  CHECK(lesion_area(p) == 1);
}

TEST_CASE("report JSON round-trip and headline recomputation") {
  MetricsReport r;
  r.per_sample = {{1, 10, 2, 0.97}, {2, 30, 0, 0.99}};
  r.n_samples = 2;
  r.n_normal = 1;
  r.normal_passthrough_mae = 0.0125;
  r.s_pred_checkpoint_id = "abc";
  r.generator_checkpoint_id = "def";
  r.recompute_headline();
  CHECK(r.healthiness == doctest::Approx(1.0 - 2.0 / 40.0));
  CHECK(r.identity == doctest::Approx(0.98));
  const auto back = report_from_json(report_to_json(r));
  CHECK(back.healthiness == r.healthiness);
  CHECK(back.identity == r.identity);
  CHECK(back.per_sample.size() == 2);
  CHECK(back.per_sample[1].ms_ssim == r.per_sample[1].ms_ssim);
  CHECK(back.s_pred_checkpoint_id == "abc");
  CHECK(report_to_json(back) == report_to_json(r));
}

TEST_CASE("ms_ssim matches the recorded TensorFlow reference") {
  std::ifstream in(std::string(SMILE_FIXTURE_DIR) + "/msssim_reference.tsv");
  REQUIRE(in);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "pair\tms_ssim");
  std::vector<double> ref;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    int k;
    double v;
    ls >> k >> v;
    ref.push_back(v);
  }
  const auto pairs = testing::msssim_pairs();
  REQUIRE(ref.size() == pairs.size());
  double worst = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double v = ms_ssim(pairs[k].first, pairs[k].second, SsimConfig{});
    worst = std::max(worst, std::abs(v - ref[k]));
  }
  MESSAGE("max |ms_ssim - reference| = " << worst);
  CHECK(worst < 1e-4);
}
