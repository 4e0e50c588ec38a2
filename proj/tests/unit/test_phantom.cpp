#include <doctest.h>

#include "smile/data/dataset_io.hpp"
#include "smile/data/phantom.hpp"
#include "smile/errors.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace smile;
using namespace smile::data;

namespace {

PhantomConfig small_config(int n = 60, std::uint64_t seed = 5) {
  PhantomConfig c;
  c.n_samples = n;
  c.seed = seed;
  return c;
}

std::set<std::uint64_t> ids_of(const std::vector<Sample>& v) {
  std::set<std::uint64_t> s;
  for (const auto& x : v) s.insert(x.id);
  return s;
}

// Flood fill over 4-neighbours.
int components(const LesionMask& m) {
  LesionMask seen = LesionMask::Zero(m.rows(), m.cols());
  int count = 0;
  for (int y = 0; y < m.rows(); ++y) {
    for (int x = 0; x < m.cols(); ++x) {
      if (!m(y, x) || seen(y, x)) continue;
      ++count;
      std::vector<std::pair<int, int>> stack{{y, x}};
      seen(y, x) = 1;
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        const int dy[] = {1, -1, 0, 0}, dx[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k], nx = cx + dx[k];
          if (ny < 0 || nx < 0 || ny >= m.rows() || nx >= m.cols()) continue;
          if (m(ny, nx) && !seen(ny, nx)) {
            seen(ny, nx) = 1;
            stack.emplace_back(ny, nx);
          }
        }
      }
    }
  }
  return count;
}

}  // namespace

TEST_CASE("generate_phantom is deterministic and honours the abnormal fraction") {
  const auto a = generate_phantom(small_config());
  const auto b = generate_phantom(small_config());
  CHECK(a == b);
  const auto c = generate_phantom(small_config(60, 6));
  CHECK_FALSE(a == c);
  const auto n_abnormal = std::count_if(a.begin(), a.end(), [](const Sample& s) { return s.is_abnormal; });
  CHECK(n_abnormal == 42);  // round(0.7 * 60)
}

TEST_CASE("phantom invariants: range, masks, lesion count, brightness") {
  const auto cfg = small_config(80);
  const auto samples = generate_phantom(cfg);
  for (const auto& s : samples) {
    REQUIRE(s.mask);
    CHECK(s.image.rows() == 64);
    CHECK(s.image.minCoeff() >= 0.0f);
    CHECK(s.image.maxCoeff() <= 1.0f);
    const auto area = mask_area(*s.mask);
    if (!s.is_abnormal) {
      CHECK(area == 0);
      continue;
    }
    CHECK(area > 0);
    const int k = components(*s.mask);
    CHECK(k >= cfg.lesion_count_range.first);
    CHECK(k <= cfg.lesion_count_range.second);
    // Lesion pixels are on average brighter than the rest of the brain.
    double in = 0, out = 0;
    int n_out = 0;
    for (Eigen::Index i = 0; i < s.image.size(); ++i) {
      if (s.mask->data()[i]) {
        in += s.image.data()[i];
      } else if (s.image.data()[i] > 0.05f) {
        out += s.image.data()[i];
        ++n_out;
      }
    }
    CHECK(in / double(area) > out / n_out + 0.1);
  }
}

TEST_CASE("abnormal_fraction 0 gives only normal samples") {
  auto cfg = small_config(20);
  cfg.abnormal_fraction = 0.0;
  for (const auto& s : generate_phantom(cfg)) {
    CHECK_FALSE(s.is_abnormal);
    CHECK(mask_area(*s.mask) == 0);
  }
}

TEST_CASE("invalid and infeasible phantom configs") {
  auto cfg = small_config(10);
  cfg.lesion_radius_range = {3.0, 40.0};
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lesion_radius_range") != std::string::npos);
  }
  cfg = small_config(10);
  cfg.image_size = 48;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  // Radius at the validation limit with many lesions cannot be placed.
  cfg = small_config(10);
  cfg.image_size = 32;
  cfg.abnormal_fraction = 1.0;
  cfg.lesion_radius_range = {8.0, 8.0};
  cfg.lesion_count_range = {3, 3};
  CHECK_THROWS_AS(generate_phantom(cfg), InfeasibleConfigError);
}

TEST_CASE("nearest-rank percentile matches a sorting oracle") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 2.0f);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial;
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    const double p = 1.0 + 99.0 * (trial % 10) / 9.0;
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    int rank = static_cast<int>(std::ceil(p / 100.0 * n));
    rank = std::max(1, std::min(n, rank));
    CHECK(nearest_rank_percentile(v, p) == sorted[rank - 1]);
  }
}

TEST_CASE("percentile_clip edge cases") {
  Image zeros = Image::Zero(4, 4);
  CHECK(percentile_clip(zeros) == zeros);
  Image c = Image::Constant(4, 4, 0.3f);
  CHECK(percentile_clip(c) == Image::Ones(4, 4));
  Image g(1, 4);
  g << -1.0f, 0.5f, 1.0f, 4.0f;
  const Image out = percentile_clip(g, 75.0);  // rank 3 -> V = 1
  CHECK(out(0, 0) == 0.0f);
  CHECK(out(0, 1) == 0.5f);
  CHECK(out(0, 3) == 1.0f);
}

TEST_CASE("split sizes, disjointness and seed stability") {
  const auto samples = generate_phantom(small_config(120));
  const auto s = split_dataset(samples, {}, 9);
  CHECK(s.train.size() == 100);
  CHECK(s.validation.size() == 10);
  CHECK(s.test.size() == 10);
  const auto a = ids_of(s.train), b = ids_of(s.validation), c = ids_of(s.test);
  CHECK(a.size() + b.size() + c.size() == 120);
  std::set<std::uint64_t> all = a;
  all.insert(b.begin(), b.end());
  all.insert(c.begin(), c.end());
  CHECK(all.size() == 120);
  CHECK(split_dataset(samples, {}, 9) == s);
  CHECK_THROWS_AS(split_dataset(std::vector<Sample>(2), {}, 1), InsufficientDataError);
}

TEST_CASE("strip_labels removes the requested share of training masks only") {
  const auto split = split_dataset(generate_phantom(small_config(120)), {}, 9);
  for (double f : {1.0, 0.75, 0.5, 0.3}) {
    const auto s = strip_labels(split, f, 4);
    const auto labeled = std::count_if(s.train.begin(), s.train.end(), [](const Sample& x) { return x.labeled(); });
    CHECK(labeled == 100 - std::llround((1.0 - f) * 100));
    CHECK(s.labeled_fraction == f);
    for (const auto& x : s.validation) CHECK(x.labeled());
    for (const auto& x : s.test) CHECK(x.labeled());
    for (std::size_t i = 0; i < s.train.size(); ++i) {
      CHECK(s.train[i].image == split.train[i].image);
      CHECK(s.train[i].is_abnormal == split.train[i].is_abnormal);
    }
  }
  CHECK_THROWS_AS(strip_labels(split, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(strip_labels(split, 1.5, 1), ConfigError);
}

TEST_CASE("dataset round-trip is exact and corruption names the record") {
  const auto dir = std::filesystem::temp_directory_path() / "smile_dataset_test";
  std::filesystem::remove_all(dir);
  const auto split = strip_labels(split_dataset(generate_phantom(small_config(36)), {}, 2), 0.5, 3);
  save_dataset(split, dir);
  const auto back = load_dataset(dir);
  CHECK(back == split);

  // Truncate inside record 5 of the training file.
  const auto file = dir / "train.smds";
  const auto record_bytes = 8 + 1 + 64 * 64 * 4 + 64 * 64;
  const auto size = std::filesystem::file_size(file);
  const auto header = size - split.train.size() * record_bytes;
  std::filesystem::resize_file(file, header + 5 * record_bytes + 100);
  try {
    load_samples(file);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.record().find("record 5") != std::string::npos);
  }

  // Bad magic.
  {
    std::ofstream out(dir / "bad.smds", std::ios::binary);
    out << "NOTADS\n";
  }
  CHECK_THROWS_AS(load_samples(dir / "bad.smds"), ParseError);
  std::filesystem::remove_all(dir);
}
