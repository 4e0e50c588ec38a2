#include "smile/data/phantom.hpp"

#include "smile/errors.hpp"
#include "smile/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

namespace smile::data {

namespace {

constexpr int kPlacementRetries = 200;
constexpr int kLayoutRestarts = 20;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

/// Separable Gaussian blur with clamp-to-edge borders.
nn::Mat<double> gaussian_blur(const nn::Mat<double>& in, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= sum;
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  nn::Mat<double> tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * in(y, std::clamp(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(std::clamp(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  }
  return out;
}

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t;

  /// Normalized radius: <= 1 inside.
  [[nodiscard]] double rho(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = (dx * cos_t + dy * sin_t) / a;
    const double v = (-dx * sin_t + dy * cos_t) / b;
    return std::sqrt(u * u + v * v);
  }
};

struct Blob {
  double cx, cy, r;
};

/// Raw (unclipped) phantom intensities; fills `mask` for abnormal samples.
nn::Mat<double> render(const PhantomConfig& cfg, bool abnormal, Rng& rng, LesionMask& mask) {
  const int n = cfg.image_size;
  const double s = n;
  Ellipse brain{};
  brain.cx = 0.5 * (s - 1) + uniform(rng, -2.0, 2.0);
  brain.cy = 0.5 * (s - 1) + uniform(rng, -2.0, 2.0);
  brain.a = s * uniform(rng, 0.34, 0.42);
  brain.b = s * uniform(rng, 0.28, 0.38);
  const double theta = uniform(rng, -0.3, 0.3);
  brain.cos_t = std::cos(theta);
  brain.sin_t = std::sin(theta);

  nn::Mat<double> noise(n, n);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal01(rng);
  nn::Mat<double> texture = gaussian_blur(noise, cfg.texture_smoothness);
  const double mean = texture.mean();
  const double sd = std::sqrt((texture.array() - mean).square().mean());
  texture = (texture.array() - mean) / std::max(sd, 1e-12);

  nn::Mat<double> raw = nn::Mat<double>::Zero(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double rho = brain.rho(x, y);
      if (rho > 1.0) continue;
      // Soft rim over the outer 10% of the radius.
      const double edge = std::clamp((1.0 - rho) / 0.1, 0.0, 1.0);
      raw(y, x) = edge * edge * (3 - 2 * edge) * (0.5 + 0.06 * texture(y, x));
    }
  }

  mask = LesionMask::Zero(n, n);
  if (!abnormal) return raw;

  const int count = cfg.lesion_count_range.first +
                    static_cast<int>(uniform_index(
                        rng, std::uint64_t(cfg.lesion_count_range.second - cfg.lesion_count_range.first + 1)));
  // Centres are drawn uniformly inside the ellipse at rho <= 0.9; a layout
  // whose later lesions do not fit is discarded and redrawn.
  auto draw_centre = [&] {
    const double t = uniform(rng, 0.0, 6.283185307179586);
    const double rr = 0.9 * std::sqrt(uniform01(rng));
    const double u = brain.a * rr * std::cos(t);
    const double v = brain.b * rr * std::sin(t);
    return std::pair{brain.cx + u * brain.cos_t - v * brain.sin_t, brain.cy + u * brain.sin_t + v * brain.cos_t};
  };
  std::vector<double> radii(static_cast<std::size_t>(count));
  for (auto& r : radii) r = uniform(rng, cfg.lesion_radius_range.first, cfg.lesion_radius_range.second);
  std::vector<Blob> blobs;
  double failed_radius = 0.0;
  for (int layout = 0; layout < kLayoutRestarts && blobs.size() < radii.size(); ++layout) {
    blobs.clear();
    for (const double r : radii) {
      bool placed = false;
      for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
        const auto [cx, cy] = draw_centre();
        const Blob cand{cx, cy, r};
        bool ok = true;
        for (const auto& o : blobs) {
          // A clear gap keeps blobs apart as separate connected components.
          if (std::hypot(cand.cx - o.cx, cand.cy - o.cy) < cand.r + o.r + 2.0) ok = false;
        }
        const int y0 = std::max(0, static_cast<int>(std::floor(cand.cy - r)));
        const int y1 = std::min(n - 1, static_cast<int>(std::ceil(cand.cy + r)));
        const int x0 = std::max(0, static_cast<int>(std::floor(cand.cx - r)));
        const int x1 = std::min(n - 1, static_cast<int>(std::ceil(cand.cx + r)));
        for (int y = y0; y <= y1 && ok; ++y) {
          for (int x = x0; x <= x1 && ok; ++x) {
            if (std::hypot(x - cand.cx, y - cand.cy) <= r && brain.rho(x, y) > 0.9) ok = false;
          }
        }
        if (ok) {
          blobs.push_back(cand);
          placed = true;
        }
      }
      if (!placed) {
        failed_radius = r;
        break;
      }
    }
  }
  if (blobs.size() < radii.size()) {
    throw InfeasibleConfigError("generate_phantom: could not place a lesion of radius " +
                                std::to_string(failed_radius) + " inside the brain after " +
                                std::to_string(kLayoutRestarts) + " layouts of " + std::to_string(kPlacementRetries) +
                                " attempts; reduce lesion_radius_range or lesion_count_range");
  }

  for (const auto& blob : blobs) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double d = std::hypot(x - blob.cx, y - blob.cy);
        if (d > blob.r) continue;
        const double core = 0.6 * blob.r;
        const double t = (d - core) / (0.35 * blob.r);
        const double profile = d <= core ? 1.0 : std::exp(-0.5 * t * t);
        raw(y, x) += cfg.lesion_intensity_boost * profile;
        mask(y, x) = 1;
      }
    }
  }
  return raw;
}

}  // namespace

bool operator==(const Sample& a, const Sample& b) {
  if (a.id != b.id || a.is_abnormal != b.is_abnormal) return false;
  if (a.image.rows() != b.image.rows() || a.image.cols() != b.image.cols()) return false;
  if (std::memcmp(a.image.data(), b.image.data(), sizeof(float) * a.image.size()) != 0) return false;
  if (a.mask.has_value() != b.mask.has_value()) return false;
  if (!a.mask) return true;
  return a.mask->rows() == b.mask->rows() && a.mask->cols() == b.mask->cols() && *a.mask == *b.mask;
}

void PhantomConfig::validate() const {
  if (image_size < 32 || !is_power_of_two(image_size)) {
    throw ConfigError("image_size must be a power of two >= 32 (got " + std::to_string(image_size) + ")");
  }
  if (n_samples < 0) throw ConfigError("n_samples must be >= 0");
  if (!(abnormal_fraction >= 0.0 && abnormal_fraction <= 1.0)) {
    throw ConfigError("abnormal_fraction must lie in [0,1]");
  }
  if (lesion_count_range.first < 1 || lesion_count_range.second < lesion_count_range.first) {
    throw ConfigError("lesion_count_range must satisfy 1 <= min <= max");
  }
  if (!(lesion_radius_range.first > 0.0) || lesion_radius_range.second < lesion_radius_range.first) {
    throw ConfigError("lesion_radius_range must satisfy 0 < min <= max");
  }
  if (lesion_radius_range.second > image_size / 4.0) {
    throw ConfigError("lesion_radius_range max must be <= image_size/4 (" + std::to_string(image_size / 4.0) + ")");
  }
  if (!(lesion_intensity_boost > 0.0)) throw ConfigError("lesion_intensity_boost must be > 0");
  if (!(texture_smoothness > 0.0)) throw ConfigError("texture_smoothness must be > 0");
  if (!(clip_percentile > 0.0 && clip_percentile <= 100.0)) throw ConfigError("clip_percentile must lie in (0,100]");
  if (clip_group < 1) throw ConfigError("clip_group must be >= 1");
}

std::vector<Sample> generate_phantom(const PhantomConfig& config) {
  config.validate();
  const int n = config.n_samples;
  const auto n_abnormal = static_cast<int>(std::llround(config.abnormal_fraction * n));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng assign = make_stream(config.seed, "phantom/abnormal");
  shuffle(order.begin(), order.end(), assign);
  std::vector<bool> abnormal(n, false);
  for (int i = 0; i < n_abnormal; ++i) abnormal[order[i]] = true;

  std::vector<Sample> samples(n);
  std::vector<Image> raw(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = make_stream(config.seed, "phantom/sample", static_cast<std::uint64_t>(i));
    LesionMask mask;
    raw[i] = render(config, abnormal[i], rng, mask).cast<float>();
    samples[i].id = static_cast<std::uint64_t>(i);
    samples[i].is_abnormal = abnormal[i];
    samples[i].mask = std::move(mask);
  }
  for (int g0 = 0; g0 < n; g0 += config.clip_group) {
    const int g1 = std::min(n, g0 + config.clip_group);
    std::vector<Image> group(raw.begin() + g0, raw.begin() + g1);
    auto clipped = percentile_clip_volume(group, config.clip_percentile);
    for (int i = g0; i < g1; ++i) samples[i].image = std::move(clipped[i - g0]);
  }
  return samples;
}

double nearest_rank_percentile(std::vector<float> values, double p) {
  if (values.empty()) throw ConfigError("percentile of an empty grid");
  if (!(p > 0.0 && p <= 100.0)) throw ConfigError("percentile p must lie in (0,100]");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

std::vector<Image> percentile_clip_volume(const std::vector<Image>& slices, double p) {
  std::vector<float> all;
  for (const auto& s : slices) all.insert(all.end(), s.data(), s.data() + s.size());
  const float v = static_cast<float>(nearest_rank_percentile(std::move(all), p));
  std::vector<Image> out;
  out.reserve(slices.size());
  for (const auto& s : slices) {
    if (!(v > 0.0f)) {
      out.push_back(Image::Zero(s.rows(), s.cols()));
    } else {
      out.push_back(s.cwiseMax(0.0f).cwiseMin(v) / v);
    }
  }
  return out;
}

Image percentile_clip(const Image& pixels, double p) { return percentile_clip_volume({pixels}, p).front(); }

DatasetSplit split_dataset(std::vector<Sample> samples, const SplitRatios& ratios, std::uint64_t seed) {
  const double r[3] = {ratios.train, ratios.validation, ratios.test};
  for (double v : r) {
    if (!(v > 0.0)) throw ConfigError("split ratios must be positive");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  const auto n = static_cast<long long>(samples.size());
  if (n < 3) throw InsufficientDataError("split_dataset: need at least 3 samples, got " + std::to_string(n));

  long long n_train = std::clamp(std::llround(r[0] * n), 1LL, n - 2);
  long long n_val = std::clamp(std::llround(r[1] * n), 1LL, n - n_train - 1);

  Rng rng = make_stream(seed, "split");
  shuffle(samples.begin(), samples.end(), rng);
  DatasetSplit split;
  split.train.assign(std::make_move_iterator(samples.begin()), std::make_move_iterator(samples.begin() + n_train));
  split.validation.assign(std::make_move_iterator(samples.begin() + n_train),
                          std::make_move_iterator(samples.begin() + n_train + n_val));
  split.test.assign(std::make_move_iterator(samples.begin() + n_train + n_val), std::make_move_iterator(samples.end()));
  return split;
}

DatasetSplit strip_labels(DatasetSplit split, double labeled_fraction, std::uint64_t seed) {
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw ConfigError("labeled_fraction must lie in (0,1]; the semi-supervised scheme needs labeled data");
  }
  const auto n = static_cast<long long>(split.train.size());
  const long long n_strip = std::llround((1.0 - labeled_fraction) * static_cast<double>(n));
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_stream(seed, "strip");
  shuffle(order.begin(), order.end(), rng);
  for (long long i = 0; i < n_strip; ++i) split.train[order[i]].mask.reset();
  split.labeled_fraction = labeled_fraction;
  return split;
}

std::int64_t mask_area(const LesionMask& mask) { return mask.cast<std::int64_t>().sum(); }

}  // namespace smile::data
