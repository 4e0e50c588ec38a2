#pragma once

#include "smile/nn/tensor.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace smile::data {

/// H x W intensities, nominally in [0,1].
using Image = nn::Mat<float>;

/// H x W grid of 0/1 lesion labels.
using LesionMask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Sample {
  std::uint64_t id = 0;
  Image image;
  std::optional<LesionMask> mask;  // absent for unlabeled samples
  bool is_abnormal = false;

  [[nodiscard]] bool labeled() const { return mask.has_value(); }
  friend bool operator==(const Sample& a, const Sample& b);
};

struct PhantomConfig {
  int image_size = 64;
  int n_samples = 2400;
  double abnormal_fraction = 0.7;
  std::pair<int, int> lesion_count_range{1, 3};
  std::pair<double, double> lesion_radius_range{3.0, 6.0};
  double lesion_intensity_boost = 0.35;
  double texture_smoothness = 3.0;  // Gaussian sigma of the brain texture, pixels
  double clip_percentile = 99.5;
  /// Number of consecutive samples sharing one clipping percentile; 1 clips
  /// every image on its own, larger values emulate per-volume clipping.
  int clip_group = 1;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Generates n_samples phantoms. Deterministic in config.seed. Throws
/// InfeasibleConfigError when a lesion cannot be placed inside the brain.
std::vector<Sample> generate_phantom(const PhantomConfig& config);

/// Nearest-rank percentile: the value at rank ceil(p/100 * N) of the sorted
/// values (1-based).
double nearest_rank_percentile(std::vector<float> values, double p);

/// Clamps to [0, V_p] and divides by V_p. Grids whose V_p is 0 map to zeros.
Image percentile_clip(const Image& pixels, double p = 99.5);

/// Same rule with one V_p shared by every slice of a volume.
std::vector<Image> percentile_clip_volume(const std::vector<Image>& slices, double p = 99.5);

struct DatasetSplit {
  std::vector<Sample> train, validation, test;
  double labeled_fraction = 1.0;
  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct SplitRatios {
  double train = 5.0 / 6.0;
  double validation = 1.0 / 12.0;
  double test = 1.0 / 12.0;
};

/// Shuffled disjoint partition. Sizes are rounded from the ratios; the test
/// split takes the remainder.
DatasetSplit split_dataset(std::vector<Sample> samples, const SplitRatios& ratios, std::uint64_t seed);

/// Removes the masks of a uniformly chosen round((1 - f) * n_train) subset
/// of the training samples.
DatasetSplit strip_labels(DatasetSplit split, double labeled_fraction, std::uint64_t seed);

/// Number of lesion pixels.
std::int64_t mask_area(const LesionMask& mask);

}  // namespace smile::data
