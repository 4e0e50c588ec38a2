#pragma once

#include "smile/data/phantom.hpp"
#include "smile/model.hpp"
#include "smile/nn/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace smile::metrics {

struct SsimConfig {
  int window_size = 11;
  double window_sigma = 1.5;
  int scales = 3;
  std::vector<double> scale_weights = standard_weights(3);
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  /// The first `scales` of the standard five MS-SSIM weights, renormalized
  /// to sum to 1.
  static std::vector<double> standard_weights(int scales);

  /// Five scales once min(H,W) >= 176, otherwise the most scales (at most
  /// three) the image size admits.
  static SsimConfig for_size(int height, int width);

  /// Throws std::invalid_argument naming the violated rule; for images that
  /// are too small the message suggests a workable scale count.
  void validate(int height, int width) const;
};

struct SsimResult {
  nn::Mat<double> map;  // per-pixel SSIM over the valid window positions
  double luminance = 0.0;
  double contrast_structure = 0.0;
  double ssim = 0.0;  // mean of map
};

/// Gaussian-windowed SSIM with valid filtering (no padding).
SsimResult ssim_map(const nn::Mat<double>& a, const nn::Mat<double>& b, const SsimConfig& cfg);

/// Product over scales of mean contrast-structure^w (mean SSIM^w at the
/// coarsest scale), with 2x2 mean pooling between scales. Negative per-scale
/// means are clamped to 0 before exponentiation.
double ms_ssim(const nn::Mat<double>& a, const nn::Mat<double>& b, const SsimConfig& cfg);
double ms_ssim(const data::Image& a, const data::Image& b, const SsimConfig& cfg);

/// Number of lesion pixels of a 0/1 mask.
std::int64_t lesion_area(const data::LesionMask& mask);

/// Number of pixels whose lesion probability beats background (argmax).
std::int64_t lesion_area(const nn::Mat<float>& probs);

/// 2|A∩B| / (|A|+|B|); 1 when both are empty.
double dice(const data::LesionMask& pred, const data::LesionMask& target);

struct Healthiness {
  double ratio_of_means = 0.0;  // headline
  double mean_of_ratios = 0.0;  // over samples with a non-zero denominator
};

/// 1 - mean(gen_areas) / mean(real_areas). Throws
/// EvalSegmentorDegenerateError when the denominator is 0.
Healthiness healthiness_from_areas(const std::vector<double>& gen_areas, const std::vector<double>& real_areas);

/// ms_ssim of (1-M) ⊙ generated against (1-M) ⊙ original.
double masked_identity(const data::Image& generated, const data::Image& original, const data::LesionMask& mask,
                       const SsimConfig& cfg);

struct SampleMetrics {
  std::uint64_t id = 0;
  double area_real = 0.0;       // N(S_pred(I))
  double area_generated = 0.0;  // N(S_pred(G(I)))
  double ms_ssim = 0.0;         // masked identity of this sample
};

struct MetricsReport {
  double healthiness = 0.0;
  double healthiness_mean_of_ratios = 0.0;
  double identity = 0.0;
  double normal_passthrough_mae = 0.0;  // mean |G(I) - I| over normal samples
  std::vector<SampleMetrics> per_sample;
  int n_samples = 0;
  int n_normal = 0;
  std::string s_pred_checkpoint_id;
  std::string generator_checkpoint_id;

  /// Recomputes the headline numbers from per_sample (same summation order).
  void recompute_headline();
};

/// h and iD of G on the labeled abnormal samples of `samples`, measured with
/// the frozen evaluation segmentor; normal samples feed the passthrough MAE.
MetricsReport evaluate(const Network& G, const Network& S_pred, const std::vector<data::Sample>& samples,
                       const SsimConfig* cfg = nullptr);

/// Mean iD of G over the labeled abnormal samples (no segmentor needed).
double identity(const Network& G, const std::vector<data::Sample>& samples, const SsimConfig* cfg = nullptr);

/// Mean |G(I) - I| over normal samples.
double normal_passthrough_mae(const Network& G, const std::vector<data::Sample>& samples);

/// Mean Dice of a segmentor over the labeled abnormal samples.
double mean_dice(const Network& S, const std::vector<data::Sample>& samples);

/// Mean predicted lesion fraction of a segmentor over normal samples.
double normal_false_positive_fraction(const Network& S, const std::vector<data::Sample>& samples);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

/// One row per sample: id, area_real, area_generated, ms_ssim.
std::string report_table(const MetricsReport& report);

}  // namespace smile::metrics
