#pragma once

#include "smile/data/phantom.hpp"
#include "smile/model.hpp"
#include "smile/segmentor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace smile::augmentation {

enum class Regime { None, PseudoNormalOnly, PseudoAbnormalOnly, Both };

inline constexpr std::array<Regime, 4> kAllRegimes{Regime::None, Regime::PseudoNormalOnly,
                                                   Regime::PseudoAbnormalOnly, Regime::Both};

std::string regime_name(Regime r);  // none | pseudo_normal_only | pseudo_abnormal_only | both
Regime regime_from_name(const std::string& s);

enum class Provenance { PseudoNormal, PseudoAbnormal };

struct SyntheticSample {
  data::Sample sample;
  Provenance provenance = Provenance::PseudoNormal;
  std::uint64_t source_id = 0;
};

struct AugmentedDataset {
  std::vector<data::Sample> real;
  std::vector<SyntheticSample> synthetic;
  std::vector<std::string> warnings;

  /// real followed by the synthetic samples.
  [[nodiscard]] std::vector<data::Sample> training_set() const;
};

// Synthetic ids are the source id with a tag in the top bits.
inline constexpr std::uint64_t kPseudoNormalTag = 1ULL << 60;
inline constexpr std::uint64_t kPseudoAbnormalTag = 2ULL << 60;

/// One pn = G(I) (zero mask) and/or one pa = R(G(I), M) (mask M) per real
/// training sample. `bundle_trained` = false only adds a warning.
AugmentedDataset synthesize_augmented(const ModelBundle& bundle, const std::vector<data::Sample>& train, Regime regime,
                                      bool bundle_trained = true);

struct DownstreamResult {
  double dice = 0.0;
  bool valid = true;
  std::string note;
  int n_train = 0;
};

/// Fresh segmentor on aug.training_set(), mean Dice on the abnormal test
/// samples. validation drives recipe.stop_at_target and may be empty when it
/// is off. Divergence is reported as valid = false.
DownstreamResult run_downstream(const AugmentedDataset& aug, const std::vector<data::Sample>& validation,
                                const std::vector<data::Sample>& test, const SegmentorRecipe& recipe,
                                std::ostream* progress = nullptr);

struct SweepRow {
  Regime regime = Regime::None;
  std::uint64_t seed = 0;
  double dice = 0.0;
  bool valid = true;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

std::vector<SweepRow> regime_sweep(const ModelBundle& bundle, const data::DatasetSplit& split,
                                   const std::vector<Regime>& regimes, const std::vector<std::uint64_t>& seeds,
                                   const SegmentorRecipe& recipe, std::ostream* progress = nullptr,
                                   bool bundle_trained = true);

/// Tab-separated with a header row; dice printed with 17 significant digits.
std::string table_to_tsv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> table_from_tsv(const std::string& text);
void save_table(const std::vector<SweepRow>& rows, const std::filesystem::path& path);
std::vector<SweepRow> load_table(const std::filesystem::path& path);

struct RegimeSummary {
  Regime regime = Regime::None;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation across seeds
  int n = 0;            // valid rows
};

std::vector<RegimeSummary> summarize(const std::vector<SweepRow>& rows);

struct DirectionalCheck {
  double gap = 0.0;        // mean(both) - mean(none)
  double spread = 0.0;     // max(std(none), std(both))
  bool gap_ok = false;     // gap > 0 and gap > 2 * spread
  bool pn_ok = false;      // mean(pn) >= mean(none) - 0.01
  bool pa_ok = false;      // mean(pa) >= mean(none) - 0.01
  [[nodiscard]] bool pass() const { return gap_ok && pn_ok && pa_ok; }
};

DirectionalCheck directional_check(const std::vector<RegimeSummary>& summary);

}  // namespace smile::augmentation
