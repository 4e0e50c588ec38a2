#pragma once

#include "smile/batch.hpp"
#include "smile/data/phantom.hpp"
#include "smile/losses.hpp"
#include "smile/model.hpp"
#include "smile/nn/adam.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace smile::training {

enum class Phase : int { P1_GS = 1, P2_R = 2, P3_RS = 3, P4_ALL = 4 };

std::string phase_name(Phase p);  // "P1".."P4"
Phase phase_from_name(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int epochs_per_phase = 10;
  double epsilon_init = 0.9;
  bool epsilon_dynamic = false;
  double labeled_fraction = 1.0;
  std::uint64_t seed = 0;
  losses::LossWeights loss_weights;
  Architecture arch;
  // Off: unlabeled samples are ignored and no semi steps run.
  bool semi_enabled = true;
  // Phase-1 epochs on labeled data before semi steps start.
  int semi_warmup_epochs = 1;

  void validate() const;
};

std::string config_to_json(const TrainConfig& c);
/// Unknown keys are a ConfigError; missing keys keep their defaults.
TrainConfig config_from_json(const std::string& text);

struct Validation {
  double identity = 0.0;
  double passthrough_mae = 0.0;
  double pab_dice = 0.0;     // NaN before phase 3
  double healthiness = 0.0;  // NaN without an evaluation segmentor
};

struct EpochRecord {
  Phase phase = Phase::P1_GS;
  int epoch = 0;
  losses::LossBreakdown losses;       // mean over labeled steps
  losses::LossBreakdown semi_losses;  // mean over semi steps
  int steps = 0;
  int semi_steps = 0;
  int n_abnormal = 0;  // batch composition over the labeled steps
  int n_normal = 0;
  double epsilon = 0.0;  // value in force during the epoch
  Validation validation;
};

struct TrainState {
  Phase phase = Phase::P1_GS;
  int epoch = 0;  // epochs completed within `phase`
  double epsilon = 0.9;
  nn::AdamState<float> adam_G, adam_S, adam_R;
  std::vector<EpochRecord> history;

  static TrainState fresh(const ModelBundle& models, const TrainConfig& config);
};

/// Losses of one step: sub-update (a) trains S, sub-update (b) trains G
/// and/or R. Phase 2 has only (b).
struct StepLosses {
  losses::LossBreakdown segmentor;
  losses::LossBreakdown models;

  [[nodiscard]] losses::LossBreakdown combined() const {
    auto c = segmentor;
    c.merge(models);
    return c;
  }
};

/// Runs single optimization steps on a bundle it does not own. Upstream
/// outputs are always treated as constants for the network being trained.
class Trainer {
 public:
  Trainer(ModelBundle& models, TrainConfig config);
  Trainer(ModelBundle& models, TrainConfig config, TrainState state);

  StepLosses phase1_step(const Batch& batch);
  StepLosses phase2_step(const Batch& batch);
  StepLosses phase3_step(const Batch& batch);
  StepLosses phase4_step(const Batch& batch);
  StepLosses step(Phase phase, const Batch& batch);

  /// Confidence update of S on S(U), then the phase's step with the
  /// pseudo-label (taken from the pre-update prediction) in place of M.
  /// semi_ce is reported under `segmentor`.
  StepLosses semi_step(const Batch& unlabeled, Phase phase);

  /// The pseudo-label mask used by the latest semi step.
  [[nodiscard]] const nn::Mat<float>& last_pseudo_label() const { return pseudo_; }

  /// Mean confidence gathered by semi steps since the last call; applies the
  /// dynamic epsilon rule when enabled. Returns false when no semi step ran.
  bool finish_epoch();

  [[nodiscard]] TrainState& state() { return state_; }
  [[nodiscard]] const TrainState& state() const { return state_; }
  [[nodiscard]] const TrainConfig& config() const { return config_; }

  /// Called after every sub-update with "P1a", "P1b", ..., "semi".
  std::function<void(std::string_view)> on_substep;

 private:
  void update(Network& net, nn::ParameterSet<float>& grads, nn::AdamState<float>& adam, const char* name);
  void notify(std::string_view tag);
  static void check(const losses::LossBreakdown& b, const char* where);
  nn::Tensor<float> recon_input(const nn::Tensor<float>& pn, const nn::Mat<float>& masks) const;
  losses::LossBreakdown segmentor_update(const nn::Tensor<float>& pn, const nn::Tensor<float>* pab,
                                         const nn::Mat<float>& masks, int batch);

  ModelBundle& m_;
  TrainConfig config_;
  TrainState state_;
  nn::AdamConfig adam_;
  nn::ParameterSet<float> grad_G_, grad_S_, grad_R_;
  nn::UNet<float>::Tape tape_G_, tape_S1_, tape_S2_, tape_R_;
  nn::Mat<float> pseudo_;
  double confidence_sum_ = 0.0;
  double confidence_count_ = 0.0;
};

Validation validate_models(const ModelBundle& models, const std::vector<data::Sample>& validation, Phase phase,
                           const Network* s_pred);

std::string progress_line(const EpochRecord& r);

struct Checkpoint {
  ModelBundle models;
  TrainState state;
  TrainConfig config;
};

/// Writes dir/checkpoint.smt (parameters and optimizer moments) and
/// dir/state.json (phase, epoch, epsilon, config, history).
void save_checkpoint(const std::filesystem::path& dir, const ModelBundle& models, const TrainState& state,
                     const TrainConfig& config);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::ostream* progress = nullptr;
  const Network* s_pred = nullptr;  // adds validation h to the history
  std::optional<std::filesystem::path> resume_from;
  Phase last_phase = Phase::P4_ALL;  // stop after this phase
};

struct TrainResult {
  ModelBundle models;
  TrainState state;
  std::string manifest;  // JSON text, also written to out_dir/manifest.json
};

/// The full P1 -> P4 schedule. When config.labeled_fraction < 1 and the
/// split is fully labeled, labels are stripped first. Throws
/// TrainingDivergedError on NaN/Inf, naming the last good checkpoint.
TrainResult run_training(const TrainConfig& config, const data::DatasetSplit& split, const TrainOptions& options = {});

/// Manifest "history" array alone, for trace comparisons.
std::string history_json(const std::vector<EpochRecord>& history);

}  // namespace smile::training
