#pragma once

#include "smile/data/phantom.hpp"
#include "smile/model.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace smile {

/// Supervised recipe shared by the evaluation segmentor and the downstream
/// segmentors of the augmentation study.
struct SegmentorRecipe {
  Architecture arch;
  double learning_rate = 1e-3;
  int batch_size = 8;
  int epochs = 15;              // upper bound when stop_at_target is set
  bool stop_at_target = false;  // stop once validation Dice reaches target_dice
  double target_dice = 0.85;
  double min_dice = 0.60;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SegmentorTrainResult {
  Network net;
  std::vector<double> epoch_loss;
  std::vector<double> validation_dice;  // empty without a validation set
  int epochs_run = 0;
};

/// Plain supervised training of a fresh segmentor on CE(S(I), M) over the
/// labeled samples. Throws TrainingDivergedError on NaN/Inf.
SegmentorTrainResult train_segmentor(const std::vector<data::Sample>& train, const std::vector<data::Sample>& validation,
                                     const SegmentorRecipe& recipe, std::ostream* progress = nullptr,
                                     const std::string& tag = "seg");

struct EvalSegmentor {
  Network net;
  double validation_dice = 0.0;
  double normal_false_positive = 0.0;
  int epochs_run = 0;
  bool reached_target = false;
};

/// Trains S_pred until validation Dice >= recipe.target_dice (or the epoch
/// budget runs out) and freezes it. Throws EvalSegmentorUndertrainedError
/// below recipe.min_dice.
EvalSegmentor train_eval_segmentor(const std::vector<data::Sample>& train, const std::vector<data::Sample>& validation,
                                   SegmentorRecipe recipe, std::ostream* progress = nullptr);

}  // namespace smile
