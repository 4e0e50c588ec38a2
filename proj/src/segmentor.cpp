#include "smile/segmentor.hpp"

#include "smile/batch.hpp"
#include "smile/errors.hpp"
#include "smile/losses.hpp"
#include "smile/metrics.hpp"
#include "smile/nn/adam.hpp"
#include "smile/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace smile {

void SegmentorRecipe::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("segmentor learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("segmentor batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("segmentor epochs must be >= 1");
  if (arch.depth < 1 || arch.base_channels < 1) throw ConfigError("segmentor architecture must be positive");
}

SegmentorTrainResult train_segmentor(const std::vector<data::Sample>& train, const std::vector<data::Sample>& validation,
                                     const SegmentorRecipe& recipe, std::ostream* progress, const std::string& tag) {
  recipe.validate();
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].mask) labeled.push_back(i);
  }
  if (labeled.empty()) throw InsufficientDataError(tag + ": no labeled training samples");

  SegmentorTrainResult result{Network(nn::segmentor_spec(recipe.arch.depth, recipe.arch.base_channels),
                                      stream_seed(recipe.seed, "segmentor/init")),
                              {}, {}, 0};
  auto& s = result.net;
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = recipe.learning_rate;
  auto adam = nn::AdamState<float>::like(s.params);
  auto grads = s.params.zeros_like();
  nn::UNet<float>::Tape tape;
  nn::ParameterSet<float> best = s.params;
  double best_dice = -1.0;

  for (int epoch = 1; epoch <= recipe.epochs; ++epoch) {
    std::vector<std::size_t> order = labeled;
    Rng rng = make_stream(recipe.seed, "segmentor/batches", static_cast<std::uint64_t>(epoch));
    shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (const auto& [b0, b1] : batch_ranges(order.size(), recipe.batch_size)) {
      const Batch batch = make_batch(train, order, b0, b1);
      const auto probs = s.net.forward(s.params, batch.images, &tape);
      nn::Mat<float> grad;
      const double loss = losses::seg_ce(probs.data, batch.masks, batch.size(), &grad);
      if (!std::isfinite(loss)) throw TrainingDivergedError(tag + ": non-finite loss at epoch " + std::to_string(epoch));
      grads.set_zero();
      s.net.backward(s.params, tape, grad, &grads, false);
      nn::adam_step(s.params, grads, adam, adam_cfg);
      if (!s.params.all_finite()) {
        throw TrainingDivergedError(tag + ": non-finite parameter '" + s.params.first_non_finite() + "'");
      }
      loss_sum += loss;
      ++steps;
    }
    result.epoch_loss.push_back(loss_sum / steps);
    result.epochs_run = epoch;
    char line[160];
    if (!validation.empty()) {
      const double d = metrics::mean_dice(s, validation);
      result.validation_dice.push_back(d);
      if (d > best_dice) {
        best_dice = d;
        best = s.params;
      }
      std::snprintf(line, sizeof(line), "%s epoch=%d ce=%.6f val_dice=%.4f\n", tag.c_str(), epoch,
                    result.epoch_loss.back(), d);
      if (progress) *progress << line << std::flush;
      if (recipe.stop_at_target && d >= recipe.target_dice) break;
    } else {
      std::snprintf(line, sizeof(line), "%s epoch=%d ce=%.6f\n", tag.c_str(), epoch, result.epoch_loss.back());
      if (progress) *progress << line << std::flush;
    }
  }
  if (recipe.stop_at_target && best_dice >= 0.0) s.params = best;
  return result;
}

EvalSegmentor train_eval_segmentor(const std::vector<data::Sample>& train, const std::vector<data::Sample>& validation,
                                   SegmentorRecipe recipe, std::ostream* progress) {
  if (validation.empty()) throw InsufficientDataError("S_pred: a validation set is required");
  recipe.stop_at_target = true;
  auto r = train_segmentor(train, validation, recipe, progress, "s_pred");
  EvalSegmentor out{std::move(r.net), 0.0, 0.0, r.epochs_run, false};
  out.validation_dice = metrics::mean_dice(out.net, validation);
  out.normal_false_positive = metrics::normal_false_positive_fraction(out.net, validation);
  out.reached_target = out.validation_dice >= recipe.target_dice;
  if (out.validation_dice < recipe.min_dice) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "S_pred reached validation Dice %.4f < %.2f after %d epochs; metrics refused",
                  out.validation_dice, recipe.min_dice, out.epochs_run);
    throw EvalSegmentorUndertrainedError(buf);
  }
  return out;
}

}  // namespace smile
