#include "smile/training.hpp"

#include "smile/errors.hpp"
#include "smile/io/tensor_file.hpp"
#include "smile/metrics.hpp"
#include "smile/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace smile::training {

using json = nlohmann::ordered_json;
using losses::LossBreakdown;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json breakdown_json(const LossBreakdown& b) {
  json j = json::object();
  for (const auto& [n, v] : b.components) j[n] = v;
  return j;
}

LossBreakdown breakdown_from(const json& j) {
  LossBreakdown b;
  for (const auto& [k, v] : j.items()) b.add(k, v.get<double>());
  return b;
}

LossBreakdown scaled(const LossBreakdown& b, double k) {
  LossBreakdown out;
  for (const auto& [n, v] : b.components) out.add(n, v * k);
  return out;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError(p.string(), "file", "cannot open");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

std::string phase_name(Phase p) { return "P" + std::to_string(static_cast<int>(p)); }

Phase phase_from_name(const std::string& s) {
  if (s == "P1" || s == "P1_GS") return Phase::P1_GS;
  if (s == "P2" || s == "P2_R") return Phase::P2_R;
  if (s == "P3" || s == "P3_RS") return Phase::P3_RS;
  if (s == "P4" || s == "P4_ALL") return Phase::P4_ALL;
  throw ConfigError("unknown phase '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs_per_phase < 1) throw ConfigError("epochs_per_phase must be >= 1");
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) throw ConfigError("labeled_fraction must lie in (0,1]");
  if (!(epsilon_init > 0.0 && epsilon_init < 1.0)) throw ConfigError("epsilon_init must lie in (0,1)");
  if (epsilon_dynamic && !(epsilon_init >= 0.5 && epsilon_init <= 0.99)) {
    throw ConfigError("epsilon_init must lie in [0.5,0.99] when epsilon_dynamic is set");
  }
  if (semi_warmup_epochs < 0) throw ConfigError("semi_warmup_epochs must be >= 0");
  if (arch.depth < 1 || arch.base_channels < 1) throw ConfigError("architecture depth/base_channels must be >= 1");
  const auto& w = loss_weights;
  for (double v : {w.gen_mse, w.gen_adv, w.seg_pn, w.seg_pab, w.recon_mse, w.recon_seg, w.semi_ce}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss_weights must be finite and >= 0");
  }
}

namespace {

json config_json(const TrainConfig& c) {
  const auto& w = c.loss_weights;
  return json{{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"epochs_per_phase", c.epochs_per_phase},
              {"epsilon_init", c.epsilon_init},
              {"epsilon_dynamic", c.epsilon_dynamic},
              {"labeled_fraction", c.labeled_fraction},
              {"seed", c.seed},
              {"semi_enabled", c.semi_enabled},
              {"semi_warmup_epochs", c.semi_warmup_epochs},
              {"architecture", {{"depth", c.arch.depth}, {"base_channels", c.arch.base_channels}}},
              {"loss_weights",
               {{"gen_mse", w.gen_mse},
                {"gen_adv", w.gen_adv},
                {"seg_pn", w.seg_pn},
                {"seg_pab", w.seg_pab},
                {"recon_mse", w.recon_mse},
                {"recon_seg", w.recon_seg},
                {"semi_ce", w.semi_ce}}}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  if (!j.is_object()) throw ConfigError("train config must be an object");
  for (const auto& [k, v] : j.items()) {
    try {
      if (k == "learning_rate") {
        c.learning_rate = v.get<double>();
      } else if (k == "batch_size") {
        c.batch_size = v.get<int>();
      } else if (k == "epochs_per_phase") {
        c.epochs_per_phase = v.get<int>();
      } else if (k == "epsilon_init") {
        c.epsilon_init = v.get<double>();
      } else if (k == "epsilon_dynamic") {
        c.epsilon_dynamic = v.get<bool>();
      } else if (k == "labeled_fraction") {
        c.labeled_fraction = v.get<double>();
      } else if (k == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (k == "semi_enabled") {
        c.semi_enabled = v.get<bool>();
      } else if (k == "semi_warmup_epochs") {
        c.semi_warmup_epochs = v.get<int>();
      } else if (k == "architecture") {
        for (const auto& [ak, av] : v.items()) {
          if (ak == "depth") {
            c.arch.depth = av.get<int>();
          } else if (ak == "base_channels") {
            c.arch.base_channels = av.get<int>();
          } else {
            throw ConfigError("unknown key 'architecture." + ak + "'");
          }
        }
      } else if (k == "loss_weights") {
        auto& w = c.loss_weights;
        for (const auto& [wk, wv] : v.items()) {
          double* dst = wk == "gen_mse"     ? &w.gen_mse
                        : wk == "gen_adv"   ? &w.gen_adv
                        : wk == "seg_pn"    ? &w.seg_pn
                        : wk == "seg_pab"   ? &w.seg_pab
                        : wk == "recon_mse" ? &w.recon_mse
                        : wk == "recon_seg" ? &w.recon_seg
                        : wk == "semi_ce"   ? &w.semi_ce
                                            : nullptr;
          if (!dst) throw ConfigError("unknown key 'loss_weights." + wk + "'");
          *dst = wv.get<double>();
        }
      } else {
        throw ConfigError("unknown key '" + k + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + k + "': " + e.what());
    }
  }
  return c;
}

json record_json(const EpochRecord& r) {
  return json{{"phase", phase_name(r.phase)},
              {"epoch", r.epoch},
              {"losses", breakdown_json(r.losses)},
              {"semi_losses", breakdown_json(r.semi_losses)},
              {"steps", r.steps},
              {"semi_steps", r.semi_steps},
              {"n_abnormal", r.n_abnormal},
              {"n_normal", r.n_normal},
              {"epsilon", r.epsilon},
              {"validation",
               {{"identity", number_or_null(r.validation.identity)},
                {"passthrough_mae", number_or_null(r.validation.passthrough_mae)},
                {"pab_dice", number_or_null(r.validation.pab_dice)},
                {"healthiness", number_or_null(r.validation.healthiness)}}}};
}

EpochRecord record_from(const json& j) {
  EpochRecord r;
  r.phase = phase_from_name(j.at("phase").get<std::string>());
  r.epoch = j.at("epoch").get<int>();
  r.losses = breakdown_from(j.at("losses"));
  r.semi_losses = breakdown_from(j.at("semi_losses"));
  r.steps = j.at("steps").get<int>();
  r.semi_steps = j.at("semi_steps").get<int>();
  r.n_abnormal = j.at("n_abnormal").get<int>();
  r.n_normal = j.at("n_normal").get<int>();
  r.epsilon = j.at("epsilon").get<double>();
  const auto& v = j.at("validation");
  r.validation = {number_or_nan(v.at("identity")), number_or_nan(v.at("passthrough_mae")),
                  number_or_nan(v.at("pab_dice")), number_or_nan(v.at("healthiness"))};
  return r;
}

json history_array(const std::vector<EpochRecord>& history) {
  json h = json::array();
  for (const auto& r : history) h.push_back(record_json(r));
  return h;
}

}  // namespace

std::string config_to_json(const TrainConfig& c) { return config_json(c).dump(2); }

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config is not valid JSON: ") + e.what());
  }
  return config_from(j);
}

std::string history_json(const std::vector<EpochRecord>& history) { return history_array(history).dump(); }

TrainState TrainState::fresh(const ModelBundle& models, const TrainConfig& config) {
  TrainState s;
  s.epsilon = config.epsilon_init;
  s.adam_G = nn::AdamState<float>::like(models.G.params);
  s.adam_S = nn::AdamState<float>::like(models.S.params);
  s.adam_R = nn::AdamState<float>::like(models.R.params);
  return s;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(ModelBundle& models, TrainConfig config)
    : Trainer(models, config, TrainState::fresh(models, config)) {}

Trainer::Trainer(ModelBundle& models, TrainConfig config, TrainState state)
    : m_(models), config_(std::move(config)), state_(std::move(state)) {
  config_.validate();
  adam_.learning_rate = config_.learning_rate;
  grad_G_ = m_.G.params.zeros_like();
  grad_S_ = m_.S.params.zeros_like();
  grad_R_ = m_.R.params.zeros_like();
}

void Trainer::notify(std::string_view tag) {
  if (on_substep) on_substep(tag);
}

void Trainer::check(const LossBreakdown& b, const char* where) {
  for (const auto& [n, v] : b.components) {
    if (!std::isfinite(v)) throw TrainingDivergedError(std::string(where) + ": non-finite loss '" + n + "'");
  }
}

void Trainer::update(Network& net, nn::ParameterSet<float>& grads, nn::AdamState<float>& adam, const char* name) {
  if (!grads.all_finite()) {
    throw TrainingDivergedError(std::string("non-finite gradient in ") + name + " tensor '" + grads.first_non_finite() +
                                "'");
  }
  nn::adam_step(net.params, grads, adam, adam_);
  if (!net.params.all_finite()) {
    throw TrainingDivergedError(std::string("non-finite parameter in ") + name + " tensor '" +
                                net.params.first_non_finite() + "'");
  }
}

nn::Tensor<float> Trainer::recon_input(const nn::Tensor<float>& pn, const nn::Mat<float>& masks) const {
  nn::Tensor<float> m(1, pn.batch, pn.height, pn.width);
  m.data = masks;
  return nn::concat_channels(pn, m);
}

LossBreakdown Trainer::segmentor_update(const nn::Tensor<float>& pn, const nn::Tensor<float>* pab,
                                        const nn::Mat<float>& masks, int batch) {
  const auto& w = config_.loss_weights;
  const auto sp = m_.S.net.forward(m_.S.params, pn, &tape_S1_);
  nn::Tensor<float> sab;
  if (pab) sab = m_.S.net.forward(m_.S.params, *pab, &tape_S2_);
  const auto sl = losses::segmentor_loss(sp.data, pab ? &sab.data : nullptr, masks, batch, w);
  check(sl.breakdown, "segmentor update");
  grad_S_.set_zero();
  m_.S.net.backward(m_.S.params, tape_S1_, sl.grad_pn, &grad_S_, false);
  if (pab) m_.S.net.backward(m_.S.params, tape_S2_, sl.grad_pab, &grad_S_, false);
  update(m_.S, grad_S_, state_.adam_S, "S");
  return sl.breakdown;
}

StepLosses Trainer::phase1_step(const Batch& b) {
  const auto& w = config_.loss_weights;
  const int n = b.size();
  StepLosses out;
  const auto pn = m_.G.net.forward(m_.G.params, b.images, &tape_G_);

  out.segmentor = segmentor_update(pn, nullptr, b.masks, n);
  notify("P1a");

  const auto sp = m_.S.net.forward(m_.S.params, pn, &tape_S1_);
  const auto gl = losses::generator_loss(b.images.data, b.masks, pn.data, sp.data, n, w);
  check(gl.breakdown, "P1 generator update");
  const auto through_s = m_.S.net.backward(m_.S.params, tape_S1_, gl.grad_s_probs, nullptr, true);
  const nn::Mat<float> grad_pn = gl.grad_g_out + through_s.data;
  grad_G_.set_zero();
  m_.G.net.backward(m_.G.params, tape_G_, grad_pn, &grad_G_, false);
  update(m_.G, grad_G_, state_.adam_G, "G");
  out.models = gl.breakdown;
  notify("P1b");
  return out;
}

StepLosses Trainer::phase2_step(const Batch& b) {
  const auto& w = config_.loss_weights;
  StepLosses out;
  const auto pn = m_.G.net.forward(m_.G.params, b.images);
  const auto pab = m_.R.net.forward(m_.R.params, recon_input(pn, b.masks), &tape_R_);
  nn::Mat<float> grad;
  const double recon = losses::reconstruction_loss(pab.data, b.images.data, b.size(), &grad);
  out.models.add("recon_mse", w.recon_mse * recon);
  check(out.models, "P2 reconstructor update");
  grad *= float(w.recon_mse);
  grad_R_.set_zero();
  m_.R.net.backward(m_.R.params, tape_R_, grad, &grad_R_, false);
  update(m_.R, grad_R_, state_.adam_R, "R");
  notify("P2");
  return out;
}

StepLosses Trainer::phase3_step(const Batch& b) {
  const auto& w = config_.loss_weights;
  const int n = b.size();
  StepLosses out;
  const auto pn = m_.G.net.forward(m_.G.params, b.images);
  const auto pab = m_.R.net.forward(m_.R.params, recon_input(pn, b.masks), &tape_R_);

  out.segmentor = segmentor_update(pn, &pab, b.masks, n);
  notify("P3a");

  const auto sab = m_.S.net.forward(m_.S.params, pab, &tape_S2_);
  nn::Mat<float> grad_recon, grad_seg;
  const double recon = losses::reconstruction_loss(pab.data, b.images.data, n, &grad_recon);
  const double seg = losses::seg_ce(sab.data, b.masks, n, &grad_seg);
  out.models.add("recon_mse", w.recon_mse * recon);
  out.models.add("recon_seg", w.recon_seg * seg);
  check(out.models, "P3 reconstructor update");
  grad_seg *= float(w.recon_seg);
  const auto through_s = m_.S.net.backward(m_.S.params, tape_S2_, grad_seg, nullptr, true);
  const nn::Mat<float> grad_pab = grad_recon * float(w.recon_mse) + through_s.data;
  grad_R_.set_zero();
  m_.R.net.backward(m_.R.params, tape_R_, grad_pab, &grad_R_, false);
  update(m_.R, grad_R_, state_.adam_R, "R");
  notify("P3b");
  return out;
}

StepLosses Trainer::phase4_step(const Batch& b) {
  const auto& w = config_.loss_weights;
  const int n = b.size();
  StepLosses out;
  const auto pn = m_.G.net.forward(m_.G.params, b.images, &tape_G_);
  const auto pab = m_.R.net.forward(m_.R.params, recon_input(pn, b.masks), &tape_R_);

  out.segmentor = segmentor_update(pn, &pab, b.masks, n);
  notify("P4a");

  const auto sp = m_.S.net.forward(m_.S.params, pn, &tape_S1_);
  const auto sab = m_.S.net.forward(m_.S.params, pab, &tape_S2_);
  const auto gl = losses::generator_loss(b.images.data, b.masks, pn.data, sp.data, n, w);
  nn::Mat<float> grad_recon, grad_seg;
  const double recon = losses::reconstruction_loss(pab.data, b.images.data, n, &grad_recon);
  const double seg = losses::seg_ce(sab.data, b.masks, n, &grad_seg);
  out.models = gl.breakdown;
  out.models.add("recon_mse", w.recon_mse * recon);
  out.models.add("recon_seg", w.recon_seg * seg);
  check(out.models, "P4 generator/reconstructor update");

  grad_seg *= float(w.recon_seg);
  const auto s_on_pab = m_.S.net.backward(m_.S.params, tape_S2_, grad_seg, nullptr, true);
  const nn::Mat<float> grad_pab = grad_recon * float(w.recon_mse) + s_on_pab.data;
  grad_R_.set_zero();
  m_.R.net.backward(m_.R.params, tape_R_, grad_pab, &grad_R_, false);

  // G(I) is a constant input for R's terms: letting the reconstruction loss
  // reach G would reward G for keeping the lesion R has to reproduce.
  const auto s_on_pn = m_.S.net.backward(m_.S.params, tape_S1_, gl.grad_s_probs, nullptr, true);
  const nn::Mat<float> grad_pn = gl.grad_g_out + s_on_pn.data;
  grad_G_.set_zero();
  m_.G.net.backward(m_.G.params, tape_G_, grad_pn, &grad_G_, false);

  update(m_.G, grad_G_, state_.adam_G, "G");
  update(m_.R, grad_R_, state_.adam_R, "R");
  notify("P4b");
  return out;
}

StepLosses Trainer::step(Phase phase, const Batch& batch) {
  switch (phase) {
    case Phase::P1_GS: return phase1_step(batch);
    case Phase::P2_R: return phase2_step(batch);
    case Phase::P3_RS: return phase3_step(batch);
    case Phase::P4_ALL: return phase4_step(batch);
  }
  throw std::logic_error("bad phase");
}

StepLosses Trainer::semi_step(const Batch& u, Phase phase) {
  if (phase == Phase::P2_R) throw std::logic_error("semi_step: S is frozen in phase 2");
  const auto& w = config_.loss_weights;
  const auto probs = m_.S.net.forward(m_.S.params, u.images, &tape_S1_);
  pseudo_ = losses::pseudo_label(probs.data, state_.epsilon);
  confidence_sum_ += losses::confidence_sum(probs.data);
  confidence_count_ += double(probs.data.cols());

  nn::Mat<float> grad;
  LossBreakdown semi;
  semi.add("semi_ce", w.semi_ce * losses::semi_confidence_loss(probs.data, pseudo_, u.size(), &grad));
  check(semi, "semi confidence update");
  grad *= float(w.semi_ce);
  grad_S_.set_zero();
  m_.S.net.backward(m_.S.params, tape_S1_, grad, &grad_S_, false);
  update(m_.S, grad_S_, state_.adam_S, "S");
  notify("semi");

  Batch pseudo;
  pseudo.images = u.images;
  pseudo.masks = pseudo_;
  pseudo.ids = u.ids;
  StepLosses out = step(phase, pseudo);
  semi.merge(out.segmentor);
  out.segmentor = semi;
  return out;
}

bool Trainer::finish_epoch() {
  const bool any = confidence_count_ > 0;
  if (any && config_.epsilon_dynamic) state_.epsilon = losses::update_epsilon(confidence_sum_, confidence_count_);
  confidence_sum_ = 0.0;
  confidence_count_ = 0.0;
  return any;
}

// ---------------------------------------------------------------------------
// Validation, progress, checkpoints

Validation validate_models(const ModelBundle& models, const std::vector<data::Sample>& validation, Phase phase,
                           const Network* s_pred) {
  Validation v{kNaN, kNaN, kNaN, kNaN};
  if (s_pred) {
    try {
      const auto rep = metrics::evaluate(models.G, *s_pred, validation);
      v.identity = rep.identity;
      v.healthiness = rep.healthiness;
      v.passthrough_mae = rep.normal_passthrough_mae;
    } catch (const EvalSegmentorDegenerateError&) {
      v.identity = metrics::identity(models.G, validation);
      v.passthrough_mae = metrics::normal_passthrough_mae(models.G, validation);
    }
  } else {
    v.identity = metrics::identity(models.G, validation);
    v.passthrough_mae = metrics::normal_passthrough_mae(models.G, validation);
  }
  if (phase == Phase::P3_RS || phase == Phase::P4_ALL) {
    std::vector<data::Image> images;
    std::vector<data::LesionMask> masks;
    for (const auto& s : validation) {
      if (s.is_abnormal && s.mask) {
        images.push_back(s.image);
        masks.push_back(*s.mask);
      }
    }
    if (!images.empty()) {
      const auto pab = run_reconstructor(models.R, run_generator(models.G, images), masks);
      const auto pred = run_segmentor(models.S, pab);
      double sum = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) sum += metrics::dice(pred[i], masks[i]);
      v.pab_dice = sum / double(pred.size());
    }
  }
  return v;
}

std::string progress_line(const EpochRecord& r) {
  std::ostringstream s;
  char buf[64];
  s << "phase=" << phase_name(r.phase) << " epoch=" << r.epoch;
  auto put = [&](const std::string& k, double v) {
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    s << ' ' << k << '=' << (std::isfinite(v) ? buf : "nan");
  };
  for (const auto& [n, v] : r.losses.components) put(n, v);
  if (r.semi_steps > 0) {
    for (const auto& [n, v] : r.semi_losses.components) put("semi." + n, v);
    s << " semi_steps=" << r.semi_steps;
  }
  put("epsilon", r.epsilon);
  put("val_id", r.validation.identity);
  put("val_mae", r.validation.passthrough_mae);
  if (std::isfinite(r.validation.pab_dice)) put("val_pab_dice", r.validation.pab_dice);
  if (std::isfinite(r.validation.healthiness)) put("val_h", r.validation.healthiness);
  return s.str();
}

void save_checkpoint(const std::filesystem::path& dir, const ModelBundle& models, const TrainState& state,
                     const TrainConfig& config) {
  std::filesystem::create_directories(dir);
  io::TensorFile file;
  file.meta.emplace_back("format", "smile-checkpoint-1");
  const std::pair<const char*, const Network*> nets[] = {{"G", &models.G}, {"S", &models.S}, {"R", &models.R}};
  const nn::AdamState<float>* adams[] = {&state.adam_G, &state.adam_S, &state.adam_R};
  for (int i = 0; i < 3; ++i) {
    const std::string n = nets[i].first;
    file.meta.emplace_back("spec/" + n, spec_to_string(nets[i].second->spec()));
    file.meta.emplace_back("adam_step/" + n, std::to_string(adams[i]->step));
    io::add_parameters(file, n + "/", nets[i].second->params);
    io::add_parameters(file, "adam/" + n + "/m/", adams[i]->m);
    io::add_parameters(file, "adam/" + n + "/v/", adams[i]->v);
  }
  if (models.S_pred) {
    file.meta.emplace_back("spec/S_pred", spec_to_string(models.S_pred->spec()));
    io::add_parameters(file, "S_pred/", models.S_pred->params);
  }
  io::save_tensor_file(file, dir / "checkpoint.smt");

  json st{{"format", "smile-train-state"},
          {"version", 1},
          {"phase", phase_name(state.phase)},
          {"epoch", state.epoch},
          {"epsilon", state.epsilon},
          {"rng", {{"root_seed", config.seed}, {"batching", "stream_seed(root, batches/{labeled,unlabeled}, phase<<32|epoch)"}}},
          {"config", config_json(config)},
          {"history", history_array(state.history)}};
  write_text(dir / "state.json", st.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto path = dir / "checkpoint.smt";
  const auto file = io::load_tensor_file(path);
  const auto spec_of = [&](const std::string& n) {
    const auto* s = file.find_meta("spec/" + n);
    if (!s) throw ParseError(path.string(), "meta 'spec/" + n + "'", "missing");
    try {
      return spec_from_string(*s);
    } catch (const std::exception& e) {
      throw ParseError(path.string(), "meta 'spec/" + n + "'", e.what());
    }
  };
  ModelBundle models{Network(spec_of("G")), Network(spec_of("S")), Network(spec_of("R")), std::nullopt};
  if (file.find_meta("spec/S_pred")) {
    models.S_pred.emplace(spec_of("S_pred"));
    io::read_parameters(file, "S_pred/", models.S_pred->params, path.string());
  }

  const auto state_path = dir / "state.json";
  json st;
  try {
    st = json::parse(read_text(state_path));
  } catch (const json::exception& e) {
    throw ParseError(state_path.string(), "document", e.what());
  }
  TrainConfig config;
  TrainState state;
  try {
    config = config_from(st.at("config"));
    state.phase = phase_from_name(st.at("phase").get<std::string>());
    state.epoch = st.at("epoch").get<int>();
    state.epsilon = st.at("epsilon").get<double>();
    for (const auto& r : st.at("history")) state.history.push_back(record_from(r));
  } catch (const std::exception& e) {
    throw ParseError(state_path.string(), "state", e.what());
  }

  Network* nets[] = {&models.G, &models.S, &models.R};
  nn::AdamState<float>* adams[] = {&state.adam_G, &state.adam_S, &state.adam_R};
  const char* names[] = {"G", "S", "R"};
  for (int i = 0; i < 3; ++i) {
    const std::string n = names[i];
    io::read_parameters(file, n + "/", nets[i]->params, path.string());
    *adams[i] = nn::AdamState<float>::like(nets[i]->params);
    io::read_parameters(file, "adam/" + n + "/m/", adams[i]->m, path.string());
    io::read_parameters(file, "adam/" + n + "/v/", adams[i]->v, path.string());
    const auto* step = file.find_meta("adam_step/" + n);
    if (!step) throw ParseError(path.string(), "meta 'adam_step/" + n + "'", "missing");
    adams[i]->step = std::stoll(*step);
  }
  return Checkpoint{std::move(models), std::move(state), config};
}

// ---------------------------------------------------------------------------
// Full schedule

namespace {

std::uint64_t epoch_key(Phase p, int epoch) {
  return (static_cast<std::uint64_t>(p) << 32) | static_cast<std::uint32_t>(epoch);
}

struct Accum {
  LossBreakdown sum;
  int n = 0;
  void add(const LossBreakdown& b) {
    sum.merge(b);
    ++n;
  }
  [[nodiscard]] LossBreakdown mean() const { return n ? scaled(sum, 1.0 / n) : LossBreakdown{}; }
};

json dataset_summary(const data::DatasetSplit& split) {
  int labeled = 0, abnormal = 0;
  for (const auto& s : split.train) {
    labeled += s.labeled() ? 1 : 0;
    abnormal += s.is_abnormal ? 1 : 0;
  }
  return json{{"n_train", split.train.size()},
              {"n_train_abnormal", abnormal},
              {"n_labeled", labeled},
              {"n_unlabeled", int(split.train.size()) - labeled},
              {"n_validation", split.validation.size()},
              {"n_test", split.test.size()},
              {"labeled_fraction", split.labeled_fraction}};
}

}  // namespace

TrainResult run_training(const TrainConfig& config_in, const data::DatasetSplit& split_in, const TrainOptions& opt) {
  config_in.validate();
  TrainConfig config = config_in;

  std::optional<ModelBundle> models;
  TrainState state;
  if (opt.resume_from) {
    auto ck = load_checkpoint(*opt.resume_from);
    if (config_json(ck.config) != config_json(config)) {
      throw ConfigError("resume: checkpoint config differs from the requested config");
    }
    models.emplace(std::move(ck.models));
    state = std::move(ck.state);
  } else {
    models.emplace(ModelBundle::create(config.arch, config.seed));
    state = TrainState::fresh(*models, config);
  }

  const data::DatasetSplit* split = &split_in;
  data::DatasetSplit stripped;
  if (config.labeled_fraction < 1.0 && split_in.labeled_fraction != config.labeled_fraction) {
    if (split_in.labeled_fraction != 1.0) {
      throw ConfigError("split is already stripped to a different labeled fraction");
    }
    stripped = data::strip_labels(split_in, config.labeled_fraction, stream_seed(config.seed, "labels"));
    split = &stripped;
  }
  std::vector<std::size_t> labeled, unlabeled;
  for (std::size_t i = 0; i < split->train.size(); ++i) (split->train[i].labeled() ? labeled : unlabeled).push_back(i);
  if (labeled.empty()) throw InsufficientDataError("no labeled training samples");
  if (!config.semi_enabled) unlabeled.clear();

  Trainer trainer(*models, config, std::move(state));
  const bool write = !opt.out_dir.empty();
  const auto ck_root = opt.out_dir / "checkpoints";
  std::string last_good = "none";

  Phase phase = trainer.state().phase;
  int start_epoch = trainer.state().epoch + 1;
  if (start_epoch > config.epochs_per_phase) {
    phase = static_cast<Phase>(static_cast<int>(phase) + 1);
    start_epoch = 1;
  }

  try {
    for (; static_cast<int>(phase) <= static_cast<int>(opt.last_phase) && static_cast<int>(phase) <= 4;
         phase = static_cast<Phase>(static_cast<int>(phase) + 1), start_epoch = 1) {
      for (int epoch = start_epoch; epoch <= config.epochs_per_phase; ++epoch) {
        std::vector<std::size_t> order = labeled;
        Rng brng = make_stream(config.seed, "batches/labeled", epoch_key(phase, epoch));
        shuffle(order.begin(), order.end(), brng);
        std::vector<std::size_t> uorder = unlabeled;
        Rng urng = make_stream(config.seed, "batches/unlabeled", epoch_key(phase, epoch));
        shuffle(uorder.begin(), uorder.end(), urng);

        const bool semi = !uorder.empty() && phase != Phase::P2_R &&
                          !(phase == Phase::P1_GS && epoch <= config.semi_warmup_epochs);
        const auto lr = batch_ranges(order.size(), config.batch_size);
        const auto ur = semi ? batch_ranges(uorder.size(), config.batch_size)
                             : std::vector<std::pair<std::size_t, std::size_t>>{};

        EpochRecord rec;
        rec.phase = phase;
        rec.epoch = epoch;
        rec.epsilon = trainer.state().epsilon;
        Accum lab, sem;
        for (std::size_t k = 0; k < std::max(lr.size(), ur.size()); ++k) {
          if (k < lr.size()) {
            const Batch b = make_batch(split->train, order, lr[k].first, lr[k].second);
            rec.n_abnormal += b.n_abnormal;
            rec.n_normal += b.size() - b.n_abnormal;
            lab.add(trainer.step(phase, b).combined());
          }
          if (k < ur.size()) {
            const Batch u = make_batch(split->train, uorder, ur[k].first, ur[k].second);
            sem.add(trainer.semi_step(u, phase).combined());
          }
        }
        trainer.finish_epoch();
        rec.losses = lab.mean();
        rec.semi_losses = sem.mean();
        rec.steps = lab.n;
        rec.semi_steps = sem.n;
        rec.validation = validate_models(*models, split->validation, phase, opt.s_pred);
        auto& st = trainer.state();
        st.phase = phase;
        st.epoch = epoch;
        st.history.push_back(rec);
        if (opt.progress) *opt.progress << progress_line(rec) << '\n' << std::flush;

        if (write) {
          save_checkpoint(ck_root / "latest", *models, st, config);
          last_good = (ck_root / "latest").string();
          if (epoch == config.epochs_per_phase) {
            save_checkpoint(ck_root / phase_name(phase), *models, st, config);
            last_good = (ck_root / phase_name(phase)).string();
          }
        }
      }
    }
  } catch (const TrainingDivergedError& e) {
    throw TrainingDivergedError(std::string(e.what()) + "; last good checkpoint: " + last_good);
  } catch (const nn::NonFiniteError& e) {
    throw TrainingDivergedError(std::string(e.what()) + "; last good checkpoint: " + last_good);
  }

  json nets = json::object();
  for (const auto& [n, net] : {std::pair<const char*, const Network*>{"G", &models->G}, {"S", &models->S},
                               {"R", &models->R}}) {
    nets[n] = {{"spec", spec_to_string(net->spec())}, {"id", net->id()}, {"init_seed", net->params.init_seed}};
  }
  json phases = json::array();
  for (const auto& r : trainer.state().history) {
    if (r.epoch != config.epochs_per_phase) continue;
    phases.push_back({{"phase", phase_name(r.phase)},
                      {"identity", number_or_null(r.validation.identity)},
                      {"passthrough_mae", number_or_null(r.validation.passthrough_mae)},
                      {"pab_dice", number_or_null(r.validation.pab_dice)},
                      {"healthiness", number_or_null(r.validation.healthiness)}});
  }
  json manifest{{"format", "smile-run-manifest"},
                {"version", 1},
                {"config", config_json(config)},
                {"seeds",
                 {{"root", config.seed},
                  {"init/G", stream_seed(config.seed, "init/G")},
                  {"init/S", stream_seed(config.seed, "init/S")},
                  {"init/R", stream_seed(config.seed, "init/R")},
                  {"labels", stream_seed(config.seed, "labels")}}},
                {"dataset", dataset_summary(*split)},
                {"networks", nets},
                {"s_pred_checkpoint_id", opt.s_pred ? json(opt.s_pred->id()) : json(nullptr)},
                {"history", history_array(trainer.state().history)},
                {"phase_validation", phases},
                {"final_epsilon", trainer.state().epsilon}};
  if (write) {
    json cks = json::array();
    for (const auto& r : phases) cks.push_back("checkpoints/" + r.at("phase").get<std::string>());
    manifest["checkpoints"] = cks;
  }
  TrainResult result{std::move(*models), trainer.state(), manifest.dump(2) + "\n"};
  if (write) {
    std::filesystem::create_directories(opt.out_dir);
    write_text(opt.out_dir / "manifest.json", result.manifest);
  }
  return result;
}

}  // namespace smile::training
