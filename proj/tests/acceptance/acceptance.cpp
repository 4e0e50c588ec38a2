// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.
//
//   smile_acceptance [--work-dir DIR] [--quick] [--only 1,2,...]
//
// --quick shrinks the desk-scale runs (criteria 5-8) for smoke testing; its
// numbers are not the acceptance numbers.

#include "../common/msssim_pairs.hpp"
#include "smile/augmentation.hpp"
#include "smile/data/dataset_io.hpp"
#include "smile/errors.hpp"
#include "smile/losses.hpp"
#include "smile/metrics.hpp"
#include "smile/model.hpp"
#include "smile/runtime.hpp"
#include "smile/segmentor.hpp"
#include "smile/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace smile;
namespace fs = std::filesystem;
using nn::Mat;
using nn::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Scalar-loop oracles

Outcome criterion1() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int trials = 0, mismatches = 0;
  auto note = [&](double a, double b) {
    worst = std::max(worst, std::abs(a - b));
    if (!(std::abs(a - b) <= 1e-9)) ++mismatches;
  };
  for (int t = 0; t < 120; ++t, ++trials) {
    const int batch = 1 + t % 3;
    const int per = 4 + t % 13;
    const int n = batch * per;
    Mat<double> a(1, n), b(1, n), m(1, n), target(1, n), probs(2, n);
    for (int i = 0; i < n; ++i) {
      a(0, i) = u(rng);
      b(0, i) = u(rng);
      m(0, i) = u(rng) < 0.3 ? 1.0 : 0.0;
      target(0, i) = u(rng) < 0.4 ? 1.0 : 0.0;
      probs(1, i) = t % 10 == 0 && i == 0 ? 0.0 : u(rng);  // exercises the log floor
      probs(0, i) = 1.0 - probs(1, i);
    }

    // masked_mse: per-sample mean over unmasked pixels, then batch mean.
    double acc = 0.0;
    for (int s = 0; s < batch; ++s) {
      double sum = 0.0;
      int cnt = 0;
      for (int i = s * per; i < (s + 1) * per; ++i) {
        if (m(0, i) == 0.0) {
          sum += (a(0, i) - b(0, i)) * (a(0, i) - b(0, i));
          ++cnt;
        }
      }
      if (cnt > 0) acc += sum / cnt;
    }
    note(losses::masked_mse(a, b, m, batch), acc / batch);

    // seg_ce with the probability floor.
    double ce = 0.0;
    for (int i = 0; i < n; ++i) {
      const double p = target(0, i) == 1.0 ? probs(1, i) : probs(0, i);
      ce += -std::log(std::max(p, 1e-7));
    }
    note(losses::seg_ce(probs, target, batch), ce / n);

    // pseudo_label and lesion_area.
    const double eps = 0.5 + 0.45 * u(rng);
    const auto pl = losses::pseudo_label(probs, eps);
    Mat<float> pf = probs.cast<float>();
    std::int64_t area = 0;
    for (int i = 0; i < n; ++i) {
      note(pl(0, i), probs(1, i) > eps ? 1.0 : 0.0);
      area += pf(1, i) > pf(0, i) ? 1 : 0;
    }
    note(double(metrics::lesion_area(pf)), double(area));

    // dice on random masks.
    data::LesionMask p(per, batch), q(per, batch);
    std::int64_t inter = 0, sp = 0, sq = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p.data()[i] = u(rng) < 0.3;
      q.data()[i] = u(rng) < 0.3;
      inter += p.data()[i] && q.data()[i];
      sp += p.data()[i];
      sq += q.data()[i];
    }
    note(metrics::dice(p, q), sp + sq == 0 ? 1.0 : 2.0 * inter / double(sp + sq));

    // percentile_clip: nearest-rank percentile by sorting, clamp, divide.
    data::Image img(per, 3 + t % 5);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = float(2.0 * u(rng) - 0.2);
    const double pct = 50.0 + 50.0 * u(rng);
    std::vector<float> sorted(img.data(), img.data() + img.size());
    std::sort(sorted.begin(), sorted.end());
    const int N = int(sorted.size());
    const int rank = std::clamp(int(std::ceil(pct / 100.0 * N)), 1, N);
    const double V = sorted[rank - 1];
    const auto clipped = data::percentile_clip(img, pct);
    for (Eigen::Index i = 0; i < img.size(); ++i) {
      const double x = std::clamp(double(img.data()[i]), 0.0, V);
      note(clipped.data()[i], V > 0 ? double(float(x / V)) : 0.0);
    }
  }
  return {mismatches == 0, fmt("trials=%d max_abs_diff=%.3g mismatches=%d (tol 1e-9)", trials, worst, mismatches)};
}

// ---------------------------------------------------------------------------
// 2. MS-SSIM against the recorded TensorFlow reference

Outcome criterion2() {
  std::ifstream in(std::string(SMILE_FIXTURE_DIR) + "/msssim_reference.tsv");
  if (!in) return {false, "missing fixture msssim_reference.tsv"};
  std::string line;
  std::getline(in, line);
  std::vector<double> ref;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    int k;
    double v;
    if (ls >> k >> v) ref.push_back(v);
  }
  const auto pairs = testing::msssim_pairs();
  if (ref.size() != pairs.size()) return {false, "fixture size mismatch"};
  double worst = 0.0, worst_identity = 0.0;
  const metrics::SsimConfig cfg;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    worst = std::max(worst, std::abs(metrics::ms_ssim(pairs[k].first, pairs[k].second, cfg) - ref[k]));
    worst_identity = std::max(worst_identity, std::abs(metrics::ms_ssim(pairs[k].first, pairs[k].first, cfg) - 1.0));
  }
  return {worst < 1e-4 && worst_identity < 1e-9,
          fmt("pairs=%zu max_abs_diff=%.3g (tol 1e-4) identity_max_dev=%.3g (tol 1e-9)", pairs.size(), worst,
              worst_identity)};
}

// ---------------------------------------------------------------------------
// 3. Gradient checks of the four training losses through the networks

struct DoubleNets {
  nn::UNet<double> G{nn::generator_spec(2, 2)}, S{nn::segmentor_spec(2, 2)}, R{nn::reconstructor_spec(2, 2)};
  nn::ParameterSet<double> g, s, r;
};

void jitter(nn::ParameterSet<double>& p, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& t : p.tensors)
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += n(rng);
}

Tensor<double> recon_input(const Tensor<double>& pn, const Mat<double>& mask) {
  Tensor<double> m(1, pn.batch, pn.height, pn.width);
  m.data = mask;
  return nn::concat_channels(pn, m);
}

Outcome criterion3() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  DoubleNets nets;
  nets.g = nets.G.init(1);
  nets.s = nets.S.init(2);
  nets.r = nets.R.init(3);
  jitter(nets.g, rng, 0.02);
  jitter(nets.s, rng, 0.05);
  jitter(nets.r, rng, 0.02);

  const int B = 2, H = 8, W = 8;
  Tensor<double> img(1, B, H, W);
  Mat<double> mask(1, B * H * W);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) {
    img.data.data()[i] = u(rng);
    mask.data()[i] = u(rng) > 0.65 ? 1.0 : 0.0;
  }
  const Mat<double> pseudo = [&] {
    const auto p = nets.S.forward(nets.s, img);
    return losses::pseudo_label(p.data, 0.5);
  }();

  // Each loss as a function of the parameters it trains, with analytic
  // gradient accumulated into `grad`.
  struct Case {
    const char* name;
    nn::ParameterSet<double>* params;
    std::function<double(nn::ParameterSet<double>* grad)> eval;
  };
  const std::vector<Case> cases{
      {"generator", &nets.g,
       [&](nn::ParameterSet<double>* grad) {
         nn::UNet<double>::Tape tg, ts;
         const auto pn = nets.G.forward(nets.g, img, &tg);
         const auto sp = nets.S.forward(nets.s, pn, &ts);
         const auto gl = losses::generator_loss(img.data, mask, pn.data, sp.data, B);
         if (grad) {
           const auto through = nets.S.backward(nets.s, ts, gl.grad_s_probs, nullptr, true);
           nets.G.backward(nets.g, tg, (gl.grad_g_out + through.data).eval(), grad, false);
         }
         return gl.breakdown.total;
       }},
      {"segmentor", &nets.s,
       [&](nn::ParameterSet<double>* grad) {
         const auto pn = nets.G.forward(nets.g, img);
         const auto pab = nets.R.forward(nets.r, recon_input(pn, mask));
         nn::UNet<double>::Tape t1, t2;
         const auto s1 = nets.S.forward(nets.s, pn, &t1);
         const auto s2 = nets.S.forward(nets.s, pab, &t2);
         const auto sl = losses::segmentor_loss(s1.data, &s2.data, mask, B);
         if (grad) {
           nets.S.backward(nets.s, t1, sl.grad_pn, grad, false);
           nets.S.backward(nets.s, t2, sl.grad_pab, grad, false);
         }
         return sl.breakdown.total;
       }},
      {"reconstructor", &nets.r,
       [&](nn::ParameterSet<double>* grad) {
         const auto pn = nets.G.forward(nets.g, img);
         nn::UNet<double>::Tape tr, ts;
         const auto pab = nets.R.forward(nets.r, recon_input(pn, mask), &tr);
         const auto sab = nets.S.forward(nets.s, pab, &ts);
         Mat<double> g_rec, g_seg;
         const double loss = losses::reconstruction_loss(pab.data, img.data, B, &g_rec) +
                             losses::seg_ce(sab.data, mask, B, &g_seg);
         if (grad) {
           const auto through = nets.S.backward(nets.s, ts, g_seg, nullptr, true);
           nets.R.backward(nets.r, tr, (g_rec + through.data).eval(), grad, false);
         }
         return loss;
       }},
      {"semi_confidence", &nets.s,
       [&](nn::ParameterSet<double>* grad) {
         nn::UNet<double>::Tape ts;
         const auto p = nets.S.forward(nets.s, img, &ts);
         Mat<double> g;
         const double loss = losses::semi_confidence_loss(p.data, pseudo, B, &g);
         if (grad) nets.S.backward(nets.s, ts, g, grad, false);
         return loss;
       }},
  };

  std::string detail;
  bool ok = true;
  for (const auto& c : cases) {
    auto grad = c.params->zeros_like();
    c.eval(&grad);
    // 20 sampled parameters, drawn across all tensors.
    std::vector<std::pair<std::size_t, Eigen::Index>> all;
    for (std::size_t t = 0; t < c.params->size(); ++t)
      for (Eigen::Index i = 0; i < c.params->tensors[t].size(); ++i) all.emplace_back(t, i);
    std::shuffle(all.begin(), all.end(), rng);
    double worst = 0.0;
    int checked = 0;
    for (const auto& [t, i] : all) {
      if (checked == 20) break;
      const double an = grad.tensors[t].data()[i];
      double& w = c.params->tensors[t].data()[i];
      const double keep = w;
      const double h = 1e-6;
      w = keep + h;
      const double fp = c.eval(nullptr);
      w = keep - h;
      const double fm = c.eval(nullptr);
      w = keep;
      const double fd = (fp - fm) / (2 * h);
      // Parameters with no influence (both sides ~0) carry no information.
      const double scale = std::max(std::abs(an), std::abs(fd));
      if (scale < 1e-7) continue;
      worst = std::max(worst, std::abs(an - fd) / scale);
      ++checked;
    }
    ok = ok && checked == 20 && worst < 1e-3;
    detail += fmt("%s:n=%d max_rel=%.2g ", c.name, checked, worst);
  }
  return {ok, detail + "(tol 1e-3)"};
}

// ---------------------------------------------------------------------------
// 4. Gradient isolation per sub-update

Outcome criterion4() {
  data::PhantomConfig pc;
  pc.n_samples = 24;
  pc.seed = 44;
  const auto samples = data::generate_phantom(pc);
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto batch = make_batch(samples, idx, 0, 8);

  training::TrainConfig cfg;
  cfg.arch = {3, 4};
  cfg.seed = 4;
  auto models = ModelBundle::create(cfg.arch, cfg.seed);
  training::Trainer trainer(models, cfg);
  struct H {
    std::uint64_t g, s, r;
  };
  auto now = [&] {
    return H{nn::parameter_hash(models.G.params), nn::parameter_hash(models.S.params),
             nn::parameter_hash(models.R.params)};
  };
  H before = now();
  std::vector<std::pair<std::string, std::array<bool, 3>>> seen;
  trainer.on_substep = [&](std::string_view tag) {
    const H h = now();
    seen.push_back({std::string(tag), {h.g != before.g, h.s != before.s, h.r != before.r}});
    before = h;
  };
  for (auto p : {training::Phase::P1_GS, training::Phase::P2_R, training::Phase::P3_RS, training::Phase::P4_ALL}) {
    trainer.step(p, batch);
  }
  const std::map<std::string, std::array<bool, 3>> expect{
      {"P1a", {false, true, false}}, {"P1b", {true, false, false}}, {"P2", {false, false, true}},
      {"P3a", {false, true, false}}, {"P3b", {false, false, true}}, {"P4a", {false, true, false}},
      {"P4b", {true, false, true}}};
  int passed = 0;
  std::string bad;
  for (const auto& [tag, changed] : seen) {
    const auto it = expect.find(tag);
    if (it != expect.end() && it->second == changed) {
      ++passed;
    } else {
      bad += " " + tag;
    }
  }
  const bool ok = passed == int(expect.size()) && seen.size() == expect.size();
  return {ok, fmt("isolation assertions passed=%d/%zu (P1a P1b P2 P3a P3b P4a P4b)%s", passed, expect.size(),
                  bad.empty() ? "" : (" failing:" + bad).c_str())};
}

// ---------------------------------------------------------------------------
// Desk-scale runs shared by criteria 5-8

struct DeskScale {
  int n_samples = 2400;  // 2000 train / 200 validation / 200 test
  int epochs = 10;
  std::uint64_t seed = 7;
};

struct Desk {
  DeskScale scale;
  fs::path dir;
  data::DatasetSplit split;
  std::optional<Network> s_pred;
  std::map<double, training::TrainResult> runs;  // by labeled fraction
  std::map<double, double> run_seconds;
  double s_pred_dice = 0.0;

  const Network& evaluator() {
    if (!s_pred) {
      const auto t0 = std::chrono::steady_clock::now();
      SegmentorRecipe r;
      r.seed = stream_seed(scale.seed, "s_pred");
      auto sp = train_eval_segmentor(split.train, split.validation, r, &std::cout);
      s_pred_dice = sp.validation_dice;
      save_network(sp.net, dir / "s_pred.smt");
      std::printf("s_pred validation_dice=%.4f epochs=%d (%.0f s)\n", sp.validation_dice, sp.epochs_run,
                  seconds_since(t0));
      s_pred.emplace(std::move(sp.net));
    }
    return *s_pred;
  }

  training::TrainResult& run(double fraction) {
    auto it = runs.find(fraction);
    if (it != runs.end()) return it->second;
    training::TrainConfig cfg;
    cfg.seed = scale.seed;
    cfg.epochs_per_phase = scale.epochs;
    cfg.labeled_fraction = fraction;
    const auto t0 = std::chrono::steady_clock::now();
    training::TrainOptions opt;
    opt.out_dir = dir / fmt("run_f%.2f", fraction);
    opt.progress = &std::cout;
    opt.s_pred = &evaluator();
    auto result = training::run_training(cfg, split, opt);
    run_seconds[fraction] = seconds_since(t0);
    std::printf("run labeled_fraction=%.2f took %.0f s\n", fraction, run_seconds[fraction]);
    return runs.emplace(fraction, std::move(result)).first->second;
  }

  metrics::MetricsReport test_report(double fraction) { return metrics::evaluate(run(fraction).models.G, evaluator(), split.test); }
};

Outcome criterion5(Desk& d) {
  const auto t0 = std::chrono::steady_clock::now();
  d.run(1.0);
  const double train_s = d.run_seconds[1.0];
  const auto rep = d.test_report(1.0);
  const Network identity(nn::generator_spec(3, 4), 0);
  const auto base = metrics::evaluate(identity, d.evaluator(), d.split.test);
  const bool ok = rep.identity >= 0.95 && rep.healthiness >= 0.60 && rep.healthiness > base.healthiness &&
                  train_s <= 1800.0;
  (void)t0;
  return {ok, fmt("test iD=%.4f (>=0.95) h=%.4f (>=0.60) identity-baseline h=%.4f iD=%.4f train_time=%.0fs (<=1800) "
                  "s_pred_val_dice=%.3f",
                  rep.identity, rep.healthiness, base.healthiness, base.identity, train_s, d.s_pred_dice)};
}

Outcome criterion6(Desk& d) {
  std::map<double, metrics::MetricsReport> rep;
  double total = 0.0;
  for (double f : {1.0, 0.75, 0.5}) {
    rep[f] = d.test_report(f);
    total += d.run_seconds[f];
  }
  const double h1 = rep[1.0].healthiness, h75 = rep[0.75].healthiness, h50 = rep[0.5].healthiness;
  const double id_min = std::min({rep[1.0].identity, rep[0.75].identity, rep[0.5].identity});
  const bool ok = h75 >= h1 - 0.10 && h50 <= h75 && id_min >= 0.90 && total <= 5400.0;
  return {ok, fmt("h(1.0)=%.4f h(0.75)=%.4f (>= h(1.0)-0.10) h(0.5)=%.4f (<= h(0.75)) iD=%.4f/%.4f/%.4f (>=0.90) "
                  "time=%.0fs (<=5400)",
                  h1, h75, h50, rep[1.0].identity, rep[0.75].identity, rep[0.5].identity, total)};
}

Outcome criterion7(Desk& d) {
  const auto t0 = std::chrono::steady_clock::now();
  SegmentorRecipe recipe;
  recipe.stop_at_target = true;
  const auto rows = augmentation::regime_sweep(d.run(1.0).models, d.split,
                                               {augmentation::kAllRegimes.begin(), augmentation::kAllRegimes.end()},
                                               {1, 2, 3}, recipe, &std::cout);
  augmentation::save_table(rows, d.dir / "augment_table.tsv");
  const auto summary = augmentation::summarize(rows);
  const auto check = augmentation::directional_check(summary);
  const double secs = seconds_since(t0);
  std::string means;
  for (const auto& s : summary) {
    means += fmt("%s=%.4f±%.4f ", augmentation::regime_name(s.regime).c_str(), s.mean, s.stddev);
  }
  return {check.pass() && secs <= 2700.0,
          means + fmt("gap=%.4f (>0 and >2*spread=%.4f) pn_ok=%d pa_ok=%d time=%.0fs (<=2700)", check.gap,
                      2 * check.spread, int(check.pn_ok), int(check.pa_ok), secs)};
}

Outcome criterion8(Desk& d) {
  const double mae = metrics::normal_passthrough_mae(d.run(1.0).models.G, d.split.validation);
  return {mae < 0.02, fmt("normal validation mean |G(I)-I|=%.5f (<0.02)", mae)};
}

// ---------------------------------------------------------------------------
// 9-10. Determinism, persistence, degeneracy (small but full-size images)

training::TrainOptions options(fs::path out, std::optional<fs::path> resume = std::nullopt) {
  training::TrainOptions o;
  o.out_dir = std::move(out);
  o.resume_from = std::move(resume);
  return o;
}

data::DatasetSplit small_split() {
  data::PhantomConfig pc;
  pc.n_samples = 96;
  pc.seed = 99;
  return data::split_dataset(data::generate_phantom(pc), {}, 99);
}

training::TrainConfig small_config() {
  training::TrainConfig c;
  c.epochs_per_phase = 1;
  c.seed = 5;
  return c;
}

Outcome criterion9(const fs::path& dir) {
  const auto split = small_split();
  std::vector<std::string> failures;

  const auto a = training::run_training(small_config(), split, options(dir / "a"));
  const auto b = training::run_training(small_config(), split, options(dir / "b"));
  if (a.manifest != b.manifest) failures.push_back("manifests differ");

  data::save_dataset(split, dir / "dataset");
  if (!(data::load_dataset(dir / "dataset") == split)) failures.push_back("dataset round-trip");

  const auto ck = training::load_checkpoint(dir / "a/checkpoints/P4");
  if (!(ck.models.G.params == a.models.G.params && ck.models.S.params == a.models.S.params &&
        ck.models.R.params == a.models.R.params)) {
    failures.push_back("checkpoint parameters");
  }
  if (!(ck.state.adam_G.m == a.state.adam_G.m && ck.state.adam_R.v == a.state.adam_R.v)) {
    failures.push_back("checkpoint optimizer state");
  }
  if (training::history_json(ck.state.history) != training::history_json(a.state.history)) {
    failures.push_back("checkpoint history");
  }
  training::save_checkpoint(dir / "resave", ck.models, ck.state, ck.config);
  const auto ck2 = training::load_checkpoint(dir / "resave");
  if (!(ck2.models.G.params == ck.models.G.params) || ck2.state.epsilon != ck.state.epsilon) {
    failures.push_back("checkpoint re-save");
  }

  const auto resumed =
      training::run_training(small_config(), split, options(dir / "resumed", dir / "a/checkpoints/P2"));
  if (training::history_json(resumed.state.history) != training::history_json(a.state.history)) {
    failures.push_back("resume replay losses");
  }
  if (!(resumed.models.G.params == a.models.G.params && resumed.models.R.params == a.models.R.params)) {
    failures.push_back("resume final parameters");
  }
  std::string detail = "same-seed manifests, dataset round-trip, checkpoint round-trip, resume from P2";
  for (const auto& f : failures) detail += "; FAILED: " + f;
  return {failures.empty(), detail};
}

Outcome criterion10() {
  const auto split = small_split();
  auto semi = small_config();
  semi.labeled_fraction = 1.0;
  auto sup = small_config();
  sup.semi_enabled = false;
  const auto a = training::run_training(semi, split);
  const auto b = training::run_training(sup, split);
  const bool same = training::history_json(a.state.history) == training::history_json(b.state.history) &&
                    a.models.G.params == b.models.G.params && a.models.S.params == b.models.S.params &&
                    a.models.R.params == b.models.R.params;
  int semi_steps = 0;
  for (const auto& r : a.state.history) semi_steps += r.semi_steps;
  return {same && semi_steps == 0,
          fmt("trace and parameters identical=%d semi_steps=%d", int(same), semi_steps)};
}

}  // namespace

int main(int argc, char** argv) {
  configure_process();
  CLI::App app{"SMILE acceptance run"};
  std::string work_dir = "acceptance_work";
  bool quick = false;
  std::vector<int> only;
  app.add_option("--work-dir", work_dir)->capture_default_str();
  app.add_flag("--quick", quick, "Shrink the desk-scale runs");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path dir = work_dir;
  fs::create_directories(dir);
  std::set<int> selected(only.begin(), only.end());
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  Desk desk;
  if (quick) desk.scale = {600, 3, 7};
  desk.dir = dir / "desk";
  if (selected.count(5) || selected.count(6) || selected.count(7) || selected.count(8)) {
    fs::create_directories(desk.dir);
    data::PhantomConfig pc;
    pc.n_samples = desk.scale.n_samples;
    pc.seed = desk.scale.seed;
    desk.split = data::split_dataset(data::generate_phantom(pc), {}, stream_seed(pc.seed, "split"));
    std::printf("desk dataset: train=%zu validation=%zu test=%zu epochs_per_phase=%d%s\n", desk.split.train.size(),
                desk.split.validation.size(), desk.split.test.size(), desk.scale.epochs, quick ? " (quick)" : "");
  }

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion1},
      {2, criterion2},
      {3, criterion3},
      {4, criterion4},
      {5, [&] { return criterion5(desk); }},
      {8, [&] { return criterion8(desk); }},
      {6, [&] { return criterion6(desk); }},
      {7, [&] { return criterion7(desk); }},
      {9, [&] {
         fs::remove_all(dir / "determinism");
         return criterion9(dir / "determinism");
       }},
      {10, criterion10},
  };

  std::map<int, std::pair<Outcome, double>> results;
  for (const auto& [id, fn] : criteria) {
    if (!selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    std::printf("criterion %d: %s (%.1f s) %s\n", id, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    results[id] = {o, secs};
  }

  std::printf("\n==== acceptance summary%s ====\n", quick ? " (quick mode, not the acceptance scale)" : "");
  int failed = 0;
  for (const auto& [id, r] : results) {
    std::printf("criterion %2d: %s  %s\n", id, r.first.pass ? "PASS" : "FAIL", r.first.detail.c_str());
    failed += !r.first.pass;
  }
  std::printf("passed %zu/%zu\n", results.size() - failed, results.size());
  return failed == 0 ? 0 : 1;
}
