// smile: command-line front end (phantom-gen, train, evaluate,
// augment-study, report).
//
// Exit codes: 0 ok, 2 config/usage, 3 malformed input file, 4 infeasible
// config, 5 insufficient data, 6 training diverged, 7 evaluation segmentor
// unusable, 8 internal validation failed, 9 other I/O or runtime error.

#include "report.hpp"

#include "smile/augmentation.hpp"
#include "smile/data/dataset_io.hpp"
#include "smile/errors.hpp"
#include "smile/metrics.hpp"
#include "smile/rng.hpp"
#include "smile/runtime.hpp"
#include "smile/segmentor.hpp"
#include "smile/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace smile;

namespace {

enum Exit : int {
  kOk = 0,
  kConfig = 2,
  kParse = 3,
  kInfeasible = 4,
  kInsufficient = 5,
  kDiverged = 6,
  kEvalSegmentor = 7,
  kValidation = 8,
  kRuntime = 9,
};

struct ValidationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

/// --out when given, else <runs_root>/<UTC timestamp>-seed<seed>.
fs::path run_dir(const std::string& out, const std::string& runs_root, std::uint64_t seed) {
  fs::path dir;
  if (!out.empty()) {
    dir = out;
  } else {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);
    dir = fs::path(runs_root) / (std::string(stamp) + "-seed" + std::to_string(seed));
  }
  fs::create_directories(dir);
  return dir;
}

/// Accepts a checkpoint directory or a training run directory (uses its
/// final phase checkpoint).
fs::path resolve_checkpoint(const fs::path& p) {
  if (fs::exists(p / "checkpoint.smt")) return p;
  for (const char* phase : {"P4", "P3", "P2", "P1", "latest"}) {
    if (fs::exists(p / "checkpoints" / phase / "checkpoint.smt")) return p / "checkpoints" / phase;
  }
  throw ParseError(p.string(), "checkpoint", "no checkpoint.smt found");
}

bool completed_schedule(const training::Checkpoint& ck) {
  return ck.state.phase == training::Phase::P4_ALL && ck.state.epoch == ck.config.epochs_per_phase;
}

// ---------------------------------------------------------------------------

struct PhantomArgs {
  data::PhantomConfig cfg;
  int count_min = 1, count_max = 3;
  double radius_min = 3.0, radius_max = 6.0;
  std::string out;
};

int cmd_phantom_gen(const PhantomArgs& a, const std::string& resolved) {
  auto cfg = a.cfg;
  cfg.lesion_count_range = {a.count_min, a.count_max};
  cfg.lesion_radius_range = {a.radius_min, a.radius_max};
  cfg.validate();
  const auto split = data::split_dataset(data::generate_phantom(cfg), {}, stream_seed(cfg.seed, "split"));
  const fs::path out = a.out;
  data::save_dataset(split, out);
  write_file(out / "resolved_config.toml", resolved);

  std::printf("dataset=%s\n", out.string().c_str());
  std::vector<std::int64_t> areas;
  int abnormal = 0, total = 0;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& s : *part) {
      ++total;
      if (s.is_abnormal) {
        ++abnormal;
        areas.push_back(data::mask_area(*s.mask));
      }
    }
  }
  std::printf("train=%zu validation=%zu test=%zu abnormal_fraction=%.4f\n", split.train.size(),
              split.validation.size(), split.test.size(), double(abnormal) / total);
  if (!areas.empty()) {
    const std::int64_t hi = *std::max_element(areas.begin(), areas.end());
    const std::int64_t width = std::max<std::int64_t>(1, (hi + 9) / 10);
    std::map<std::int64_t, int> hist;
    for (auto v : areas) ++hist[v / width];
    std::printf("lesion_area_histogram (pixels per abnormal image)\n");
    for (const auto& [bin, n] : hist) {
      std::printf("  [%4lld,%4lld) %5d %s\n", static_cast<long long>(bin * width),
                  static_cast<long long>((bin + 1) * width), n, std::string(std::size_t(n * 50 / areas.size()), '#').c_str());
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, runs_root = "runs", resume, s_pred;
  training::TrainConfig cfg;
  bool no_semi = false;
  std::string last_phase = "P4";
};

int cmd_train(TrainArgs a, const std::string& resolved) {
  const auto split = data::load_dataset(a.data);
  training::TrainOptions opt;
  opt.progress = &std::cout;
  auto cfg = a.cfg;
  cfg.semi_enabled = !a.no_semi;
  std::string out = a.out;
  if (!a.resume.empty()) {
    const fs::path ck = resolve_checkpoint(a.resume);
    cfg = training::load_checkpoint(ck).config;
    std::printf("resume=%s (configuration taken from the checkpoint)\n", ck.string().c_str());
    opt.resume_from = ck;
    if (out.empty()) out = ck.parent_path().parent_path().string();
  }
  const fs::path dir = run_dir(out, a.runs_root, cfg.seed);
  std::optional<Network> s_pred;
  if (!a.s_pred.empty()) {
    s_pred = load_network(a.s_pred);
    opt.s_pred = &*s_pred;
  }
  opt.out_dir = dir;
  opt.last_phase = training::phase_from_name(a.last_phase);
  write_file(dir / "resolved_config.toml", resolved);
  auto result = training::run_training(cfg, split, opt);

  auto manifest = nlohmann::ordered_json::parse(result.manifest);
  manifest["cli_resolved_config"] = resolved;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  std::printf("run_dir=%s\n", dir.string().c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct SPredArgs {
  std::string path;
  int epochs = 20;
  double lr = 1e-3;
  int depth = 3, base = 4;
  double target = 0.85, min_dice = 0.60;
  std::uint64_t seed = 0;
};

Network obtain_s_pred(const SPredArgs& a, const data::DatasetSplit& split, const fs::path& dir) {
  if (!a.path.empty()) return load_network(a.path);
  SegmentorRecipe r;
  r.arch = {a.depth, a.base};
  r.learning_rate = a.lr;
  r.epochs = a.epochs;
  r.target_dice = a.target;
  r.min_dice = a.min_dice;
  r.seed = stream_seed(a.seed, "s_pred");
  std::printf("no S_pred given: training one\n");
  auto sp = train_eval_segmentor(split.train, split.validation, r, &std::cout);
  save_network(sp.net, dir / "s_pred.smt");
  std::printf("s_pred=%s id=%s validation_dice=%.4f\n", (dir / "s_pred.smt").string().c_str(), sp.net.id().c_str(),
              sp.validation_dice);
  return std::move(sp.net);
}

struct EvaluateArgs {
  std::string data, checkpoint, generator, out, runs_root = "runs", split = "test";
  int depth = 3, base = 4;
  SPredArgs s_pred;
};

int cmd_evaluate(const EvaluateArgs& a, const std::string& resolved) {
  const auto split = data::load_dataset(a.data);
  const fs::path dir = run_dir(a.out, a.runs_root, a.s_pred.seed);
  write_file(dir / "resolved_config.toml", resolved);
  std::optional<Network> G;
  if (a.generator == "identity") {
    G.emplace(nn::generator_spec(a.depth, a.base), 0);
  } else if (!a.checkpoint.empty()) {
    G.emplace(training::load_checkpoint(resolve_checkpoint(a.checkpoint)).models.G);
  } else {
    throw ConfigError("evaluate: give --checkpoint or --generator identity");
  }
  const Network s_pred = obtain_s_pred(a.s_pred, split, dir);
  const auto& samples = a.split == "validation" ? split.validation : split.test;
  auto rep = metrics::evaluate(*G, s_pred, samples);

  auto check = rep;
  check.recompute_headline();
  if (check.healthiness != rep.healthiness || check.identity != rep.identity) {
    throw ValidationFailed("report headline differs from the per-sample recomputation");
  }
  write_file(dir / "report.json", metrics::report_to_json(rep));
  write_file(dir / "per_sample.tsv", metrics::report_table(rep));
  std::printf("split=%s n=%d healthiness=%.6f identity=%.6f normal_passthrough_mae=%.6f s_pred=%s generator=%s\n",
              a.split.c_str(), rep.n_samples, rep.healthiness, rep.identity, rep.normal_passthrough_mae,
              rep.s_pred_checkpoint_id.c_str(), rep.generator_checkpoint_id.c_str());
  std::printf("run_dir=%s\n", dir.string().c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct AugmentArgs {
  std::string data, checkpoint, out, runs_root = "runs";
  std::vector<std::string> regimes{"none", "pseudo_normal_only", "pseudo_abnormal_only", "both"};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int epochs = 15, depth = 3, base = 4, batch = 8;
  double lr = 1e-3, target_dice = 0.85;
  bool fixed_epochs = false;
};

int cmd_augment_study(const AugmentArgs& a, const std::string& resolved) {
  const auto split = data::load_dataset(a.data);
  const auto ck = training::load_checkpoint(resolve_checkpoint(a.checkpoint));
  const fs::path dir = run_dir(a.out, a.runs_root, a.seeds.empty() ? 0 : a.seeds.front());
  write_file(dir / "resolved_config.toml", resolved);
  std::vector<augmentation::Regime> regimes;
  for (const auto& r : a.regimes) regimes.push_back(augmentation::regime_from_name(r));
  SegmentorRecipe recipe;
  recipe.arch = {a.depth, a.base};
  recipe.learning_rate = a.lr;
  recipe.epochs = a.epochs;
  recipe.batch_size = a.batch;
  recipe.stop_at_target = !a.fixed_epochs;
  recipe.target_dice = a.target_dice;
  const auto rows =
      augmentation::regime_sweep(ck.models, split, regimes, a.seeds, recipe, &std::cout, completed_schedule(ck));
  augmentation::save_table(rows, dir / "table.tsv");

  const auto summary = augmentation::summarize(rows);
  std::ostringstream s;
  s << "regime\tmean_dice\tstd_dice\tn\n";
  for (const auto& r : summary) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s\t%.6f\t%.6f\t%d\n", augmentation::regime_name(r.regime).c_str(), r.mean,
                  r.stddev, r.n);
    s << buf;
  }
  write_file(dir / "summary.tsv", s.str());
  std::cout << s.str();
  const auto check = augmentation::directional_check(summary);
  std::printf("directional_check=%s gap=%.6f spread=%.6f gap_ok=%d pn_ok=%d pa_ok=%d\n", check.pass() ? "pass" : "fail",
              check.gap, check.spread, int(check.gap_ok), int(check.pn_ok), int(check.pa_ok));
  std::printf("run_dir=%s\n", dir.string().c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string data, checkpoint, out, runs_root = "runs";
  int n_panels = 4;
  std::uint64_t seed = 0;
};

int cmd_report(const ReportArgs& a, const std::string& resolved) {
  if (a.n_panels < 0) throw ConfigError("--n-panels must be >= 0");
  const auto split = data::load_dataset(a.data);
  const auto ck = training::load_checkpoint(resolve_checkpoint(a.checkpoint));
  const fs::path dir = run_dir(a.out, a.runs_root, a.seed);
  write_file(dir / "resolved_config.toml", resolved);

  std::vector<std::size_t> abnormal;
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    if (split.test[i].is_abnormal && split.test[i].mask) abnormal.push_back(i);
  }
  if (static_cast<std::size_t>(a.n_panels) > abnormal.size()) {
    throw InsufficientDataError("only " + std::to_string(abnormal.size()) + " abnormal test samples for " +
                                std::to_string(a.n_panels) + " panels");
  }
  Rng rng = make_stream(a.seed, "panels");
  shuffle(abnormal.begin(), abnormal.end(), rng);
  abnormal.resize(static_cast<std::size_t>(a.n_panels));

  std::vector<data::Image> images;
  std::vector<data::LesionMask> masks;
  for (auto i : abnormal) {
    images.push_back(split.test[i].image);
    masks.push_back(*split.test[i].mask);
  }
  const std::string ck_id = ck.models.G.id();
  if (!images.empty()) {
    const auto pn = run_generator(ck.models.G, images);
    const auto pa = run_reconstructor(ck.models.R, pn, masks);
    for (std::size_t k = 0; k < images.size(); ++k) {
      const data::Image m = masks[k].cast<float>();
      char name[128];
      std::snprintf(name, sizeof(name), "panel_%02zu_sample%llu_ckpt%s.pgm", k,
                    static_cast<unsigned long long>(split.test[abnormal[k]].id), ck_id.c_str());
      report::write_panel(dir / name, {images[k], pn[k], pa[k], m});
      std::printf("panel=%s\n", (dir / name).string().c_str());
    }
  }
  for (const auto& p : report::write_curves(dir, ck.state.history)) std::printf("curve=%s\n", p.string().c_str());
  std::printf("panels=%d columns=abnormal,pseudo_normal,pseudo_abnormal,mask\n", a.n_panels);
  std::printf("run_dir=%s\n", dir.string().c_str());
  return kOk;
}

void add_spred_options(CLI::App* cmd, SPredArgs& s) {
  cmd->add_option("--s-pred", s.path, "Frozen evaluation segmentor (trained and saved when absent)");
  cmd->add_option("--s-pred-epochs", s.epochs, "Epoch budget when training S_pred")->capture_default_str();
  cmd->add_option("--s-pred-lr", s.lr, "S_pred learning rate")->capture_default_str();
  cmd->add_option("--s-pred-depth", s.depth, "S_pred U-Net depth")->capture_default_str();
  cmd->add_option("--s-pred-base-channels", s.base, "S_pred base channels")->capture_default_str();
  cmd->add_option("--s-pred-target-dice", s.target, "Stop S_pred training at this validation Dice")
      ->capture_default_str();
  cmd->add_option("--s-pred-min-dice", s.min_dice, "Refuse metrics below this S_pred validation Dice")
      ->capture_default_str();
  cmd->add_option("--seed", s.seed, "Root seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  configure_process();
  CLI::App app{"SMILE pseudo-normality synthesis on procedural brain phantoms"};
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1, 1);

  PhantomArgs pg;
  auto* gen = app.add_subcommand("phantom-gen", "Generate and split a phantom dataset");
  gen->add_option("--out", pg.out, "Output dataset directory")->required();
  gen->add_option("--n", pg.cfg.n_samples, "Number of samples")->capture_default_str();
  gen->add_option("--size", pg.cfg.image_size, "Image side length")->capture_default_str();
  gen->add_option("--abnormal-fraction", pg.cfg.abnormal_fraction)->capture_default_str();
  gen->add_option("--lesion-count-min", pg.count_min)->capture_default_str();
  gen->add_option("--lesion-count-max", pg.count_max)->capture_default_str();
  gen->add_option("--lesion-radius-min", pg.radius_min)->capture_default_str();
  gen->add_option("--lesion-radius-max", pg.radius_max)->capture_default_str();
  gen->add_option("--lesion-intensity-boost", pg.cfg.lesion_intensity_boost)->capture_default_str();
  gen->add_option("--texture-smoothness", pg.cfg.texture_smoothness)->capture_default_str();
  gen->add_option("--clip-percentile", pg.cfg.clip_percentile)->capture_default_str();
  gen->add_option("--clip-group", pg.cfg.clip_group, "Slices per percentile-clipping group")->capture_default_str();
  gen->add_option("--seed", pg.cfg.seed)->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Run the four-phase training schedule");
  train->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", tr.out, "Run directory (default: <runs-root>/<timestamp>-seed<seed>)");
  train->add_option("--runs-root", tr.runs_root)->capture_default_str();
  train->add_option("--labeled-fraction", tr.cfg.labeled_fraction)->capture_default_str();
  train->add_option("--lr", tr.cfg.learning_rate)->capture_default_str();
  train->add_option("--batch-size", tr.cfg.batch_size)->capture_default_str();
  train->add_option("--epochs-per-phase", tr.cfg.epochs_per_phase)->capture_default_str();
  train->add_option("--epsilon", tr.cfg.epsilon_init, "Pseudo-label threshold")->capture_default_str();
  train->add_flag("--epsilon-dynamic", tr.cfg.epsilon_dynamic, "Reset epsilon to the mean confidence every epoch");
  train->add_flag("--no-semi", tr.no_semi, "Ignore unlabeled samples");
  train->add_option("--semi-warmup-epochs", tr.cfg.semi_warmup_epochs)->capture_default_str();
  train->add_option("--seed", tr.cfg.seed)->capture_default_str();
  train->add_option("--depth", tr.cfg.arch.depth)->capture_default_str();
  train->add_option("--base-channels", tr.cfg.arch.base_channels)->capture_default_str();
  train->add_option("--w-gen-mse", tr.cfg.loss_weights.gen_mse)->capture_default_str();
  train->add_option("--w-gen-adv", tr.cfg.loss_weights.gen_adv)->capture_default_str();
  train->add_option("--w-seg-pn", tr.cfg.loss_weights.seg_pn)->capture_default_str();
  train->add_option("--w-seg-pab", tr.cfg.loss_weights.seg_pab)->capture_default_str();
  train->add_option("--w-recon-mse", tr.cfg.loss_weights.recon_mse)->capture_default_str();
  train->add_option("--w-recon-seg", tr.cfg.loss_weights.recon_seg)->capture_default_str();
  train->add_option("--w-semi-ce", tr.cfg.loss_weights.semi_ce)->capture_default_str();
  train->add_option("--resume", tr.resume, "Checkpoint (or run) directory to continue from");
  train->add_option("--s-pred", tr.s_pred, "Evaluation segmentor for per-epoch validation h");
  train->add_option("--last-phase", tr.last_phase, "Stop after this phase")->capture_default_str();

  EvaluateArgs ev;
  auto* eval = app.add_subcommand("evaluate", "Healthiness and identity on the test split");
  eval->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint or run directory");
  eval->add_option("--generator", ev.generator, "'identity' evaluates the copy-input generator")
      ->check(CLI::IsMember({"identity"}));
  eval->add_option("--depth", ev.depth, "Identity generator depth")->capture_default_str();
  eval->add_option("--base-channels", ev.base, "Identity generator base channels")->capture_default_str();
  eval->add_option("--split", ev.split)->check(CLI::IsMember({"test", "validation"}))->capture_default_str();
  eval->add_option("--out", ev.out);
  eval->add_option("--runs-root", ev.runs_root)->capture_default_str();
  add_spred_options(eval, ev.s_pred);

  AugmentArgs au;
  auto* aug = app.add_subcommand("augment-study", "Downstream segmentation Dice under the augmentation regimes");
  aug->add_option("--data", au.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  aug->add_option("--checkpoint", au.checkpoint, "Trained checkpoint or run directory")->required();
  aug->add_option("--regimes", au.regimes)->capture_default_str();
  aug->add_option("--seeds", au.seeds)->capture_default_str();
  aug->add_option("--epochs", au.epochs, "Downstream epoch budget")->capture_default_str();
  aug->add_option("--target-dice", au.target_dice, "Stop downstream training at this validation Dice")
      ->capture_default_str();
  aug->add_flag("--fixed-epochs", au.fixed_epochs, "Always train for --epochs epochs");
  aug->add_option("--lr", au.lr)->capture_default_str();
  aug->add_option("--batch-size", au.batch)->capture_default_str();
  aug->add_option("--depth", au.depth)->capture_default_str();
  aug->add_option("--base-channels", au.base)->capture_default_str();
  aug->add_option("--out", au.out);
  aug->add_option("--runs-root", au.runs_root)->capture_default_str();

  ReportArgs rp;
  auto* rep = app.add_subcommand("report", "Image panels and training curves");
  rep->add_option("--data", rp.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--checkpoint", rp.checkpoint, "Checkpoint or run directory")->required();
  rep->add_option("--n-panels", rp.n_panels)->capture_default_str();
  rep->add_option("--seed", rp.seed)->capture_default_str();
  rep->add_option("--out", rp.out);
  rep->add_option("--runs-root", rp.runs_root)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const std::string resolved = app.config_to_str(true, false);

  try {
    if (*gen) return cmd_phantom_gen(pg, resolved);
    if (*train) return cmd_train(tr, resolved);
    if (*eval) return cmd_evaluate(ev, resolved);
    if (*aug) return cmd_augment_study(au, resolved);
    if (*rep) return cmd_report(rp, resolved);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kParse;
  } catch (const InfeasibleConfigError& e) {
    std::fprintf(stderr, "infeasible config: %s\n", e.what());
    return kInfeasible;
  } catch (const InsufficientDataError& e) {
    std::fprintf(stderr, "insufficient data: %s\n", e.what());
    return kInsufficient;
  } catch (const TrainingDivergedError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return kDiverged;
  } catch (const EvalSegmentorDegenerateError& e) {
    std::fprintf(stderr, "evaluation segmentor degenerate: %s\n", e.what());
    return kEvalSegmentor;
  } catch (const EvalSegmentorUndertrainedError& e) {
    std::fprintf(stderr, "evaluation segmentor undertrained: %s\n", e.what());
    return kEvalSegmentor;
  } catch (const ValidationFailed& e) {
    std::fprintf(stderr, "validation failed: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kConfig;
}
