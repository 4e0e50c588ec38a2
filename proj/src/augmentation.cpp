#include "smile/augmentation.hpp"

#include "smile/errors.hpp"
#include "smile/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace smile::augmentation {

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::None: return "none";
    case Regime::PseudoNormalOnly: return "pseudo_normal_only";
    case Regime::PseudoAbnormalOnly: return "pseudo_abnormal_only";
    case Regime::Both: return "both";
  }
  throw std::logic_error("bad regime");
}

Regime regime_from_name(const std::string& s) {
  for (Regime r : kAllRegimes) {
    if (regime_name(r) == s) return r;
  }
  if (s == "pn") return Regime::PseudoNormalOnly;
  if (s == "pa") return Regime::PseudoAbnormalOnly;
  throw ConfigError("unknown augmentation regime '" + s + "'");
}

std::vector<data::Sample> AugmentedDataset::training_set() const {
  std::vector<data::Sample> out = real;
  out.reserve(real.size() + synthetic.size());
  for (const auto& s : synthetic) out.push_back(s.sample);
  return out;
}

AugmentedDataset synthesize_augmented(const ModelBundle& bundle, const std::vector<data::Sample>& train, Regime regime,
                                      bool bundle_trained) {
  AugmentedDataset aug;
  aug.real = train;
  if (!bundle_trained) {
    aug.warnings.emplace_back("bundle has not completed phase 4; synthetic samples come from a partially trained model");
  }
  if (regime == Regime::None) return aug;
  for (const auto& s : train) {
    if (!s.mask) throw InsufficientDataError("synthesize_augmented: train sample " + std::to_string(s.id) + " is unlabeled");
  }
  const bool want_pn = regime == Regime::PseudoNormalOnly || regime == Regime::Both;
  const bool want_pa = regime == Regime::PseudoAbnormalOnly || regime == Regime::Both;

  std::vector<data::Image> images;
  std::vector<data::LesionMask> masks;
  for (const auto& s : train) {
    images.push_back(s.image);
    masks.push_back(*s.mask);
  }
  const auto pn = run_generator(bundle.G, images);
  std::vector<data::Image> pa;
  if (want_pa) pa = run_reconstructor(bundle.R, pn, masks);

  if (want_pn) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      data::Sample s;
      s.id = train[i].id | kPseudoNormalTag;
      s.image = pn[i];
      s.mask = data::LesionMask::Zero(masks[i].rows(), masks[i].cols());
      s.is_abnormal = false;
      aug.synthetic.push_back({std::move(s), Provenance::PseudoNormal, train[i].id});
    }
  }
  if (want_pa) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      data::Sample s;
      s.id = train[i].id | kPseudoAbnormalTag;
      s.image = pa[i];
      s.mask = masks[i];
      s.is_abnormal = data::mask_area(masks[i]) > 0;
      aug.synthetic.push_back({std::move(s), Provenance::PseudoAbnormal, train[i].id});
    }
  }
  return aug;
}

DownstreamResult run_downstream(const AugmentedDataset& aug, const std::vector<data::Sample>& validation,
                                const std::vector<data::Sample>& test, const SegmentorRecipe& recipe,
                                std::ostream* progress) {
  if (recipe.stop_at_target && validation.empty()) {
    throw InsufficientDataError("downstream early stopping needs a validation set");
  }
  std::set<std::uint64_t> held_out;
  for (const auto& s : test) held_out.insert(s.id);
  for (const auto& s : validation) held_out.insert(s.id);
  for (const auto& s : aug.real) {
    if (held_out.count(s.id)) throw ConfigError("downstream training set contains held-out sample " + std::to_string(s.id));
  }
  for (const auto& s : aug.synthetic) {
    if (held_out.count(s.source_id) || held_out.count(s.sample.id)) {
      throw ConfigError("synthetic sample derived from held-out sample " + std::to_string(s.source_id));
    }
  }
  DownstreamResult r;
  const auto train = aug.training_set();
  r.n_train = static_cast<int>(train.size());
  try {
    const auto seg = train_segmentor(train, validation, recipe, progress, "downstream");
    r.dice = metrics::mean_dice(seg.net, test);
  } catch (const TrainingDivergedError& e) {
    r.valid = false;
    r.dice = std::nan("");
    r.note = e.what();
  }
  return r;
}

std::vector<SweepRow> regime_sweep(const ModelBundle& bundle, const data::DatasetSplit& split,
                                   const std::vector<Regime>& regimes, const std::vector<std::uint64_t>& seeds,
                                   const SegmentorRecipe& recipe, std::ostream* progress, bool bundle_trained) {
  const auto all = synthesize_augmented(bundle, split.train, Regime::Both, bundle_trained);
  if (progress) {
    for (const auto& w : all.warnings) *progress << "warning: " << w << '\n';
  }
  std::vector<SweepRow> rows;
  for (Regime regime : regimes) {
    AugmentedDataset aug;
    aug.real = all.real;
    for (const auto& s : all.synthetic) {
      const bool keep = regime == Regime::Both ||
                        (regime == Regime::PseudoNormalOnly && s.provenance == Provenance::PseudoNormal) ||
                        (regime == Regime::PseudoAbnormalOnly && s.provenance == Provenance::PseudoAbnormal);
      if (keep) aug.synthetic.push_back(s);
    }
    for (std::uint64_t seed : seeds) {
      SegmentorRecipe rc = recipe;
      rc.seed = seed;
      const auto res = run_downstream(aug, split.validation, split.test, rc);
      rows.push_back({regime, seed, res.dice, res.valid});
      if (progress) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "regime=%s seed=%llu n_train=%d dice=%.4f%s\n", regime_name(regime).c_str(),
                      static_cast<unsigned long long>(seed), res.n_train, res.dice, res.valid ? "" : " invalid");
        *progress << buf << std::flush;
      }
    }
  }
  return rows;
}

std::string table_to_tsv(const std::vector<SweepRow>& rows) {
  std::ostringstream s;
  s << "regime\tseed\tdice\tvalid\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.dice);
    s << regime_name(r.regime) << '\t' << r.seed << '\t' << buf << '\t' << (r.valid ? 1 : 0) << '\n';
  }
  return s.str();
}

std::vector<SweepRow> table_from_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "regime\tseed\tdice\tvalid") {
    throw ParseError("<table>", "header", "expected 'regime\\tseed\\tdice\\tvalid'");
  }
  std::vector<SweepRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream f(line);
    std::string regime, seed, dice, valid;
    if (!std::getline(f, regime, '\t') || !std::getline(f, seed, '\t') || !std::getline(f, dice, '\t') ||
        !std::getline(f, valid)) {
      throw ParseError("<table>", "line " + std::to_string(lineno), "expected 4 fields");
    }
    try {
      rows.push_back({regime_from_name(regime), std::stoull(seed), std::stod(dice), valid == "1"});
    } catch (const std::exception& e) {
      throw ParseError("<table>", "line " + std::to_string(lineno), e.what());
    }
  }
  return rows;
}

void save_table(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << table_to_tsv(rows);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<SweepRow> load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), "file", "cannot open");
  std::ostringstream s;
  s << in.rdbuf();
  try {
    return table_from_tsv(s.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e.record(), e.what());
  }
}

std::vector<RegimeSummary> summarize(const std::vector<SweepRow>& rows) {
  std::vector<RegimeSummary> out;
  for (Regime regime : kAllRegimes) {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.regime == regime && r.valid) v.push_back(r.dice);
    }
    if (v.empty()) continue;
    RegimeSummary s{regime, 0.0, 0.0, static_cast<int>(v.size())};
    for (double d : v) s.mean += d;
    s.mean /= double(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double d : v) ss += (d - s.mean) * (d - s.mean);
      s.stddev = std::sqrt(ss / double(v.size() - 1));
    }
    out.push_back(s);
  }
  return out;
}

DirectionalCheck directional_check(const std::vector<RegimeSummary>& summary) {
  const auto find = [&](Regime r) -> const RegimeSummary* {
    for (const auto& s : summary) {
      if (s.regime == r) return &s;
    }
    return nullptr;
  };
  DirectionalCheck c;
  const auto* none = find(Regime::None);
  const auto* both = find(Regime::Both);
  const auto* pn = find(Regime::PseudoNormalOnly);
  const auto* pa = find(Regime::PseudoAbnormalOnly);
  if (!none) return c;
  if (both) {
    c.gap = both->mean - none->mean;
    c.spread = std::max(none->stddev, both->stddev);
    c.gap_ok = c.gap > 0.0 && c.gap > 2.0 * c.spread;
  }
  c.pn_ok = pn && pn->mean >= none->mean - 0.01;
  c.pa_ok = pa && pa->mean >= none->mean - 0.01;
  return c;
}

}  // namespace smile::augmentation
