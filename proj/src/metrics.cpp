#include "smile/metrics.hpp"

#include "smile/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace smile::metrics {

namespace {

constexpr double kStandardWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - (size - 1) / 2.0;
    g[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

/// Separable valid-mode filtering with a symmetric 1-D kernel.
nn::Mat<double> filter_valid(const nn::Mat<double>& x, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const Eigen::Index h = x.rows() - n + 1;
  const Eigen::Index w = x.cols() - n + 1;
  nn::Mat<double> tmp = nn::Mat<double>::Zero(x.rows(), w);
  for (int i = 0; i < n; ++i) tmp += k[i] * x.middleCols(i, w);
  nn::Mat<double> out = nn::Mat<double>::Zero(h, w);
  for (int i = 0; i < n; ++i) out += k[i] * tmp.middleRows(i, h);
  return out;
}

nn::Mat<double> downsample2(const nn::Mat<double>& x) {
  const Eigen::Index h = x.rows() / 2;
  const Eigen::Index w = x.cols() / 2;
  nn::Mat<double> out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index c = 0; c < w; ++c) {
      out(y, c) = 0.25 * (x(2 * y, 2 * c) + x(2 * y, 2 * c + 1) + x(2 * y + 1, 2 * c) + x(2 * y + 1, 2 * c + 1));
    }
  }
  return out;
}

}  // namespace

std::vector<double> SsimConfig::standard_weights(int scales) {
  if (scales < 1 || scales > 5) throw std::invalid_argument("standard MS-SSIM weights exist for 1..5 scales");
  std::vector<double> w(kStandardWeights, kStandardWeights + scales);
  double sum = 0.0;
  for (double v : w) sum += v;
  for (auto& v : w) v /= sum;
  return w;
}

SsimConfig SsimConfig::for_size(int height, int width) {
  SsimConfig cfg;
  const int m = std::min(height, width);
  if (m >= 176) {
    cfg.scales = 5;
  } else {
    cfg.scales = 1;
    while (cfg.scales < 3 && (cfg.window_size << cfg.scales) <= m) ++cfg.scales;
  }
  cfg.scale_weights = standard_weights(cfg.scales);
  return cfg;
}

void SsimConfig::validate(int height, int width) const {
  if (window_size < 1 || window_size % 2 == 0) throw std::invalid_argument("SSIM window_size must be odd and >= 1");
  if (!(window_sigma > 0)) throw std::invalid_argument("SSIM window_sigma must be > 0");
  if (scales < 1) throw std::invalid_argument("MS-SSIM needs at least one scale");
  if (static_cast<int>(scale_weights.size()) != scales) {
    throw std::invalid_argument("MS-SSIM scale_weights must have one entry per scale");
  }
  double sum = 0.0;
  for (double w : scale_weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("MS-SSIM scale_weights must sum to 1");
  const int m = std::min(height, width);
  if ((window_size << (scales - 1)) > m) {
    int fit = 0;
    while (fit < 5 && (window_size << fit) <= m) ++fit;
    throw std::invalid_argument("image " + std::to_string(height) + "x" + std::to_string(width) + " is too small for " +
                                std::to_string(scales) + " MS-SSIM scales with an " + std::to_string(window_size) +
                                "-pixel window; use scales <= " + std::to_string(fit));
  }
  const int div = 1 << (scales - 1);
  if (height % div != 0 || width % div != 0) {
    throw std::invalid_argument("image size must be divisible by 2^(scales-1) = " + std::to_string(div));
  }
}

SsimResult ssim_map(const nn::Mat<double>& a, const nn::Mat<double>& b, const SsimConfig& cfg) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw nn::ShapeError("ssim_map: shape mismatch");
  if (a.rows() < cfg.window_size || a.cols() < cfg.window_size) {
    throw std::invalid_argument("ssim_map: image smaller than the window");
  }
  const auto k = gaussian_window(cfg.window_size, cfg.window_sigma);
  const double c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2);
  const double c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);
  const Eigen::ArrayXXd mu_a = filter_valid(a, k).array();
  const Eigen::ArrayXXd mu_b = filter_valid(b, k).array();
  const Eigen::ArrayXXd aa = filter_valid(a.cwiseProduct(a), k).array();
  const Eigen::ArrayXXd bb = filter_valid(b.cwiseProduct(b), k).array();
  const Eigen::ArrayXXd ab = filter_valid(a.cwiseProduct(b), k).array();
  const Eigen::ArrayXXd lum = (2 * mu_a * mu_b + c1) / (mu_a.square() + mu_b.square() + c1);
  const Eigen::ArrayXXd cs = (2 * (ab - mu_a * mu_b) + c2) / ((aa - mu_a.square()) + (bb - mu_b.square()) + c2);
  SsimResult r;
  r.map = (lum * cs).matrix();
  r.luminance = lum.mean();
  r.contrast_structure = cs.mean();
  r.ssim = r.map.mean();
  return r;
}

double ms_ssim(const nn::Mat<double>& a, const nn::Mat<double>& b, const SsimConfig& cfg) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw nn::ShapeError("ms_ssim: shape mismatch");
  cfg.validate(static_cast<int>(a.rows()), static_cast<int>(a.cols()));
  nn::Mat<double> x = a;
  nn::Mat<double> y = b;
  double out = 1.0;
  for (int s = 0; s < cfg.scales; ++s) {
    const auto r = ssim_map(x, y, cfg);
    const bool coarsest = s == cfg.scales - 1;
    const double v = std::max(0.0, coarsest ? r.ssim : r.contrast_structure);
    out *= std::pow(v, cfg.scale_weights[s]);
    if (!coarsest) {
      x = downsample2(x);
      y = downsample2(y);
    }
  }
  return out;
}

double ms_ssim(const data::Image& a, const data::Image& b, const SsimConfig& cfg) {
  return ms_ssim(nn::Mat<double>(a.cast<double>()), nn::Mat<double>(b.cast<double>()), cfg);
}

std::int64_t lesion_area(const data::LesionMask& mask) { return data::mask_area(mask); }

std::int64_t lesion_area(const nn::Mat<float>& probs) {
  if (probs.rows() != 2) throw nn::ShapeError("lesion_area: probability map must have 2 rows");
  return (probs.row(1).array() > probs.row(0).array()).count();
}

double dice(const data::LesionMask& pred, const data::LesionMask& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw nn::ShapeError("dice: shape mismatch");
  std::int64_t inter = 0, sp = 0, st = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const bool p = pred.data()[i] != 0;
    const bool t = target.data()[i] != 0;
    inter += p && t;
    sp += p;
    st += t;
  }
  if (sp + st == 0) return 1.0;
  return 2.0 * double(inter) / double(sp + st);
}

Healthiness healthiness_from_areas(const std::vector<double>& gen_areas, const std::vector<double>& real_areas) {
  if (gen_areas.size() != real_areas.size()) throw std::invalid_argument("healthiness: area lists differ in length");
  double num = 0.0, den = 0.0, ratios = 0.0;
  int counted = 0;
  for (std::size_t i = 0; i < gen_areas.size(); ++i) {
    num += gen_areas[i];
    den += real_areas[i];
    if (real_areas[i] > 0) {
      ratios += gen_areas[i] / real_areas[i];
      ++counted;
    }
  }
  if (!(den > 0)) {
    throw EvalSegmentorDegenerateError(
        "healthiness: the evaluation segmentor finds no lesion pixels in any real abnormal image");
  }
  const double n = double(gen_areas.size());
  return {1.0 - (num / n) / (den / n), counted ? 1.0 - ratios / counted : 0.0};
}

double masked_identity(const data::Image& generated, const data::Image& original, const data::LesionMask& mask,
                       const SsimConfig& cfg) {
  if (generated.rows() != mask.rows() || generated.cols() != mask.cols()) {
    throw nn::ShapeError("identity: mask shape differs from image shape");
  }
  const Eigen::ArrayXXd keep = 1.0 - mask.cast<double>().array();
  const nn::Mat<double> a = (generated.cast<double>().array() * keep).matrix();
  const nn::Mat<double> b = (original.cast<double>().array() * keep).matrix();
  return ms_ssim(a, b, cfg);
}

void MetricsReport::recompute_headline() {
  std::vector<double> gen, real;
  double id_sum = 0.0;
  for (const auto& s : per_sample) {
    gen.push_back(s.area_generated);
    real.push_back(s.area_real);
    id_sum += s.ms_ssim;
  }
  const auto h = healthiness_from_areas(gen, real);
  healthiness = h.ratio_of_means;
  healthiness_mean_of_ratios = h.mean_of_ratios;
  identity = id_sum / double(per_sample.size());
  n_samples = static_cast<int>(per_sample.size());
}

namespace {

struct Partition {
  std::vector<data::Image> abnormal_images, normal_images;
  std::vector<data::LesionMask> abnormal_masks;
  std::vector<std::uint64_t> abnormal_ids;
};

Partition partition(const std::vector<data::Sample>& samples) {
  Partition p;
  for (const auto& s : samples) {
    if (s.is_abnormal && s.mask) {
      p.abnormal_images.push_back(s.image);
      p.abnormal_masks.push_back(*s.mask);
      p.abnormal_ids.push_back(s.id);
    } else if (!s.is_abnormal) {
      p.normal_images.push_back(s.image);
    }
  }
  return p;
}

SsimConfig config_for(const std::vector<data::Image>& images, const SsimConfig* cfg) {
  if (cfg) return *cfg;
  if (images.empty()) return {};
  return SsimConfig::for_size(static_cast<int>(images.front().rows()), static_cast<int>(images.front().cols()));
}

}  // namespace

MetricsReport evaluate(const Network& G, const Network& S_pred, const std::vector<data::Sample>& samples,
                       const SsimConfig* cfg) {
  const auto p = partition(samples);
  if (p.abnormal_images.empty()) throw InsufficientDataError("evaluate: no labeled abnormal samples");
  const auto ssim_cfg = config_for(p.abnormal_images, cfg);
  const auto generated = run_generator(G, p.abnormal_images);
  const auto seg_real = run_segmentor(S_pred, p.abnormal_images);
  const auto seg_gen = run_segmentor(S_pred, generated);
  MetricsReport report;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    SampleMetrics m;
    m.id = p.abnormal_ids[i];
    m.area_real = double(lesion_area(seg_real[i]));
    m.area_generated = double(lesion_area(seg_gen[i]));
    m.ms_ssim = masked_identity(generated[i], p.abnormal_images[i], p.abnormal_masks[i], ssim_cfg);
    report.per_sample.push_back(m);
  }
  report.recompute_headline();
  report.n_normal = static_cast<int>(p.normal_images.size());
  report.normal_passthrough_mae = normal_passthrough_mae(G, samples);
  report.s_pred_checkpoint_id = S_pred.id();
  report.generator_checkpoint_id = G.id();
  return report;
}

double identity(const Network& G, const std::vector<data::Sample>& samples, const SsimConfig* cfg) {
  const auto p = partition(samples);
  if (p.abnormal_images.empty()) throw InsufficientDataError("identity: no labeled abnormal samples");
  const auto ssim_cfg = config_for(p.abnormal_images, cfg);
  const auto generated = run_generator(G, p.abnormal_images);
  double sum = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    sum += masked_identity(generated[i], p.abnormal_images[i], p.abnormal_masks[i], ssim_cfg);
  }
  return sum / double(generated.size());
}

double normal_passthrough_mae(const Network& G, const std::vector<data::Sample>& samples) {
  const auto p = partition(samples);
  if (p.normal_images.empty()) return 0.0;
  const auto generated = run_generator(G, p.normal_images);
  double sum = 0.0;
  double n = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    sum += (generated[i] - p.normal_images[i]).cwiseAbs().cast<double>().sum();
    n += double(generated[i].size());
  }
  return sum / n;
}

double mean_dice(const Network& S, const std::vector<data::Sample>& samples) {
  const auto p = partition(samples);
  if (p.abnormal_images.empty()) throw InsufficientDataError("mean_dice: no labeled abnormal samples");
  const auto pred = run_segmentor(S, p.abnormal_images);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += dice(pred[i], p.abnormal_masks[i]);
  return sum / double(pred.size());
}

double normal_false_positive_fraction(const Network& S, const std::vector<data::Sample>& samples) {
  const auto p = partition(samples);
  if (p.normal_images.empty()) return 0.0;
  const auto pred = run_segmentor(S, p.normal_images);
  double sum = 0.0;
  for (const auto& m : pred) sum += double(lesion_area(m)) / double(m.size());
  return sum / double(pred.size());
}

std::string report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["format"] = "smile-metrics-1";
  j["healthiness"] = r.healthiness;
  j["healthiness_definition"] = "ratio_of_means";
  j["healthiness_mean_of_ratios"] = r.healthiness_mean_of_ratios;
  j["identity"] = r.identity;
  j["identity_masking"] = "zero_fill";
  j["normal_passthrough_mae"] = r.normal_passthrough_mae;
  j["n_samples"] = r.n_samples;
  j["n_normal"] = r.n_normal;
  j["s_pred_checkpoint_id"] = r.s_pred_checkpoint_id;
  j["generator_checkpoint_id"] = r.generator_checkpoint_id;
  auto& rows = j["per_sample"] = nlohmann::ordered_json::array();
  for (const auto& s : r.per_sample) {
    rows.push_back({{"id", s.id}, {"area_real", s.area_real}, {"area_generated", s.area_generated},
                    {"ms_ssim", s.ms_ssim}});
  }
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricsReport r;
  r.healthiness = j.at("healthiness").get<double>();
  r.healthiness_mean_of_ratios = j.at("healthiness_mean_of_ratios").get<double>();
  r.identity = j.at("identity").get<double>();
  r.normal_passthrough_mae = j.at("normal_passthrough_mae").get<double>();
  r.n_samples = j.at("n_samples").get<int>();
  r.n_normal = j.at("n_normal").get<int>();
  r.s_pred_checkpoint_id = j.at("s_pred_checkpoint_id").get<std::string>();
  r.generator_checkpoint_id = j.at("generator_checkpoint_id").get<std::string>();
  for (const auto& row : j.at("per_sample")) {
    r.per_sample.push_back({row.at("id").get<std::uint64_t>(), row.at("area_real").get<double>(),
                            row.at("area_generated").get<double>(), row.at("ms_ssim").get<double>()});
  }
  return r;
}

std::string report_table(const MetricsReport& r) {
  std::ostringstream out;
  out << "id\tarea_real\tarea_generated\tms_ssim\n";
  char buf[128];
  for (const auto& s : r.per_sample) {
    std::snprintf(buf, sizeof(buf), "%llu\t%.17g\t%.17g\t%.17g\n", static_cast<unsigned long long>(s.id), s.area_real,
                  s.area_generated, s.ms_ssim);
    out << buf;
  }
  return out.str();
}

}  // namespace smile::metrics
