#pragma once

#include "smile/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace smile::losses {

using nn::Mat;

// Conventions. Image-like maps may have any shape; their entries are taken in
// storage order and split into `batch` equal contiguous chunks, one per
// sample (this matches the columns of a 1-channel nn::Tensor). Probability
// maps have two rows (background, lesion) and one column per pixel. Masks and
// targets hold exact 0/1 values. Every loss is a per-sample mean followed by
// a mean over the batch. Optional `grad` outputs receive d loss / d (first
// argument) with the same shape.

inline constexpr double kProbFloor = 1e-7;

/// Named loss components; total is kept equal to their sum.
struct LossBreakdown {
  std::vector<std::pair<std::string, double>> components;
  double total = 0.0;

  void add(const std::string& name, double value) {
    for (auto& [n, v] : components) {
      if (n == name) {
        v += value;
        total += value;
        return;
      }
    }
    components.emplace_back(name, value);
    total += value;
  }

  void merge(const LossBreakdown& other) {
    for (const auto& [n, v] : other.components) add(n, v);
  }

  [[nodiscard]] bool has(const std::string& name) const {
    return std::any_of(components.begin(), components.end(), [&](const auto& c) { return c.first == name; });
  }

  [[nodiscard]] double get(const std::string& name) const {
    for (const auto& [n, v] : components) {
      if (n == name) return v;
    }
    throw std::out_of_range("LossBreakdown: no component '" + name + "'");
  }
};

/// Scales applied to each component before it enters the breakdown.
struct LossWeights {
  double gen_mse = 30.0;  // at 1 the adversarial term wins and G drifts on healthy tissue
  double gen_adv = 1.0;
  double seg_pn = 1.0;
  double seg_pab = 1.0;
  double recon_mse = 1.0;
  double recon_seg = 1.0;
  double semi_ce = 1.0;
};

namespace detail {

template <typename A, typename B>
void require_same_size(const A& a, const B& b, const char* what) {
  if (a.size() != b.size()) {
    throw nn::ShapeError(std::string(what) + ": size mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
}

inline Eigen::Index chunk(Eigen::Index n, int batch, const char* what) {
  if (batch < 1 || n % batch != 0) {
    throw nn::ShapeError(std::string(what) + ": " + std::to_string(n) + " entries do not split into " +
                         std::to_string(batch) + " samples");
  }
  return n / batch;
}

template <typename Scalar>
void require_binary(const Mat<Scalar>& m, const char* what) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const Scalar v = m.data()[i];
    if (v != Scalar(0) && v != Scalar(1)) throw std::invalid_argument(std::string(what) + ": target values must be 0 or 1");
  }
}

}  // namespace detail

/// Mean squared difference over pixels where mask = 0 (per sample); samples
/// whose mask covers every pixel contribute 0.
template <typename Scalar>
double masked_mse(const Mat<Scalar>& a, const Mat<Scalar>& b, const Mat<Scalar>& mask, int batch = 1,
                  Mat<Scalar>* grad_a = nullptr) {
  detail::require_same_size(a, b, "masked_mse");
  detail::require_same_size(a, mask, "masked_mse");
  const Eigen::Index per = detail::chunk(a.size(), batch, "masked_mse");
  if (grad_a) grad_a->setZero(a.rows(), a.cols());
  double total = 0.0;
  for (int s = 0; s < batch; ++s) {
    double sum = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index i = s * per; i < (s + 1) * per; ++i) {
      if (mask.data()[i] != Scalar(0)) continue;
      const double d = double(a.data()[i]) - double(b.data()[i]);
      sum += d * d;
      ++n;
    }
    if (n == 0) continue;
    total += sum / double(n);
    if (grad_a) {
      const double k = 2.0 / (double(n) * batch);
      for (Eigen::Index i = s * per; i < (s + 1) * per; ++i) {
        if (mask.data()[i] == Scalar(0)) grad_a->data()[i] = Scalar(k * (double(a.data()[i]) - double(b.data()[i])));
      }
    }
  }
  return total / batch;
}

/// Full-image mean squared error (the reconstruction loss).
template <typename Scalar>
double mse(const Mat<Scalar>& a, const Mat<Scalar>& b, int batch = 1, Mat<Scalar>* grad_a = nullptr) {
  detail::require_same_size(a, b, "mse");
  detail::chunk(a.size(), batch, "mse");
  const auto diff = (a.template cast<double>() - b.template cast<double>()).eval();
  if (grad_a) *grad_a = (diff * (2.0 / double(a.size()))).template cast<Scalar>();
  return diff.squaredNorm() / double(a.size());
}

template <typename Scalar>
double reconstruction_loss(const Mat<Scalar>& p_ab, const Mat<Scalar>& image, int batch = 1,
                           Mat<Scalar>* grad = nullptr) {
  return mse(p_ab, image, batch, grad);
}

/// Mean per-pixel cross-entropy of a 2-row probability map against a 0/1
/// target, with probabilities floored at 1e-7 before the log.
template <typename Scalar>
double seg_ce(const Mat<Scalar>& probs, const Mat<Scalar>& target, int batch = 1, Mat<Scalar>* grad_probs = nullptr) {
  if (probs.rows() != 2) throw nn::ShapeError("seg_ce: probability map must have 2 rows");
  detail::require_same_size(probs.row(0), target, "seg_ce");
  detail::chunk(target.size(), batch, "seg_ce");
  detail::require_binary(target, "seg_ce");
  const Eigen::Index n = target.size();
  if (grad_probs) grad_probs->setZero(2, probs.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int cls = target.data()[i] != Scalar(0) ? 1 : 0;
    const double p = double(probs(cls, i));
    if (p > kProbFloor) {
      sum -= std::log(p);
      if (grad_probs) (*grad_probs)(cls, i) = Scalar(-1.0 / (p * double(n)));
    } else {
      sum -= std::log(kProbFloor);
    }
  }
  return sum / double(n);
}

/// 1 where the lesion probability is strictly above epsilon. Returned as a
/// single row with one entry per pixel.
template <typename Scalar>
Mat<Scalar> pseudo_label(const Mat<Scalar>& probs, double epsilon) {
  if (probs.rows() != 2) throw nn::ShapeError("pseudo_label: probability map must have 2 rows");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("pseudo_label: epsilon must lie in (0,1)");
  Mat<Scalar> out(1, probs.cols());
  for (Eigen::Index i = 0; i < probs.cols(); ++i) out(0, i) = double(probs(1, i)) > epsilon ? Scalar(1) : Scalar(0);
  return out;
}

/// Cross-entropy of predictions against their own (detached) pseudo-labels.
template <typename Scalar>
double semi_confidence_loss(const Mat<Scalar>& probs, const Mat<Scalar>& pseudo, int batch = 1,
                            Mat<Scalar>* grad_probs = nullptr) {
  return seg_ce(probs, pseudo, batch, grad_probs);
}

/// Sum of per-pixel max-class probabilities, for epsilon updates.
template <typename Scalar>
double confidence_sum(const Mat<Scalar>& probs) {
  return probs.colwise().maxCoeff().template cast<double>().sum();
}

/// Mean confidence, clamped to [0.5, 0.99].
inline double update_epsilon(const std::vector<double>& confidences) {
  if (confidences.empty()) throw std::invalid_argument("update_epsilon: empty confidence list");
  double sum = 0.0;
  for (double c : confidences) sum += c;
  return std::clamp(sum / double(confidences.size()), 0.5, 0.99);
}

/// Same rule from a running sum and count.
inline double update_epsilon(double confidence_sum, double count) {
  if (!(count > 0)) throw std::invalid_argument("update_epsilon: empty confidence list");
  return std::clamp(confidence_sum / count, 0.5, 0.99);
}

template <typename Scalar>
struct GeneratorLoss {
  LossBreakdown breakdown;
  Mat<Scalar> grad_g_out;    // d total / d G(I)
  Mat<Scalar> grad_s_probs;  // d total / d S(G(I))
};

/// masked_mse(I, G(I), M) + seg_ce(S(G(I)), 0). The MSE keeps the healthy
/// part; the CE target is the all-zero mask ("no lesion left").
template <typename Scalar>
GeneratorLoss<Scalar> generator_loss(const Mat<Scalar>& image, const Mat<Scalar>& mask, const Mat<Scalar>& g_out,
                                     const Mat<Scalar>& s_probs_on_g, int batch = 1, const LossWeights& w = {}) {
  GeneratorLoss<Scalar> out;
  const double m = masked_mse(g_out, image, mask, batch, &out.grad_g_out);
  const Mat<Scalar> zeros = Mat<Scalar>::Zero(1, s_probs_on_g.cols());
  const double adv = seg_ce(s_probs_on_g, zeros, batch, &out.grad_s_probs);
  out.grad_g_out *= Scalar(w.gen_mse);
  out.grad_s_probs *= Scalar(w.gen_adv);
  out.breakdown.add("gen_mse", w.gen_mse * m);
  out.breakdown.add("gen_adv", w.gen_adv * adv);
  return out;
}

template <typename Scalar>
struct SegmentorLoss {
  LossBreakdown breakdown;
  Mat<Scalar> grad_pn;   // d total / d S(G(I))
  Mat<Scalar> grad_pab;  // d total / d S(P_ab); empty in phase-1 mode
};

/// seg_ce(S(G(I)), M) + seg_ce(S(P_ab), M). Pass s_probs_on_pab = nullptr for
/// the phase-1 form without the reconstructor term.
template <typename Scalar>
SegmentorLoss<Scalar> segmentor_loss(const Mat<Scalar>& s_probs_on_pn, const Mat<Scalar>* s_probs_on_pab,
                                     const Mat<Scalar>& mask, int batch = 1, const LossWeights& w = {}) {
  SegmentorLoss<Scalar> out;
  const double pn = seg_ce(s_probs_on_pn, mask, batch, &out.grad_pn);
  out.grad_pn *= Scalar(w.seg_pn);
  out.breakdown.add("seg_pn", w.seg_pn * pn);
  if (s_probs_on_pab) {
    const double pab = seg_ce(*s_probs_on_pab, mask, batch, &out.grad_pab);
    out.grad_pab *= Scalar(w.seg_pab);
    out.breakdown.add("seg_pab", w.seg_pab * pab);
  }
  return out;
}

}  // namespace smile::losses
