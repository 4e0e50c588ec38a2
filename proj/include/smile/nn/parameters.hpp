#pragma once

#include "smile/nn/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace smile::nn {

/// Named weight tensors of one network. Order and names are fixed by the
/// network layout, so two sets built from the same spec line up index by
/// index.
template <typename Scalar>
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<Mat<Scalar>> tensors;
  std::uint64_t init_seed = 0;

  [[nodiscard]] std::size_t size() const { return tensors.size(); }

  [[nodiscard]] Eigen::Index count() const {
    Eigen::Index n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  std::size_t add(std::string name, Mat<Scalar> value) {
    names.push_back(std::move(name));
    tensors.push_back(std::move(value));
    return tensors.size() - 1;
  }

  /// Same names and shapes, all zeros.
  [[nodiscard]] ParameterSet zeros_like() const {
    ParameterSet out;
    out.names = names;
    out.init_seed = init_seed;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) out.tensors.push_back(Mat<Scalar>::Zero(t.rows(), t.cols()));
    return out;
  }

  void set_zero() {
    for (auto& t : tensors) t.setZero();
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& t : tensors) {
      if (!t.allFinite()) return false;
    }
    return true;
  }

  /// Name of the first tensor holding a NaN/Inf, or empty.
  [[nodiscard]] std::string first_non_finite() const {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (!tensors[i].allFinite()) return names[i];
    }
    return {};
  }

  template <typename Other>
  [[nodiscard]] ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    out.names = names;
    out.init_seed = init_seed;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<Other>());
    return out;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.names != b.names || a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
      if (a.tensors[i].rows() != b.tensors[i].rows() || a.tensors[i].cols() != b.tensors[i].cols()) return false;
      if (a.tensors[i] != b.tensors[i]) return false;
    }
    return true;
  }
};

/// FNV-1a over names, shapes and raw bytes. Used to prove which networks a
/// training sub-step touched.
template <typename Scalar>
std::uint64_t parameter_hash(const ParameterSet<Scalar>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    mix(params.names[i].data(), params.names[i].size());
    const auto& t = params.tensors[i];
    const Eigen::Index dims[2] = {t.rows(), t.cols()};
    mix(dims, sizeof(dims));
    mix(t.data(), sizeof(Scalar) * static_cast<std::size_t>(t.size()));
  }
  return h;
}

}  // namespace smile::nn
