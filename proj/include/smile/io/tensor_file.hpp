#pragma once

#include "smile/nn/parameters.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace smile::io {

// Named-tensor container used for parameter checkpoints and optimizer state:
//
//   SMILETN1\n
//   meta <key> <value>\n          (zero or more)
//   tensors <N>\n
//   tensor <name> <rows> <cols> f32le\n   (N lines)
//   end\n
//   raw little-endian f32 data of every tensor, in header order

inline constexpr const char* kTensorFileVersion = "SMILETN1";

struct TensorFile {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, nn::Mat<float>>> tensors;

  [[nodiscard]] const std::string* find_meta(const std::string& key) const;
  [[nodiscard]] const nn::Mat<float>* find_tensor(const std::string& name) const;
};

void save_tensor_file(const TensorFile& file, const std::filesystem::path& path);

/// Throws ParseError naming the malformed header line or tensor.
TensorFile load_tensor_file(const std::filesystem::path& path);

/// Appends every tensor of `params` under "<prefix><name>".
void add_parameters(TensorFile& file, const std::string& prefix, const nn::ParameterSet<float>& params);

/// Fills `params` (names and shapes already laid out) from "<prefix><name>"
/// tensors; throws ParseError on a missing tensor or a shape mismatch.
void read_parameters(const TensorFile& file, const std::string& prefix, nn::ParameterSet<float>& params,
                     const std::string& path_for_errors);

}  // namespace smile::io
