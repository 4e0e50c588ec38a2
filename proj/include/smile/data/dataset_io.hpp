#pragma once

#include "smile/data/phantom.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace smile::data {

// Container layout (one file per split):
//
//   SMILEDS1\n
//   split <name>\n
//   count <N>\n
//   height <H>\n
//   width <W>\n
//   dtype image=f32le mask=u8\n
//   labeled_fraction <f>\n
//   end\n
//   N records of: id u64le | flags u8 (bit0 abnormal, bit1 has mask) |
//                 H*W f32le pixels | H*W u8 mask bytes (zeros if no mask)

inline constexpr const char* kDatasetVersion = "SMILEDS1";

void save_samples(const std::vector<Sample>& samples, const std::string& split_name, double labeled_fraction,
                  const std::filesystem::path& file);

struct LoadedSamples {
  std::vector<Sample> samples;
  std::string split_name;
  double labeled_fraction = 1.0;
};

/// Throws ParseError naming the header line or record that is malformed.
LoadedSamples load_samples(const std::filesystem::path& file);

/// Writes train.smds, validation.smds and test.smds under `dir`.
void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit load_dataset(const std::filesystem::path& dir);

}  // namespace smile::data
