#pragma once

#include "smile/data/phantom.hpp"
#include "smile/nn/tensor.hpp"

#include <cstdint>
#include <vector>

namespace smile {

/// A training batch in network layout: 1 x (B*H*W) images and a matching
/// 0/1 mask row (all-zero for samples without a mask).
struct Batch {
  nn::Tensor<float> images;
  nn::Mat<float> masks;
  std::vector<std::uint64_t> ids;
  int n_abnormal = 0;

  [[nodiscard]] int size() const { return images.batch; }
};

/// Builds the batch of samples[indices[begin..end)].
Batch make_batch(const std::vector<data::Sample>& samples, const std::vector<std::size_t>& indices, std::size_t begin,
                 std::size_t end);

/// [begin, end) index ranges of consecutive batches; the last may be short.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, int batch_size);

}  // namespace smile
