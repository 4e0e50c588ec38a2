#include "smile/batch.hpp"

#include <algorithm>

namespace smile {

Batch make_batch(const std::vector<data::Sample>& samples, const std::vector<std::size_t>& indices, std::size_t begin,
                 std::size_t end) {
  if (end <= begin) throw nn::ShapeError("make_batch: empty batch");
  const auto& first = samples[indices[begin]].image;
  const int h = static_cast<int>(first.rows());
  const int w = static_cast<int>(first.cols());
  Batch b;
  b.images = nn::Tensor<float>(1, static_cast<int>(end - begin), h, w);
  b.masks = nn::Mat<float>::Zero(1, b.images.data.cols());
  const Eigen::Index plane = b.images.plane();
  for (std::size_t k = begin; k < end; ++k) {
    const auto& s = samples[indices[k]];
    if (s.image.rows() != h || s.image.cols() != w) throw nn::ShapeError("make_batch: mixed image shapes");
    const Eigen::Index off = Eigen::Index(k - begin) * plane;
    b.images.data.row(0).segment(off, plane) = Eigen::Map<const nn::RowVec<float>>(s.image.data(), plane);
    if (s.mask) {
      for (Eigen::Index i = 0; i < plane; ++i) b.masks(0, off + i) = float(s.mask->data()[i]);
    }
    b.ids.push_back(s.id);
    b.n_abnormal += s.is_abnormal ? 1 : 0;
  }
  return b;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, int batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size)) {
    out.emplace_back(i, std::min(n, i + static_cast<std::size_t>(batch_size)));
  }
  return out;
}

}  // namespace smile
