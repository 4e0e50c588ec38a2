#include "smile/model.hpp"

#include "smile/errors.hpp"
#include "smile/io/tensor_file.hpp"
#include "smile/rng.hpp"

#include <cstdio>
#include <sstream>

namespace smile {

std::string Network::id() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(nn::parameter_hash(params)));
  return buf;
}

ModelBundle ModelBundle::create(const Architecture& arch, std::uint64_t seed) {
  return ModelBundle{
      Network(nn::generator_spec(arch.depth, arch.base_channels), stream_seed(seed, "init/G")),
      Network(nn::segmentor_spec(arch.depth, arch.base_channels), stream_seed(seed, "init/S")),
      Network(nn::reconstructor_spec(arch.depth, arch.base_channels), stream_seed(seed, "init/R")),
      std::nullopt,
  };
}

std::string spec_to_string(const nn::NetworkSpec& spec) {
  std::ostringstream s;
  s << "in=" << spec.in_channels << ",out=" << spec.out_channels << ",depth=" << spec.depth
    << ",base=" << spec.base_channels << ",head=" << nn::to_string(spec.head);
  return s.str();
}

nn::NetworkSpec spec_from_string(const std::string& text) {
  nn::NetworkSpec spec;
  std::istringstream in(text);
  std::string item;
  int seen = 0;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("bad network spec '" + text + "'");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (key == "in") {
      spec.in_channels = std::stoi(value);
    } else if (key == "out") {
      spec.out_channels = std::stoi(value);
    } else if (key == "depth") {
      spec.depth = std::stoi(value);
    } else if (key == "base") {
      spec.base_channels = std::stoi(value);
    } else if (key == "head") {
      spec.head = nn::output_head_from_string(value);
    } else {
      throw std::invalid_argument("bad network spec key '" + key + "'");
    }
    ++seen;
  }
  if (seen != 5) throw std::invalid_argument("incomplete network spec '" + text + "'");
  spec.validate();
  return spec;
}

void save_network(const Network& network, const std::filesystem::path& path) {
  io::TensorFile file;
  file.meta.emplace_back("spec", spec_to_string(network.spec()));
  io::add_parameters(file, "", network.params);
  io::save_tensor_file(file, path);
}

Network load_network(const std::filesystem::path& path) {
  const auto file = io::load_tensor_file(path);
  const auto* spec = file.find_meta("spec");
  if (!spec) throw ParseError(path.string(), "meta 'spec'", "missing");
  nn::NetworkSpec parsed;
  try {
    parsed = spec_from_string(*spec);
  } catch (const std::exception& e) {
    throw ParseError(path.string(), "meta 'spec'", e.what());
  }
  Network network(parsed);
  io::read_parameters(file, "", network.params, path.string());
  return network;
}

nn::Tensor<float> pack_images(const std::vector<const data::Image*>& images) {
  if (images.empty()) throw nn::ShapeError("pack_images: empty batch");
  const int h = static_cast<int>(images.front()->rows());
  const int w = static_cast<int>(images.front()->cols());
  nn::Tensor<float> t(1, static_cast<int>(images.size()), h, w);
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b]->rows() != h || images[b]->cols() != w) throw nn::ShapeError("pack_images: mixed image shapes");
    t.data.middleCols(Eigen::Index(b) * t.plane(), t.plane()) =
        Eigen::Map<const nn::RowVec<float>>(images[b]->data(), t.plane());
  }
  return t;
}

nn::Tensor<float> pack_images(const std::vector<data::Image>& images) {
  std::vector<const data::Image*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  return pack_images(ptrs);
}

std::vector<data::Image> unpack_images(const nn::Tensor<float>& t, int row) {
  std::vector<data::Image> out(t.batch);
  for (int b = 0; b < t.batch; ++b) {
    out[b].resize(t.height, t.width);
    Eigen::Map<nn::RowVec<float>>(out[b].data(), t.plane()) = t.data.row(row).segment(b * t.plane(), t.plane());
  }
  return out;
}

nn::Mat<float> mask_row(const std::vector<const data::LesionMask*>& masks) {
  if (masks.empty()) return {};
  const Eigen::Index plane = masks.front()->size();
  nn::Mat<float> out(1, plane * Eigen::Index(masks.size()));
  for (std::size_t b = 0; b < masks.size(); ++b) {
    if (masks[b]->size() != plane) throw nn::ShapeError("mask_row: mixed mask shapes");
    for (Eigen::Index i = 0; i < plane; ++i) out(0, Eigen::Index(b) * plane + i) = float(masks[b]->data()[i]);
  }
  return out;
}

namespace {

template <typename F>
void for_chunks(std::size_t n, int chunk, F&& f) {
  for (std::size_t i0 = 0; i0 < n; i0 += static_cast<std::size_t>(chunk)) {
    f(i0, std::min(n, i0 + static_cast<std::size_t>(chunk)));
  }
}

}  // namespace

std::vector<data::Image> run_generator(const Network& g, const std::vector<data::Image>& images, int chunk) {
  std::vector<data::Image> out;
  out.reserve(images.size());
  for_chunks(images.size(), chunk, [&](std::size_t i0, std::size_t i1) {
    std::vector<const data::Image*> batch;
    for (std::size_t i = i0; i < i1; ++i) batch.push_back(&images[i]);
    auto y = unpack_images(g.net.forward(g.params, pack_images(batch)));
    for (auto& im : y) out.push_back(std::move(im));
  });
  return out;
}

std::vector<data::Image> run_reconstructor(const Network& r, const std::vector<data::Image>& images,
                                           const std::vector<data::LesionMask>& masks, int chunk) {
  if (images.size() != masks.size()) throw nn::ShapeError("run_reconstructor: image/mask count mismatch");
  std::vector<data::Image> out;
  out.reserve(images.size());
  for_chunks(images.size(), chunk, [&](std::size_t i0, std::size_t i1) {
    std::vector<const data::Image*> batch;
    std::vector<const data::LesionMask*> mb;
    for (std::size_t i = i0; i < i1; ++i) {
      if (images[i].rows() != masks[i].rows() || images[i].cols() != masks[i].cols()) {
        throw nn::ShapeError("run_reconstructor: image and mask shapes differ");
      }
      batch.push_back(&images[i]);
      mb.push_back(&masks[i]);
    }
    nn::Tensor<float> x = pack_images(batch);
    nn::Tensor<float> m = x;
    m.data = mask_row(mb);
    auto y = unpack_images(r.net.forward(r.params, nn::concat_channels(x, m)));
    for (auto& im : y) out.push_back(std::move(im));
  });
  return out;
}

std::vector<data::LesionMask> run_segmentor(const Network& s, const std::vector<data::Image>& images, int chunk) {
  std::vector<data::LesionMask> out;
  out.reserve(images.size());
  for_chunks(images.size(), chunk, [&](std::size_t i0, std::size_t i1) {
    std::vector<const data::Image*> batch;
    for (std::size_t i = i0; i < i1; ++i) batch.push_back(&images[i]);
    const auto p = s.net.forward(s.params, pack_images(batch));
    for (int b = 0; b < p.batch; ++b) {
      data::LesionMask m(p.height, p.width);
      for (Eigen::Index i = 0; i < p.plane(); ++i) {
        const Eigen::Index c = b * p.plane() + i;
        m.data()[i] = p.data(1, c) > p.data(0, c) ? 1 : 0;
      }
      out.push_back(std::move(m));
    }
  });
  return out;
}

}  // namespace smile
