#pragma once

#include "smile/data/phantom.hpp"
#include "smile/nn/unet.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace smile {

/// One network: architecture plus its parameters.
struct Network {
  nn::UNet<float> net;
  nn::ParameterSet<float> params;

  explicit Network(const nn::NetworkSpec& spec) : net(spec), params(net.layout()) {}
  Network(const nn::NetworkSpec& spec, std::uint64_t seed) : net(spec), params(net.init(seed)) {}

  [[nodiscard]] const nn::NetworkSpec& spec() const { return net.spec(); }

  /// Hex digest of the parameters; stamped into reports as a checkpoint id.
  [[nodiscard]] std::string id() const;
};

struct Architecture {
  int depth = 3;
  int base_channels = 4;
};

/// G, S and R plus the optional frozen evaluation segmentor.
struct ModelBundle {
  Network G, S, R;
  std::optional<Network> S_pred;

  /// Fresh initialization; each network draws from its own seed stream.
  static ModelBundle create(const Architecture& arch, std::uint64_t seed);
};

std::string spec_to_string(const nn::NetworkSpec& spec);
nn::NetworkSpec spec_from_string(const std::string& s);

/// Single-network checkpoint (model-core format, no optimizer state).
void save_network(const Network& network, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

// Batched inference helpers. Images are processed `chunk` at a time.

nn::Tensor<float> pack_images(const std::vector<const data::Image*>& images);
nn::Tensor<float> pack_images(const std::vector<data::Image>& images);
std::vector<data::Image> unpack_images(const nn::Tensor<float>& t, int row = 0);

/// 0/1 mask as a float row for the losses and for R's mask channel.
nn::Mat<float> mask_row(const std::vector<const data::LesionMask*>& masks);

/// G(I) for every image.
std::vector<data::Image> run_generator(const Network& g, const std::vector<data::Image>& images, int chunk = 16);

/// R(P, M) for every (image, mask) pair.
std::vector<data::Image> run_reconstructor(const Network& r, const std::vector<data::Image>& images,
                                           const std::vector<data::LesionMask>& masks, int chunk = 16);

/// Argmax lesion masks of a segmentor.
std::vector<data::LesionMask> run_segmentor(const Network& s, const std::vector<data::Image>& images, int chunk = 16);

}  // namespace smile
