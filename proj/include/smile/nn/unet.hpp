#pragma once

#include "smile/nn/layers.hpp"
#include "smile/nn/parameters.hpp"
#include "smile/nn/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace smile::nn {

enum class OutputHead { LinearClamped, Softmax };

struct NetworkSpec {
  int in_channels = 1;
  int out_channels = 1;
  int depth = 3;
  int base_channels = 8;
  OutputHead head = OutputHead::LinearClamped;

  /// Throws std::invalid_argument describing the first violated rule.
  void validate() const;

  [[nodiscard]] int channels_at(int level) const { return base_channels << level; }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

NetworkSpec generator_spec(int depth, int base_channels);
NetworkSpec segmentor_spec(int depth, int base_channels);
NetworkSpec reconstructor_spec(int depth, int base_channels);

std::string to_string(OutputHead head);
OutputHead output_head_from_string(const std::string& s);

/// Encoder-decoder with a concatenation skip at every resolution level.
///
/// Level l runs two (3x3 conv -> instance norm -> leaky ReLU) stages with
/// base_channels * 2^l features, then 2x2 mean pooling. The decoder
/// upsamples (nearest), maps channels with a 1x1 conv, concatenates the
/// encoder features of the same level and runs another two-stage block. The
/// head is a 1x1 conv over [decoder features, raw input], followed by a clamp
/// to [0,1] or a per-pixel softmax.
///
/// Parameters live outside the network: forward/backward read a
/// ParameterSet and never mutate it, so concurrent forwards are safe.
template <typename Scalar>
class UNet {
 public:
  struct BlockCache {
    typename Conv3x3<Scalar>::Cache conv1, conv2;
    typename InstanceNorm<Scalar>::Cache norm1, norm2;
    Mat<Scalar> act1, act2;
  };
  struct UpCache {
    typename Conv1x1<Scalar>::Cache conv;
    Mat<Scalar> act;
  };
  struct Tape {
    int batch = 0, height = 0, width = 0;
    std::vector<BlockCache> enc;
    BlockCache bottleneck;
    std::vector<UpCache> up;
    std::vector<BlockCache> dec;
    typename Conv1x1<Scalar>::Cache head;
    Mat<Scalar> head_pre;  // pre-activation head output
    Mat<Scalar> output;
  };

  explicit UNet(NetworkSpec spec);

  [[nodiscard]] const NetworkSpec& spec() const { return spec_; }

  /// Deterministic initialization from `seed`.
  [[nodiscard]] ParameterSet<Scalar> init(std::uint64_t seed) const;

  /// An empty set with the right names and shapes (for loading).
  [[nodiscard]] ParameterSet<Scalar> layout() const;

  /// Input is channels x (batch*H*W). Output has out_channels rows: clamped
  /// intensities or softmax probabilities. When `tape` is given, every
  /// intermediate needed by backward() is kept there.
  Tensor<Scalar> forward(const ParameterSet<Scalar>& params, const Tensor<Scalar>& input, Tape* tape = nullptr) const;

  /// Back-propagates `grad_output` (d loss / d output). Parameter gradients
  /// are accumulated into `grads` when it is non-null; the input gradient is
  /// returned when `want_input` is set.
  Tensor<Scalar> backward(const ParameterSet<Scalar>& params, const Tape& tape, const Mat<Scalar>& grad_output,
                          ParameterSet<Scalar>* grads, bool want_input) const;

  /// Throws ShapeError naming the level that does not divide evenly.
  void check_input(const Tensor<Scalar>& input) const;

 private:
  struct BlockIndex {
    std::size_t conv1, norm1_gamma, norm1_beta, conv2, norm2_gamma, norm2_beta;
  };
  struct UpIndex {
    std::size_t weight, bias;
  };

  Tensor<Scalar> block_forward(const ParameterSet<Scalar>& p, const BlockIndex& idx, const Tensor<Scalar>& in,
                               BlockCache* cache) const;
  Tensor<Scalar> block_backward(const ParameterSet<Scalar>& p, const BlockIndex& idx, const BlockCache& cache,
                                Mat<Scalar> grad, int batch, ParameterSet<Scalar>* grads, bool want_input) const;

  NetworkSpec spec_;
  std::vector<BlockIndex> enc_;
  BlockIndex bottleneck_{};
  std::vector<UpIndex> up_;
  std::vector<BlockIndex> dec_;
  std::size_t head_weight_ = 0, head_bias_ = 0;
  ParameterSet<Scalar> layout_;
  std::vector<int> fan_in_;
};

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace smile::nn
