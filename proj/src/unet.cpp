#include "smile/nn/unet.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace smile::nn {

namespace {

// Fraction of lesion pixels in a typical phantom batch.
constexpr double kLesionPrior = 0.02;

}  // namespace

void NetworkSpec::validate() const {
  if (in_channels < 1) throw std::invalid_argument("NetworkSpec: in_channels must be >= 1");
  if (out_channels < 1) throw std::invalid_argument("NetworkSpec: out_channels must be >= 1");
  if (depth < 1) throw std::invalid_argument("NetworkSpec: depth must be >= 1");
  if (base_channels < 1) throw std::invalid_argument("NetworkSpec: base_channels must be >= 1");
  if (head == OutputHead::Softmax && out_channels != 2) {
    throw std::invalid_argument("NetworkSpec: softmax head requires out_channels = 2");
  }
}

NetworkSpec generator_spec(int depth, int base_channels) {
  return {1, 1, depth, base_channels, OutputHead::LinearClamped};
}

NetworkSpec segmentor_spec(int depth, int base_channels) {
  return {1, 2, depth, base_channels, OutputHead::Softmax};
}

NetworkSpec reconstructor_spec(int depth, int base_channels) {
  return {2, 1, depth, base_channels, OutputHead::LinearClamped};
}

std::string to_string(OutputHead head) {
  return head == OutputHead::Softmax ? "softmax" : "linear_clamped";
}

OutputHead output_head_from_string(const std::string& s) {
  if (s == "softmax") return OutputHead::Softmax;
  if (s == "linear_clamped") return OutputHead::LinearClamped;
  throw std::invalid_argument("unknown output head '" + s + "'");
}

template <typename Scalar>
UNet<Scalar>::UNet(NetworkSpec spec) : spec_(spec) {
  spec_.validate();
  auto conv3 = [this](const std::string& name, int c_in, int c_out) {
    fan_in_.push_back(c_in * 9);
    return layout_.add(name, Mat<Scalar>::Zero(c_out, Eigen::Index(c_in) * 9));
  };
  auto vec = [this](const std::string& name, int n) {
    fan_in_.push_back(0);
    return layout_.add(name, Mat<Scalar>::Zero(n, 1));
  };
  auto block = [&](const std::string& prefix, int c_in, int c_out) {
    BlockIndex idx{};
    idx.conv1 = conv3(prefix + ".conv1.weight", c_in, c_out);
    idx.norm1_gamma = vec(prefix + ".norm1.gamma", c_out);
    idx.norm1_beta = vec(prefix + ".norm1.beta", c_out);
    idx.conv2 = conv3(prefix + ".conv2.weight", c_out, c_out);
    idx.norm2_gamma = vec(prefix + ".norm2.gamma", c_out);
    idx.norm2_beta = vec(prefix + ".norm2.beta", c_out);
    return idx;
  };

  int c_in = spec_.in_channels;
  for (int l = 0; l < spec_.depth; ++l) {
    enc_.push_back(block("enc" + std::to_string(l), c_in, spec_.channels_at(l)));
    c_in = spec_.channels_at(l);
  }
  bottleneck_ = block("bottleneck", c_in, spec_.channels_at(spec_.depth));
  up_.resize(spec_.depth);
  dec_.resize(spec_.depth);
  for (int l = spec_.depth - 1; l >= 0; --l) {
    const int c_low = spec_.channels_at(l + 1);
    const int c = spec_.channels_at(l);
    const std::string prefix = "dec" + std::to_string(l);
    fan_in_.push_back(c_low);
    up_[l].weight = layout_.add(prefix + ".up.weight", Mat<Scalar>::Zero(c, c_low));
    up_[l].bias = vec(prefix + ".up.bias", c);
    dec_[l] = block(prefix, 2 * c, c);
  }
  const int head_in = spec_.channels_at(0) + spec_.in_channels;
  fan_in_.push_back(head_in);
  head_weight_ = layout_.add("head.weight", Mat<Scalar>::Zero(spec_.out_channels, head_in));
  head_bias_ = vec("head.bias", spec_.out_channels);
}

template <typename Scalar>
ParameterSet<Scalar> UNet<Scalar>::layout() const {
  return layout_;
}

template <typename Scalar>
ParameterSet<Scalar> UNet<Scalar>::init(std::uint64_t seed) const {
  ParameterSet<Scalar> p = layout_;
  p.init_seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& t = p.tensors[i];
    const auto& name = p.names[i];
    if (i == head_weight_) continue;
    if (name.ends_with(".gamma")) {
      t.setOnes();
    } else if (name.ends_with(".beta") || name.ends_with(".bias")) {
      t.setZero();
    } else {
      const double std_dev = std::sqrt(2.0 / fan_in_[i]);
      for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<Scalar>(normal(rng) * std_dev);
    }
  }
  // Image-producing heads start as a pass-through of input channel 0 with the
  // feature path switched off. The softmax head gets small weights and a
  // bias that puts the initial lesion probability at the lesion prior.
  auto& head = p.tensors[head_weight_];
  const int c0 = spec_.channels_at(0);
  if (spec_.head == OutputHead::LinearClamped) {
    head.setZero();
    head(0, c0) = Scalar(1);
  } else {
    const double std_dev = 0.1 / std::sqrt(static_cast<double>(c0));
    for (Eigen::Index r = 0; r < head.rows(); ++r) {
      for (int c = 0; c < c0; ++c) head(r, c) = static_cast<Scalar>(normal(rng) * std_dev);
    }
    p.tensors[head_bias_](1, 0) = static_cast<Scalar>(std::log(kLesionPrior / (1.0 - kLesionPrior)));
  }
  return p;
}

template <typename Scalar>
void UNet<Scalar>::check_input(const Tensor<Scalar>& input) const {
  if (input.channels() != spec_.in_channels) {
    throw ShapeError("UNet: expected " + std::to_string(spec_.in_channels) + " input channels, got " +
                     std::to_string(input.channels()));
  }
  int h = input.height;
  int w = input.width;
  for (int l = 0; l < spec_.depth; ++l) {
    if (h % 2 != 0 || w % 2 != 0 || h < 2 || w < 2) {
      throw ShapeError("UNet: input " + std::to_string(input.height) + "x" + std::to_string(input.width) +
                       " cannot be halved at level " + std::to_string(l) + " (depth " +
                       std::to_string(spec_.depth) + ")");
    }
    h /= 2;
    w /= 2;
  }
}

template <typename Scalar>
Tensor<Scalar> UNet<Scalar>::block_forward(const ParameterSet<Scalar>& p, const BlockIndex& idx,
                                           const Tensor<Scalar>& in, BlockCache* cache) const {
  const auto& t = p.tensors;
  Tensor<Scalar> x = Conv3x3<Scalar>::forward(t[idx.conv1], in, cache ? &cache->conv1 : nullptr);
  x = InstanceNorm<Scalar>::forward(t[idx.norm1_gamma], t[idx.norm1_beta], x, cache ? &cache->norm1 : nullptr);
  LeakyRelu<Scalar>::forward_inplace(x);
  if (cache) cache->act1 = x.data;
  x = Conv3x3<Scalar>::forward(t[idx.conv2], x, cache ? &cache->conv2 : nullptr);
  x = InstanceNorm<Scalar>::forward(t[idx.norm2_gamma], t[idx.norm2_beta], x, cache ? &cache->norm2 : nullptr);
  LeakyRelu<Scalar>::forward_inplace(x);
  if (cache) cache->act2 = x.data;
  return x;
}

template <typename Scalar>
Tensor<Scalar> UNet<Scalar>::block_backward(const ParameterSet<Scalar>& p, const BlockIndex& idx,
                                            const BlockCache& cache, Mat<Scalar> grad, int batch,
                                            ParameterSet<Scalar>* grads, bool want_input) const {
  const auto& t = p.tensors;
  auto g = [grads](std::size_t i) -> Mat<Scalar>* { return grads ? &grads->tensors[i] : nullptr; };
  LeakyRelu<Scalar>::backward_inplace(cache.act2, grad);
  grad = InstanceNorm<Scalar>::backward(t[idx.norm2_gamma], cache.norm2, grad, batch, g(idx.norm2_gamma),
                                        g(idx.norm2_beta), true);
  Tensor<Scalar> gx = Conv3x3<Scalar>::backward(t[idx.conv2], cache.conv2, grad, g(idx.conv2), true);
  LeakyRelu<Scalar>::backward_inplace(cache.act1, gx.data);
  gx.data = InstanceNorm<Scalar>::backward(t[idx.norm1_gamma], cache.norm1, gx.data, batch, g(idx.norm1_gamma),
                                           g(idx.norm1_beta), true);
  return Conv3x3<Scalar>::backward(t[idx.conv1], cache.conv1, gx.data, g(idx.conv1), want_input);
}

template <typename Scalar>
Tensor<Scalar> UNet<Scalar>::forward(const ParameterSet<Scalar>& params, const Tensor<Scalar>& input,
                                     Tape* tape) const {
  check_input(input);
  if (tape) {
    tape->batch = input.batch;
    tape->height = input.height;
    tape->width = input.width;
    tape->enc.assign(spec_.depth, {});
    tape->up.assign(spec_.depth, {});
    tape->dec.assign(spec_.depth, {});
  }
  const auto& t = params.tensors;
  std::vector<Tensor<Scalar>> skips(spec_.depth);
  Tensor<Scalar> x = input;
  for (int l = 0; l < spec_.depth; ++l) {
    skips[l] = block_forward(params, enc_[l], x, tape ? &tape->enc[l] : nullptr);
    x = avg_pool2(skips[l]);
  }
  x = block_forward(params, bottleneck_, x, tape ? &tape->bottleneck : nullptr);
  for (int l = spec_.depth - 1; l >= 0; --l) {
    Tensor<Scalar> up = upsample2(x);
    up = Conv1x1<Scalar>::forward(t[up_[l].weight], t[up_[l].bias], up, tape ? &tape->up[l].conv : nullptr);
    LeakyRelu<Scalar>::forward_inplace(up);
    if (tape) tape->up[l].act = up.data;
    x = block_forward(params, dec_[l], concat_channels(up, skips[l]), tape ? &tape->dec[l] : nullptr);
  }
  Tensor<Scalar> out = Conv1x1<Scalar>::forward(t[head_weight_], t[head_bias_], concat_channels(x, input),
                                                tape ? &tape->head : nullptr);
  if (tape) tape->head_pre = out.data;
  if (spec_.head == OutputHead::LinearClamped) {
    out.data = out.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  } else {
    // Two-class softmax: p1 = sigmoid(z1 - z0).
    for (Eigen::Index i = 0; i < out.data.cols(); ++i) {
      const Scalar z0 = out.data(0, i);
      const Scalar z1 = out.data(1, i);
      const Scalar m = std::max(z0, z1);
      const Scalar e0 = std::exp(z0 - m);
      const Scalar e1 = std::exp(z1 - m);
      const Scalar s = e0 + e1;
      out.data(0, i) = e0 / s;
      out.data(1, i) = e1 / s;
    }
  }
  if (!out.data.allFinite()) {
    throw NonFiniteError("UNet: non-finite activation at layer 'head'");
  }
  if (tape) tape->output = out.data;
  return out;
}

template <typename Scalar>
Tensor<Scalar> UNet<Scalar>::backward(const ParameterSet<Scalar>& params, const Tape& tape,
                                      const Mat<Scalar>& grad_output, ParameterSet<Scalar>* grads,
                                      bool want_input) const {
  const auto& t = params.tensors;
  auto g = [grads](std::size_t i) -> Mat<Scalar>* { return grads ? &grads->tensors[i] : nullptr; };
  const int batch = tape.batch;

  Mat<Scalar> grad_pre;
  if (spec_.head == OutputHead::LinearClamped) {
    grad_pre = (tape.head_pre.array() >= Scalar(0) && tape.head_pre.array() <= Scalar(1))
                   .select(grad_output.array(), Scalar(0))
                   .matrix();
  } else {
    const auto& p = tape.output;
    grad_pre.resize(p.rows(), p.cols());
    const RowVec<Scalar> inner = (p.cwiseProduct(grad_output)).colwise().sum();
    for (Eigen::Index c = 0; c < p.rows(); ++c) {
      grad_pre.row(c) = p.row(c).cwiseProduct(grad_output.row(c) - inner);
    }
  }

  const int c0 = spec_.channels_at(0);
  Mat<Scalar> grad_head_in =
      Conv1x1<Scalar>::backward(t[head_weight_], tape.head, grad_pre, g(head_weight_), g(head_bias_), true);
  Mat<Scalar> grad_x = grad_head_in.topRows(c0);
  Mat<Scalar> grad_input_direct = grad_head_in.bottomRows(spec_.in_channels);

  std::vector<Mat<Scalar>> grad_skip(spec_.depth);
  for (int l = 0; l < spec_.depth; ++l) {
    const int c = spec_.channels_at(l);
    Tensor<Scalar> gcat = block_backward(params, dec_[l], tape.dec[l], std::move(grad_x), batch, grads, true);
    Mat<Scalar> grad_up = gcat.data.topRows(c);
    grad_skip[l] = gcat.data.bottomRows(c);
    LeakyRelu<Scalar>::backward_inplace(tape.up[l].act, grad_up);
    Tensor<Scalar> gu;
    gu.batch = batch;
    gu.height = gcat.height;
    gu.width = gcat.width;
    gu.data = Conv1x1<Scalar>::backward(t[up_[l].weight], tape.up[l].conv, grad_up, g(up_[l].weight),
                                        g(up_[l].bias), true);
    grad_x = upsample2_backward(gu).data;
  }
  Tensor<Scalar> gb = block_backward(params, bottleneck_, tape.bottleneck, std::move(grad_x), batch, grads, true);
  for (int l = spec_.depth - 1; l >= 0; --l) {
    Tensor<Scalar> from_below = avg_pool2_backward(gb);
    Mat<Scalar> grad_block = grad_skip[l] + from_below.data;
    const bool need_in = want_input || l > 0;
    gb = block_backward(params, enc_[l], tape.enc[l], std::move(grad_block), batch, grads, need_in);
  }

  Tensor<Scalar> grad_input;
  if (want_input) {
    grad_input = std::move(gb);
    grad_input.data += grad_input_direct;
  }
  return grad_input;
}

template class UNet<float>;
template class UNet<double>;

}  // namespace smile::nn
