#include "wscl/stream_net.hpp"

#include <cmath>
#include <stdexcept>

#include "wscl/ops.hpp"

namespace wscl {

namespace {

template <typename T>
Tensor<T> normal_param(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.normal() * stddev);
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> constant_param(Shape shape, T value) {
  Tensor<T> t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

std::size_t input_channels(SourceKind kind) { return kind == SourceKind::kFused ? 9 : 3; }

}  // namespace

template <typename T>
StreamModel<T>::StreamModel(SourceKind kind, StreamArch arch, std::uint64_t seed)
    : kind_(kind), arch_(arch) {
  if (arch_.image_size % (arch_.tap_downsample * 2) != 0) {
    throw std::invalid_argument("stream: image size " + std::to_string(arch_.image_size) +
                                " must be divisible by " + std::to_string(arch_.tap_downsample * 2));
  }
  Rng rng(seed);
  if (kind_ == SourceKind::kBayar || kind_ == SourceKind::kFused) {
    bayar_.emplace(3, arch_.bayar_kernel, rng);
  }
  const std::array<std::size_t, 4> strides{1, 2, 1, 1};
  std::size_t cin = input_channels(kind_);
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t cout = arch_.channels[b];
    if (cout % arch_.norm_group != 0) {
      throw std::invalid_argument("stream: channel count " + std::to_string(cout) +
                                  " not divisible by normalization group " +
                                  std::to_string(arch_.norm_group));
    }
    const double fan_in = static_cast<double>(cin * 9);
    blocks_[b].conv = normal_param<T>(Shape{cout, cin, 3, 3}, std::sqrt(2.0 / fan_in), rng);
    blocks_[b].gamma = constant_param<T>(Shape{cout}, T(1));
    blocks_[b].beta = constant_param<T>(Shape{cout}, T(0));
    blocks_[b].stride = strides[b];
    cin = cout;
  }
  // Small head init keeps the untrained map near 0.5.
  head_w_ = normal_param<T>(Shape{1, cin, 1, 1}, 0.01, rng);
  head_b_ = constant_param<T>(Shape{1}, T(0));

  const std::size_t c = arch_.channels[0];
  auto init_mlp = [&](Mlp& m) {
    m.w1 = normal_param<T>(Shape{c, arch_.embed_hidden}, std::sqrt(2.0 / static_cast<double>(c)), rng);
    m.b1 = constant_param<T>(Shape{arch_.embed_hidden}, T(0));
    m.w2 = normal_param<T>(Shape{arch_.embed_hidden, arch_.embed_dim},
                           std::sqrt(1.0 / static_cast<double>(arch_.embed_hidden)), rng);
    m.b2 = constant_param<T>(Shape{arch_.embed_dim}, T(0));
  };
  init_mlp(phi1_);
  init_mlp(phi2_);
}

template <typename T>
Tensor<T> StreamModel<T>::source(const Tensor<T>& image) {
  const std::size_t s = arch_.image_size;
  if (image.ndim() != 4 || image.dim(1) != 3 || image.dim(2) != s || image.dim(3) != s) {
    throw std::invalid_argument("stream: expected image [N,3," + std::to_string(s) + "," +
                                std::to_string(s) + "], got " + shape_str(image.shape()));
  }
  return make_source(image, kind_, bayar());
}

template <typename T>
Tensor<T> StreamModel<T>::run_block(const Block& b, const Tensor<T>& x) const {
  const auto y = ops::conv2d(x, b.conv, Tensor<T>(), b.stride, 1);
  const std::size_t groups = b.conv.dim(0) / arch_.norm_group;
  return ops::relu(ops::group_norm(y, groups, b.gamma, b.beta));
}

template <typename T>
Tensor<T> StreamModel<T>::run_mlp(const Mlp& m, const Tensor<T>& rows) const {
  return ops::linear(ops::relu(ops::linear(rows, m.w1, m.b1)), m.w2, m.b2);
}

template <typename T>
StreamOutput<T> StreamModel<T>::forward_source(const Tensor<T>& src, bool with_embeddings) const {
  const std::size_t s = arch_.image_size;
  const std::size_t cin = input_channels(kind_);
  if (src.ndim() != 4 || src.dim(1) != cin || src.dim(2) != s || src.dim(3) != s) {
    throw std::invalid_argument("stream: expected source [N," + std::to_string(cin) + "," +
                                std::to_string(s) + "," + std::to_string(s) + "], got " +
                                shape_str(src.shape()));
  }
  const std::size_t n = src.dim(0);
  auto x = ops::avg_pool2d(run_block(blocks_[0], src), arch_.tap_downsample);
  const auto tap_nchw = x;
  for (std::size_t b = 1; b < 4; ++b) x = run_block(blocks_[b], x);
  const auto logits = ops::conv2d(x, head_w_, head_b_, 1, 0);
  const auto prob = ops::upsample_bilinear(ops::sigmoid(logits), s, s);

  StreamOutput<T> out;
  out.map = ops::reshape(prob, Shape{n, s, s});
  const std::size_t hp = tap_nchw.dim(2), wp = tap_nchw.dim(3), c = tap_nchw.dim(1);
  out.tap = ops::permute(tap_nchw, {0, 2, 3, 1});
  if (with_embeddings) {
    const auto rows = ops::reshape(out.tap, Shape{n * hp * wp, c});
    out.embed1 = ops::reshape(run_mlp(phi1_, rows), Shape{n, hp, wp, arch_.embed_dim});
    out.embed2 = ops::reshape(run_mlp(phi2_, rows), Shape{n, hp, wp, arch_.embed_dim});
  }
  return out;
}

template <typename T>
StreamOutput<T> StreamModel<T>::forward(const Tensor<T>& image, bool with_embeddings) {
  return forward_source(source(image), with_embeddings);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> StreamModel<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  if (bayar_) out.emplace_back("bayar.weight", bayar_->weight());
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string p = "block" + std::to_string(b + 1);
    out.emplace_back(p + ".conv", blocks_[b].conv);
    out.emplace_back(p + ".gamma", blocks_[b].gamma);
    out.emplace_back(p + ".beta", blocks_[b].beta);
  }
  out.emplace_back("head.weight", head_w_);
  out.emplace_back("head.bias", head_b_);
  auto add_mlp = [&](const std::string& p, const Mlp& m) {
    out.emplace_back(p + ".w1", m.w1);
    out.emplace_back(p + ".b1", m.b1);
    out.emplace_back(p + ".w2", m.w2);
    out.emplace_back(p + ".b2", m.b2);
  };
  add_mlp("phi1", phi1_);
  add_mlp("phi2", phi2_);
  return out;
}

template <typename T>
std::vector<Tensor<T>> StreamModel<T>::map_parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named_parameters()) {
    if (name.rfind("phi", 0) != 0) out.push_back(t);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> StreamModel<T>::embedding_parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named_parameters()) {
    if (name.rfind("phi", 0) == 0) out.push_back(t);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> StreamModel<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename T>
std::size_t StreamModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

template <typename T>
Tensor<T> binarize(const Tensor<T>& map, double theta) {
  std::vector<T> out(map.numel());
  const auto v = map.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = at_or_above(v[k], theta) ? T(1) : T(0);
  return Tensor<T>(map.shape(), std::move(out));
}

template class StreamModel<float>;
template class StreamModel<double>;
template Tensor<float> binarize(const Tensor<float>&, double);
template Tensor<double> binarize(const Tensor<double>&, double);

}  // namespace wscl
