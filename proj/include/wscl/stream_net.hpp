#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wscl/sources.hpp"
#include "wscl/tensor.hpp"

namespace wscl {

struct StreamArch {
  std::size_t image_size = 64;
  std::array<std::size_t, 4> channels{16, 32, 64, 64};
  std::size_t norm_group = 8;      // channels per normalization group
  std::size_t tap_downsample = 4;  // block-1 pooling factor
  std::size_t embed_hidden = 64;
  std::size_t embed_dim = 32;
  std::size_t bayar_kernel = 5;
};

template <typename T>
struct StreamOutput {
  Tensor<T> map;         // [N,H,W] manipulation probability
  Tensor<T> tap;         // [N,H',W',C] features after block 1
  Tensor<T> embed1;      // [N,H',W',D]
  Tensor<T> embed2;      // [N,H',W',D]
};

// One detector stream. Block 1 runs at full resolution and is pooled down by
// `tap_downsample`; block 2 halves the resolution again; blocks 3 and 4 keep
// it. The head predicts at 1/8 scale and is bilinearly upsampled.
template <typename T>
class StreamModel {
 public:
  StreamModel(SourceKind kind, StreamArch arch, std::uint64_t seed);

  SourceKind kind() const { return kind_; }
  const StreamArch& arch() const { return arch_; }
  std::size_t tap_channels() const { return arch_.channels[0]; }
  std::size_t tap_size() const { return arch_.image_size / arch_.tap_downsample; }

  // image on the [0,255] scale, [N,3,H,W].
  Tensor<T> source(const Tensor<T>& image);
  StreamOutput<T> forward_source(const Tensor<T>& source, bool with_embeddings = true) const;
  StreamOutput<T> forward(const Tensor<T>& image, bool with_embeddings = true);

  // Stable names: "<part>.<param>", e.g. "block2.conv".
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
  // Parameters contributing to the prediction map (excludes embedding heads).
  std::vector<Tensor<T>> map_parameters() const;
  std::vector<Tensor<T>> embedding_parameters() const;
  std::vector<Tensor<T>> parameters() const;
  std::size_t parameter_count() const;

  BayarLayer<T>* bayar() { return bayar_ ? &*bayar_ : nullptr; }
  const BayarLayer<T>* bayar() const { return bayar_ ? &*bayar_ : nullptr; }

 private:
  struct Block {
    Tensor<T> conv;
    Tensor<T> gamma;
    Tensor<T> beta;
    std::size_t stride = 1;
  };
  struct Mlp {
    Tensor<T> w1, b1, w2, b2;
  };

  Tensor<T> run_block(const Block& b, const Tensor<T>& x) const;
  Tensor<T> run_mlp(const Mlp& m, const Tensor<T>& rows) const;

  SourceKind kind_;
  StreamArch arch_;
  std::optional<BayarLayer<T>> bayar_;
  std::array<Block, 4> blocks_;
  Tensor<T> head_w_;
  Tensor<T> head_b_;
  Mlp phi1_;
  Mlp phi2_;
};

// Shared >= comparator for every thresholding decision.
template <typename T>
inline bool at_or_above(T value, double threshold) {
  return static_cast<double>(value) >= threshold;
}

// M̄[i] = 1 iff M̂[i] >= theta. Result is detached.
template <typename T>
Tensor<T> binarize(const Tensor<T>& map, double theta);

extern template class StreamModel<float>;
extern template class StreamModel<double>;

}  // namespace wscl
