#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wscl/consistency.hpp"
#include "wscl/stream_net.hpp"

namespace wscl {

// The set of streams a run trains. Late fusion uses the listed sources as
// independent streams; early fusion replaces them with one 9-channel stream.
struct DetectorSpec {
  std::vector<SourceKind> sources{SourceKind::kRgb, SourceKind::kSrm, SourceKind::kBayar};
  EnsembleConfig ensemble;
  StreamArch arch;
};

template <typename T>
struct Inference {
  std::vector<double> scores;                    // image-level, per image
  std::vector<std::vector<double>> stream_scores;  // [stream][image]
  Tensor<T> ensemble;                            // [N,H,W] weighted map
  Tensor<T> mask;                                // [N,H,W] binary localization
};

template <typename T>
struct LossReport {
  Tensor<T> total;
  std::vector<StreamLossTerms<T>> terms;
};

template <typename T>
class Detector {
 public:
  Detector(DetectorSpec spec, std::uint64_t seed);

  const DetectorSpec& spec() const { return spec_; }
  std::vector<StreamModel<T>>& streams() { return streams_; }
  const std::vector<StreamModel<T>>& streams() const { return streams_; }
  const std::vector<double>& weights() const { return weights_; }

  bool msc_enabled() const;
  bool ipc_enabled() const;

  // Parameters the configured losses actually reach, named "<stream>/<param>".
  std::vector<std::pair<std::string, Tensor<T>>> named_trainable_parameters() const;
  std::vector<Tensor<T>> trainable_parameters() const;
  // Every parameter of every stream, trainable or not.
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
  void project_constraints();

  // images [N,3,H,W] on the [0,255] scale; labels in {0,1}.
  LossReport<T> training_loss(const Tensor<T>& images, std::span<const double> labels, double t);

  Inference<T> infer(const Tensor<T>& images);

 private:
  DetectorSpec spec_;
  std::vector<StreamModel<T>> streams_;
  std::vector<double> weights_;
};

double stream_weight(const EnsembleConfig& config, SourceKind kind);

extern template class Detector<float>;
extern template class Detector<double>;

}  // namespace wscl
