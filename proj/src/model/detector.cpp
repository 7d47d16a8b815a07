#include "wscl/detector.hpp"

#include <stdexcept>

#include "wscl/ops.hpp"
#include "wscl/rng.hpp"

namespace wscl {

double stream_weight(const EnsembleConfig& config, SourceKind kind) {
  switch (kind) {
    case SourceKind::kRgb: return config.w_rgb;
    case SourceKind::kSrm: return config.w_srm;
    case SourceKind::kBayar: return config.w_bayar;
    case SourceKind::kFused: return 1.0;
  }
  return 1.0;
}

template <typename T>
Detector<T>::Detector(DetectorSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.ensemble.validate();
  std::vector<SourceKind> kinds = spec_.sources;
  if (spec_.ensemble.fusion == FusionMode::kEarly) kinds = {SourceKind::kFused};
  if (kinds.empty()) throw std::invalid_argument("detector: no streams configured");
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    streams_.emplace_back(kinds[i], spec_.arch, Rng::derive(seed, 1000 + static_cast<std::uint64_t>(kinds[i])));
    weights_.push_back(stream_weight(spec_.ensemble, kinds[i]));
  }
}

template <typename T>
bool Detector<T>::msc_enabled() const {
  return spec_.ensemble.fusion == FusionMode::kLate && spec_.ensemble.lambda_msc > 0.0;
}

template <typename T>
bool Detector<T>::ipc_enabled() const {
  if (spec_.ensemble.lambda_ipc <= 0.0) return false;
  return !(spec_.ensemble.fusion == FusionMode::kEarly && spec_.ensemble.ipc_mode == IpcMode::kEnsemble);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Detector<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (const auto& s : streams_) {
    const std::string prefix = std::string(to_string(s.kind())) + "/";
    for (auto& [name, p] : s.named_parameters()) out.emplace_back(prefix + name, p);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Detector<T>::named_trainable_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  const bool ipc = ipc_enabled();
  for (auto& [name, p] : named_parameters()) {
    const bool embedding = name.find("/phi") != std::string::npos;
    if (!embedding || ipc) out.emplace_back(name, p);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> Detector<T>::trainable_parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, p] : named_trainable_parameters()) out.push_back(p);
  return out;
}

template <typename T>
void Detector<T>::project_constraints() {
  for (auto& s : streams_) {
    if (auto* b = s.bayar()) b->project();
  }
}

template <typename T>
LossReport<T> Detector<T>::training_loss(const Tensor<T>& images, std::span<const double> labels,
                                         double t) {
  const auto& cfg = spec_.ensemble;
  const std::size_t n = images.dim(0);
  if (labels.size() != n) {
    throw std::invalid_argument("training_loss: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(n) + " images");
  }
  const bool use_ipc = ipc_enabled();
  const bool need_ensemble =
      msc_enabled() || (use_ipc && cfg.ipc_mode == IpcMode::kEnsemble);

  std::vector<StreamOutput<T>> outs;
  outs.reserve(streams_.size());
  for (auto& s : streams_) outs.push_back(s.forward(images, use_ipc));

  const Tensor<T> y(Shape{n}, std::vector<T>(labels.begin(), labels.end()));
  Tensor<T> ens_binary;
  if (need_ensemble) {
    std::vector<Tensor<T>> maps;
    for (const auto& o : outs) maps.push_back(o.map.detach());
    ens_binary = pseudo_gt(ensemble_map(maps, weights_), cfg.theta);
  }

  LossReport<T> report;
  for (std::size_t i = 0; i < streams_.size(); ++i) {
    StreamLossTerms<T> terms;
    terms.stream = std::string(to_string(streams_[i].kind()));
    terms.acls = ops::bce(y, pool(outs[i].map, cfg.pooling));
    if (msc_enabled()) terms.msc = msc_loss(ens_binary, outs[i].map);
    if (use_ipc) {
      const auto teacher = select_ipc_target(cfg.ipc_mode, outs[i].map, ens_binary, cfg.theta);
      const std::size_t hp = outs[i].tap.dim(1), wp = outs[i].tap.dim(2);
      const std::size_t scale_dim = cfg.volume_scale == VolumeScale::kTapChannels
                                        ? streams_[i].tap_channels()
                                        : spec_.arch.embed_dim;
      const auto volume = consistency_volume(outs[i].embed1, outs[i].embed2, scale_dim);
      terms.ipc = ipc_loss(target_volume(teacher, hp, wp), volume);
    }
    report.terms.push_back(std::move(terms));
  }
  report.total = total_loss(report.terms, t, static_cast<double>(cfg.total_epochs), cfg.lambda_msc,
                            cfg.lambda_ipc);
  return report;
}

template <typename T>
Inference<T> Detector<T>::infer(const Tensor<T>& images) {
  NoGradGuard guard;
  const auto& cfg = spec_.ensemble;
  const std::size_t n = images.dim(0);
  Inference<T> out;
  std::vector<Tensor<T>> maps;
  double wsum = 0.0;
  for (double w : weights_) wsum += w;
  out.scores.assign(n, 0.0);
  for (std::size_t i = 0; i < streams_.size(); ++i) {
    const auto o = streams_[i].forward(images, false);
    const auto s = pool(o.map, cfg.pooling);
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) {
      col[k] = static_cast<double>(s.at(k));
      out.scores[k] += weights_[i] / wsum * col[k];
    }
    out.stream_scores.push_back(std::move(col));
    maps.push_back(o.map);
  }
  out.ensemble = ensemble_map(maps, weights_);
  out.mask = pseudo_gt(out.ensemble, cfg.theta);
  return out;
}

template class Detector<float>;
template class Detector<double>;

}  // namespace wscl
