#include "wscl/eval/evaluate.hpp"

#include <algorithm>
#include <numeric>

#include "wscl/eval/metrics.hpp"

namespace wscl {

template <typename T>
Predictions predict(Detector<T>& detector, EvalLoader& loader, const Perturbation& perturbation,
                    std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch size must be positive");
  Predictions out;
  for (std::size_t start = 0; start < loader.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, loader.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = loader.batch<T>(idx, perturbation);
    const auto inf = detector.infer(batch.images);
    const std::size_t h = batch.images.dim(2), w = batch.images.dim(3);
    const auto mask = inf.mask.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.scores.push_back(inf.scores[i]);
      out.labels.push_back(static_cast<int>(batch.labels[i]));
      Image m(w, h, 1);
      for (std::size_t q = 0; q < h * w; ++q) m.pixels[q] = mask[i * h * w + q] != T(0) ? 255 : 0;
      out.predicted_masks.push_back(std::move(m));
      out.truth_masks.push_back(batch.masks[i]);
      out.ids.push_back(batch.ids[i]);
    }
  }
  return out;
}

MetricsReport summarize(const Predictions& p, double theta) {
  MetricsReport r;
  r.threshold = theta;
  r.n_images = p.scores.size();
  try {
    r.auc = roc_auc(p.scores, p.labels);
  } catch (const UndefinedMetric&) {
    r.auc.reset();
  }
  const auto im = image_metrics(p.scores, p.labels, theta);
  r.specificity = im.specificity;
  r.sensitivity = im.sensitivity;
  r.i_f1 = im.i_f1;
  double sp = 0, sr = 0, sf = 0;
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    if (!p.labels[i]) continue;
    if (p.truth_masks[i].empty()) throw std::invalid_argument("summarize: tampered sample " + p.ids[i] + " has no mask");
    const auto pm = pixel_f1(p.predicted_masks[i].pixels, p.truth_masks[i].pixels);
    sp += pm.precision;
    sr += pm.recall;
    sf += pm.f1;
    ++r.n_tampered;
  }
  if (r.n_tampered) {
    const double n = static_cast<double>(r.n_tampered);
    r.pixel_precision = sp / n;
    r.pixel_recall = sr / n;
    r.p_f1 = sf / n;
  }
  r.c_f1 = combined_f1(r.i_f1, r.p_f1);
  return r;
}

template <typename T>
MetricsReport evaluate(Detector<T>& detector, EvalLoader& loader, const EvalOptions& options,
                       const Perturbation& perturbation) {
  auto r = summarize(predict(detector, loader, perturbation, options.batch_size),
                     detector.spec().ensemble.theta);
  r.point = perturbation.label();
  r.dataset = options.dataset;
  r.seed = options.seed;
  r.epoch = options.epoch;
  return r;
}

std::vector<Perturbation> RobustnessGrid::points() const {
  std::vector<Perturbation> out;
  for (int q : jpeg_qualities) out.push_back(Perturbation::jpeg(q));
  for (int k : blur_kernels) out.push_back(Perturbation::blur(k));
  return out;
}

template <typename T>
MetricsReport robustness_sweep(Detector<T>& detector, EvalLoader& loader, const RobustnessGrid& grid,
                               const EvalOptions& options) {
  auto root = evaluate(detector, loader, options);
  for (const auto& p : grid.points()) {
    try {
      root.perturbations.push_back(evaluate(detector, loader, options, p));
    } catch (const std::exception& e) {
      MetricsReport failed;
      failed.point = p.label();
      failed.dataset = options.dataset;
      failed.seed = options.seed;
      failed.epoch = options.epoch;
      failed.threshold = detector.spec().ensemble.theta;
      failed.error = e.what();
      root.perturbations.push_back(std::move(failed));
    }
  }
  return root;
}

#define WSCL_INSTANTIATE_EVAL(T)                                                                    \
  template Predictions predict(Detector<T>&, EvalLoader&, const Perturbation&, std::size_t);        \
  template MetricsReport evaluate(Detector<T>&, EvalLoader&, const EvalOptions&, const Perturbation&); \
  template MetricsReport robustness_sweep(Detector<T>&, EvalLoader&, const RobustnessGrid&,         \
                                          const EvalOptions&);

WSCL_INSTANTIATE_EVAL(float)
WSCL_INSTANTIATE_EVAL(double)

}  // namespace wscl
