#include "wscl/eval/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "wscl/stream_net.hpp"

namespace wscl {

double harmonic_mean(double a, double b) { return a + b > 0 ? 2 * a * b / (a + b) : 0.0; }

double combined_f1(double i_f1, double p_f1) { return harmonic_mean(i_f1, p_f1); }

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                                std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j + 1);  // 1-based ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum += midrank;
        ++npos;
      }
    }
    i = j;
  }
  const std::size_t nneg = n - npos;
  if (npos == 0 || nneg == 0) throw UndefinedMetric("roc_auc: needs both positive and negative samples");
  const double p = static_cast<double>(npos), q = static_cast<double>(nneg);
  return (rank_sum - p * (p + 1) / 2) / (p * q);
}

ImageMetrics image_metrics(std::span<const double> scores, std::span<const int> labels, double theta) {
  if (scores.size() != labels.size()) throw std::invalid_argument("image_metrics: size mismatch");
  ImageMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = at_or_above(scores[i], theta);
    if (labels[i]) {
      pred ? ++m.tp : ++m.fn;
    } else {
      pred ? ++m.fp : ++m.tn;
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  m.specificity = ratio(m.tn, m.tn + m.fp);
  m.sensitivity = ratio(m.tp, m.tp + m.fn);
  m.i_f1 = harmonic_mean(m.specificity, m.sensitivity);
  return m;
}

PixelMetrics pixel_f1(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("pixel_f1: prediction has " + std::to_string(predicted.size()) +
                                " pixels, ground truth " + std::to_string(truth.size()));
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0, t = truth[i] != 0;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  PixelMetrics m;
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = harmonic_mean(m.precision, m.recall);
  return m;
}

}  // namespace wscl
