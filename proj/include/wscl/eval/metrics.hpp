#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace wscl {

// Raised when a metric is mathematically undefined for the input (e.g. AUC
// with one class present).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Probability that a random positive outscores a random negative, ties 1/2.
// Midrank formulation, O(n log n).
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct ImageMetrics {
  double specificity = 0;
  double sensitivity = 0;
  double i_f1 = 0;  // harmonic mean of specificity and sensitivity
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

// Prediction is positive iff score >= theta.
ImageMetrics image_metrics(std::span<const double> scores, std::span<const int> labels, double theta);

struct PixelMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Nonzero entries are positive. Sizes must match.
PixelMetrics pixel_f1(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

// 2ab/(a+b); 0 when a + b == 0.
double harmonic_mean(double a, double b);
double combined_f1(double i_f1, double p_f1);

}  // namespace wscl
