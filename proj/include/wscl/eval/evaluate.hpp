#pragma once

#include <string>
#include <vector>

#include "wscl/data/eval_loader.hpp"
#include "wscl/data/perturb.hpp"
#include "wscl/detector.hpp"
#include "wscl/eval/report.hpp"

namespace wscl {

struct EvalOptions {
  std::size_t batch_size = 32;
  std::string dataset;
  std::uint64_t seed = 0;
  int epoch = -1;
};

// Collected detector outputs over an evaluation set.
struct Predictions {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<Image> predicted_masks;  // 1-channel {0,255}, every image
  std::vector<Image> truth_masks;      // empty image for authentic samples
  std::vector<std::string> ids;
};

template <typename T>
Predictions predict(Detector<T>& detector, EvalLoader& loader, const Perturbation& perturbation,
                    std::size_t batch_size = 32);

// AUC, image metrics at theta, macro pixel metrics over tampered images, C-F1.
MetricsReport summarize(const Predictions& predictions, double theta);

template <typename T>
MetricsReport evaluate(Detector<T>& detector, EvalLoader& loader, const EvalOptions& options,
                       const Perturbation& perturbation = Perturbation::none());

struct RobustnessGrid {
  std::vector<int> jpeg_qualities{100, 90, 80, 70, 60, 50};
  std::vector<int> blur_kernels{1, 3, 5, 7, 9};

  std::vector<Perturbation> points() const;
};

// Baseline report with one sub-report per grid point (JPEG first, then blur).
// A failing point records its error and the sweep continues.
template <typename T>
MetricsReport robustness_sweep(Detector<T>& detector, EvalLoader& loader, const RobustnessGrid& grid,
                               const EvalOptions& options);

}  // namespace wscl
