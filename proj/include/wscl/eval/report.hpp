#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace wscl {

// Full metric set for one dataset under one perturbation. The baseline
// report holds the per-perturbation sub-reports of a robustness sweep.
struct MetricsReport {
  std::string point = "none";    // perturbation label
  std::optional<double> auc;     // absent when the set has a single class
  double specificity = 0;
  double sensitivity = 0;
  double i_f1 = 0;
  double pixel_precision = 0;    // macro over tampered images
  double pixel_recall = 0;
  double p_f1 = 0;
  double c_f1 = 0;
  std::size_t n_images = 0;
  std::size_t n_tampered = 0;

  double threshold = 0.5;
  std::string dataset;
  std::uint64_t seed = 0;
  int epoch = -1;
  std::optional<std::string> error;  // set when this point could not be evaluated

  std::vector<MetricsReport> perturbations;
  nlohmann::json config = nlohmann::json::object();  // resolved run configuration
};

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

// Flat CSV: header plus one row for the baseline and one per perturbation.
std::string to_csv(const MetricsReport& report, bool header = true);

// JSON Schema (draft 2020-12) for to_json output.
const nlohmann::json& report_schema();
// Checks a document against the schema's required fields, types and
// [0,1] ranges. Returns human-readable problems; empty means valid.
std::vector<std::string> validate_report(const nlohmann::json& j);

}  // namespace wscl
