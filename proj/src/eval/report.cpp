#include "wscl/eval/report.hpp"

#include <iomanip>
#include <sstream>

namespace wscl {

using nlohmann::json;

namespace {

const char* const kRates[] = {"specificity", "sensitivity", "i_f1",  "pixel_precision",
                              "pixel_recall", "p_f1",       "c_f1"};

}  // namespace

json to_json(const MetricsReport& r) {
  json j{{"point", r.point},
         {"auc", r.auc ? json(*r.auc) : json(nullptr)},
         {"specificity", r.specificity},
         {"sensitivity", r.sensitivity},
         {"i_f1", r.i_f1},
         {"pixel_precision", r.pixel_precision},
         {"pixel_recall", r.pixel_recall},
         {"p_f1", r.p_f1},
         {"c_f1", r.c_f1},
         {"n_images", r.n_images},
         {"n_tampered", r.n_tampered},
         {"metadata", {{"threshold", r.threshold}, {"dataset", r.dataset}, {"seed", r.seed}, {"epoch", r.epoch}}},
         {"error", r.error ? json(*r.error) : json(nullptr)},
         {"perturbations", json::array()}};
  for (const auto& p : r.perturbations) j["perturbations"].push_back(to_json(p));
  if (!r.config.empty()) j["config"] = r.config;
  return j;
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.point = j.at("point").get<std::string>();
  if (!j.at("auc").is_null()) r.auc = j["auc"].get<double>();
  r.specificity = j.at("specificity").get<double>();
  r.sensitivity = j.at("sensitivity").get<double>();
  r.i_f1 = j.at("i_f1").get<double>();
  r.pixel_precision = j.at("pixel_precision").get<double>();
  r.pixel_recall = j.at("pixel_recall").get<double>();
  r.p_f1 = j.at("p_f1").get<double>();
  r.c_f1 = j.at("c_f1").get<double>();
  r.n_images = j.at("n_images").get<std::size_t>();
  r.n_tampered = j.at("n_tampered").get<std::size_t>();
  const auto& m = j.at("metadata");
  r.threshold = m.at("threshold").get<double>();
  r.dataset = m.at("dataset").get<std::string>();
  r.seed = m.at("seed").get<std::uint64_t>();
  r.epoch = m.at("epoch").get<int>();
  if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
  for (const auto& p : j.at("perturbations")) r.perturbations.push_back(report_from_json(p));
  if (j.contains("config")) r.config = j["config"];
  return r;
}

std::string to_csv(const MetricsReport& report, bool header) {
  std::ostringstream os;
  os << std::setprecision(17);
  if (header) {
    os << "dataset,point,auc,specificity,sensitivity,i_f1,pixel_precision,pixel_recall,p_f1,c_f1,"
          "n_images,n_tampered,threshold,seed,epoch,error\n";
  }
  auto row = [&](const MetricsReport& r) {
    os << r.dataset << ',' << r.point << ',';
    if (r.auc) os << *r.auc;
    os << ',' << r.specificity << ',' << r.sensitivity << ',' << r.i_f1 << ',' << r.pixel_precision << ','
       << r.pixel_recall << ',' << r.p_f1 << ',' << r.c_f1 << ',' << r.n_images << ',' << r.n_tampered
       << ',' << r.threshold << ',' << r.seed << ',' << r.epoch << ',';
    if (r.error) {
      std::string e = *r.error;
      for (auto& ch : e) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
      os << e;
    }
    os << '\n';
  };
  row(report);
  for (const auto& p : report.perturbations) row(p);
  return os.str();
}

const json& report_schema() {
  static const json schema = [] {
    json rate{{"type", "number"}, {"minimum", 0}, {"maximum", 1}};
    json node{{"type", "object"},
              {"required", {"point", "auc", "specificity", "sensitivity", "i_f1", "pixel_precision",
                            "pixel_recall", "p_f1", "c_f1", "n_images", "n_tampered", "metadata",
                            "error", "perturbations"}},
              {"properties",
               {{"point", {{"type", "string"}}},
                {"auc", {{"type", {"number", "null"}}, {"minimum", 0}, {"maximum", 1}}},
                {"n_images", {{"type", "integer"}, {"minimum", 0}}},
                {"n_tampered", {{"type", "integer"}, {"minimum", 0}}},
                {"metadata",
                 {{"type", "object"},
                  {"required", {"threshold", "dataset", "seed", "epoch"}},
                  {"properties",
                   {{"threshold", {{"type", "number"}, {"exclusiveMinimum", 0}, {"exclusiveMaximum", 1}}},
                    {"dataset", {{"type", "string"}}},
                    {"seed", {{"type", "integer"}, {"minimum", 0}}},
                    {"epoch", {{"type", "integer"}}}}}}},
                {"error", {{"type", {"string", "null"}}}},
                {"perturbations", {{"type", "array"}, {"items", {{"$ref", "#"}}}}},
                {"config", {{"type", "object"}}}}}};
    for (const char* k : kRates) node["properties"][k] = rate;
    node["$schema"] = "https://json-schema.org/draft/2020-12/schema";
    node["title"] = "MetricsReport";
    return node;
  }();
  return schema;
}

namespace {

void validate_node(const json& j, const std::string& where, std::vector<std::string>& errs) {
  if (!j.is_object()) {
    errs.push_back(where + ": not an object");
    return;
  }
  for (const auto& key : report_schema()["required"]) {
    if (!j.contains(key.get<std::string>())) errs.push_back(where + ": missing '" + key.get<std::string>() + "'");
  }
  if (!errs.empty()) return;
  if (!j["point"].is_string()) errs.push_back(where + ".point: expected string");
  if (!j["auc"].is_null() && !(j["auc"].is_number() && j["auc"] >= 0 && j["auc"] <= 1)) {
    errs.push_back(where + ".auc: expected number in [0,1] or null");
  }
  for (const char* k : kRates) {
    const auto& v = j[k];
    if (!v.is_number() || v.get<double>() < 0 || v.get<double>() > 1) {
      errs.push_back(where + "." + k + ": expected number in [0,1]");
    }
  }
  for (const char* k : {"n_images", "n_tampered"}) {
    if (!j[k].is_number_unsigned() && !(j[k].is_number_integer() && j[k] >= 0)) {
      errs.push_back(where + "." + k + ": expected non-negative integer");
    }
  }
  if (j["n_tampered"].is_number() && j["n_images"].is_number() && j["n_tampered"] > j["n_images"]) {
    errs.push_back(where + ": n_tampered exceeds n_images");
  }
  const auto& m = j["metadata"];
  if (!m.is_object() || !m.contains("threshold") || !m.contains("dataset") || !m.contains("seed") ||
      !m.contains("epoch")) {
    errs.push_back(where + ".metadata: missing fields");
  } else {
    if (!m["threshold"].is_number() || m["threshold"] <= 0 || m["threshold"] >= 1) {
      errs.push_back(where + ".metadata.threshold: expected number in (0,1)");
    }
    if (!m["dataset"].is_string()) errs.push_back(where + ".metadata.dataset: expected string");
    if (!m["seed"].is_number_integer()) errs.push_back(where + ".metadata.seed: expected integer");
    if (!m["epoch"].is_number_integer()) errs.push_back(where + ".metadata.epoch: expected integer");
  }
  if (!j["error"].is_null() && !j["error"].is_string()) errs.push_back(where + ".error: expected string or null");
  if (j.contains("config") && !j["config"].is_object()) errs.push_back(where + ".config: expected object");
  // c_f1 must vanish when either F1 does
  if (j["i_f1"].is_number() && j["p_f1"].is_number() && j["c_f1"].is_number() &&
      (j["i_f1"] == 0 || j["p_f1"] == 0) && j["c_f1"] != 0) {
    errs.push_back(where + ".c_f1: must be 0 when either F1 is 0");
  }
  if (!j["perturbations"].is_array()) {
    errs.push_back(where + ".perturbations: expected array");
    return;
  }
  for (std::size_t i = 0; i < j["perturbations"].size(); ++i) {
    validate_node(j["perturbations"][i], where + ".perturbations[" + std::to_string(i) + "]", errs);
  }
}

}  // namespace

std::vector<std::string> validate_report(const json& j) {
  std::vector<std::string> errs;
  validate_node(j, "$", errs);
  return errs;
}

}  // namespace wscl
