#include "wscl/train/config.hpp"

#include <cmath>
#include <stdexcept>

namespace wscl {

using nlohmann::json;

std::string_view to_string(Precision p) { return p == Precision::kF64 ? "f64" : "f32"; }

Precision parse_precision(std::string_view name) {
  if (name == "f32") return Precision::kF32;
  if (name == "f64") return Precision::kF64;
  throw std::invalid_argument("unknown precision '" + std::string(name) + "' (expected f32 or f64)");
}

std::string streams_to_string(const std::vector<SourceKind>& streams) {
  std::string out;
  for (auto k : streams) {
    if (!out.empty()) out += ',';
    out += to_string(k);
  }
  return out;
}

std::vector<SourceKind> parse_streams(std::string_view list) {
  std::vector<SourceKind> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = std::min(list.find(',', start), list.size());
    const auto item = list.substr(start, end - start);
    if (!item.empty()) out.push_back(parse_source_kind(item));
    start = end + 1;
  }
  if (out.empty()) throw std::invalid_argument("streams: empty list");
  return out;
}

void RunConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (image_size < 32 || image_size % 8 != 0) bad("image_size", "must be a multiple of 8 and >= 32");
  if (epochs < 1) bad("epochs", "must be >= 1");
  if (batch_size < 1) bad("batch_size", "must be >= 1");
  if (!(lr > 0)) bad("lr", "must be positive");
  if (!(lr_decay > 0 && lr_decay <= 1)) bad("lr_decay", "must lie in (0,1]");
  if (weight_decay < 0) bad("weight_decay", "must be >= 0");
  if (!(val_fraction >= 0 && val_fraction < 1)) bad("val_fraction", "must lie in [0,1)");
  if (streams.empty()) bad("streams", "at least one stream required");
  for (auto s : streams) {
    if (s == SourceKind::kFused) bad("streams", "'fused' is selected with fusion=early");
  }
  detector_spec().ensemble.validate();
}

DetectorSpec RunConfig::detector_spec() const {
  DetectorSpec s;
  s.sources = streams;
  s.arch.image_size = image_size;
  auto& e = s.ensemble;
  e.w_rgb = w_rgb;
  e.w_srm = w_srm;
  e.w_bayar = w_bayar;
  e.theta = theta;
  e.lambda_msc = lambda_msc;
  e.lambda_ipc = lambda_ipc;
  e.total_epochs = epochs;
  e.ipc_mode = ipc_mode;
  e.fusion = fusion;
  e.pooling = pooling;
  e.volume_scale = volume_scale;
  return s;
}

int RunConfig::decay_epoch() const { return static_cast<int>(std::ceil(5.0 * epochs / 6.0)); }

double RunConfig::lr_at(int epoch) const { return epoch >= decay_epoch() ? lr * lr_decay : lr; }

double RunConfig::warmup_time(int epoch) const {
  if (epochs == 1) return 1.0;  // the only epoch is also the last: t = T = 1
  return static_cast<double>(epoch) * static_cast<double>(epochs) / static_cast<double>(epochs - 1);
}

json to_json(const RunConfig& c) {
  return {{"image_size", c.image_size},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"lr_decay", c.lr_decay},
          {"weight_decay", c.weight_decay},
          {"theta", c.theta},
          {"lambda_msc", c.lambda_msc},
          {"lambda_ipc", c.lambda_ipc},
          {"w_rgb", c.w_rgb},
          {"w_srm", c.w_srm},
          {"w_bayar", c.w_bayar},
          {"ipc_mode", std::string(to_string(c.ipc_mode))},
          {"fusion", std::string(to_string(c.fusion))},
          {"pooling", std::string(to_string(c.pooling))},
          {"volume_scale", std::string(to_string(c.volume_scale))},
          {"streams", streams_to_string(c.streams)},
          {"precision", std::string(to_string(c.precision))},
          {"val_fraction", c.val_fraction},
          {"augment_pad", c.augment_pad},
          {"seed", c.seed}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  const json defaults = to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("image_size", c.image_size);
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("lr", c.lr);
  get("lr_decay", c.lr_decay);
  get("weight_decay", c.weight_decay);
  get("theta", c.theta);
  get("lambda_msc", c.lambda_msc);
  get("lambda_ipc", c.lambda_ipc);
  get("w_rgb", c.w_rgb);
  get("w_srm", c.w_srm);
  get("w_bayar", c.w_bayar);
  get("val_fraction", c.val_fraction);
  get("augment_pad", c.augment_pad);
  get("seed", c.seed);
  if (j.contains("ipc_mode")) c.ipc_mode = parse_ipc_mode(j["ipc_mode"].get<std::string>());
  if (j.contains("fusion")) c.fusion = parse_fusion_mode(j["fusion"].get<std::string>());
  if (j.contains("pooling")) c.pooling = parse_pool_kind(j["pooling"].get<std::string>());
  if (j.contains("volume_scale")) c.volume_scale = parse_volume_scale(j["volume_scale"].get<std::string>());
  if (j.contains("streams")) c.streams = parse_streams(j["streams"].get<std::string>());
  if (j.contains("precision")) c.precision = parse_precision(j["precision"].get<std::string>());
  return c;
}

}  // namespace wscl
