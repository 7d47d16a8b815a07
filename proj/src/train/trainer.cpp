#include "wscl/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "wscl/eval/metrics.hpp"

namespace wscl {

using nlohmann::json;

json to_json(const EpochLog& log) {
  json streams = json::object();
  for (const auto& [name, s] : log.streams) streams[name] = {{"a_cls", s.acls}, {"msc", s.msc}, {"ipc", s.ipc}};
  return {{"epoch", log.epoch},
          {"t", log.t},
          {"warmup", log.warmup},
          {"lr", log.lr},
          {"steps", log.steps},
          {"loss", log.loss},
          {"streams", streams},
          {"val_auc", log.val_auc ? json(*log.val_auc) : json(nullptr)}};
}

Split validation_split(const WeakManifest& manifest, double fraction, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x5917));
  Split s;
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      if (manifest.records[i].label == label) idx.push_back(i);
    }
    rng.shuffle(idx.begin(), idx.end());
    const auto nval = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    s.val.insert(s.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nval));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(nval), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

namespace {
RunConfig checked(RunConfig c) {
  c.validate();
  return c;
}

AdamWConfig adam_config(const RunConfig& c) {
  AdamWConfig a;
  a.lr = c.lr;
  a.weight_decay = c.weight_decay;
  return a;
}
}  // namespace

template <typename T>
Trainer<T>::Trainer(RunConfig config, WeakManifest manifest)
    : config_(checked(std::move(config))),
      detector_(config_.detector_spec(), Rng::derive(config_.seed, 0xD37)),
      optimizer_(detector_.trainable_parameters(), adam_config(config_)),
      loader_(manifest, config_.image_size),
      split_(validation_split(manifest, config_.val_fraction, config_.seed)),
      rng_(Rng::derive(config_.seed, 0xBA7C)) {
  if (split_.train.empty()) throw std::invalid_argument("trainer: no training samples");
}

template <typename T>
LossReport<T> Trainer<T>::step(const Tensor<T>& images, std::span<const double> labels, double t) {
  auto report = detector_.training_loss(images, labels, t);
  report.total.backward();
  optimizer_.step();
  detector_.project_constraints();
  return report;
}

template <typename T>
EpochLog Trainer<T>::run_epoch() {
  if (finished()) throw std::logic_error("trainer: all epochs already run");
  EpochLog log;
  log.epoch = epoch_;
  log.t = config_.warmup_time(epoch_);
  log.warmup = warmup(log.t, static_cast<double>(config_.epochs));
  log.lr = config_.lr_at(epoch_);
  optimizer_.set_lr(log.lr);

  std::vector<std::size_t> order = split_.train;
  rng_.shuffle(order.begin(), order.end());
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    const auto batch = loader_.batch<T>(idx, &rng_);
    const auto report = step(batch.images, batch.labels, log.t);
    loss_sum += static_cast<double>(report.total.item());
    for (const auto& term : report.terms) {
      auto& m = log.streams[term.stream];
      m.acls += static_cast<double>(term.acls.item());
      if (term.msc.defined()) m.msc += static_cast<double>(term.msc.item());
      if (term.ipc.defined()) m.ipc += static_cast<double>(term.ipc.item());
    }
    ++log.steps;
  }
  const double n = static_cast<double>(log.steps);
  log.loss = loss_sum / n;
  for (auto& [name, m] : log.streams) {
    m.acls /= n;
    m.msc /= n;
    m.ipc /= n;
  }
  ++epoch_;
  log.val_auc = validate();
  if (log.val_auc && (!best_val_auc_ || *log.val_auc > *best_val_auc_)) best_val_auc_ = log.val_auc;
  return log;
}

template <typename T>
std::optional<double> Trainer<T>::validate() {
  if (split_.val.empty()) return std::nullopt;
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t start = 0; start < split_.val.size(); start += config_.batch_size) {
    const std::size_t end = std::min(split_.val.size(), start + config_.batch_size);
    const std::span<const std::size_t> idx(split_.val.data() + start, end - start);
    const auto batch = loader_.batch<T>(idx);
    const auto inf = detector_.infer(batch.images);
    scores.insert(scores.end(), inf.scores.begin(), inf.scores.end());
    for (double y : batch.labels) labels.push_back(static_cast<int>(y));
  }
  try {
    return roc_auc(scores, labels);
  } catch (const UndefinedMetric&) {
    return std::nullopt;
  }
}

template <typename T>
Checkpoint Trainer<T>::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.epoch = epoch_;
  c.rng_state = rng_.state();
  c.best_val_auc = best_val_auc_;
  c.adam_step = optimizer_.step_count();
  auto add = [&](const std::string& name, const Shape& shape, std::span<const T> v) {
    c.tensors.push_back({name, shape, std::vector<double>(v.begin(), v.end())});
  };
  for (const auto& [name, p] : detector_.named_parameters()) add(name, p.shape(), p.data());
  const auto named = detector_.named_trainable_parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    const Shape& shape = named[i].second.shape();
    add("adam.m/" + named[i].first, shape, optimizer_.first_moments()[i]);
    add("adam.v/" + named[i].first, shape, optimizer_.second_moments()[i]);
  }
  return c;
}

template <typename T>
void Trainer<T>::restore(const Checkpoint& c) {
  if (to_json(c.config) != to_json(config_)) {
    throw std::invalid_argument("checkpoint: configuration differs from the trainer's");
  }
  auto entry = [&](const std::string& name, const Shape& shape) -> const CheckpointEntry& {
    const auto* e = c.find(name);
    if (!e) throw std::invalid_argument("checkpoint: missing entry " + name);
    if (e->shape != shape) {
      throw std::invalid_argument("checkpoint: entry " + name + " has shape " + shape_str(e->shape) +
                                  ", expected " + shape_str(shape));
    }
    return *e;
  };
  load_parameters(detector_, c);
  const auto named = detector_.named_trainable_parameters();
  std::vector<std::vector<T>> m, v;
  for (const auto& [name, p] : named) {
    const auto& em = entry("adam.m/" + name, p.shape());
    const auto& ev = entry("adam.v/" + name, p.shape());
    m.emplace_back(em.values.begin(), em.values.end());
    v.emplace_back(ev.values.begin(), ev.values.end());
  }
  optimizer_.restore(c.adam_step, std::move(m), std::move(v));
  rng_.set_state(c.rng_state);
  epoch_ = c.epoch;
  best_val_auc_ = c.best_val_auc;
}

template <typename T>
void Trainer<T>::fit(const std::filesystem::path& out_dir, std::ostream* progress, int stop_after) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  {
    std::ofstream cfg(out_dir / "config.json");
    cfg << to_json(config_).dump(2) << '\n';
    if (!cfg) throw IoError("cannot write config in " + out_dir.string());
  }
  std::ofstream log(out_dir / "train_log.jsonl", epoch_ == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write training log in " + out_dir.string());
  int ran = 0;
  while (!finished() && (stop_after <= 0 || ran < stop_after)) {
    const auto started = std::chrono::steady_clock::now();
    const auto previous_best = best_val_auc_;
    const auto entry = run_epoch();
    ++ran;
    log << to_json(entry).dump() << '\n';
    log.flush();
    if (!log) throw IoError("write failed for training log");
    const auto ckpt = checkpoint();
    write_checkpoint(out_dir / "last.ckpt", ckpt);
    if (best_val_auc_ != previous_best || !std::filesystem::exists(out_dir / "best.ckpt")) {
      write_checkpoint(out_dir / "best.ckpt", ckpt);
    }
    if (progress) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      *progress << "epoch " << entry.epoch + 1 << "/" << config_.epochs << " loss " << entry.loss << " val_auc "
                << (entry.val_auc ? std::to_string(*entry.val_auc) : "n/a") << " (" << secs << " s)\n";
    }
  }
}

template <typename T>
Trainer<T> resume_trainer(const Checkpoint& ckpt, WeakManifest manifest) {
  Trainer<T> t(ckpt.config, std::move(manifest));
  t.restore(ckpt);
  return t;
}

template class Trainer<float>;
template class Trainer<double>;
template Trainer<float> resume_trainer(const Checkpoint&, WeakManifest);
template Trainer<double> resume_trainer(const Checkpoint&, WeakManifest);

}  // namespace wscl
