#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wscl/data/weak_loader.hpp"
#include "wscl/detector.hpp"
#include "wscl/optim.hpp"
#include "wscl/train/checkpoint.hpp"
#include "wscl/train/config.hpp"

namespace wscl {

struct StreamLossMeans {
  double acls = 0, msc = 0, ipc = 0;
};

// One line of the training log.
struct EpochLog {
  int epoch = 0;  // 0-based
  double t = 0;
  double warmup = 0;
  double lr = 0;
  std::size_t steps = 0;
  double loss = 0;  // mean total loss over the epoch's batches
  std::map<std::string, StreamLossMeans> streams;
  std::optional<double> val_auc;
};

nlohmann::json to_json(const EpochLog& log);

// Seeded split of a weak manifest into train and validation indices,
// stratified by label so both classes appear in validation.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split validation_split(const WeakManifest& manifest, double fraction, std::uint64_t seed);

// Weakly-supervised training loop. Only the weak loader is reachable from
// here: batches carry images and image-level labels.
template <typename T>
class Trainer {
 public:
  Trainer(RunConfig config, WeakManifest manifest);

  const RunConfig& config() const { return config_; }
  Detector<T>& detector() { return detector_; }
  AdamW<T>& optimizer() { return optimizer_; }
  int epochs_done() const { return epoch_; }
  bool finished() const { return epoch_ >= config_.epochs; }
  std::optional<double> best_val_auc() const { return best_val_auc_; }
  const Split& split() const { return split_; }

  // Forward, backward, AdamW update, Bayar projection.
  LossReport<T> step(const Tensor<T>& images, std::span<const double> labels, double t);
  // Trains the next epoch and validates. Throws NonFiniteLoss.
  EpochLog run_epoch();
  // Validation-split AUC under the inference rule; empty when undefined.
  std::optional<double> validate();

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

  // Runs the remaining epochs. Appends one JSON line per epoch to
  // <out>/train_log.jsonl and keeps <out>/last.ckpt and <out>/best.ckpt
  // (best by validation AUC). `stop_after` > 0 limits the epochs run in
  // this call (for interrupted-run tests).
  void fit(const std::filesystem::path& out_dir, std::ostream* progress = nullptr, int stop_after = 0);

 private:
  RunConfig config_;
  Detector<T> detector_;
  AdamW<T> optimizer_;
  WeakLoader loader_;
  Split split_;
  Rng rng_;
  int epoch_ = 0;
  std::optional<double> best_val_auc_;
};

// Restores a trainer from a checkpoint written by Trainer::checkpoint.
template <typename T>
Trainer<T> resume_trainer(const Checkpoint& ckpt, WeakManifest manifest);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace wscl
