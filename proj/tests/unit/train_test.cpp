#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "test_util.hpp"
#include "wscl/data/generator.hpp"
#include "wscl/train/checkpoint.hpp"
#include "wscl/train/trainer.hpp"

using namespace wscl;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run() {
  RunConfig c;
  c.image_size = 32;
  c.epochs = 3;
  c.batch_size = 4;
  c.lr = 1e-3;
  c.val_fraction = 0.25;
  c.seed = 17;
  return c;
}

class TrainFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir("train");
    GeneratorConfig g;
    g.seed = 4;
    g.n_per_class = 8;
    g.size = 32;
    generate_dataset(g, dir_->path());
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static WeakManifest manifest() { return load_weak_manifest(dir_->path()); }
  static test::TempDir* dir_;
};

test::TempDir* TrainFixture::dir_ = nullptr;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(RunConfigTest, Schedule) {
  RunConfig c;
  EXPECT_EQ(c.decay_epoch(), 25);
  EXPECT_DOUBLE_EQ(c.lr_at(24), 1e-4);
  EXPECT_DOUBLE_EQ(c.lr_at(25), 1e-5);
  EXPECT_DOUBLE_EQ(c.warmup_time(0), 0.0);
  EXPECT_DOUBLE_EQ(c.warmup_time(29), 30.0);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(RunConfigTest, JsonRoundTrip) {
  RunConfig c = tiny_run();
  c.ipc_mode = IpcMode::kSelf;
  c.streams = {SourceKind::kRgb};
  c.precision = Precision::kF64;
  const auto back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  auto j = to_json(c);
  j["no_such_field"] = 1;
  EXPECT_THROW(run_config_from_json(j), std::invalid_argument);
  EXPECT_EQ(parse_streams("rgb,srm"), (std::vector<SourceKind>{SourceKind::kRgb, SourceKind::kSrm}));
}

TEST_F(TrainFixture, StratifiedDeterministicSplit) {
  const auto m = manifest();
  const auto a = validation_split(m, 0.25, 1), b = validation_split(m, 0.25, 1), c = validation_split(m, 0.25, 2);
  EXPECT_EQ(a.val, b.val);
  EXPECT_NE(a.val, c.val);
  EXPECT_EQ(a.val.size(), 4u);
  EXPECT_EQ(a.train.size() + a.val.size(), m.records.size());
  int pos = 0;
  for (auto i : a.val) pos += m.records[i].label;
  EXPECT_EQ(pos, 2);
}

TEST_F(TrainFixture, FirstEpochLossNearLn2) {
  auto cfg = tiny_run();
  cfg.epochs = 30;
  Trainer<float> tr(cfg, manifest());
  const auto log = tr.run_epoch();
  for (const auto& [name, s] : log.streams) EXPECT_NEAR(s.acls, std::log(2.0), 0.15) << name;
  EXPECT_EQ(log.epoch, 0);
  EXPECT_DOUBLE_EQ(log.t, 0.0);
}

TEST_F(TrainFixture, IdenticalSeedsGiveIdenticalLogs) {
  test::TempDir a("run_a"), b("run_b");
  Trainer<float>(tiny_run(), manifest()).fit(a.path());
  Trainer<float>(tiny_run(), manifest()).fit(b.path());
  EXPECT_EQ(slurp(a.path() / "train_log.jsonl"), slurp(b.path() / "train_log.jsonl"));
  EXPECT_EQ(slurp(a.path() / "last.ckpt"), slurp(b.path() / "last.ckpt"));
  EXPECT_TRUE(fs::exists(a.path() / "best.ckpt"));
  EXPECT_TRUE(fs::exists(a.path() / "config.json"));
}

TEST_F(TrainFixture, ResumeMatchesUninterrupted) {
  test::TempDir full("full"), part("part");
  Trainer<float>(tiny_run(), manifest()).fit(full.path());
  Trainer<float>(tiny_run(), manifest()).fit(part.path(), nullptr, 1);
  auto resumed = resume_trainer<float>(read_checkpoint(part.path() / "last.ckpt"), manifest());
  EXPECT_EQ(resumed.epochs_done(), 1);
  resumed.fit(part.path());
  EXPECT_EQ(slurp(full.path() / "train_log.jsonl"), slurp(part.path() / "train_log.jsonl"));
  EXPECT_EQ(slurp(full.path() / "last.ckpt"), slurp(part.path() / "last.ckpt"));
}

template <typename T>
void round_trip_then_step(const WeakManifest& m, Precision precision) {
  auto cfg = tiny_run();
  cfg.precision = precision;
  test::TempDir dir("ckpt");
  Trainer<T> a(cfg, m);
  a.run_epoch();
  write_checkpoint(dir.path() / "x.ckpt", a.checkpoint());
  auto b = resume_trainer<T>(read_checkpoint(dir.path() / "x.ckpt"), m);
  Rng rng(5);
  const auto img = test::random_tensor<T>(rng, {2, 3, 32, 32}, 0, 255);
  const std::vector<double> labels{0, 1};
  a.step(img, labels, 1.0);
  b.step(img, labels, 1.0);
  const auto pa = a.detector().named_parameters(), pb = b.detector().named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto da = pa[i].second.data(), db = pb[i].second.data();
    for (std::size_t k = 0; k < da.size(); ++k) ASSERT_EQ(da[k], db[k]) << pa[i].first;
  }
}

TEST_F(TrainFixture, CheckpointRoundTripThenStep) {
  round_trip_then_step<float>(manifest(), Precision::kF32);
  round_trip_then_step<double>(manifest(), Precision::kF64);
}

TEST_F(TrainFixture, CorruptCheckpointRejected) {
  test::TempDir dir("corrupt");
  {
    std::ofstream out(dir.path() / "bad.ckpt", std::ios::binary);
    out << "WSCLCKPT garbage";
  }
  EXPECT_THROW(read_checkpoint(dir.path() / "bad.ckpt"), IoError);
  EXPECT_THROW(read_checkpoint(dir.path() / "absent.ckpt"), IoError);
}

TEST_F(TrainFixture, DetectorFromCheckpointReproducesScores) {
  Trainer<float> tr(tiny_run(), manifest());
  tr.run_epoch();
  const auto ckpt = tr.checkpoint();
  auto det = detector_from_checkpoint<float>(ckpt);
  Rng rng(6);
  const auto img = test::random_tensor<float>(rng, {2, 3, 32, 32}, 0, 255);
  const auto a = tr.detector().infer(img), b = det.infer(img);
  EXPECT_EQ(a.scores, b.scores);
}
