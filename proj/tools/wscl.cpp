#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wscl/consistency.hpp"
#include "wscl/data/generator.hpp"
#include "wscl/data/record.hpp"
#include "wscl/eval/evaluate.hpp"
#include "wscl/eval/metrics.hpp"
#include "wscl/gradcheck_suite.hpp"
#include "wscl/train/checkpoint.hpp"
#include "wscl/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wscl;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumeric = 2, kIo = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Relative output paths land under $WSCL_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("WSCL_OUTPUT_ROOT"); root && *root) return fs::path(root) / path;
  return path;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

template <typename T>
std::vector<T> split_list(const std::string& list, T (*parse)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse(item));
  }
  return out;
}

int parse_int(const std::string& s) {
  std::size_t used = 0;
  const int v = std::stoi(s, &used);
  if (used != s.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return v;
}

ManipulationKind parse_kind(const std::string& s) { return parse_manipulation_kind(s); }

// ---- generate ----

struct GenerateArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t n = 100;
  std::size_t size = 64;
  std::string kinds = "copy_move,splice";
  std::string style = "textured";
  std::string split = "train";
  double mask_min = 0.05, mask_max = 0.40;
  bool force = false;
};

int cmd_generate(const GenerateArgs& a) {
  GeneratorConfig g;
  g.seed = a.seed;
  g.n_per_class = a.n;
  g.size = a.size;
  g.kinds = split_list<ManipulationKind>(a.kinds, parse_kind);
  g.style = parse_base_style(a.style);
  g.split = a.split;
  g.mask_min = a.mask_min;
  g.mask_max = a.mask_max;
  g.validate();
  const fs::path out = output_path(a.out);
  if (fs::exists(out) && fs::is_directory(out) && !fs::is_empty(out)) {
    if (!a.force) throw UsageError("output directory " + out.string() + " is not empty (use --force)");
    fs::remove_all(out);
  }
  const auto m = generate_dataset(g, out);
  json kinds = json::array();
  for (auto k : g.kinds) kinds.push_back(std::string(to_string(k)));
  const json cfg{{"command", "generate"},
                 {"seed", g.seed},
                 {"n_per_class", g.n_per_class},
                 {"size", g.size},
                 {"kinds", kinds},
                 {"style", std::string(to_string(g.style))},
                 {"split", g.split},
                 {"mask_min", g.mask_min},
                 {"mask_max", g.mask_max},
                 {"inpaint_passes", g.inpaint_passes}};
  write_text(out / "config.json", cfg.dump(2) + "\n");
  std::cout << "wrote " << m.records.size() << " records to " << out.string() << "\n";
  for (const auto& [kind, count] : m.counts()) std::cout << "  " << kind << ": " << count << "\n";
  return kOk;
}

// ---- train ----

struct ConfigFlags {
  std::string config_file;
  RunConfig c;
  std::string ipc_mode, fusion, pooling, volume_scale, streams, precision;
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.config_file, "JSON file with RunConfig fields (flags override it)");
  app->add_option("--image-size", f.c.image_size);
  app->add_option("--epochs", f.c.epochs);
  app->add_option("--batch-size", f.c.batch_size);
  app->add_option("--lr", f.c.lr);
  app->add_option("--lr-decay", f.c.lr_decay);
  app->add_option("--weight-decay", f.c.weight_decay);
  app->add_option("--theta", f.c.theta);
  app->add_option("--lambda-msc", f.c.lambda_msc);
  app->add_option("--lambda-ipc", f.c.lambda_ipc);
  app->add_option("--w-rgb", f.c.w_rgb);
  app->add_option("--w-srm", f.c.w_srm);
  app->add_option("--w-bayar", f.c.w_bayar);
  app->add_option("--ipc-mode", f.ipc_mode, "self | ensemble");
  app->add_option("--fusion", f.fusion, "late | early");
  app->add_option("--pooling", f.pooling, "max | avg | adaptive");
  app->add_option("--volume-scale", f.volume_scale, "tap-channels | embed-dim");
  app->add_option("--streams", f.streams, "comma list of rgb,srm,bayar");
  app->add_option("--precision", f.precision, "f32 | f64");
  app->add_option("--val-fraction", f.c.val_fraction);
  app->add_option("--augment-pad", f.c.augment_pad);
  app->add_option("--seed", f.c.seed);
}

// Defaults, then the config file, then explicit flags.
RunConfig resolve_config(CLI::App* app, const ConfigFlags& f) {
  RunConfig c;
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    if (!in) throw IoError("cannot open config " + f.config_file);
    c = run_config_from_json(json::parse(in));
  }
  auto given = [&](const char* flag) { return app->count(flag) > 0; };
  if (given("--image-size")) c.image_size = f.c.image_size;
  if (given("--epochs")) c.epochs = f.c.epochs;
  if (given("--batch-size")) c.batch_size = f.c.batch_size;
  if (given("--lr")) c.lr = f.c.lr;
  if (given("--lr-decay")) c.lr_decay = f.c.lr_decay;
  if (given("--weight-decay")) c.weight_decay = f.c.weight_decay;
  if (given("--theta")) c.theta = f.c.theta;
  if (given("--lambda-msc")) c.lambda_msc = f.c.lambda_msc;
  if (given("--lambda-ipc")) c.lambda_ipc = f.c.lambda_ipc;
  if (given("--w-rgb")) c.w_rgb = f.c.w_rgb;
  if (given("--w-srm")) c.w_srm = f.c.w_srm;
  if (given("--w-bayar")) c.w_bayar = f.c.w_bayar;
  if (given("--ipc-mode")) c.ipc_mode = parse_ipc_mode(f.ipc_mode);
  if (given("--fusion")) c.fusion = parse_fusion_mode(f.fusion);
  if (given("--pooling")) c.pooling = parse_pool_kind(f.pooling);
  if (given("--volume-scale")) c.volume_scale = parse_volume_scale(f.volume_scale);
  if (given("--streams")) c.streams = parse_streams(f.streams);
  if (given("--precision")) c.precision = parse_precision(f.precision);
  if (given("--val-fraction")) c.val_fraction = f.c.val_fraction;
  if (given("--augment-pad")) c.augment_pad = f.c.augment_pad;
  if (given("--seed")) c.seed = f.c.seed;
  c.validate();
  return c;
}

struct TrainArgs {
  std::string data, out, resume;
  int stop_after = 0;
  bool quiet = false;
};

template <typename T>
int run_train(const RunConfig& config, const TrainArgs& a) {
  const auto manifest = load_weak_manifest(a.data);
  const fs::path out = output_path(a.out);
  Trainer<T> trainer = [&] {
    if (a.resume.empty()) return Trainer<T>(config, manifest);
    const auto ckpt = read_checkpoint(a.resume);
    return resume_trainer<T>(ckpt, manifest);
  }();
  trainer.fit(out, a.quiet ? nullptr : &std::cout, a.stop_after);
  std::cout << "checkpoints in " << out.string() << " (best val AUC "
            << (trainer.best_val_auc() ? std::to_string(*trainer.best_val_auc()) : "n/a") << ")\n";
  return kOk;
}

int cmd_train(CLI::App* app, const ConfigFlags& flags, const TrainArgs& a) {
  RunConfig config = resolve_config(app, flags);
  if (!a.resume.empty()) {
    // A resumed run continues under the checkpoint's configuration.
    config = read_checkpoint(a.resume).config;
  }
  return config.precision == Precision::kF64 ? run_train<double>(config, a) : run_train<float>(config, a);
}

// ---- eval / sweep ----

struct EvalArgs {
  std::string checkpoint, out, dump_masks;
  std::vector<std::string> data;
  std::size_t batch_size = 32;
  std::string jpeg = "100,90,80,70,60,50";
  std::string blur = "1,3,5,7,9";
};

json eval_config(const Checkpoint& ckpt, const EvalArgs& a, const char* command) {
  return {{"command", command},
          {"checkpoint", a.checkpoint},
          {"datasets", a.data},
          {"batch_size", a.batch_size},
          {"run", to_json(ckpt.config)}};
}

template <typename T>
int run_eval(const Checkpoint& ckpt, const EvalArgs& a) {
  auto detector = detector_from_checkpoint<T>(ckpt);
  EvalLoader loader(a.data.front(), ckpt.config.image_size);
  EvalOptions opt;
  opt.batch_size = a.batch_size;
  opt.dataset = a.data.front();
  opt.seed = ckpt.config.seed;
  opt.epoch = ckpt.epoch;
  const auto predictions = predict<T>(detector, loader, Perturbation::none(), a.batch_size);
  MetricsReport report = summarize(predictions, ckpt.config.theta);
  report.dataset = opt.dataset;
  report.seed = opt.seed;
  report.epoch = opt.epoch;
  report.config = eval_config(ckpt, a, "eval");
  const fs::path out = output_path(a.out);
  write_text(out, to_json(report).dump(2) + "\n");
  if (!a.dump_masks.empty()) {
    const fs::path dir = output_path(a.dump_masks);
    fs::create_directories(dir);
    std::size_t written = 0;
    for (std::size_t i = 0; i < predictions.ids.size(); ++i) {
      if (predictions.labels[i] != 1) continue;
      write_png(dir / (predictions.ids[i] + ".png"), predictions.predicted_masks[i]);
      ++written;
    }
    std::cout << "wrote " << written << " predicted masks to " << dir.string() << "\n";
  }
  std::cout << "AUC " << (report.auc ? std::to_string(*report.auc) : "undefined") << "  I-F1 " << report.i_f1
            << "  P-F1 " << report.p_f1 << "  C-F1 " << report.c_f1 << "\n"
            << "report: " << out.string() << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& a) {
  const auto ckpt = read_checkpoint(a.checkpoint);
  return ckpt.config.precision == Precision::kF64 ? run_eval<double>(ckpt, a) : run_eval<float>(ckpt, a);
}

template <typename T>
int run_sweep(const Checkpoint& ckpt, const EvalArgs& a) {
  auto detector = detector_from_checkpoint<T>(ckpt);
  RobustnessGrid grid;
  grid.jpeg_qualities = split_list<int>(a.jpeg, parse_int);
  grid.blur_kernels = split_list<int>(a.blur, parse_int);
  const fs::path out = output_path(a.out);
  json reports = json::array();
  std::string csv;
  bool first = true;
  for (const auto& data : a.data) {
    EvalLoader loader(data, ckpt.config.image_size);
    EvalOptions opt;
    opt.batch_size = a.batch_size;
    opt.dataset = data;
    opt.seed = ckpt.config.seed;
    opt.epoch = ckpt.epoch;
    auto report = robustness_sweep<T>(detector, loader, grid, opt);
    report.config = eval_config(ckpt, a, "sweep");
    for (const auto& p : report.perturbations) {
      std::cout << data << "  " << p.point << "  AUC "
                << (p.auc ? std::to_string(*p.auc) : (p.error ? "error: " + *p.error : "undefined")) << "\n";
    }
    reports.push_back(to_json(report));
    csv += to_csv(report, first);
    first = false;
  }
  fs::create_directories(out);
  write_text(out / "sweep.json", reports.dump(2) + "\n");
  write_text(out / "sweep.csv", csv);
  std::cout << "sweep written to " << out.string() << "\n";
  return kOk;
}

int cmd_sweep(const EvalArgs& a) {
  const auto ckpt = read_checkpoint(a.checkpoint);
  return ckpt.config.precision == Precision::kF64 ? run_sweep<double>(ckpt, a) : run_sweep<float>(ckpt, a);
}

// ---- gradcheck ----

struct GradcheckArgs {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  std::string precision = "both";
  std::string filter;
};

template <typename T>
bool print_gradcheck(const char* tag, const GradcheckArgs& a) {
  bool ok = true;
  for (const auto& r : run_gradcheck<T>(a.trials, a.seed, a.filter)) {
    std::printf("%-4s %-26s trials %4zu  max_err %.3e  tol %.0e  skipped %zu  %s\n", tag, r.name.c_str(), r.trials,
                r.max_error, r.tolerance, r.skipped, r.pass() ? "PASS" : "FAIL");
    ok = ok && r.pass();
  }
  return ok;
}

int cmd_gradcheck(const GradcheckArgs& a) {
  if (a.precision != "both" && a.precision != "f64" && a.precision != "f32") {
    throw UsageError("--precision must be f32, f64 or both");
  }
  bool ok = true;
  if (a.precision != "f32") ok = print_gradcheck<double>("f64", a) && ok;
  if (a.precision != "f64") ok = print_gradcheck<float>("f32", a) && ok;
  std::cout << (ok ? "all gradient checks passed" : "gradient check FAILED") << "\n";
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Weakly-supervised image manipulation detection"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic dataset with manifest");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--seed", gen.seed);
  g->add_option("--n", gen.n, "images per class");
  g->add_option("--size", gen.size);
  g->add_option("--kinds", gen.kinds, "comma list of copy_move,splice,inpaint");
  g->add_option("--style", gen.style, "textured | plain");
  g->add_option("--split", gen.split);
  g->add_option("--mask-min", gen.mask_min);
  g->add_option("--mask-max", gen.mask_max);
  g->add_flag("--force", gen.force, "replace a non-empty output directory");

  ConfigFlags flags;
  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a detector from image-level labels");
  t->add_option("--data", train.data, "dataset directory or manifest")->required();
  t->add_option("--out", train.out, "run directory")->required();
  t->add_option("--resume", train.resume, "checkpoint to continue from");
  t->add_option("--stop-after", train.stop_after, "run at most this many epochs now");
  t->add_flag("--quiet", train.quiet);
  add_config_flags(t, flags);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--data", ev.data)->required()->expected(1);
  e->add_option("--out", ev.out, "report JSON path")->required();
  e->add_option("--dump-masks", ev.dump_masks, "directory for predicted masks of tampered images");
  e->add_option("--batch-size", ev.batch_size);

  EvalArgs sw;
  auto* s = app.add_subcommand("sweep", "Robustness sweep over JPEG and blur grids");
  s->add_option("--checkpoint", sw.checkpoint)->required();
  s->add_option("--data", sw.data, "one or more datasets")->required();
  s->add_option("--out", sw.out, "output directory")->required();
  s->add_option("--jpeg", sw.jpeg, "JPEG qualities");
  s->add_option("--blur", sw.blur, "odd blur kernel sizes");
  s->add_option("--batch-size", sw.batch_size);

  GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  c->add_option("--trials", gc.trials);
  c->add_option("--seed", gc.seed);
  c->add_option("--precision", gc.precision, "f32 | f64 | both");
  c->add_option("--filter", gc.filter, "only cases whose name contains this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(t, flags, train);
    if (*e) return cmd_eval(ev);
    if (*s) return cmd_sweep(sw);
    if (*c) return cmd_gradcheck(gc);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const NonFiniteLoss& err) {
    std::cerr << "numeric failure: " << err.what() << "\n";
    return kNumeric;
  } catch (const IoError& err) {
    std::cerr << "I/O error: " << err.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "I/O error: " << err.what() << "\n";
    return kIo;
  } catch (const json::exception& err) {
    std::cerr << "I/O error: malformed JSON: " << err.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const std::out_of_range& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "numeric failure: " << err.what() << "\n";
    return kNumeric;
  }
  return kUsage;
}
