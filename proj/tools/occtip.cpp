// Command-line front end: shapes, gen, pretrain, eval, bench, gradcheck.
//
// Exit codes: 0 success, 1 user error (bad flags, config, or input files),
// 2 internal error (numerical failure, failed self-check, anything else).

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "occtip/bench.hpp"
#include "occtip/checkpoint.hpp"
#include "occtip/dataset.hpp"
#include "occtip/error.hpp"
#include "occtip/evaluate.hpp"
#include "occtip/gradcheck.hpp"
#include "occtip/trainer.hpp"

#ifndef OCCTIP_GIT_DESCRIBE
#define OCCTIP_GIT_DESCRIBE "unknown"
#endif

namespace {

using json = nlohmann::json;
using namespace occtip;
namespace fs = std::filesystem;

constexpr double kGradTolerance = 1e-4;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Written once before the work starts and again when it ends.
class Manifest {
 public:
  Manifest(std::string path, std::string command, const std::vector<std::string>& argv)
      : path_(std::move(path)) {
    doc_ = {{"command", std::move(command)},
            {"argv", argv},
            {"git_describe", OCCTIP_GIT_DESCRIBE},
            {"started", utc_now()},
            {"status", "running"}};
  }

  json& doc() { return doc_; }

  void write() const {
    std::ofstream out(path_);
    if (!out) fail(ErrorKind::InvalidInput, "cannot write manifest '" + path_ + "'");
    out << doc_.dump(2) << "\n";
  }

  void finish(const json& outputs) {
    doc_["finished"] = utc_now();
    doc_["status"] = "ok";
    doc_["outputs"] = outputs;
    write();
  }

 private:
  std::string path_;
  json doc_;
};

std::string default_manifest(const std::string& out, const std::string& command) {
  return out.empty() ? command + ".manifest.json" : out + ".manifest.json";
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, "config file '" + path + "' is not valid JSON: " + e.what());
  }
}

std::vector<int> held_records(const dataset::Dataset& data, const json& held_views) {
  std::vector<int> out;
  for (std::size_t o = 0; o < data.objects.size() && o < held_views.size(); ++o) {
    for (int v : held_views[o]) out.push_back(static_cast<int>(dataset::record_index(data, static_cast<int>(o), v)));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct ShapesArgs {
  std::string out;
  int instances = 2;
  std::string manifest;
};

int cmd_shapes(const ShapesArgs& a, const std::vector<std::string>& argv) {
  Manifest m(a.manifest.empty() ? default_manifest(a.out, "shapes") : a.manifest, "shapes", argv);
  m.doc()["config"] = {{"out", a.out}, {"instances", a.instances}};
  m.write();
  fs::create_directories(a.out);
  const auto shapes = meshgen::toy_shapes(a.instances);
  for (const auto& s : shapes) {
    std::ofstream out(fs::path(a.out) / (s.name + ".obj"));
    out << meshgen::to_obj(s.mesh);
  }
  std::cout << "wrote " << shapes.size() << " meshes to " << a.out << "\n";
  m.finish({{"meshes", shapes.size()}});
  return 0;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string meshes;
  std::string out;
  dataset::GenConfig config;
  std::string manifest;
};

int cmd_gen(const GenArgs& a, const std::vector<std::string>& argv) {
  a.config.validate();
  Manifest m(a.manifest.empty() ? default_manifest(a.out, "gen") : a.manifest, "gen", argv);
  m.doc()["config"] = a.config.to_json();
  m.doc()["config"]["meshes"] = a.meshes;
  m.doc()["seed"] = a.config.seed;
  m.write();

  std::vector<std::string> warnings;
  const auto meshes = dataset::load_mesh_dir(a.meshes, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: skipped " << w << "\n";
  if (meshes.empty()) fail(ErrorKind::InvalidInput, "no readable meshes in '" + a.meshes + "'");
  dataset::GenReport report;
  const auto data = dataset::generate(meshes, a.config, &report);
  for (const auto& w : report.warnings) std::cerr << "warning: skipped " << w << "\n";
  store::save(a.out, dataset::to_container(data));

  std::cout << "objects " << report.objects << "  views " << report.views << "  records " << report.records
            << "  points " << report.points << "  mean visible fraction " << report.mean_visible_fraction << "\n";
  json outputs = report.to_json();
  outputs["skipped_files"] = warnings;
  outputs["dataset"] = a.out;
  m.finish(outputs);
  return 0;
}

// ---------------------------------------------------------------------------

struct PretrainArgs {
  std::string data;
  std::string out;
  std::string config_file;
  std::string preset;
  std::string metrics;
  std::string resume;
  std::string manifest;
  std::optional<int> component_row;
  std::optional<int> ordering_row;
  std::optional<std::string> curve_a, curve_b, conv_mode;
  std::optional<int> epochs, warmup_epochs, batch_size, held_out;
  std::optional<double> lr, weight_decay, ema_decay, color_drop;
  std::optional<std::uint64_t> seed;
  bool no_ema_warmup = false;
};

int cmd_pretrain(const PretrainArgs& a, const std::vector<std::string>& argv) {
  // defaults < config file < flags
  json file = a.config_file.empty() ? json::object() : read_json_file(a.config_file);
  std::string preset = "toy";
  if (file.contains("preset")) preset = file["preset"].get<std::string>();
  if (!a.preset.empty()) preset = a.preset;
  auto encoder = duomamba::EncoderConfig::preset(preset);
  if (file.contains("encoder")) encoder = train::encoder_config_from_json(file["encoder"], encoder);
  if (a.component_row) encoder = duomamba::component_ablation(encoder, *a.component_row);
  if (a.ordering_row) encoder = duomamba::ordering_ablation(encoder, *a.ordering_row);
  if (a.curve_a) encoder.curve_a = curves::curve_from_string(*a.curve_a);
  if (a.curve_b) encoder.curve_b = curves::curve_from_string(*a.curve_b);
  if (a.conv_mode) encoder.conv_mode = conv_mode_from_string(*a.conv_mode);

  train::TrainConfig tc;
  if (file.contains("train")) tc = train::TrainConfig::from_json(file["train"], tc);
  if (a.epochs) {
    tc.epochs = *a.epochs;
    if (!a.warmup_epochs) tc.warmup_epochs = std::min(tc.warmup_epochs, tc.epochs);
  }
  if (a.warmup_epochs) tc.warmup_epochs = *a.warmup_epochs;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.held_out) tc.held_out_views = *a.held_out;
  if (a.lr) tc.base_lr = *a.lr;
  if (a.weight_decay) tc.weight_decay = *a.weight_decay;
  if (a.ema_decay) tc.ema_decay = *a.ema_decay;
  if (a.color_drop) tc.color_drop_prob = *a.color_drop;
  if (a.seed) tc.seed = *a.seed;
  if (a.no_ema_warmup) tc.ema_warmup = false;

  std::optional<store::Container> resume;
  if (!a.resume.empty()) {
    resume = store::load(a.resume);
    encoder = train::checkpoint_encoder_config(*resume);
    const int epochs = tc.epochs;
    tc = train::checkpoint_train_config(*resume);
    if (a.epochs) tc.epochs = epochs;
  }
  const auto data = dataset::from_container(store::load(a.data));
  // the heads map into the fixture feature space, so its width is fixed by the data
  if (!resume) encoder.embed_dim = data.clip_dim();
  encoder.validate();
  tc.validate();

  train::Trainer trainer(data, encoder, tc);
  if (resume) train::restore_checkpoint(trainer, *resume);

  const std::string metrics_path = a.metrics.empty() ? a.out + ".metrics.jsonl" : a.metrics;
  Manifest m(a.manifest.empty() ? default_manifest(a.out, "pretrain") : a.manifest, "pretrain", argv);
  m.doc()["config"] = {{"preset", preset},
                       {"encoder", train::to_json(encoder)},
                       {"train", tc.to_json()},
                       {"data", a.data},
                       {"resume", a.resume},
                       {"metrics", metrics_path},
                       {"num_params", trainer.model().num_params()},
                       {"steps_per_epoch", trainer.steps_per_epoch()},
                       {"total_steps", trainer.total_steps()}};
  m.doc()["seed"] = tc.seed;
  m.write();

  std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
  if (!metrics) fail(ErrorKind::InvalidInput, "cannot write metrics '" + metrics_path + "'");
  const auto start = std::chrono::steady_clock::now();
  double epoch_sum = 0.0;
  long epoch_steps = 0;
  double last_epoch_loss = std::nan("");
  int current_epoch = -1;
  trainer.run([&](const train::StepMetrics& s) {
    metrics << s.to_json().dump() << "\n";
    if (s.epoch != current_epoch) {
      if (epoch_steps > 0) last_epoch_loss = epoch_sum / static_cast<double>(epoch_steps);
      current_epoch = s.epoch;
      epoch_sum = 0.0;
      epoch_steps = 0;
    }
    epoch_sum += s.terms.total();
    ++epoch_steps;
    if (s.step % trainer.steps_per_epoch() == 0) {
      std::cerr << "epoch " << s.epoch + 1 << "/" << tc.epochs << "  step " << s.step << "  loss "
                << epoch_sum / static_cast<double>(epoch_steps) << "  tau " << s.tau << "\n";
    }
  });
  if (epoch_steps > 0) last_epoch_loss = epoch_sum / static_cast<double>(epoch_steps);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  store::save(a.out, train::make_checkpoint(trainer));
  std::cout << "trained " << trainer.step_count() << " steps in " << seconds << " s; final epoch loss "
            << last_epoch_loss << "\n";
  m.finish({{"checkpoint", a.out},
            {"steps", trainer.step_count()},
            {"seconds", seconds},
            {"final_epoch_loss", std::isfinite(last_epoch_loss) ? json(last_epoch_loss) : json(nullptr)}});
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "held";
  std::string out;
  std::string manifest;
  bool raw_weights = false;
  std::vector<int> shots = train::kShots;
  std::uint64_t seed = 0;
};

int cmd_eval(const std::string& mode, const EvalArgs& a, const std::vector<std::string>& argv) {
  Manifest m(a.manifest.empty() ? default_manifest(a.out, "eval-" + mode) : a.manifest, "eval " + mode, argv);
  m.doc()["config"] = {{"checkpoint", a.checkpoint}, {"data", a.data}, {"split", a.split},
                       {"weights", a.raw_weights ? "raw" : "ema"}, {"shots", a.shots}};
  m.doc()["seed"] = a.seed;
  m.write();

  const auto ckpt = store::load(a.checkpoint);
  const auto model = train::load_model(ckpt, !a.raw_weights);
  const auto data = dataset::from_container(store::load(a.data));
  if (data.clip_dim() != model.clip_dim()) {
    fail(ErrorKind::ConfigError, "dataset feature width " + std::to_string(data.clip_dim()) +
                                     " does not match checkpoint embed_dim " + std::to_string(model.clip_dim()));
  }
  const json held = ckpt.metadata.value("held_views", json::array());
  std::vector<std::size_t> test, pool;
  const auto held_ids = held_records(data, held);
  std::vector<bool> is_held(data.records.size(), false);
  for (int i : held_ids) is_held[static_cast<std::size_t>(i)] = true;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (a.split == "all" || (a.split == "held" && is_held[i]) || (a.split == "train" && !is_held[i])) test.push_back(i);
    if (!is_held[i]) pool.push_back(i);
  }
  if (a.split != "held" && a.split != "train" && a.split != "all") fail(ErrorKind::InvalidConfig, "split must be held, train, or all");
  if (test.empty()) fail(ErrorKind::InvalidInput, "the selected split has no records");

  json report;
  if (mode == "zero-shot") {
    const auto r = train::evaluate_zero_shot(model, data, test);
    report = r.to_json();
    std::cout << "zero-shot on " << r.samples << " records: top-1 " << 100 * r.top1 << "%  top-3 " << 100 * r.top3
              << "%  top-5 " << 100 * r.top5 << "%\n";
  } else {
    if (a.split == "train") fail(ErrorKind::InvalidConfig, "probe tests on held or all records");
    auto labels = [&](const std::vector<std::size_t>& ids) {
      std::vector<int> y;
      for (auto i : ids) y.push_back(data.label_of(data.records[i]));
      return y;
    };
    const Mat pool_x = train::point_features(model, data, pool);
    const Mat test_x = train::point_features(model, data, test);
    const auto r = train::few_shot_probe(pool_x, labels(pool), test_x, labels(test), data.num_classes(), a.shots, a.seed);
    report = r.to_json();
    for (std::size_t i = 0; i < r.shots.size(); ++i) {
      std::cout << r.shots[i] << "-shot accuracy " << 100 * r.accuracy[i] << "%\n";
    }
  }
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    out << report.dump(2) << "\n";
  }
  m.finish(report);
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string preset = "paper";
  std::string latency_preset = "toy";
  std::vector<int> sizes = {128, 256, 512, 1024, 2048};
  int runs = 20;
  int warmup = 3;
  std::string csv;
  std::string manifest;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a, const std::vector<std::string>& argv) {
  const auto flops_cfg = duomamba::EncoderConfig::preset(a.preset);
  const auto latency_cfg = duomamba::EncoderConfig::preset(a.latency_preset);
  Manifest m(a.manifest.empty() ? default_manifest(a.csv, "bench") : a.manifest, "bench", argv);
  m.doc()["config"] = {{"flops_encoder", train::to_json(flops_cfg)},
                       {"latency_encoder", train::to_json(latency_cfg)},
                       {"sizes", a.sizes},
                       {"runs", a.runs},
                       {"warmup", a.warmup}};
  m.doc()["seed"] = a.seed;
  m.write();
  const auto rows = bench::run(flops_cfg, latency_cfg, a.sizes, a.runs, a.warmup, a.seed);
  std::cout << bench::to_table(rows);
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    out << bench::to_csv(rows);
  }
  m.finish({{"csv", a.csv}, {"rows", rows.size()}});
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_gradcheck(const std::string& op, std::uint64_t seed, const std::string& manifest,
                  const std::vector<std::string>& argv) {
  Manifest m(manifest.empty() ? "gradcheck.manifest.json" : manifest, "gradcheck", argv);
  m.doc()["config"] = {{"op", op}, {"tolerance", kGradTolerance}, {"h", 1e-5}};
  m.doc()["seed"] = seed;
  m.write();
  std::vector<train::GradOp> ops;
  if (op == "all") {
    ops = train::all_grad_ops();
  } else {
    ops.push_back(train::grad_op_from_string(op));
  }
  bool ok = true;
  json results = json::object();
  for (auto g : ops) {
    const auto r = train::grad_check(g, seed);
    const bool pass = r.max_rel_error <= kGradTolerance;
    ok = ok && pass;
    std::printf("%-14s %-5s max rel err %.3e (%s)\n", train::to_string(g).c_str(), pass ? "ok" : "FAIL", r.max_rel_error,
                r.worst_tensor.c_str());
    results[train::to_string(g)] = r.max_rel_error;
  }
  m.finish(results);
  return ok ? 0 : 2;
}

int run(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Occlusion-aware text-image-point cloud pretraining with a DuoMamba encoder"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(OCCTIP_GIT_DESCRIBE));

  ShapesArgs shapes;
  auto* c_shapes = app.add_subcommand("shapes", "Write the 8-class toy mesh set as OBJ files");
  c_shapes->add_option("--out", shapes.out, "Output directory")->required();
  c_shapes->add_option("--instances", shapes.instances, "Proportion variants per class")->check(CLI::PositiveNumber);
  c_shapes->add_option("--manifest", shapes.manifest, "Run manifest path");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Render 12 views per mesh and write a dataset container");
  c_gen->add_option("--meshes", gen.meshes, "Directory of .obj meshes (label = stem before the last '_')")->required();
  c_gen->add_option("--out", gen.out, "Dataset container path")->required();
  c_gen->add_option("--resolution", gen.config.resolution, "Render width and height in pixels");
  c_gen->add_option("--points", gen.config.points, "Points sampled per view");
  c_gen->add_option("--seed", gen.config.seed, "Seed for sampling and fixture features");
  c_gen->add_option("--clip-dim", gen.config.fixtures.clip_dim, "Width of the fixture text/image features");
  c_gen->add_option("--threads", gen.config.threads, "Worker threads (0 = all cores)");
  c_gen->add_option("--manifest", gen.manifest, "Run manifest path");

  PretrainArgs pre;
  auto* c_pre = app.add_subcommand(
      "pretrain",
      "Contrastive pretraining. Metrics file: one JSON object per step with step, epoch, lr, loss, "
      "point_image, point_text, image_text, mixed_text, tau");
  c_pre->add_option("--data", pre.data, "Dataset container")->required();
  c_pre->add_option("--out", pre.out, "Checkpoint path")->required();
  c_pre->add_option("--config", pre.config_file, "JSON file with preset, encoder, and train sections");
  c_pre->add_option("--preset", pre.preset, "Encoder preset: toy, desk, or paper (default toy)");
  c_pre->add_option("--metrics", pre.metrics, "Line-delimited metrics path (default <out>.metrics.jsonl)");
  c_pre->add_option("--resume", pre.resume, "Continue from a checkpoint");
  c_pre->add_option("--component-ablation", pre.component_row, "Block ablation row 1..5");
  c_pre->add_option("--ordering-ablation", pre.ordering_row, "Ordering ablation row 0..3");
  c_pre->add_option("--curve-a", pre.curve_a, "First stream ordering");
  c_pre->add_option("--curve-b", pre.curve_b, "Second stream ordering");
  c_pre->add_option("--conv", pre.conv_mode, "standard, causal, or none");
  c_pre->add_option("--epochs", pre.epochs, "Training epochs");
  c_pre->add_option("--warmup-epochs", pre.warmup_epochs, "Linear warmup epochs");
  c_pre->add_option("--batch-size", pre.batch_size, "Batch size (capped at the object count)");
  c_pre->add_option("--held-out", pre.held_out, "Held-out views per object");
  c_pre->add_option("--lr", pre.lr, "Base learning rate");
  c_pre->add_option("--weight-decay", pre.weight_decay, "Decoupled weight decay");
  c_pre->add_option("--ema-decay", pre.ema_decay, "EMA decay");
  c_pre->add_flag("--no-ema-warmup", pre.no_ema_warmup, "Use the plain EMA decay from the first step");
  c_pre->add_option("--color-drop", pre.color_drop, "Probability of replacing colors by 0.4");
  c_pre->add_option("--seed", pre.seed, "Training seed");
  c_pre->add_option("--manifest", pre.manifest, "Run manifest path");

  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  c_eval->require_subcommand(1);
  EvalArgs ev;
  for (const char* mode : {"zero-shot", "probe"}) {
    auto* sub = c_eval->add_subcommand(mode, std::string(mode) == "zero-shot" ? "Top-1/3/5 zero-shot accuracy"
                                                                             : "Few-shot linear probe accuracy");
    sub->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
    sub->add_option("--data", ev.data, "Dataset container")->required();
    sub->add_option("--split", ev.split, "held, train, or all");
    sub->add_option("--out", ev.out, "JSON report path");
    sub->add_flag("--raw-weights", ev.raw_weights, "Use the raw instead of the EMA weights");
    sub->add_option("--seed", ev.seed, "Seed for shot selection");
    sub->add_option("--manifest", ev.manifest, "Run manifest path");
    if (std::string(mode) == "probe") sub->add_option("--shots", ev.shots, "Shot counts")->delimiter(',');
  }

  BenchArgs bench_args;
  auto* c_bench = app.add_subcommand(
      "bench", "FLOPs and latency table. CSV columns: s_tokens, duomamba_flops, attention_flops "
               "(attention sublayer), transformer_flops (full block + tokenizer + head), latency_ms");
  c_bench->add_option("--preset", bench_args.preset, "Preset for the analytic FLOPs columns");
  c_bench->add_option("--latency-preset", bench_args.latency_preset, "Preset for the measured latency");
  c_bench->add_option("--sizes", bench_args.sizes, "Token counts")->delimiter(',');
  c_bench->add_option("--runs", bench_args.runs, "Timed runs per size (median reported)");
  c_bench->add_option("--warmup", bench_args.warmup, "Untimed runs per size");
  c_bench->add_option("--csv", bench_args.csv, "CSV output path");
  c_bench->add_option("--seed", bench_args.seed, "Seed for random weights and tokens");
  c_bench->add_option("--manifest", bench_args.manifest, "Run manifest path");

  std::string grad_op = "all";
  std::uint64_t grad_seed = 1;
  std::string grad_manifest;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  c_grad->add_option("--op", grad_op, "affine, mini-pointnet, conv, s6, block, heads, temperature, end-to-end, or all");
  c_grad->add_option("--seed", grad_seed, "Seed for the random instances");
  c_grad->add_option("--manifest", grad_manifest, "Run manifest path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (c_shapes->parsed()) return cmd_shapes(shapes, args);
  if (c_gen->parsed()) return cmd_gen(gen, args);
  if (c_pre->parsed()) return cmd_pretrain(pre, args);
  if (c_eval->parsed()) {
    for (auto* sub : c_eval->get_subcommands()) return cmd_eval(sub->get_name(), ev, args);
  }
  if (c_bench->parsed()) return cmd_bench(bench_args, args);
  if (c_grad->parsed()) return cmd_gradcheck(grad_op, grad_seed, grad_manifest, args);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const occtip::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const occtip::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
