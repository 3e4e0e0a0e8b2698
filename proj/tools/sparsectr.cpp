// Command-line front end: synthetic data generation, training, evaluation,
// attention benchmarking, scaling-law fitting, and chunking inspection.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sparsectr/bench.hpp"
#include "sparsectr/chunking.hpp"
#include "sparsectr/data.hpp"
#include "sparsectr/datagen.hpp"
#include "sparsectr/model.hpp"
#include "sparsectr/train.hpp"

namespace {

using namespace sparsectr;

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string out_dir;
  std::string spec_path;  // optional JSON overriding the defaults
  std::optional<std::size_t> users;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
};

int run_gen_data(const GenDataArgs& a) {
  GeneratorSpec spec;
  if (!a.spec_path.empty()) spec = spec_from_json(load_json_file(a.spec_path));
  if (a.users) spec.num_users = *a.users;
  if (a.seed) spec.seed = *a.seed;
  if (a.noise) spec.label_noise = *a.noise;
  spec.validate();

  std::vector<ListwiseSample> train, test;
  generate_dataset(spec, train, test);
  write_jsonl(a.out_dir + "/train.jsonl", train);
  write_jsonl(a.out_dir + "/test.jsonl", test);
  write_text_file(a.out_dir + "/spec.json", spec_to_json(spec).dump(2) + "\n");

  std::vector<double> planted;
  std::vector<int> labels;
  for (const auto& s : test)
    for (const auto& c : s.candidates) {
      planted.push_back(c.planted);
      labels.push_back(c.label);
    }
  std::printf("wrote %zu train and %zu test samples to %s\n", train.size(), test.size(),
              a.out_dir.c_str());
  std::printf("planted-oracle test AUC: %.4f\n", compute_auc(planted, labels));
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data_path;
  std::string spec_path;    // generator spec to derive vocab geometry from
  std::string config_path;  // full model config JSON (overrides spec)
  std::string test_path;    // optional per-epoch eval
  std::string out_path;
  std::size_t dim = 16, blocks = 2, heads = 4;
  std::size_t chunks = 8, transition = 2, window = 8;
  std::string attention = "evo";
  std::size_t epochs = 1, batch = 8;
  double lr = 3e-3;
  std::uint64_t model_seed = 1, shuffle_seed = 5;
};

int run_train(const TrainArgs& a) {
  ModelConfig config;
  if (!a.config_path.empty()) {
    config = config_from_json(load_json_file(a.config_path));
  } else {
    if (a.spec_path.empty())
      throw DataError("train: pass --spec (from gen-data) or --model-config");
    config = model_config_for(spec_from_json(load_json_file(a.spec_path)));
    config.dim = a.dim;
    config.blocks = a.blocks;
    config.heads = a.heads;
    config.num_chunks = a.chunks;
    config.transition = a.transition;
    config.window = a.window;
    config.attention = a.attention;
    config.validate();
  }

  const std::vector<ListwiseSample> train = read_jsonl(a.data_path);
  std::vector<ListwiseSample> test;
  if (!a.test_path.empty()) test = read_jsonl(a.test_path);

  ModelParams model = make_model(config, a.model_seed);
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.lr = a.lr;
  tc.seed = a.shuffle_seed;

  train_model(model, train, tc, [&](const EpochStats& es) {
    if (test.empty()) {
      std::printf("epoch %zu  train-loss %.4f  (%.1fs)\n", es.epoch, es.mean_loss,
                  es.wall_seconds);
    } else {
      const EvalResult ev = evaluate_model(model, test);
      std::printf("epoch %zu  train-loss %.4f  test-auc %.4f  test-loss %.4f  (%.1fs)\n",
                  es.epoch, es.mean_loss, ev.auc, ev.mean_loss, es.wall_seconds);
    }
    std::fflush(stdout);
  });

  if (!a.out_path.empty()) {
    save_checkpoint(model, a.out_path);
    std::printf("saved checkpoint to %s\n", a.out_path.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string model_path;
  std::string data_path;
  std::optional<double> auc;  // direct AUC instead of a model run
  std::optional<double> baseline_auc;
};

int run_eval(const EvalArgs& a) {
  double model_auc = 0.0;
  if (a.auc) {
    model_auc = *a.auc;
    std::printf("auc %.6f (given)\n", model_auc);
  } else {
    if (a.model_path.empty() || a.data_path.empty())
      throw DataError("eval: pass --model and --data, or a direct --auc");
    const ModelParams model = load_checkpoint(a.model_path);
    const EvalResult ev = evaluate_model(model, read_jsonl(a.data_path));
    model_auc = ev.auc;
    std::printf("samples %zu  labels %zu\n", ev.num_samples, ev.num_labels);
    std::printf("auc %.6f\n", ev.auc);
    std::printf("loss %.6f\n", ev.mean_loss);
  }
  if (a.baseline_auc) {
    std::printf("rela-impr %.4f%% (baseline auc %.6f)\n", rela_impr(model_auc, *a.baseline_auc),
                *a.baseline_auc);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string grid_path;  // JSON grid; if empty, a single geometry from flags
  std::string out_path;   // CSV output; stdout if empty
  BenchGeometry geometry;
  std::size_t reps = 5, warmup = 2;
};

int run_bench_cmd(const BenchArgs& a) {
  std::vector<BenchRow> rows;
  if (!a.grid_path.empty()) {
    rows = run_bench_grid(load_json_file(a.grid_path));
  } else {
    rows = run_bench(a.geometry, a.reps, a.warmup);
  }
  const std::string csv = bench_csv(rows);
  if (a.out_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_text_file(a.out_path, csv);
    std::printf("wrote %zu benchmark rows to %s\n", rows.size(), a.out_path.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// fit-scaling
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string points_path;  // CSV with header flops,auc
  std::string out_path;
};

int run_fit_scaling(const FitArgs& a) {
  std::ifstream in(a.points_path);
  if (!in) throw DataError("cannot open " + a.points_path);
  std::string line;
  std::vector<double> xs, ys;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.find("flops") != std::string::npos) continue;  // header
    std::istringstream ss(line);
    std::string xs_str, ys_str;
    if (!std::getline(ss, xs_str, ',') || !std::getline(ss, ys_str, ','))
      throw DataError(a.points_path + " line " + std::to_string(lineno) +
                      ": expected 'flops,auc'");
    try {
      xs.push_back(std::stod(xs_str));
      ys.push_back(std::stod(ys_str));
    } catch (const std::exception&) {
      throw DataError(a.points_path + " line " + std::to_string(lineno) +
                      ": not numeric: " + line);
    }
  }
  const PowerLawFit fit = fit_power_law(xs, ys);
  if (fit.degenerate)
    std::fprintf(stderr, "warning: flat data, amplitude/exponent unidentifiable\n");

  std::ostringstream out;
  out << "flops,auc,fitted_auc,E,A,alpha,R2\n";
  char buf[256];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", xs[i], ys[i],
                  power_law_at(fit, xs[i]), fit.e, fit.a, fit.alpha, fit.r2);
    out << buf;
  }
  if (a.out_path.empty()) {
    std::fputs(out.str().c_str(), stdout);
  } else {
    write_text_file(a.out_path, out.str());
  }
  std::printf("fit: E %.6f  A %.6f  alpha %.6f  R2 %.6f\n", fit.e, fit.a, fit.alpha, fit.r2);
  return 0;
}

// ---------------------------------------------------------------------------
// inspect-chunks
// ---------------------------------------------------------------------------

struct InspectArgs {
  std::string data_path;
  std::size_t index = 0;
  std::size_t chunks = 8;
};

int run_inspect_chunks(const InspectArgs& a) {
  const std::vector<ListwiseSample> samples = read_jsonl(a.data_path);
  if (a.index >= samples.size())
    throw DataError("inspect-chunks: index " + std::to_string(a.index) + " out of range (" +
                    std::to_string(samples.size()) + " samples)");
  const ListwiseSample& s = samples[a.index];
  std::vector<std::uint64_t> times;
  for (const auto& b : s.behaviors) times.push_back(b.time);
  const ChunkPartition part = chunk_sequence(times, a.chunks);

  std::printf("sample %zu: %zu behavior slots, %zu padding\n", a.index, times.size(),
              part.padding);
  for (std::size_t k = 0; k < part.num_chunks(); ++k) {
    if (part.empty(k)) {
      std::printf("chunk %2zu: (empty)\n", k);
      continue;
    }
    const std::size_t b = part.begin(k), e = part.end(k);
    std::printf("chunk %2zu: positions [%zu, %zu)  size %zu  times %llu..%llu  mean %.1f\n", k,
                b, e, e - b, static_cast<unsigned long long>(times[b]),
                static_cast<unsigned long long>(times[e - 1]), chunk_mean_time(times, part, k));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparsectr: sparse sequential CTR modeling toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic listwise dataset");
  cmd_gen->add_option("--out-dir", gen.out_dir, "output directory (must exist)")->required();
  cmd_gen->add_option("--spec", gen.spec_path, "generator spec JSON");
  std::size_t gen_users = 0;
  std::uint64_t gen_seed = 0;
  double gen_noise = 0.0;
  auto* users_opt = cmd_gen->add_option("--users", gen_users, "number of users");
  auto* seed_opt = cmd_gen->add_option("--seed", gen_seed, "generator seed");
  auto* noise_opt = cmd_gen->add_option("--noise", gen_noise, "label flip probability");

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "train a model on a JSONL dataset");
  cmd_train->add_option("--data", train.data_path, "training JSONL")->required();
  cmd_train->add_option("--spec", train.spec_path, "generator spec JSON (vocab geometry)");
  cmd_train->add_option("--model-config", train.config_path, "full model config JSON");
  cmd_train->add_option("--test", train.test_path, "JSONL evaluated after each epoch");
  cmd_train->add_option("--out", train.out_path, "checkpoint output path");
  cmd_train->add_option("--dim", train.dim, "embedding width");
  cmd_train->add_option("--blocks", train.blocks, "number of blocks");
  cmd_train->add_option("--heads", train.heads, "attention heads");
  cmd_train->add_option("--chunks", train.chunks, "history chunks |P|");
  cmd_train->add_option("--transition", train.transition, "transition slots per chunk");
  cmd_train->add_option("--window", train.window, "local window length");
  cmd_train->add_option("--attention", train.attention, "attention variant: evo or full");
  cmd_train->add_option("--epochs", train.epochs, "training epochs");
  cmd_train->add_option("--batch", train.batch, "mini-batch size");
  cmd_train->add_option("--lr", train.lr, "Adam learning rate");
  cmd_train->add_option("--model-seed", train.model_seed, "parameter init seed");
  cmd_train->add_option("--shuffle-seed", train.shuffle_seed, "epoch shuffle seed");

  EvalArgs eval;
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint (or compare raw AUCs)");
  cmd_eval->add_option("--model", eval.model_path, "checkpoint path");
  cmd_eval->add_option("--data", eval.data_path, "evaluation JSONL");
  double eval_auc = 0.0, eval_base = 0.0;
  auto* auc_opt = cmd_eval->add_option("--auc", eval_auc, "direct model AUC");
  auto* base_opt = cmd_eval->add_option("--baseline-auc", eval_base, "baseline AUC");

  BenchArgs bench;
  auto* cmd_bench = app.add_subcommand("bench", "time and count attention variants");
  cmd_bench->add_option("--grid", bench.grid_path, "JSON grid of geometries");
  cmd_bench->add_option("--out", bench.out_path, "CSV output path (stdout if omitted)");
  cmd_bench->add_option("--behaviors", bench.geometry.behaviors, "history length");
  cmd_bench->add_option("--candidates", bench.geometry.candidates, "slate size");
  cmd_bench->add_option("--dim", bench.geometry.dim, "embedding width");
  cmd_bench->add_option("--heads", bench.geometry.heads, "attention heads");
  cmd_bench->add_option("--chunks", bench.geometry.chunks, "chunks |P|");
  cmd_bench->add_option("--transition", bench.geometry.transition, "transition slots");
  cmd_bench->add_option("--window", bench.geometry.window, "local window");
  cmd_bench->add_option("--layers", bench.geometry.layers, "stacked attention calls");
  cmd_bench->add_option("--seed", bench.geometry.seed, "input synthesis seed");
  cmd_bench->add_option("--reps", bench.reps, "timed repetitions");
  cmd_bench->add_option("--warmup", bench.warmup, "untimed warmup runs");

  FitArgs fitargs;
  auto* cmd_fit = app.add_subcommand("fit-scaling", "fit quality = E - A / flops^alpha");
  cmd_fit->add_option("--points", fitargs.points_path, "CSV with header 'flops,auc'")
      ->required();
  cmd_fit->add_option("--out", fitargs.out_path, "CSV output path (stdout if omitted)");

  InspectArgs inspect;
  auto* cmd_inspect = app.add_subcommand("inspect-chunks", "show a sample's time chunking");
  cmd_inspect->add_option("--data", inspect.data_path, "JSONL dataset")->required();
  cmd_inspect->add_option("--index", inspect.index, "sample index");
  cmd_inspect->add_option("--chunks", inspect.chunks, "number of chunks |P|");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the usage message
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_gen->parsed()) {
      if (*users_opt) gen.users = gen_users;
      if (*seed_opt) gen.seed = gen_seed;
      if (*noise_opt) gen.noise = gen_noise;
      return run_gen_data(gen);
    }
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_eval->parsed()) {
      if (*auc_opt) eval.auc = eval_auc;
      if (*base_opt) eval.baseline_auc = eval_base;
      return run_eval(eval);
    }
    if (cmd_bench->parsed()) return run_bench_cmd(bench);
    if (cmd_fit->parsed()) return run_fit_scaling(fitargs);
    if (cmd_inspect->parsed()) return run_inspect_chunks(inspect);
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  }
  return 1;
}
