// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlroi/cli.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <vector>

#include "nlroi/bench.hpp"
#include "nlroi/config_file.hpp"
#include "nlroi/errors.hpp"
#include "nlroi/gradcheck.hpp"
#include "nlroi/oracle.hpp"
#include "nlroi/toy_task.hpp"
#include "nlroi/weights_io.hpp"

namespace nlroi {

namespace {

constexpr const char* kDefaultWeights = "nlroi_weights.bin";

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string variant = "nlroi";
  std::string weights_path = kDefaultWeights;
  std::size_t scenes = 2000;
  std::size_t reps = 5;
  std::vector<std::size_t> sizes;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

RunConfig resolve(const Options& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

int run_gradcheck(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const GradReport report = check_all_gradients(cfg.op, cfg.n, cfg.seed);
  report.print(out);
  return report.pass ? kExitOk : kExitFailure;
}

int run_bench_cmd(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(o);
  std::vector<BenchSize> grid = default_scaling_grid();
  if (!o.sizes.empty()) {
    grid.clear();
    for (std::size_t n : o.sizes) grid.push_back({n, 8, 2, 2, 2, 2});
  }
  if (!o.config_path.empty()) {
    for (BenchSize& s : grid) s = {s.n, cfg.op.d, cfg.op.d_f, cfg.op.d_g, cfg.op.h, cfg.op.w};
  }
  const auto records = run_bench(grid, o.reps, cfg.seed);
  if (o.out_path.empty()) {
    write_bench_csv(out, records);
  } else {
    std::ofstream f(o.out_path);
    if (!f) throw Error("cannot open '" + o.out_path + "' for writing");
    write_bench_csv(f, records);
    err << "wrote " << o.out_path << '\n';
  }
  std::set<std::size_t> distinct;
  for (const auto& r : records) distinct.insert(r.size.n);
  if (distinct.size() >= 4) {
    err << "log-log slope " << fmt("%.3f", fit_scaling_exponent(records)) << '\n';
  }
  return kExitOk;
}

std::string output_weights(const Options& o) {
  return o.out_path.empty() ? std::string(kDefaultWeights) : o.out_path;
}

int run_train(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(o);
  const Variant variant = parse_variant(o.variant);
  const TrainResult r = train(variant, cfg.task(), cfg.hyper(), [&](long step, double loss) {
    if (step % 100 == 0) out << "step=" << step << " loss=" << fmt("%.6f", loss) << '\n';
  });
  const std::string path = output_weights(o);
  save_weights(path, r.model.to_named());
  err << "saved " << variant_name(variant) << " weights to " << path << '\n';
  return kExitOk;
}

int run_eval(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const ToyTask task = cfg.task();
  const ToyModel model = ToyModel::from_named(load_weights(o.weights_path), task);
  out << "ACCURACY " << fmt("%.4f", evaluate(model, task, o.scenes, cfg.seed)) << '\n';
  return kExitOk;
}

int run_oracle_diff(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const OracleCase c = o.config_path.empty() ? random_oracle_case(cfg.seed)
                                             : make_oracle_case(cfg.op, cfg.n, cfg.seed);
  const double diff = oracle_diff(c);
  out << "MAX_ABS_DIFF " << fmt("%.3e", diff) << '\n';
  return diff < 1e-9 ? kExitOk : kExitFailure;
}

int run_init(const Options& o, std::ostream& err) {
  const RunConfig cfg = resolve(o);
  const Variant variant = parse_variant(o.variant);
  const std::string path = output_weights(o);
  save_weights(path, initial_model(variant, cfg.task(), cfg.seed).to_named());
  err << "saved initial " << variant_name(variant) << " weights to " << path << '\n';
  return kExitOk;
}

}  // namespace

int cli_main(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Non-local RoI operator toolkit", "nlroi"};
  app.require_subcommand(1, 1);
  app.add_option("--config", o.config_path, "key = value run configuration")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "PRNG seed (overrides the config file)");
  app.add_option("--out", o.out_path, "output path (weights for train/init, CSV for bench)");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
  auto* bench = app.add_subcommand("bench", "time forward/backward over a size grid, CSV out");
  bench->add_option("--reps", o.reps, "timed repetitions per size (>= 5)");
  bench->add_option("--sizes", o.sizes, "RoI counts to sweep")->delimiter(',');
  auto* train_cmd = app.add_subcommand("train", "train a toy-task model and save its weights");
  train_cmd->add_option("--variant", o.variant, "baseline | nlroi")
      ->check(CLI::IsMember({"baseline", "nlroi"}));
  auto* eval = app.add_subcommand("eval", "evaluate saved weights on fresh scenes");
  eval->add_option("--weights", o.weights_path, "weights file to load");
  eval->add_option("--scenes", o.scenes, "number of evaluation scenes")
      ->check(CLI::PositiveNumber);
  auto* oracle = app.add_subcommand("oracle-diff", "compare forward against the loop oracle");
  auto* init = app.add_subcommand("init", "write freshly initialized weights");
  init->add_option("--variant", o.variant, "baseline | nlroi")
      ->check(CLI::IsMember({"baseline", "nlroi"}));
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    std::vector<std::string> argv(args.rbegin(), args.rend());
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  }

  try {
    if (gradcheck->parsed()) return run_gradcheck(o, out);
    if (bench->parsed()) return run_bench_cmd(o, out, err);
    if (train_cmd->parsed()) return run_train(o, out, err);
    if (eval->parsed()) return run_eval(o, out);
    if (oracle->parsed()) return run_oracle_diff(o, out);
    if (init->parsed()) return run_init(o, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace nlroi
