// protolayer: train, evaluate, gradient-check, benchmark and export
// prototype-based networks.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protolayer/alloc_tracker.hpp"
#include "protolayer/bench.hpp"
#include "protolayer/checkpoint.hpp"
#include "protolayer/config.hpp"
#include "protolayer/errors.hpp"
#include "protolayer/gradcheck_suite.hpp"
#include "protolayer/pgm.hpp"
#include "protolayer/trainer.hpp"

namespace pl = protolayer;

namespace {

int cmd_train(const std::string& config_path) {
  const auto config = pl::load_config(config_path);
  std::printf("%s\n", pl::kMetricsHeader);
  pl::TrainOptions opts;
  opts.on_record = [](const pl::MetricsRecord& r) {
    std::printf("%s\n", pl::to_csv_row(r).c_str());
    std::fflush(stdout);
  };
  pl::train_and_save(config, opts);
  std::printf("wrote %s and %s\n", (config.output_dir / "metrics.csv").c_str(),
              (config.output_dir / "checkpoint.bin").c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path, const std::string& split,
             std::string report_path) {
  const auto config = pl::load_config(config_path);
  const auto ck = pl::Checkpoint::load(checkpoint_path);
  const auto net = pl::network_from_checkpoint(config, ck);
  const auto policy = pl::checkpoint_reject_policy(config, ck, net);
  const auto data = pl::load_datasets(config);
  const auto& ds = split == "train" ? data.train : data.test;
  const auto ev = pl::evaluate(net, ds, config.loss, policy);

  nlohmann::json j;
  j["split"] = split;
  j["samples"] = ev.samples;
  j["loss"] = ev.loss;
  j["accuracy"] = ev.accuracy;
  j["reject_rate"] = ev.reject_rate;
  j["accepted"] = ev.accepted;
  j["correct"] = ev.correct;
  j["confusion"] = {{"true_classes", ev.true_classes},
                    {"predicted_classes", ev.predicted_classes},
                    {"counts", ev.confusion},
                    {"last_column", "rejected"}};
  if (report_path.empty()) report_path = (config.output_dir / ("eval_" + split + ".json")).string();
  std::filesystem::create_directories(std::filesystem::path(report_path).parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : std::filesystem::path(report_path).parent_path());
  std::ofstream(report_path) << j.dump(2) << '\n';
  std::printf("%s accuracy=%.6f reject_rate=%.6f loss=%.6f samples=%zu report=%s\n", split.c_str(), ev.accuracy,
              ev.reject_rate, ev.loss, ev.samples, report_path.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& config_path, double tol, std::size_t points, bool inject_fault) {
  const auto config = pl::load_config(config_path);
  const auto data = pl::load_datasets(config);
  auto net = pl::build_network(config, data.train);
  pl::NetworkCheckOptions opts;
  opts.points = points;
  opts.fault = inject_fault ? 1e-2 : 0.0;
  const auto reports = pl::check_network(net, data.train, config.loss, pl::derive_seed(config.seed, 99), opts);
  bool ok = true;
  for (const auto& r : reports) {
    const bool pass = r.max_relative_error < tol;
    ok = ok && pass;
    std::printf("%s %-60s points=%zu max_rel_err=%.3e\n", pass ? "PASS" : "FAIL", r.op.c_str(), r.points,
                r.max_relative_error);
  }
  if (!ok) {
    std::fprintf(stderr, "NumericError: gradient check above tolerance %.1e\n", tol);
    return 1;
  }
  return 0;
}

int cmd_bench(const std::vector<std::size_t>& dims, const std::vector<std::size_t>& protos, std::size_t repeats,
              std::uint64_t seed, const std::string& out) {
  const auto rows = pl::run_bench(dims, protos, repeats, seed);
  if (!pl::alloc_tracker::active()) std::fprintf(stderr, "note: allocation tracking is not linked in\n");
  if (!out.empty()) pl::write_bench_csv(out, rows);
  std::printf("%s\n", pl::kBenchHeader);
  for (const auto& r : rows) {
    std::printf("%zu,%zu,%zu,%.9g,%.9g,%zu,%zu,%.3g\n", r.dim, r.prototypes, r.repeats, r.naive_seconds,
                r.efficient_seconds, r.naive_peak_bytes, r.efficient_peak_bytes, r.relative_error);
  }
  return 0;
}

int cmd_export(const std::string& checkpoint_path, const std::string& out_dir, const std::string& format) {
  const auto ck = pl::Checkpoint::load(checkpoint_path);
  const auto paths = pl::export_prototypes(ck, out_dir, format == "csv");
  std::printf("wrote %zu files to %s\n", paths.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-based network layers: train, evaluate, check and benchmark"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, split = "test", report, out_dir, format = "pgm", bench_out;
  double tol = 1e-5;
  std::size_t points = 3, repeats = 5;
  std::uint64_t seed = 0;
  bool inject_fault = false;
  std::vector<std::size_t> dims{256}, protos{16, 64, 256, 1024};

  auto* train = app.add_subcommand("train", "train a model and write metrics.csv and checkpoint.bin");
  train->add_option("--config", config_path, "run config (JSON)")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and write a JSON report");
  eval->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--report", report, "report path (default: <output_dir>/eval_<split>.json)");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every layer of the configured model");
  grad->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  grad->add_option("--tol", tol, "maximum relative error");
  grad->add_option("--points", points, "random sample points per layer");
  grad->add_flag("--inject-fault", inject_fault, "corrupt the analytic gradients (negative control)");

  auto* bench = app.add_subcommand("bench", "naive vs efficient prototype response: time and transient memory");
  bench->add_option("--dims", dims, "input dimensions")->expected(1, -1);
  bench->add_option("--protos", protos, "prototype counts")->expected(1, -1);
  bench->add_option("--repeats", repeats, "timed calls per configuration");
  bench->add_option("--seed", seed);
  bench->add_option("--out", bench_out, "CSV output path");

  auto* exp = app.add_subcommand("export-protos", "write prototypes as graymaps");
  exp->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  exp->add_option("--out", out_dir)->required();
  exp->add_option("--format", format, "pgm or csv")->check(CLI::IsMember({"pgm", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "UsageError: %s\n", e.what());
    return 2;
  }

  try {
    if (*train) return cmd_train(config_path);
    if (*eval) return cmd_eval(checkpoint_path, config_path, split, report);
    if (*grad) return cmd_gradcheck(config_path, tol, points, inject_fault);
    if (*bench) return cmd_bench(dims, protos, repeats, seed, bench_out);
    if (*exp) return cmd_export(checkpoint_path, out_dir, format);
  } catch (const pl::Error& e) {
    std::fprintf(stderr, "%s: %s\n", e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "InternalError: %s\n", e.what());
    return 3;
  }
  return 0;
}
