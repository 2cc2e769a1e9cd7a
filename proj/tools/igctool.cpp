#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "igc/autograd.hpp"
#include "igc/engine.hpp"
#include "igc/interleave.hpp"
#include "igc/manifest.hpp"
#include "igc/planner.hpp"
#include "igc/structure.hpp"
#include "igc/train.hpp"
#include "json.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw igc::usage_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw igc::usage_error("cannot open " + path + " for writing");
  out << text;
}

bool want_pretty(bool pretty_flag) { return pretty_flag || isatty(fileno(stdout)); }

struct PlanArgs {
  int channels = 0;
  int spatial = 9;
  std::string regime = "separated";
  int depth = 0;
  int branch_width = 0;
  int top = 10;
  std::string out;
  bool pretty = false;
};

int run_plan(const PlanArgs& a) {
  if (a.channels < 1) throw igc::usage_error("plan: --channels must be >= 1");
  if ((a.depth > 0) == (a.branch_width > 0))
    throw igc::usage_error("plan: pass exactly one of --depth or --branch-width");
  igc::Regime regime;
  if (a.regime == "separated")
    regime = igc::Regime::separated;
  else if (a.regime == "coupled")
    regime = igc::Regime::coupled;
  else
    throw igc::usage_error("plan: --regime must be separated or coupled");

  std::vector<igc::DesignPoint> points;
  if (a.branch_width > 0) {
    points.push_back(igc::plan_igcv2_star(a.channels, a.branch_width));
  } else {
    points = igc::enumerate_factorizations(a.channels, a.depth, regime, a.spatial);
    if (static_cast<int>(points.size()) > a.top) points.resize(a.top);
  }
  if (points.empty()) {
    std::cerr << "plan: no feasible design\n";
    return kExitDomain;
  }
  const auto best = igc::optimal_L(a.channels, a.spatial);
  nlohmann::json doc = nlohmann::json::parse(igc::design_points_to_json(points));
  nlohmann::json report = {{"channels", a.channels},
                           {"spatial_taps", a.spatial},
                           {"regime", a.regime},
                           {"stationary_L", best.stationary},
                           {"best_L", best.best_L},
                           {"designs", doc}};
  if (!a.out.empty()) write_text(a.out, report.dump(2) + "\n");
  if (want_pretty(a.pretty)) {
    std::printf("C=%d S=%d regime=%s  optimal L: %.3f -> best integer L=%d\n", a.channels,
                a.spatial, a.regime.c_str(), best.stationary, best.best_L);
    std::fputs(igc::design_points_to_table(points).c_str(), stdout);
  } else {
    std::cout << report.dump() << "\n";
  }
  return kExitOk;
}

int run_verify(const std::string& chain_path, bool loose, bool pretty) {
  igc::FactorChain chain = igc::chain_from_json(slurp(chain_path));
  const auto mode = loose ? igc::ComplementarityMode::loose : igc::ComplementarityMode::strict;
  const auto report = igc::verify_complementary(chain, mode);
  nlohmann::json doc = {{"mode", loose ? "loose" : "strict"},
                        {"min_paths", report.min_paths},
                        {"max_paths", report.max_paths},
                        {"covered_fraction", report.covered_fraction},
                        {"pass", report.pass}};
  if (want_pretty(pretty))
    std::printf("%s verify: min_paths=%llu max_paths=%llu covered=%.4f -> %s\n",
                loose ? "loose" : "strict", (unsigned long long)report.min_paths,
                (unsigned long long)report.max_paths, report.covered_fraction,
                report.pass ? "pass" : "fail");
  else
    std::cout << doc.dump() << "\n";
  return report.pass ? kExitOk : kExitDomain;
}

int run_compose(const std::string& chain_path, const std::string& weights_path,
                const std::string& out_path) {
  igc::FactorChain chain = igc::chain_from_json(slurp(chain_path));
  igc::KernelManifest manifest = igc::read_kernel_manifest(weights_path);
  if (!(manifest.chain == chain)) {
    std::cerr << "compose: weight manifest chain does not match " << chain_path << "\n";
    return kExitDomain;
  }
  igc::DenseKernel dense = igc::compose_dense_kernel(chain, manifest.weights);
  igc::write_kernel_manifest(out_path, igc::dense_kernel_manifest(dense));
  std::cout << "{\"channels_out\":" << dense.channels_out
            << ",\"channels_in\":" << dense.channels_in << ",\"taps\":" << dense.taps << "}\n";
  return kExitOk;
}

int run_bench(const std::string& chain_path, const std::string& input, int reps, int seed,
              bool pretty) {
  igc::FactorChain chain = igc::chain_from_json(slurp(chain_path));
  int n, c, h, w;
  if (std::sscanf(input.c_str(), "%d,%d,%d,%d", &n, &c, &h, &w) != 4)
    throw igc::usage_error("bench: --input must be N,C,H,W");
  if (c != chain.channels_in()) throw igc::usage_error("bench: input channels do not match chain");
  igc::BlockWeights weights = igc::random_weights(chain, static_cast<std::uint64_t>(seed));
  igc::BenchmarkResult r = igc::benchmark(chain, weights, n, h, w, reps);
  nlohmann::json doc = {{"factorized_ms", r.factorized_ms},
                        {"dense_ms", r.dense_ms},
                        {"time_ratio", r.time_ratio},
                        {"factorized_nonzeros", r.factorized_nonzeros},
                        {"dense_nonzeros", r.dense_nonzeros},
                        {"theoretical_ratio", r.theoretical_ratio}};
  if (want_pretty(pretty))
    std::printf(
        "factorized %.3f ms | dense %.3f ms | time ratio %.3f | theoretical MAC ratio %llu/%llu "
        "= %.4f\n",
        r.factorized_ms, r.dense_ms, r.time_ratio, (unsigned long long)r.factorized_nonzeros,
        (unsigned long long)r.dense_nonzeros, r.theoretical_ratio);
  else
    std::cout << doc.dump() << "\n";
  return kExitOk;
}

int run_count(const std::string& recipe_path, const std::string& input_size, bool pretty) {
  igc::NetworkRecipe recipe = igc::recipe_from_json(slurp(recipe_path));
  int h, w;
  if (std::sscanf(input_size.c_str(), "%d,%d", &h, &w) != 2)
    throw igc::usage_error("count: --input-size must be H,W");
  igc::NetworkBudget budget = igc::network_param_count(recipe, h, w);
  if (want_pretty(pretty))
    std::fputs(igc::budget_to_table(budget).c_str(), stdout);
  else
    std::cout << igc::budget_to_json(budget) << "\n";
  return kExitOk;
}

int run_train(const std::string& recipe_path, const std::string& data_dir,
              const std::string& config_path, const std::string& out_path,
              const std::string& checkpoint_dir) {
  igc::NetworkRecipe recipe = igc::recipe_from_json(slurp(recipe_path));
  igc::TrainJob job = igc::train_job_from_json(slurp(config_path));
  igc::Dataset data = igc::make_dataset(job.dataset, data_dir);
  igc::Network net = igc::build_network(recipe, data.images.c, job.config.seed);

  std::ofstream metrics;
  std::ostream* sink = &std::cout;
  if (!out_path.empty()) {
    metrics.open(out_path, std::ios::trunc);
    if (!metrics) throw igc::usage_error("cannot open " + out_path + " for writing");
    sink = &metrics;
  }
  // eval_acc = eval-mode pass over the training set (running BN statistics)
  igc::TrainResult result = igc::train(net, data, &data, job.config, sink, checkpoint_dir);
  if (result.diverged) {
    std::cerr << "train: diverged: " << result.message << "\n";
    return kExitDomain;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"interleaved structured-sparse convolution toolkit"};
  app.require_subcommand(1);

  PlanArgs plan_args;
  auto* plan = app.add_subcommand("plan", "enumerate and rank factorization designs");
  plan->add_option("--channels", plan_args.channels, "layer width C")->required();
  plan->add_option("--spatial", plan_args.spatial, "spatial taps S (1 or 9)");
  plan->add_option("--regime", plan_args.regime, "separated|coupled");
  plan->add_option("--depth", plan_args.depth, "factor count L");
  plan->add_option("--branch-width", plan_args.branch_width, "IGCV2* branch width K");
  plan->add_option("--top", plan_args.top, "designs to keep");
  plan->add_option("--out", plan_args.out, "report file (JSON)");
  plan->add_flag("--pretty", plan_args.pretty, "aligned table output");

  std::string verify_chain;
  bool verify_loose = false, verify_pretty = false;
  auto* verify = app.add_subcommand("verify", "check the complementary condition of a chain");
  verify->add_option("chain", verify_chain, "chain document (JSON)")->required();
  verify->add_flag("--loose", verify_loose, "quantify instead of pass/fail");
  verify->add_flag("--pretty", verify_pretty, "human-readable output");

  std::string compose_chain, compose_weights, compose_out;
  auto* compose = app.add_subcommand("compose", "multiply a chain out into a dense kernel");
  compose->add_option("chain", compose_chain, "chain document (JSON)")->required();
  compose->add_option("weights", compose_weights, "kernel manifest with the factor weights")
      ->required();
  compose->add_option("--out", compose_out, "dense kernel manifest")->required();

  std::string bench_chain, bench_input = "1,64,32,32";
  int bench_reps = 5, bench_seed = 1;
  bool bench_pretty = false;
  auto* bench = app.add_subcommand("bench", "time factorized vs dense execution");
  bench->add_option("chain", bench_chain, "chain document (JSON)")->required();
  bench->add_option("--input", bench_input, "N,C,H,W");
  bench->add_option("--reps", bench_reps, "repetitions (>= 3)");
  bench->add_option("--seed", bench_seed, "weight seed");
  bench->add_flag("--pretty", bench_pretty, "human-readable output");

  std::string count_recipe, count_input = "32,32";
  bool count_pretty = false;
  auto* count = app.add_subcommand("count", "parameter and FLOP budget of a network recipe");
  count->add_option("recipe", count_recipe, "recipe document (JSON)")->required();
  count->add_option("--input-size", count_input, "H,W");
  count->add_flag("--pretty", count_pretty, "aligned table output");

  std::string train_recipe, train_data, train_config, train_out, train_ckpt;
  auto* train = app.add_subcommand("train", "desk-scale training run");
  train->add_option("recipe", train_recipe, "recipe document (JSON)")->required();
  train->add_option("data", train_data, "CIFAR directory, or - for synthetic data")->required();
  train->add_option("config", train_config, "train config (JSON)")->required();
  train->add_option("--out", train_out, "metrics file (JSON lines)");
  train->add_option("--checkpoint", train_ckpt, "checkpoint directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (plan->parsed()) return run_plan(plan_args);
    if (verify->parsed()) return run_verify(verify_chain, verify_loose, verify_pretty);
    if (compose->parsed()) return run_compose(compose_chain, compose_weights, compose_out);
    if (bench->parsed()) return run_bench(bench_chain, bench_input, bench_reps, bench_seed,
                                          bench_pretty);
    if (count->parsed()) return run_count(count_recipe, count_input, count_pretty);
    if (train->parsed())
      return run_train(train_recipe, train_data, train_config, train_out, train_ckpt);
  } catch (const igc::usage_error& e) {
    std::cerr << "{\"error\":\"usage\",\"message\":\"" << e.what() << "\"}\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":\"domain\",\"message\":\"" << e.what() << "\"}\n";
    return kExitDomain;
  }
  return kExitUsage;
}
