#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "igc/engine.hpp"
#include "igc/interleave.hpp"
#include "igc/manifest.hpp"
#include "json.hpp"

#ifndef IGC_CLI_BIN
#define IGC_CLI_BIN "igc"
#endif

using namespace igc;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string stdout_text;
};

RunResult run_cli(const std::string& args) {
  const std::string out_file = "cli_stdout.txt";
  std::string cmd = std::string(IGC_CLI_BIN) + " " + args + " > " + out_file + " 2> cli_err.txt";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::ostringstream ss;
  ss << in.rdbuf();
  r.stdout_text = ss.str();
  return r;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
}

}  // namespace

TEST_CASE("cli plan") {
  SUBCASE("separated C=144 depth 3 ranks the balanced design first") {
    RunResult r = run_cli("plan --channels 144 --spatial 9 --regime separated --depth 3");
    CHECK(r.exit_code == 0);
    auto doc = nlohmann::json::parse(r.stdout_text);
    CHECK(doc["designs"][0]["branch_widths"] == nlohmann::json({1, 12, 12}));
    CHECK(doc["designs"][0]["params"] == 4752);
  }
  SUBCASE("prime channels only factor trivially") {
    RunResult r = run_cli("plan --channels 7 --depth 2 --regime separated");
    CHECK(r.exit_code == 0);
    auto doc = nlohmann::json::parse(r.stdout_text);
    CHECK(doc["designs"].size() == 1);
    CHECK(doc["designs"][0]["branch_widths"] == nlohmann::json({1, 7}));
  }
  SUBCASE("invalid flags exit 2") {
    CHECK(run_cli("plan --channels 0 --depth 2").exit_code == 2);
    CHECK(run_cli("plan --channels 16").exit_code == 2);             // neither depth nor width
    CHECK(run_cli("plan --channels 16 --bogus 1").exit_code == 2);   // unknown flag
  }
  SUBCASE("no feasible design exits 1") {
    CHECK(run_cli("plan --channels 7 --depth 1 --regime separated").exit_code == 1);
  }
}

TEST_CASE("cli verify") {
  write_file("chain_good.json", chain_to_json(build_chain(64, 9, {1, 8, 8})));
  FactorChain bad = build_chain(4, 1, {2, 2});
  bad.interleaves[0] = PermutationSpec::identity(4);
  write_file("chain_bad.json", chain_to_json(bad));

  CHECK(run_cli("verify chain_good.json").exit_code == 0);

  RunResult r = run_cli("verify chain_bad.json");
  CHECK(r.exit_code == 1);
  auto doc = nlohmann::json::parse(r.stdout_text);
  CHECK(doc["covered_fraction"] == doctest::Approx(0.5));

  CHECK(run_cli("verify chain_bad.json --loose").exit_code == 0);
  CHECK(run_cli("verify missing.json").exit_code == 2);

  std::remove("chain_good.json");
  std::remove("chain_bad.json");
}

TEST_CASE("cli compose is deterministic byte for byte") {
  FactorChain chain = build_chain(12, 9, {1, 3, 4});
  write_file("chain_c.json", chain_to_json(chain));
  KernelManifest m{chain, random_weights(chain, 77)};
  write_kernel_manifest("weights_c.kernel", m);

  CHECK(run_cli("compose chain_c.json weights_c.kernel --out dense1.kernel").exit_code == 0);
  CHECK(run_cli("compose chain_c.json weights_c.kernel --out dense2.kernel").exit_code == 0);

  auto slurp_bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp_bytes("dense1.kernel") == slurp_bytes("dense2.kernel"));

  // composed kernel runs through the engine as the dense oracle
  DenseKernel k = dense_kernel_from_manifest(read_kernel_manifest("dense1.kernel"));
  CHECK(k.channels_out == 12);
  CHECK(k.taps == 9);

  // mismatched chain is a domain failure
  write_file("chain_other.json", chain_to_json(build_chain(12, 9, {1, 4, 3})));
  CHECK(run_cli("compose chain_other.json weights_c.kernel --out dense3.kernel").exit_code == 1);

  for (const char* f : {"chain_c.json", "weights_c.kernel", "dense1.kernel", "dense2.kernel",
                        "chain_other.json"})
    std::remove(f);
}

TEST_CASE("compose output is identical under different thread caps") {
  FactorChain chain = build_chain(16, 9, {1, 4, 4});
  write_file("chain_t.json", chain_to_json(chain));
  write_kernel_manifest("weights_t.kernel", {chain, random_weights(chain, 5)});

  CHECK(run_cli("compose chain_t.json weights_t.kernel --out dense_t1.kernel").exit_code == 0);
  std::string one = "IGC_THREADS=1 " IGC_CLI_BIN
                    " compose chain_t.json weights_t.kernel --out dense_t2.kernel";
  CHECK(std::system(one.c_str()) == 0);
  std::string four = "IGC_THREADS=4 " IGC_CLI_BIN
                     " compose chain_t.json weights_t.kernel --out dense_t3.kernel";
  CHECK(std::system(four.c_str()) == 0);

  auto bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(bytes("dense_t1.kernel") == bytes("dense_t2.kernel"));
  CHECK(bytes("dense_t1.kernel") == bytes("dense_t3.kernel"));
  for (const char* f : {"chain_t.json", "weights_t.kernel", "dense_t1.kernel", "dense_t2.kernel",
                        "dense_t3.kernel"})
    std::remove(f);
}

TEST_CASE("cli bench reports the exact theoretical ratio") {
  write_file("chain_b.json", chain_to_json(build_chain(16, 9, {1, 4, 4})));
  RunResult r = run_cli("bench chain_b.json --input 1,16,8,8 --reps 3");
  CHECK(r.exit_code == 0);
  auto doc = nlohmann::json::parse(r.stdout_text);
  const std::uint64_t nz = 16ull * 9 + 2 * 16 * 4;
  CHECK(doc["factorized_nonzeros"] == nz);
  CHECK(doc["dense_nonzeros"] == 16ull * 16 * 9);
  CHECK(doc["theoretical_ratio"] == doctest::Approx(double(nz) / (16.0 * 16 * 9)));
  std::remove("chain_b.json");
}

TEST_CASE("cli count prints the Table-2 block numbers") {
  write_file("recipe_block.json", R"({
    "input_channels": 64,
    "stages": [{"kind": "xception", "width": 64, "blocks": 1}],
    "count_affine": false
  })");
  RunResult r = run_cli("count recipe_block.json --input-size 32,32");
  CHECK(r.exit_code == 0);
  auto doc = nlohmann::json::parse(r.stdout_text);
  CHECK(doc["total_params"] == 4672);
  CHECK(doc["total_flops"] == 4784128);

  CHECK(run_cli("count recipe_block.json --input-size nope").exit_code == 2);
  std::remove("recipe_block.json");
}

TEST_CASE("cli train runs a tiny synthetic job") {
  write_file("recipe_train.json", R"({
    "input_channels": 3,
    "stem": {"width": 8, "spatial_taps": 9},
    "stages": [{"kind": "igcv2", "width": 8, "blocks": 1, "k": 2, "L": 3}],
    "head": {"classes": 2}
  })");
  write_file("config_train.json", R"({
    "lr": 0.1, "epochs": 2, "batch": 32, "seed": 4, "decay_epochs": [],
    "dataset": {"kind": "synth", "classes": 2, "count": 64, "height": 6, "width": 6}
  })");
  RunResult r = run_cli("train recipe_train.json - config_train.json --out metrics.jsonl");
  CHECK(r.exit_code == 0);
  std::ifstream metrics("metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) {
    auto doc = nlohmann::json::parse(line);
    CHECK(doc["epoch"] == lines);
    ++lines;
  }
  CHECK(lines == 2);
  for (const char* f : {"recipe_train.json", "config_train.json", "metrics.jsonl"})
    std::remove(f);
}

TEST_CASE("cli cleanup") {
  std::remove("cli_stdout.txt");
  std::remove("cli_err.txt");
}
