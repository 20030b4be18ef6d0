// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "csifb/experiments.hpp"

using namespace csifb;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

json micro_dataset(int scenarios, int per, int n_sub, std::uint64_t seed) {
  json d;
  d["scenarios"] = scenarios;
  d["per_scenario"] = per;
  d["clusters"] = 2;
  d["subpaths"] = 2;
  d["n_tx"] = 8;
  d["n_sub"] = n_sub;
  d["seed"] = seed;
  return d;
}

json micro_train(int epochs) {
  json t;
  t["epochs"] = epochs;
  t["batch_size"] = 16;
  t["micro_batch"] = 8;
  t["seed"] = 3;
  return t;
}

}  // namespace

TEST_CASE("config parsing from JSON") {
  dataset_config base;
  const dataset_config c =
      exp::dataset_from_json(json::parse(R"({"regime":"specific","scenarios":4,"seed":7})"),
                             base);
  REQUIRE(c.regime == regime_kind::specific);
  REQUIRE(c.scenarios == 4);
  REQUIRE(c.seed == 7);
  REQUIRE(c.per_scenario == base.per_scenario);

  REQUIRE_THROWS_AS(exp::dataset_from_json(json::parse(R"({"scenario_count":4})"), base),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(exp::dataset_from_json(json::parse(R"({"regime":"both"})"), base),
                    std::invalid_argument);

  const train_config t = exp::train_from_json(json::parse(R"({"epochs":5,"seed":9})"));
  REQUIRE(t.epochs == 5);
  REQUIRE(t.seed == 9);
  REQUIRE_THROWS_AS(exp::train_from_json(json::parse(R"({"lr":0.1})")),
                    std::invalid_argument);
}

TEST_CASE("cache keys cover the full config tuple") {
  dataset_config d;
  const std::string k = exp::dataset_key(d);
  REQUIRE(k.find("regime=general") != std::string::npos);
  REQUIRE(k.find("seed=1") != std::string::npos);
  dataset_config d2 = d;
  d2.seed = 2;
  REQUIRE(exp::dataset_key(d2) != k);

  feedback_config fb;
  train_config t;
  const std::string tk = exp::train_key(k, model_config::attention_small(true), fb, t);
  REQUIRE(tk.find("prompt=1") != std::string::npos);
  REQUIRE(tk.find("epochs=100") != std::string::npos);  // family default resolved
  train_config t2 = t;
  t2.micro_batch = 64;
  REQUIRE(exp::train_key(k, model_config::attention_small(true), fb, t2) != tk);
}

TEST_CASE("blocks sweep runs, caches and reproduces", "[exp]") {
  const auto dir = fresh_dir("csifb_exp_blocks");
  json spec;
  spec["experiment"] = "blocks-sweep";
  spec["blocks"] = {2, 1};
  spec["codeword_len"] = 4;
  spec["quant_bits"] = 4;
  spec["dataset"] = micro_dataset(2, 30, 1, 5);
  spec["train"] = micro_train(6);

  exp::runner r1(dir, 1);
  const json m1 = r1.run_file(spec);
  REQUIRE(m1.at("experiments").size() == 1);
  REQUIRE(m1.at("experiments")[0].at("errors").empty());

  const auto lines = read_lines(dir / "blocks_sweep.csv");
  REQUIRE(lines.size() == 4);
  REQUIRE(lines[0] == "# blocks-sweep v1");
  REQUIRE(lines[1] == "N,N_c,L,nmse_db");
  REQUIRE(lines[2].rfind("1,4,2,", 0) == 0);  // rows sorted by N despite spec order
  REQUIRE(lines[3].rfind("2,4,2,", 0) == 0);
  REQUIRE(std::filesystem::exists(dir / "manifest.json"));

  const std::string first = file_bytes(dir / "blocks_sweep.csv");
  exp::runner r2(dir, 2);
  const json m2 = r2.run_file(spec);
  REQUIRE(file_bytes(dir / "blocks_sweep.csv") == first);
  for (const auto& a : m2.at("artifacts")) REQUIRE(a.at("reused").get<bool>());
  std::filesystem::remove_all(dir);
}

TEST_CASE("grid point failures are recorded, not fatal", "[exp]") {
  const auto dir = fresh_dir("csifb_exp_errors");
  json spec;
  spec["experiment"] = "blocks-sweep";
  spec["blocks"] = {1, 0};  // zero residual blocks is invalid
  spec["codeword_len"] = 4;
  spec["quant_bits"] = 4;
  spec["dataset"] = micro_dataset(1, 20, 1, 5);
  spec["train"] = micro_train(2);

  exp::runner r(dir, 1);
  const json m = r.run_file(spec);
  const auto& e = m.at("experiments")[0];
  REQUIRE(e.at("errors").size() == 1);
  REQUIRE(e.at("rows").get<int>() == 1);
  const auto lines = read_lines(dir / "blocks_sweep.csv");
  REQUIRE(lines.size() == 3);  // schema + header + the one surviving row
  std::filesystem::remove_all(dir);
}

TEST_CASE("radius analog emits specific rows plus a general baseline", "[exp]") {
  const auto dir = fresh_dir("csifb_exp_radius");
  json spec;
  spec["experiment"] = "radius-analog";
  spec["spreads_deg"] = {2.0, 0.5};
  spec["general_spread_deg"] = 10.0;
  spec["res_blocks"] = 1;
  spec["codeword_len"] = 4;
  spec["quant_bits"] = 4;
  spec["dataset"] = micro_dataset(2, 30, 1, 6);
  spec["train"] = micro_train(4);

  exp::runner r(dir, 1);
  const json m = r.run_file(spec);
  REQUIRE(m.at("experiments")[0].at("errors").empty());
  const auto lines = read_lines(dir / "radius_analog.csv");
  REQUIRE(lines.size() == 5);
  REQUIRE(lines[1] == "spread_deg,nmse_db,regime");
  REQUIRE(lines[2].rfind("0.5,", 0) == 0);
  REQUIRE(lines[2].find("specific") != std::string::npos);
  REQUIRE(lines[3].rfind("2,", 0) == 0);
  REQUIRE(lines[4].rfind("10,", 0) == 0);
  REQUIRE(lines[4].find("general") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("size comparison scores seen and unseen scenarios", "[exp]") {
  const auto dir = fresh_dir("csifb_exp_size");
  json spec;
  spec["experiment"] = "size-comparison";
  spec["models"] = {"tiny"};
  spec["n_bits"] = {16};
  spec["quant_bits"] = 4;
  spec["dataset"] = micro_dataset(2, 24, 8, 7);
  spec["unseen_dataset"] = micro_dataset(1, 24, 8, 8);
  spec["train"] = micro_train(2);

  exp::runner r(dir, 1);
  const json m = r.run_file(spec);
  REQUIRE(m.at("experiments")[0].at("errors").empty());
  const auto lines = read_lines(dir / "size_comparison.csv");
  REQUIRE(lines.size() == 3);
  REQUIRE(lines[1] == "model,n_bit,seen_nmse_db,unseen_nmse_db,param_count");
  REQUIRE(lines[2].rfind("tiny,16,", 0) == 0);

  // The param_count column reports the real built size.
  feedback_config fb;
  fb.n_tx = 8;
  fb.keep_rows = 4;
  fb.codeword_len = 4;
  fb.quant_bits = 4;
  const auto built = build_model(model_config::attention_tiny(), fb, 1).param_count();
  REQUIRE(lines[2].find("," + std::to_string(built)) != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("prompt ablation and sample sweep share cached models", "[exp]") {
  const auto dir = fresh_dir("csifb_exp_prompt");
  json ablation;
  ablation["experiment"] = "prompt-ablation";
  ablation["model"] = "tiny";
  ablation["n_bits"] = {16};
  ablation["quant_bits"] = 4;
  ablation["dataset"] = micro_dataset(2, 24, 8, 7);
  ablation["unseen_dataset"] = micro_dataset(1, 24, 8, 8);
  ablation["train"] = micro_train(2);

  json samples;
  samples["experiment"] = "prompt-samples";
  samples["model"] = "tiny";
  samples["n_bit"] = 16;
  samples["quant_bits"] = 4;
  samples["m"] = {1, 4};
  samples["dataset"] = micro_dataset(2, 24, 8, 7);
  samples["train"] = micro_train(2);

  json spec;
  spec["experiments"] = json::array({ablation, samples});
  exp::runner r(dir, 1);
  const json m = r.run_file(spec);
  for (const auto& e : m.at("experiments")) REQUIRE(e.at("errors").empty());

  const auto ab = read_lines(dir / "prompt_ablation.csv");
  REQUIRE(ab.size() == 4);
  REQUIRE(ab[1] == "n_bit,nmse_prompt_db,nmse_noprompt_db,scope");
  REQUIRE(ab[2].find(",seen") != std::string::npos);
  REQUIRE(ab[3].find(",unseen") != std::string::npos);

  const auto sm = read_lines(dir / "prompt_samples.csv");
  REQUIRE(sm.size() == 6);
  REQUIRE(sm[1] == "m,nmse_db");
  REQUIRE(sm[2].rfind("1,", 0) == 0);
  REQUIRE(sm[3].rfind("4,", 0) == 0);
  REQUIRE(sm[4].rfind("all,", 0) == 0);
  REQUIRE(sm[5].rfind("noprompt,", 0) == 0);

  // The sample sweep trained nothing new: both models came from the ablation.
  int built_models = 0;
  for (const auto& a : m.at("artifacts"))
    if (a.at("kind") == "model" && !a.at("reused").get<bool>()) ++built_models;
  REQUIRE(built_models == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("unknown experiment kinds and spec keys are rejected") {
  const auto dir = fresh_dir("csifb_exp_bad");
  exp::runner r(dir, 1);
  json spec;
  spec["experiment"] = "frobnicate";
  REQUIRE_THROWS_AS(r.run_file(spec), std::invalid_argument);

  json spec2;
  spec2["experiment"] = "blocks-sweep";
  spec2["block_counts"] = {1};
  REQUIRE_THROWS_AS(r.run_file(spec2), std::invalid_argument);
  std::filesystem::remove_all(dir);
}
