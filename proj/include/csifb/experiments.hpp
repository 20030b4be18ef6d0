// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "csifb/binio.hpp"
#include "csifb/checkpoint.hpp"
#include "csifb/dataset.hpp"
#include "csifb/models.hpp"
#include "csifb/prompt.hpp"
#include "csifb/trainer.hpp"

namespace csifb::exp {

using nlohmann::json;

// ---- canonical strings and small utilities ---------------------------------

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_db(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw std::invalid_argument(where + ": unknown key '" + item.key() + "'");
  }
}

inline regime_kind regime_from_string(const std::string& s) {
  if (s == "general") return regime_kind::general;
  if (s == "specific") return regime_kind::specific;
  throw std::invalid_argument("regime must be 'general' or 'specific', got '" + s + "'");
}

// ---- JSON -> config parsing -------------------------------------------------

inline dataset_config dataset_from_json(const json& j, dataset_config base) {
  check_keys(j,
             {"regime", "scenarios", "per_scenario", "clusters", "subpaths", "n_tx",
              "n_sub", "keep_rows", "bandwidth_hz", "angle_spread_deg", "delay_spread_s",
              "split_train", "split_val", "split_test", "seed"},
             "dataset");
  dataset_config c = base;
  if (j.contains("regime")) c.regime = regime_from_string(j.at("regime").get<std::string>());
  if (j.contains("scenarios")) c.scenarios = j.at("scenarios").get<int>();
  if (j.contains("per_scenario")) c.per_scenario = j.at("per_scenario").get<int>();
  if (j.contains("clusters")) c.clusters = j.at("clusters").get<int>();
  if (j.contains("subpaths")) c.subpaths = j.at("subpaths").get<int>();
  if (j.contains("n_tx")) c.n_tx = j.at("n_tx").get<int>();
  if (j.contains("n_sub")) c.n_sub = j.at("n_sub").get<int>();
  if (j.contains("keep_rows")) c.keep_rows = j.at("keep_rows").get<int>();
  if (j.contains("bandwidth_hz")) c.bandwidth_hz = j.at("bandwidth_hz").get<double>();
  if (j.contains("angle_spread_deg"))
    c.angle_spread_deg = j.at("angle_spread_deg").get<double>();
  if (j.contains("delay_spread_s")) c.delay_spread_s = j.at("delay_spread_s").get<double>();
  if (j.contains("split_train")) c.split_train = j.at("split_train").get<double>();
  if (j.contains("split_val")) c.split_val = j.at("split_val").get<double>();
  if (j.contains("split_test")) c.split_test = j.at("split_test").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

inline train_config train_from_json(const json& j) {
  check_keys(j,
             {"batch_size", "micro_batch", "epochs", "learning_rate", "beta1", "beta2",
              "epsilon", "val_fraction", "clip_gradients", "clip_norm", "seed"},
             "train");
  train_config c;
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("micro_batch")) c.micro_batch = j.at("micro_batch").get<int>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
  if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
  if (j.contains("val_fraction")) c.val_fraction = j.at("val_fraction").get<double>();
  if (j.contains("clip_gradients")) c.clip_gradients = j.at("clip_gradients").get<bool>();
  if (j.contains("clip_norm")) c.clip_norm = j.at("clip_norm").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

inline model_config model_preset(const std::string& name, int res_blocks = 2) {
  if (name == "large") return model_config::attention_large();
  if (name == "small") return model_config::attention_small();
  if (name == "tiny") return model_config::attention_tiny();
  if (name == "resfc") return model_config::resfc(res_blocks);
  throw std::invalid_argument("unknown model preset '" + name +
                              "' (expected large/small/tiny/resfc)");
}

// ---- cache keys --------------------------------------------------------------

inline std::string dataset_key(const dataset_config& c) {
  std::string s = "dataset|v1";
  s += "|regime=" + std::string(c.regime == regime_kind::general ? "general" : "specific");
  s += "|scenarios=" + std::to_string(c.scenarios);
  s += "|per=" + std::to_string(c.per_scenario);
  s += "|clusters=" + std::to_string(c.clusters);
  s += "|subpaths=" + std::to_string(c.subpaths);
  s += "|ntx=" + std::to_string(c.n_tx);
  s += "|nsub=" + std::to_string(c.n_sub);
  s += "|keep=" + std::to_string(c.resolved_keep_rows());
  s += "|bw=" + num(c.bandwidth_hz);
  s += "|aspread=" + num(c.angle_spread_deg);
  s += "|dspread=" + num(c.delay_spread_s);
  s += "|split=" + num(c.split_train) + "," + num(c.split_val) + "," + num(c.split_test);
  s += "|seed=" + std::to_string(c.seed);
  return s;
}

inline std::string model_key_part(const model_config& m, const feedback_config& fb) {
  std::string s;
  if (m.family == model_family::attention) {
    s += "|fam=attention|enc=" + std::to_string(m.enc_blocks) +
         "|dec=" + std::to_string(m.dec_blocks) + "|embed=" + std::to_string(m.embed_dim) +
         "|heads=" + std::to_string(m.heads) +
         "|act=" + std::string(m.ff_act == activation::tanh_act ? "tanh" : "relu") +
         "|prompt=" + std::string(m.with_prompt ? "1" : "0");
  } else {
    s += "|fam=resfc|res=" + std::to_string(m.res_blocks);
  }
  s += "|ntx=" + std::to_string(fb.n_tx) + "|keep=" + std::to_string(fb.keep_rows) +
       "|nc=" + std::to_string(fb.codeword_len) + "|qb=" + std::to_string(fb.quant_bits);
  return s;
}

inline std::string train_key(const std::string& ds_key, const model_config& m,
                             const feedback_config& fb, const train_config& t) {
  std::string s = "train|v1|ds=" + hex64(fnv1a64(ds_key));
  s += model_key_part(m, fb);
  s += "|batch=" + std::to_string(t.batch_size) + "|micro=" + std::to_string(t.micro_batch) +
       "|epochs=" + std::to_string(t.resolved_epochs(m.family)) + "|lr=" + num(t.learning_rate) +
       "|b1=" + num(t.beta1) + "|b2=" + num(t.beta2) + "|eps=" + num(t.epsilon) +
       "|vf=" + num(t.val_fraction) + "|clip=" + std::string(t.clip_gradients ? "1" : "0") +
       "|cn=" + num(t.clip_norm) + "|seed=" + std::to_string(t.seed);
  return s;
}

// ---- artifact store ----------------------------------------------------------

// Builds datasets and trained checkpoints on demand, keyed by canonical config
// strings, and memoizes them under <out>/cache so later grid points and later
// experiments reuse them. Safe to call from several workers: each key carries
// its own build lock.
class artifact_store {
 public:
  explicit artifact_store(std::filesystem::path cache_dir)
      : dir_(std::move(cache_dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::shared_ptr<const dataset> get_dataset(const dataset_config& cfg) {
    const std::string key = dataset_key(cfg);
    const std::string hex = hex64(fnv1a64(key));
    const std::filesystem::path path = dir_ / ("ds_" + hex + ".csid");
    const std::lock_guard<std::mutex> guard(key_lock(key));
    {
      const std::lock_guard<std::mutex> g2(mu_);
      const auto it = datasets_.find(key);
      if (it != datasets_.end()) return it->second;
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::shared_ptr<const dataset> ds;
    bool cached = std::filesystem::exists(path);
    if (cached) {
      ds = std::make_shared<const dataset>(load_dataset(path.string()));
    } else {
      ds = std::make_shared<const dataset>(build_dataset(cfg));
      save_dataset(*ds, path.string());
    }
    record(key, hex, "dataset", path, cached, t0);
    const std::lock_guard<std::mutex> g2(mu_);
    datasets_.emplace(key, ds);
    return ds;
  }

  // Trains (or reloads) a model for the dataset/config tuple. The initializer
  // seed derives from the key itself so any experiment asking for the same
  // tuple shares one checkpoint.
  model_params get_model(const dataset_config& dcfg, const model_config& mcfg,
                         const feedback_config& fb, const train_config& tcfg) {
    const std::string key = train_key(dataset_key(dcfg), mcfg, fb, tcfg);
    const std::string hex = hex64(fnv1a64(key));
    const std::filesystem::path path = dir_ / ("model_" + hex + ".csfm");
    const std::lock_guard<std::mutex> guard(key_lock(key));
    const auto t0 = std::chrono::steady_clock::now();
    if (std::filesystem::exists(path)) {
      model_params p = load_model(path.string());
      record(key, hex, "model", path, true, t0);
      return p;
    }
    const std::shared_ptr<const dataset> ds = get_dataset(dcfg);
    const std::uint64_t init_seed = fnv1a64("init|" + key);
    model_params p = build_model(mcfg, fb, init_seed);
    const train_history hist = train(p, *ds, tcfg);
    save_model(p, path.string());
    write_history_csv(hist, (dir_ / ("history_" + hex + ".csv")).string());
    record(key, hex, "model", path, false, t0);
    return p;
  }

  json manifest_artifacts() const {
    const std::lock_guard<std::mutex> g(mu_);
    return artifacts_;
  }

 private:
  std::mutex& key_lock(const std::string& key) {
    const std::lock_guard<std::mutex> g(mu_);
    auto& slot = locks_[key];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
  }

  void record(const std::string& key, const std::string& hex, const char* kind,
              const std::filesystem::path& path, bool cached,
              std::chrono::steady_clock::time_point t0) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    byte_reader r = byte_reader::from_file(path.string());
    std::vector<std::uint8_t> bytes(r.remaining());
    r.u8_array(bytes.data(), bytes.size());
    json e;
    e["kind"] = kind;
    e["key"] = key;
    e["id"] = hex;
    e["file"] = path.filename().string();
    e["fnv1a64"] = hex64(fnv1a64(bytes.data(), bytes.size()));
    e["reused"] = cached;
    e["seconds"] = secs;
    const std::lock_guard<std::mutex> g(mu_);
    artifacts_.push_back(std::move(e));
  }

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
  std::map<std::string, std::shared_ptr<const dataset>> datasets_;
  json artifacts_ = json::array();
};

// ---- grid execution ----------------------------------------------------------

// Fixed evaluation chunk, independent of the training micro batch, so a CSV
// never changes because someone tuned a memory knob.
inline constexpr int eval_chunk = 32;

struct grid_row {
  std::string sort_key;
  std::string csv;        // fully formatted row, empty while pending
  std::string error;      // per-row failure, recorded without aborting the grid
};

template <typename Fn>
inline void run_grid(int jobs, std::vector<grid_row>& rows, Fn&& fill) {
  const int n = static_cast<int>(rows.size());
  jobs = std::max(1, std::min(jobs, n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fill(static_cast<std::size_t>(i));
      } catch (const std::exception& ex) {
        rows[static_cast<std::size_t>(i)].error = ex.what();
      }
    }
  };
  if (jobs == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

inline void write_csv(const std::filesystem::path& path, const std::string& schema,
                      const std::string& header, std::vector<grid_row> rows) {
  std::sort(rows.begin(), rows.end(),
            [](const grid_row& a, const grid_row& b) { return a.sort_key < b.sort_key; });
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "# " << schema << "\n" << header << "\n";
  for (const auto& r : rows) f << r.csv << "\n";
}

inline json csv_manifest_entry(const std::filesystem::path& path) {
  byte_reader r = byte_reader::from_file(path.string());
  std::vector<std::uint8_t> bytes(r.remaining());
  r.u8_array(bytes.data(), bytes.size());
  json e;
  e["file"] = path.filename().string();
  e["fnv1a64"] = hex64(fnv1a64(bytes.data(), bytes.size()));
  return e;
}

// ---- experiment runners -------------------------------------------------------

class runner {
 public:
  runner(std::filesystem::path out_dir, int jobs)
      : out_(std::move(out_dir)), jobs_(std::max(1, jobs)), store_(out_ / "cache") {
    std::filesystem::create_directories(out_);
  }

  // Accepts either a single experiment object or {"experiments": [...]}.
  // Returns the manifest, which is also written to <out>/manifest.json.
  json run_file(const json& spec) {
    json experiments = json::array();
    if (spec.contains("experiments")) {
      check_keys(spec, {"experiments"}, "spec");
      experiments = spec.at("experiments");
      if (!experiments.is_array())
        throw std::invalid_argument("spec: 'experiments' must be an array");
    } else {
      experiments.push_back(spec);
    }
    json results = json::array();
    for (const auto& e : experiments) results.push_back(run_one(e));

    json manifest;
    manifest["manifest_version"] = 1;
    manifest["tool"] = "csifb exp";
    manifest["jobs"] = jobs_;
    manifest["spec"] = spec;
    manifest["experiments"] = std::move(results);
    manifest["artifacts"] = store_.manifest_artifacts();
    std::ofstream f(out_ / "manifest.json");
    if (!f) throw std::runtime_error("cannot write manifest.json");
    f << manifest.dump(2) << "\n";
    return manifest;
  }

  json run_one(const json& spec) {
    if (!spec.is_object() || !spec.contains("experiment"))
      throw std::invalid_argument("experiment spec needs an 'experiment' kind");
    const std::string kind = spec.at("experiment").get<std::string>();
    const auto t0 = std::chrono::steady_clock::now();
    json r;
    if (kind == "blocks-sweep")
      r = blocks_sweep(spec);
    else if (kind == "radius-analog")
      r = radius_analog(spec);
    else if (kind == "size-comparison")
      r = size_comparison(spec);
    else if (kind == "prompt-ablation")
      r = prompt_ablation(spec);
    else if (kind == "prompt-samples")
      r = prompt_samples(spec);
    else
      throw std::invalid_argument("unknown experiment kind '" + kind + "'");
    r["experiment"] = kind;
    r["seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

 private:
  // Residual-depth sweep: one Res-FC training per block count on a shared
  // general-regime dataset.
  json blocks_sweep(const json& spec) {
    check_keys(spec, {"experiment", "out_csv", "blocks", "codeword_len", "quant_bits",
                      "dataset", "train"},
               "blocks-sweep");
    dataset_config base;
    base.regime = regime_kind::general;
    base.scenarios = 100;
    base.per_scenario = 200;
    base.clusters = 1;
    base.subpaths = 5;
    base.n_tx = 32;
    base.n_sub = 1;
    const dataset_config dcfg =
        dataset_from_json(spec.value("dataset", json::object()), base);
    const train_config tcfg = train_from_json(spec.value("train", json::object()));
    const std::vector<int> blocks = spec.value("blocks", std::vector<int>{1, 2, 3, 5});
    feedback_config fb;
    fb.n_tx = dcfg.n_tx;
    fb.keep_rows = dcfg.resolved_keep_rows();
    fb.codeword_len = spec.value("codeword_len", 6);
    fb.quant_bits = spec.value("quant_bits", 4);
    fb.validate();

    std::vector<grid_row> rows(blocks.size());
    run_grid(jobs_, rows, [&](std::size_t i) {
      const int n = blocks[i];
      char key[16];
      std::snprintf(key, sizeof(key), "%06d", n);
      rows[i].sort_key = key;
      const model_params p = store_.get_model(dcfg, model_config::resfc(n), fb, tcfg);
      const auto ds = store_.get_dataset(dcfg);
      const double db = evaluate_split_nmse(p, *ds, sample_split::test, nullptr, eval_chunk).db;
      rows[i].csv = std::to_string(n) + "," + std::to_string(fb.codeword_len) + "," +
                    std::to_string(dcfg.clusters) + "," + fmt_db(db);
    });
    return finish(spec, "blocks_sweep.csv", "blocks-sweep v1", "N,N_c,L,nmse_db",
                  std::move(rows), blocks.size());
  }

  // Scenario-tightness sweep: specific-regime runs over decreasing angular
  // spread against one general-regime baseline, matched budgets throughout.
  json radius_analog(const json& spec) {
    check_keys(spec, {"experiment", "out_csv", "spreads_deg", "general_spread_deg",
                      "res_blocks", "codeword_len", "quant_bits", "dataset", "train"},
               "radius-analog");
    dataset_config base;
    base.regime = regime_kind::specific;
    base.scenarios = 40;
    base.per_scenario = 200;
    base.clusters = 4;
    base.subpaths = 5;
    base.n_tx = 32;
    base.n_sub = 1;
    const dataset_config dcfg =
        dataset_from_json(spec.value("dataset", json::object()), base);
    const train_config tcfg = train_from_json(spec.value("train", json::object()));
    const std::vector<double> spreads =
        spec.value("spreads_deg", std::vector<double>{0.5, 1.0, 2.0, 5.0});
    const double general_spread = spec.value("general_spread_deg", 10.0);
    const int res_blocks = spec.value("res_blocks", 3);
    feedback_config fb;
    fb.n_tx = dcfg.n_tx;
    fb.keep_rows = dcfg.resolved_keep_rows();
    fb.codeword_len = spec.value("codeword_len", 6);
    fb.quant_bits = spec.value("quant_bits", 4);
    fb.validate();

    std::vector<grid_row> rows(spreads.size() + 1);
    run_grid(jobs_, rows, [&](std::size_t i) {
      dataset_config d = dcfg;
      double spread;
      const char* regime;
      if (i < spreads.size()) {
        spread = spreads[i];
        d.regime = regime_kind::specific;
        regime = "specific";
      } else {
        spread = general_spread;
        d.regime = regime_kind::general;
        regime = "general";
      }
      d.angle_spread_deg = spread;
      char key[32];
      std::snprintf(key, sizeof(key), "%d|%014.6f", i < spreads.size() ? 0 : 1, spread);
      rows[i].sort_key = key;
      const model_params p = store_.get_model(d, model_config::resfc(res_blocks), fb, tcfg);
      const auto ds = store_.get_dataset(d);
      const double db = evaluate_split_nmse(p, *ds, sample_split::test, nullptr, eval_chunk).db;
      rows[i].csv = fmt_g(spread) + "," + fmt_db(db) + "," + regime;
    });
    return finish(spec, "radius_analog.csv", "radius-analog v1", "spread_deg,nmse_db,regime",
                  std::move(rows), spreads.size() + 1);
  }

  // Capacity comparison: the three attention presets across bit budgets,
  // scored on seen-scenario test data and on scenarios never trained on.
  json size_comparison(const json& spec) {
    check_keys(spec, {"experiment", "out_csv", "models", "n_bits", "quant_bits",
                      "dataset", "unseen_dataset", "train"},
               "size-comparison");
    const dataset_config seen_cfg =
        dataset_from_json(spec.value("dataset", json::object()), multi_scenario_base(1));
    dataset_config unseen_base = multi_scenario_base(2);
    unseen_base.scenarios = 8;
    const dataset_config unseen_cfg =
        dataset_from_json(spec.value("unseen_dataset", json::object()), unseen_base);
    const train_config tcfg = train_from_json(spec.value("train", json::object()));
    const std::vector<std::string> models =
        spec.value("models", std::vector<std::string>{"large", "small", "tiny"});
    const std::vector<int> n_bits = spec.value("n_bits", std::vector<int>{64, 128});
    const int qbits = spec.value("quant_bits", 4);

    std::vector<std::pair<std::string, int>> grid;
    for (const auto& m : models)
      for (int nb : n_bits) grid.emplace_back(m, nb);

    std::vector<grid_row> rows(grid.size());
    run_grid(jobs_, rows, [&](std::size_t i) {
      const auto& [name, nb] = grid[i];
      char key[64];
      std::snprintf(key, sizeof(key), "%s|%08d", name.c_str(), nb);
      rows[i].sort_key = key;
      const model_config mcfg = model_preset(name);
      feedback_config fb;
      fb.n_tx = seen_cfg.n_tx;
      fb.keep_rows = seen_cfg.resolved_keep_rows();
      fb.codeword_len = codeword_len_for_bits(nb, qbits);
      fb.quant_bits = qbits;
      fb.validate();
      const model_params p = store_.get_model(seen_cfg, mcfg, fb, tcfg);
      const auto seen = store_.get_dataset(seen_cfg);
      const auto unseen = store_.get_dataset(unseen_cfg);
      const double seen_db =
          evaluate_split_nmse(p, *seen, sample_split::test, nullptr, eval_chunk).db;
      const double unseen_db =
          evaluate_split_nmse(p, *unseen, sample_split::test, nullptr, eval_chunk).db;
      rows[i].csv = name + "," + std::to_string(nb) + "," + fmt_db(seen_db) + "," +
                    fmt_db(unseen_db) + "," + std::to_string(p.param_count());
    });
    return finish(spec, "size_comparison.csv", "size-comparison v1",
                  "model,n_bit,seen_nmse_db,unseen_nmse_db,param_count", std::move(rows),
                  grid.size());
  }

  // Prompt branch on versus off for the large preset, across bit budgets and
  // both scenario scopes. Prompt evaluation always pools the training split
  // of whichever dataset is being scored.
  json prompt_ablation(const json& spec) {
    check_keys(spec, {"experiment", "out_csv", "n_bits", "quant_bits", "dataset",
                      "unseen_dataset", "train", "model"},
               "prompt-ablation");
    const dataset_config seen_cfg =
        dataset_from_json(spec.value("dataset", json::object()), multi_scenario_base(1));
    dataset_config unseen_base = multi_scenario_base(2);
    unseen_base.scenarios = 8;
    const dataset_config unseen_cfg =
        dataset_from_json(spec.value("unseen_dataset", json::object()), unseen_base);
    const train_config tcfg = train_from_json(spec.value("train", json::object()));
    const std::vector<int> n_bits = spec.value("n_bits", std::vector<int>{64, 128});
    const int qbits = spec.value("quant_bits", 4);
    const std::string preset = spec.value("model", std::string("large"));

    std::vector<grid_row> rows(n_bits.size() * 2);  // (n_bit) x (seen, unseen)
    run_grid(jobs_, rows, [&](std::size_t i) {
      const int nb = n_bits[i / 2];
      const bool unseen_scope = (i % 2) == 1;
      char key[32];
      std::snprintf(key, sizeof(key), "%08d|%d", nb, unseen_scope ? 1 : 0);
      rows[i].sort_key = key;

      feedback_config fb;
      fb.n_tx = seen_cfg.n_tx;
      fb.keep_rows = seen_cfg.resolved_keep_rows();
      fb.codeword_len = codeword_len_for_bits(nb, qbits);
      fb.quant_bits = qbits;
      fb.validate();
      model_config with = model_preset(preset);
      with.with_prompt = true;
      model_config without = model_preset(preset);
      without.with_prompt = false;

      const model_params pw = store_.get_model(seen_cfg, with, fb, tcfg);
      const model_params po = store_.get_model(seen_cfg, without, fb, tcfg);
      const auto ds = store_.get_dataset(unseen_scope ? unseen_cfg : seen_cfg);
      const auto prompts = reference_prompts(*ds);
      const double with_db =
          evaluate_split_nmse(pw, *ds, sample_split::test, &prompts, eval_chunk).db;
      const double without_db =
          evaluate_split_nmse(po, *ds, sample_split::test, nullptr, eval_chunk).db;
      rows[i].csv = std::to_string(nb) + "," + fmt_db(with_db) + "," + fmt_db(without_db) +
                    "," + (unseen_scope ? "unseen" : "seen");
    });
    const std::size_t total = rows.size();
    return finish(spec, "prompt_ablation.csv", "prompt-ablation v1",
                  "n_bit,nmse_prompt_db,nmse_noprompt_db,scope", std::move(rows), total);
  }

  // Prompt sample-budget sweep on a fixed trained model: how many pooled
  // samples a prompt needs before it matches the all-samples reference. The
  // bounds are the no-prompt twin (lower) and the reference prompt (upper).
  json prompt_samples(const json& spec) {
    check_keys(spec, {"experiment", "out_csv", "m", "n_bit", "quant_bits", "dataset",
                      "train", "model", "prompt_seed"},
               "prompt-samples");
    const dataset_config dcfg =
        dataset_from_json(spec.value("dataset", json::object()), multi_scenario_base(1));
    const train_config tcfg = train_from_json(spec.value("train", json::object()));
    const int nb = spec.value("n_bit", 64);
    const int qbits = spec.value("quant_bits", 4);
    const std::string preset = spec.value("model", std::string("large"));
    const std::uint64_t prompt_seed = spec.value("prompt_seed", std::uint64_t{1});
    std::vector<long> ms = spec.value("m", std::vector<long>{1, 2, 4, 8, 16, 32});

    feedback_config fb;
    fb.n_tx = dcfg.n_tx;
    fb.keep_rows = dcfg.resolved_keep_rows();
    fb.codeword_len = codeword_len_for_bits(nb, qbits);
    fb.quant_bits = qbits;
    fb.validate();
    model_config with = model_preset(preset);
    with.with_prompt = true;
    model_config without = model_preset(preset);
    without.with_prompt = false;

    const model_params pw = store_.get_model(dcfg, with, fb, tcfg);
    const model_params po = store_.get_model(dcfg, without, fb, tcfg);
    const auto ds = store_.get_dataset(dcfg);

    std::vector<grid_row> rows(ms.size() + 2);
    run_grid(jobs_, rows, [&](std::size_t i) {
      if (i < ms.size()) {
        const long m = ms[i];
        char key[32];
        std::snprintf(key, sizeof(key), "0|%012ld", m);
        rows[i].sort_key = key;
        std::map<std::uint32_t, csi_prompt> prompts;
        for (int k = 0; k < ds->cfg.scenarios; ++k)
          prompts.emplace(static_cast<std::uint32_t>(k),
                          prompt_from_dataset(*ds, k, m, prompt_seed));
        const double db =
            evaluate_split_nmse(pw, *ds, sample_split::test, &prompts, eval_chunk).db;
        rows[i].csv = std::to_string(m) + "," + fmt_db(db);
      } else if (i == ms.size()) {
        // Upper bound: the reference prompt pooled from every training sample.
        rows[i].sort_key = "1|upper";
        const auto prompts = reference_prompts(*ds);
        const double db =
            evaluate_split_nmse(pw, *ds, sample_split::test, &prompts, eval_chunk).db;
        rows[i].csv = "all," + fmt_db(db);
      } else {
        // Lower bound: the prompt-free twin of the same preset and budget.
        rows[i].sort_key = "2|lower";
        const double db =
            evaluate_split_nmse(po, *ds, sample_split::test, nullptr, eval_chunk).db;
        rows[i].csv = "noprompt," + fmt_db(db);
      }
    });
    const std::size_t total = rows.size();
    return finish(spec, "prompt_samples.csv", "prompt-samples v1", "m,nmse_db",
                  std::move(rows), total);
  }

  static dataset_config multi_scenario_base(std::uint64_t seed) {
    dataset_config c;
    c.regime = regime_kind::general;
    c.scenarios = 40;
    c.per_scenario = 200;
    c.clusters = 4;
    c.subpaths = 5;
    c.n_tx = 32;
    c.n_sub = 64;
    c.seed = seed;
    return c;
  }

  json finish(const json& spec, const std::string& default_csv, const std::string& schema,
              const std::string& header, std::vector<grid_row> rows, std::size_t total) {
    json errors = json::array();
    std::vector<grid_row> ok;
    for (auto& r : rows) {
      if (!r.error.empty()) {
        json e;
        e["row"] = r.sort_key;
        e["error"] = r.error;
        errors.push_back(std::move(e));
      } else {
        ok.push_back(std::move(r));
      }
    }
    const std::filesystem::path csv_path = out_ / spec.value("out_csv", default_csv);
    write_csv(csv_path, schema, header, std::move(ok));
    json r;
    r["csv"] = csv_manifest_entry(csv_path);
    r["rows"] = total - errors.size();
    r["errors"] = std::move(errors);
    return r;
  }

  std::filesystem::path out_;
  int jobs_;
  artifact_store store_;
};

inline json run_experiment_file(const std::string& spec_path, const std::string& out_dir,
                                int jobs) {
  std::ifstream f(spec_path);
  if (!f) throw std::runtime_error("cannot open experiment spec " + spec_path);
  json spec = json::parse(f);
  runner r(out_dir, jobs);
  return r.run_file(spec);
}

}  // namespace csifb::exp
