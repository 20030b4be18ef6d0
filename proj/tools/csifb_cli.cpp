// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset synthesis, codec training, prompt
// collection, checkpoint evaluation, and batched experiment runs.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csifb/checkpoint.hpp"
#include "csifb/dataset.hpp"
#include "csifb/experiments.hpp"
#include "csifb/prompt.hpp"
#include "csifb/trainer.hpp"

namespace {

using namespace csifb;

constexpr std::uint64_t stream_cli_init = 0x11;

struct gen_args {
  int scenarios = 1;
  int per_scenario = 100;
  std::string regime = "general";
  int clusters = 4;
  int subpaths = 5;
  int nt = 32;
  int nf = 1;
  int keep_rows = 0;
  double spread_deg = -1.0;
  double delay_spread_s = -1.0;
  double bandwidth_hz = 10e6;
  std::uint64_t seed = 1;
  std::string out;
};

int run_gen(const gen_args& a) {
  dataset_config cfg;
  cfg.regime = exp::regime_from_string(a.regime);
  cfg.scenarios = a.scenarios;
  cfg.per_scenario = a.per_scenario;
  cfg.clusters = a.clusters;
  cfg.subpaths = a.subpaths;
  cfg.n_tx = a.nt;
  cfg.n_sub = a.nf;
  cfg.keep_rows = a.keep_rows;
  cfg.angle_spread_deg = a.spread_deg;
  cfg.delay_spread_s = a.delay_spread_s;
  cfg.bandwidth_hz = a.bandwidth_hz;
  cfg.seed = a.seed;
  const dataset ds = build_dataset(cfg);
  save_dataset(ds, a.out);
  std::printf("wrote %s: %zu samples (%d scenarios x %d), sample %d x %d, splits %zu/%zu/%zu\n",
              a.out.c_str(), ds.sample_count(), cfg.scenarios, cfg.per_scenario, ds.rows,
              ds.cols, ds.indices_of(sample_split::train).size(),
              ds.indices_of(sample_split::val).size(),
              ds.indices_of(sample_split::test).size());
  return 0;
}

struct train_args {
  std::string data;
  std::string model = "transformer";
  int blocks = -1;
  int nbits = 0;
  int qbits = 4;
  int nc = 0;
  std::string prompt = "off";
  std::uint64_t seed = 1;
  int epochs = 0;
  int batch = 256;
  int micro_batch = 32;
  double lr = 1e-3;
  double val_fraction = 0.1;
  std::string out;
};

int run_train(const train_args& a) {
  const dataset ds = load_dataset(a.data);

  feedback_config fb;
  fb.n_tx = ds.cfg.n_tx;
  fb.keep_rows = ds.cfg.keep_rows;
  fb.quant_bits = a.qbits;
  if (a.nbits > 0) {
    if (a.qbits < 1)
      throw std::invalid_argument("--nbits needs --qbits >= 1; use --nc when the "
                                  "quantizer is disabled");
    fb.codeword_len = codeword_len_for_bits(a.nbits, a.qbits);
  } else if (a.nc > 0) {
    fb.codeword_len = a.nc;
  } else {
    throw std::invalid_argument("give a codeword size: --nbits with --qbits, or --nc");
  }
  fb.validate();

  model_config mcfg;
  const bool want_prompt = a.prompt == "on";
  if (a.model == "resfc") {
    if (want_prompt)
      throw std::invalid_argument("--prompt on needs --model transformer");
    mcfg = model_config::resfc(a.blocks < 0 ? 2 : a.blocks);
  } else if (a.model == "transformer") {
    const int n = a.blocks < 0 ? 6 : a.blocks;
    mcfg = model_config::attention_large(want_prompt);
    mcfg.enc_blocks = n;
    mcfg.dec_blocks = std::max(1, n);
  } else {
    throw std::invalid_argument("--model must be resfc or transformer");
  }

  train_config tcfg;
  tcfg.batch_size = a.batch;
  tcfg.micro_batch = a.micro_batch;
  tcfg.epochs = a.epochs;
  tcfg.learning_rate = a.lr;
  tcfg.val_fraction = a.val_fraction;
  tcfg.seed = a.seed;

  model_params params = build_model(mcfg, fb, derive_seed(a.seed, stream_cli_init, 0));
  std::printf("training %s: %zu parameters, codeword %d x %d bits (N_bit %d)\n",
              a.model.c_str(), params.param_count(), fb.codeword_len, fb.quant_bits,
              fb.quant_bits > 0 ? feedback_bits(fb) : 0);
  const train_history hist = train(params, ds, tcfg);
  save_model(params, a.out);
  write_history_csv(hist, a.out + ".history.csv");
  std::printf("best epoch %d: val NMSE %.3f dB; checkpoint %s, history %s\n",
              hist.best_epoch, hist.best_val_nmse_db, a.out.c_str(),
              (a.out + ".history.csv").c_str());
  return 0;
}

struct prompt_args {
  std::string data;
  int scenario = 0;
  long samples = -1;
  std::uint64_t seed = 1;
  std::string out;
};

int run_prompt(const prompt_args& a) {
  const dataset ds = load_dataset(a.data);
  const csi_prompt p = prompt_from_dataset(ds, a.scenario, a.samples, a.seed);
  save_prompt(p, a.out);
  const double ratio = collection_cost_ratio(static_cast<long>(p.pooled_samples));
  std::printf("wrote %s: scenario %u, %llu pooled samples, %d x %d magnitudes\n",
              a.out.c_str(), p.scenario,
              static_cast<unsigned long long>(p.pooled_samples), p.rows, p.cols);
  std::printf("uplink cost vs raw upload of the pool: 1/(2*%llu) = %.6g\n",
              static_cast<unsigned long long>(p.pooled_samples), ratio);
  return 0;
}

struct eval_args {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  long prompt_samples = -1;
  std::uint64_t prompt_seed = 1;
};

int run_eval(const eval_args& a) {
  const model_params params = load_model(a.ckpt);
  const dataset ds = load_dataset(a.data);

  std::vector<std::size_t> idx;
  if (a.split == "all") {
    idx.resize(ds.sample_count());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  } else {
    sample_split s;
    if (a.split == "train")
      s = sample_split::train;
    else if (a.split == "val")
      s = sample_split::val;
    else if (a.split == "test")
      s = sample_split::test;
    else
      throw std::invalid_argument("--split must be train/val/test/all");
    idx = ds.indices_of(s);
  }

  std::map<std::uint32_t, csi_prompt> prompts;
  const std::map<std::uint32_t, csi_prompt>* pp = nullptr;
  if (params.cfg.family == model_family::attention && params.cfg.with_prompt) {
    for (int k = 0; k < ds.cfg.scenarios; ++k)
      prompts.emplace(static_cast<std::uint32_t>(k),
                      prompt_from_dataset(ds, k, a.prompt_samples, a.prompt_seed));
    pp = &prompts;
  }
  const nmse_result r = evaluate_nmse(params, ds, idx, pp, exp::eval_chunk);
  std::printf("%s split: %zu samples, NMSE %.6f dB (linear %.6g)\n", a.split.c_str(),
              idx.size(), r.db, r.linear);
  return 0;
}

struct exp_args {
  std::string spec;
  int jobs = 1;
  std::string out = ".";
};

int run_exp(const exp_args& a) {
  const auto manifest = exp::run_experiment_file(a.spec, a.out, a.jobs);
  for (const auto& e : manifest.at("experiments")) {
    std::printf("%s: %s rows -> %s (%.1f s)\n",
                e.at("experiment").get<std::string>().c_str(),
                e.at("rows").dump().c_str(),
                e.at("csv").at("file").get<std::string>().c_str(),
                e.at("seconds").get<double>());
    for (const auto& err : e.at("errors"))
      std::fprintf(stderr, "  row %s failed: %s\n", err.at("row").get<std::string>().c_str(),
                   err.at("error").get<std::string>().c_str());
  }
  std::printf("manifest: %s/manifest.json\n", a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CSI feedback experimentation toolkit"};
  app.require_subcommand(1);

  gen_args g;
  auto* gen = app.add_subcommand("gen", "synthesize a clustered-channel CSI dataset");
  gen->add_option("--scenarios", g.scenarios, "number of scenarios")->required();
  gen->add_option("--per-scenario", g.per_scenario, "samples per scenario")->required();
  gen->add_option("--regime", g.regime, "general or specific")
      ->check(CLI::IsMember({"general", "specific"}));
  gen->add_option("--clusters", g.clusters, "clusters per scenario");
  gen->add_option("--subpaths", g.subpaths, "sub-paths per cluster");
  gen->add_option("--nt", g.nt, "transmit antennas");
  gen->add_option("--nf", g.nf, "subcarriers (1 = narrowband)");
  gen->add_option("--keep-rows", g.keep_rows, "retained delay rows (0 = auto)");
  gen->add_option("--spread-deg", g.spread_deg, "angle jitter half-width override, degrees");
  gen->add_option("--delay-spread", g.delay_spread_s, "delay jitter half-width override, s");
  gen->add_option("--bandwidth", g.bandwidth_hz, "system bandwidth, Hz");
  gen->add_option("--seed", g.seed, "master seed");
  gen->add_option("--out", g.out, "output .csid path")->required();

  train_args t;
  auto* tr = app.add_subcommand("train", "train a feedback codec on a dataset");
  tr->add_option("--data", t.data, "input .csid dataset")->required();
  tr->add_option("--model", t.model, "resfc or transformer")
      ->check(CLI::IsMember({"resfc", "transformer"}));
  tr->add_option("--blocks", t.blocks,
                 "residual blocks, or attention blocks per side (0 = compact encoder)");
  tr->add_option("--nbits", t.nbits, "feedback budget in bits (with --qbits)");
  tr->add_option("--qbits", t.qbits, "quantizer bits per codeword value (0 disables)");
  tr->add_option("--nc", t.nc, "codeword length (direct alternative to --nbits)");
  tr->add_option("--prompt", t.prompt, "decoder prompt branch: on or off")
      ->check(CLI::IsMember({"on", "off"}));
  tr->add_option("--seed", t.seed, "training seed");
  tr->add_option("--epochs", t.epochs, "epochs (0 = family default)");
  tr->add_option("--batch", t.batch, "logical batch size");
  tr->add_option("--micro-batch", t.micro_batch, "gradient accumulation chunk");
  tr->add_option("--lr", t.lr, "Adam learning rate");
  tr->add_option("--val-fraction", t.val_fraction, "validation carve-out when unsplit");
  tr->add_option("--out", t.out, "output checkpoint path")->required();

  prompt_args p;
  auto* pr = app.add_subcommand("prompt", "pool a scenario prompt from training samples");
  pr->add_option("--data", p.data, "input .csid dataset")->required();
  pr->add_option("--scenario", p.scenario, "scenario id")->required();
  pr->add_option("--samples", p.samples, "sample budget m (-1 = all)");
  pr->add_option("--seed", p.seed, "selection seed");
  pr->add_option("--out", p.out, "output prompt file")->required();

  eval_args e;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  ev->add_option("--ckpt", e.ckpt, "model checkpoint")->required();
  ev->add_option("--data", e.data, "input .csid dataset")->required();
  ev->add_option("--split", e.split, "train, val, test, or all");
  ev->add_option("--prompt-samples", e.prompt_samples, "prompt pool budget (-1 = all)");
  ev->add_option("--prompt-seed", e.prompt_seed, "prompt selection seed");

  exp_args x;
  auto* ex = app.add_subcommand("exp", "experiment pipelines");
  auto* exr = ex->add_subcommand("run", "run experiments from a JSON spec");
  exr->add_option("--spec", x.spec, "experiment spec (JSON)")->required();
  exr->add_option("--jobs", x.jobs, "parallel grid workers");
  exr->add_option("--out", x.out, "output directory")->required();
  ex->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return run_gen(g);
    if (*tr) return run_train(t);
    if (*pr) return run_prompt(p);
    if (*ev) return run_eval(e);
    if (*exr) return run_exp(x);
  } catch (const std::exception& ex2) {
    std::fprintf(stderr, "error: %s\n", ex2.what());
    return 1;
  }
  return 1;
}
