// tailr experiment runner: deterministic CLI over the core library.
// Every subcommand writes CSV/JSON artifacts plus a run manifest whose
// content hashes make reruns verifiable.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tailr/bound_lab.hpp"
#include "tailr/gaussian_toy.hpp"
#include "tailr/io.hpp"
#include "tailr/metrics.hpp"
#include "tailr/rng.hpp"
#include "tailr/seqmodel.hpp"
#include "tailr/synth.hpp"

#include "svg_plot.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out = "runs/out";
  bool plots = true;

  // oracle
  std::string oracle_mode = "fixed";  // fixed | trained
  std::string corpus;
  tailr::ModelConfig oracle_arch{50, 64, 128};
  std::uint64_t oracle_seed = 7;
  double oracle_init_scale = 0.5;

  // data
  std::size_t n_train = 5000, n_dev = 500, n_test = 500, max_len = 20;

  // learner + training
  tailr::ModelConfig learner_arch{50, 32, 64};
  std::vector<std::string> objectives = {"mle", "tailr"};
  std::string optimizer = "adam";
  double lr = 1e-3;
  double clip = 1.0;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  tailr::TailrConfig tailr_cfg{1e-7, 0.2};
  double unlikelihood_alpha = 1.0;
  double trunc_fraction = 0.1;
  std::size_t trunc_hotstart = 100;
  double gold_bound = 0.2;

  // verify
  std::size_t trials = 1000;

  // toy gaussian
  tailr::GaussianMixture mixture;
  tailr::GridSpec grid;
  tailr::DescentSpec descent;

  // perturbation study
  std::size_t n_perturb = 30;
  std::size_t n_origins = 200;
  std::size_t buckets = 20;
  std::vector<std::string> kinds = {"repeat", "delete", "substitute"};

  // exposure bias
  std::vector<std::size_t> context_lens = {15};
  std::size_t exacc_samples = 64;
  bool importance_sampling = false;
  std::size_t is_inner_samples = 8;
  double zero_eps = 1e-9;

  // gamma sweep
  std::vector<double> gammas = {1e-8, 1e-7, 1e-6, 1e-5, 1e-4,
                                1e-3, 1e-2, 0.1, 1.0};

  // evaluation
  std::size_t eval_samples = 500;
  std::size_t bleu_order = 4;
  std::size_t selfbleu_cap = 100;
};

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["plots"] = c.plots;
  j["oracle"] = {{"mode", c.oracle_mode},
                 {"corpus", c.corpus},
                 {"vocab", c.oracle_arch.vocab},
                 {"embedding", c.oracle_arch.embedding},
                 {"hidden", c.oracle_arch.hidden},
                 {"seed", c.oracle_seed},
                 {"init_scale", c.oracle_init_scale}};
  j["data"] = {{"n_train", c.n_train},
               {"n_dev", c.n_dev},
               {"n_test", c.n_test},
               {"max_len", c.max_len}};
  j["learner"] = {{"embedding", c.learner_arch.embedding},
                  {"hidden", c.learner_arch.hidden},
                  {"optimizer", c.optimizer},
                  {"lr", c.lr},
                  {"clip", c.clip},
                  {"epochs", c.epochs},
                  {"batch_size", c.batch_size}};
  j["objectives"] = c.objectives;
  j["tailr"] = {{"gamma", c.tailr_cfg.gamma},
                {"weight_floor", c.tailr_cfg.weight_floor}};
  j["unlikelihood"] = {{"alpha", c.unlikelihood_alpha}};
  j["loss_truncation"] = {{"fraction", c.trunc_fraction},
                          {"hotstart", c.trunc_hotstart}};
  j["gold"] = {{"bound", c.gold_bound}};
  j["verify"] = {{"trials", c.trials}};
  j["toy"] = {{"w1", c.mixture.w1}, {"mu1", c.mixture.mu1},
              {"sigma1", c.mixture.sigma1}, {"w2", c.mixture.w2},
              {"mu2", c.mixture.mu2}, {"sigma2", c.mixture.sigma2},
              {"grid_points", c.grid.points},
              {"span_sigmas", c.grid.span_sigmas},
              {"max_iters", c.descent.max_iters},
              {"lr", c.descent.lr}};
  j["perturb"] = {{"n_perturb", c.n_perturb},
                  {"n_origins", c.n_origins},
                  {"buckets", c.buckets},
                  {"kinds", c.kinds}};
  j["exacc"] = {{"context_lens", c.context_lens},
                {"samples", c.exacc_samples},
                {"importance_sampling", c.importance_sampling},
                {"is_inner_samples", c.is_inner_samples},
                {"zero_eps", c.zero_eps}};
  j["sweep"] = {{"gammas", c.gammas}};
  j["eval"] = {{"samples", c.eval_samples},
               {"bleu_n", c.bleu_order},
               {"selfbleu_reference_cap", c.selfbleu_cap}};
  return j;
}

template <typename T>
T field(const ordered_json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("bad value for config key '") + key + "'");
  }
}

RunConfig config_from_json(const ordered_json& j) {
  RunConfig c;
  c.seed = field(j, "seed", c.seed);
  c.out = field(j, "out", c.out);
  c.plots = field(j, "plots", c.plots);
  if (j.contains("oracle")) {
    const auto& o = j.at("oracle");
    c.oracle_mode = field(o, "mode", c.oracle_mode);
    c.corpus = field(o, "corpus", c.corpus);
    c.oracle_arch.vocab = field(o, "vocab", c.oracle_arch.vocab);
    c.oracle_arch.embedding = field(o, "embedding", c.oracle_arch.embedding);
    c.oracle_arch.hidden = field(o, "hidden", c.oracle_arch.hidden);
    c.oracle_seed = field(o, "seed", c.oracle_seed);
    c.oracle_init_scale = field(o, "init_scale", c.oracle_init_scale);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    c.n_train = field(d, "n_train", c.n_train);
    c.n_dev = field(d, "n_dev", c.n_dev);
    c.n_test = field(d, "n_test", c.n_test);
    c.max_len = field(d, "max_len", c.max_len);
  }
  if (j.contains("learner")) {
    const auto& l = j.at("learner");
    c.learner_arch.embedding = field(l, "embedding", c.learner_arch.embedding);
    c.learner_arch.hidden = field(l, "hidden", c.learner_arch.hidden);
    c.optimizer = field(l, "optimizer", c.optimizer);
    c.lr = field(l, "lr", c.lr);
    c.clip = field(l, "clip", c.clip);
    c.epochs = field(l, "epochs", c.epochs);
    c.batch_size = field(l, "batch_size", c.batch_size);
  }
  c.learner_arch.vocab = c.oracle_arch.vocab;
  c.objectives = field(j, "objectives", c.objectives);
  if (j.contains("tailr")) {
    c.tailr_cfg.gamma = field(j.at("tailr"), "gamma", c.tailr_cfg.gamma);
    c.tailr_cfg.weight_floor =
        field(j.at("tailr"), "weight_floor", c.tailr_cfg.weight_floor);
  }
  if (j.contains("unlikelihood")) {
    c.unlikelihood_alpha =
        field(j.at("unlikelihood"), "alpha", c.unlikelihood_alpha);
  }
  if (j.contains("loss_truncation")) {
    c.trunc_fraction = field(j.at("loss_truncation"), "fraction", c.trunc_fraction);
    c.trunc_hotstart = field(j.at("loss_truncation"), "hotstart", c.trunc_hotstart);
  }
  if (j.contains("gold")) c.gold_bound = field(j.at("gold"), "bound", c.gold_bound);
  if (j.contains("verify")) c.trials = field(j.at("verify"), "trials", c.trials);
  if (j.contains("toy")) {
    const auto& t = j.at("toy");
    c.mixture.w1 = field(t, "w1", c.mixture.w1);
    c.mixture.mu1 = field(t, "mu1", c.mixture.mu1);
    c.mixture.sigma1 = field(t, "sigma1", c.mixture.sigma1);
    c.mixture.w2 = field(t, "w2", c.mixture.w2);
    c.mixture.mu2 = field(t, "mu2", c.mixture.mu2);
    c.mixture.sigma2 = field(t, "sigma2", c.mixture.sigma2);
    c.grid.points = field(t, "grid_points", c.grid.points);
    c.grid.span_sigmas = field(t, "span_sigmas", c.grid.span_sigmas);
    c.descent.max_iters = field(t, "max_iters", c.descent.max_iters);
    c.descent.lr = field(t, "lr", c.descent.lr);
  }
  if (j.contains("perturb")) {
    const auto& p = j.at("perturb");
    c.n_perturb = field(p, "n_perturb", c.n_perturb);
    c.n_origins = field(p, "n_origins", c.n_origins);
    c.buckets = field(p, "buckets", c.buckets);
    c.kinds = field(p, "kinds", c.kinds);
  }
  if (j.contains("exacc")) {
    const auto& e = j.at("exacc");
    c.context_lens = field(e, "context_lens", c.context_lens);
    c.exacc_samples = field(e, "samples", c.exacc_samples);
    c.importance_sampling =
        field(e, "importance_sampling", c.importance_sampling);
    c.is_inner_samples = field(e, "is_inner_samples", c.is_inner_samples);
    c.zero_eps = field(e, "zero_eps", c.zero_eps);
  }
  if (j.contains("sweep")) c.gammas = field(j.at("sweep"), "gammas", c.gammas);
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval_samples = field(e, "samples", c.eval_samples);
    c.bleu_order = field(e, "bleu_n", c.bleu_order);
    c.selfbleu_cap = field(e, "selfbleu_reference_cap", c.selfbleu_cap);
  }
  return c;
}

void validate_config(const RunConfig& c) {
  if (c.oracle_mode != "fixed" && c.oracle_mode != "trained") {
    throw ConfigError("oracle.mode must be 'fixed' or 'trained'");
  }
  if (c.oracle_arch.vocab < 3) throw ConfigError("oracle.vocab must be >= 3");
  if (c.n_train < 1 || c.n_dev < 1 || c.n_test < 1) {
    throw ConfigError("data split sizes must be >= 1");
  }
  if (c.max_len < 1) throw ConfigError("data.max_len must be >= 1");
  for (const auto& o : c.objectives) {
    if (o != "mle" && o != "tailr" && o != "unlikelihood" &&
        o != "loss_truncation" && o != "gold" && o != "oracle") {
      throw ConfigError("unknown objective '" + o + "'");
    }
  }
  if (c.objectives.empty()) throw ConfigError("objectives list is empty");
  for (const auto& k : c.kinds) {
    if (k != "repeat" && k != "delete" && k != "substitute") {
      throw ConfigError("unknown perturbation kind '" + k + "'");
    }
  }
  try {
    c.tailr_cfg.validate();
    c.mixture.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.gammas.empty()) throw ConfigError("sweep.gammas is empty");
  for (std::size_t l : c.context_lens) {
    if (l < 1) throw ConfigError("exacc.context_lens entries must be >= 1");
  }
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// manifest bookkeeping shared by all subcommands
struct Run {
  RunConfig cfg;
  std::string started = timestamp_utc();
  std::vector<std::string> produced;

  std::string path(const std::string& name) const {
    return (fs::path(cfg.out) / name).string();
  }
  std::string emit(const std::string& name) {
    produced.push_back(path(name));
    return produced.back();
  }
  void finish() const {
    tailr::write_run_manifest(path("run_manifest.json"),
                              config_to_json(cfg).dump(2), kToolVersion,
                              started, timestamp_utc(), produced);
  }
};

tailr::SequenceModel make_oracle(const RunConfig& c) {
  tailr::OracleSpec spec;
  spec.mode = c.oracle_mode == "fixed" ? tailr::OracleMode::fixed_seeded_random
                                       : tailr::OracleMode::trained_on_corpus;
  spec.corpus_path = c.corpus;
  spec.arch = c.oracle_arch;
  spec.seed = c.oracle_seed;
  spec.init_scale = c.oracle_init_scale;
  return tailr::build_oracle(spec);
}

tailr::TrainRun make_train_run(const RunConfig& c, const std::string& objective) {
  tailr::TrainRun run;
  run.objective = objective;
  run.tailr = c.tailr_cfg;
  run.unlikelihood_alpha = c.unlikelihood_alpha;
  run.truncation_fraction = c.trunc_fraction;
  run.truncation_hotstart = c.trunc_hotstart;
  run.gold_bound = c.gold_bound;
  run.optimizer = c.optimizer;
  run.lr = c.lr;
  run.clip = c.clip;
  run.epochs = c.epochs;
  run.batch_size = c.batch_size;
  // a per-objective sub-seed so results don't depend on list order
  run.seed = tailr::Rng::derive(
      c.seed, tailr::fnv1a64(objective.data(), objective.size()));
  return run;
}

tailr::SynthData make_data(const RunConfig& c, const tailr::SequenceModel& oracle) {
  return tailr::synthesize(oracle, c.n_train, c.n_dev, c.n_test, c.max_len,
                           tailr::Rng::derive(c.seed, 11));
}

// trains (or reloads) the learner for one objective; "oracle" reuses the
// oracle itself as the learner, handy as a zero-error control
tailr::SequenceModel get_learner(Run& run, const std::string& objective,
                                 const tailr::SequenceModel& oracle,
                                 const tailr::SynthData& data,
                                 bool allow_reload) {
  if (objective == "oracle") return oracle;
  const std::string ckpt = run.path("model_" + objective + ".bin");
  if (allow_reload && fs::exists(ckpt)) {
    auto m = tailr::SequenceModel::load(ckpt);
    if (m.config().vocab != oracle.config().vocab) {
      throw std::runtime_error("checkpoint vocab mismatch: " + ckpt);
    }
    return m;
  }
  const tailr::TrainRun tr = make_train_run(run.cfg, objective);
  tailr::SequenceModel model(run.cfg.learner_arch, tailr::Rng::derive(tr.seed, 7));
  const tailr::TrainResult res = tailr::train(model, data.train, data.dev, tr);

  tailr::CsvWriter log({"epoch", "train_loss", "dev_ppl"});
  for (const auto& e : res.log) {
    log.row({std::to_string(e.epoch), tailr::format_double(e.train_loss),
             tailr::format_double(e.dev_ppl)});
  }
  log.save(run.emit("train_log_" + objective + ".csv"));
  model.save(ckpt);
  run.produced.push_back(ckpt);
  return model;
}

tailr::Dataset sample_corpus(const tailr::SequenceModel& model, std::size_t n,
                             std::size_t max_len, std::uint64_t seed) {
  tailr::Rng rng(seed);
  tailr::Dataset out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t attempt = 0;; ++attempt) {
      auto draw = model.sample(max_len, rng);
      if (draw.terminated) {
        out.push_back(std::move(draw.seq));
        break;
      }
      if (attempt > 10000) {
        throw std::runtime_error("learner failed to produce EOS within max_len");
      }
    }
  }
  return out;
}

std::vector<tailr::PerturbKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<tailr::PerturbKind> kinds;
  for (const auto& k : names) {
    if (k == "repeat") kinds.push_back(tailr::PerturbKind::repeat);
    else if (k == "delete") kinds.push_back(tailr::PerturbKind::del);
    else kinds.push_back(tailr::PerturbKind::substitute);
  }
  return kinds;
}

// ---- subcommands ----

int cmd_init(const RunConfig& cfg, const std::string& config_path,
             const std::string& out_dir) {
  std::string path = config_path;
  if (path.empty()) {
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      path = (fs::path(out_dir) / "tailr_config.json").string();
    } else {
      path = "tailr_config.json";
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << config_to_json(cfg).dump(2) << '\n';
  std::cout << "wrote " << path << '\n';
  return 0;
}

int cmd_verify(Run& run, bool inject_fault) {
  fs::create_directories(run.cfg.out);
  const auto reports =
      tailr::run_all_checks(run.cfg.trials, run.cfg.seed, inject_fault);
  tailr::CsvWriter csv({"check_name", "trials", "tolerance", "max_violation",
                        "pass"});
  bool all_pass = true;
  for (const auto& r : reports) {
    csv.row({r.name, std::to_string(r.trials), tailr::format_double(r.tolerance),
             tailr::format_double(r.max_violation), r.pass() ? "1" : "0"});
    if (!r.pass()) {
      all_pass = false;
      std::cerr << "FAIL " << r.name << ": max_violation=" << r.max_violation
                << " tolerance=" << r.tolerance << '\n';
    }
  }
  csv.save(run.emit("bounds.csv"));
  run.finish();
  std::cout << (all_pass ? "verify: all checks passed\n"
                         : "verify: FAILURES detected\n");
  return all_pass ? 0 : 1;
}

int cmd_toy_gaussian(Run& run) {
  fs::create_directories(run.cfg.out);
  const auto& mix = run.cfg.mixture;
  const auto kld_fit = tailr::toy_gaussian_fit(mix, tailr::FitObjective::kld,
                                               run.cfg.grid, run.cfg.descent);
  const auto tvd_fit = tailr::toy_gaussian_fit(mix, tailr::FitObjective::tvd,
                                               run.cfg.grid, run.cfg.descent);

  tailr::CsvWriter fitcsv({"objective", "mu", "sigma", "divergence",
                           "converged", "void_lo", "void_hi", "fit_void_mass",
                           "mixture_void_mass"});
  for (const auto& [name, f] :
       {std::pair{std::string("kld"), kld_fit}, {std::string("tvd"), tvd_fit}}) {
    fitcsv.row({name, tailr::format_double(f.mu), tailr::format_double(f.sigma),
                tailr::format_double(f.divergence), f.converged ? "1" : "0",
                tailr::format_double(f.void_lo), tailr::format_double(f.void_hi),
                tailr::format_double(f.fit_void_mass),
                tailr::format_double(f.mixture_void_mass)});
    if (!f.converged) {
      std::cerr << "warning: " << name << " fit hit the iteration budget\n";
    }
  }
  fitcsv.save(run.emit("toy_fit.csv"));

  const tailr::Grid grid = tailr::make_grid(mix, run.cfg.grid);
  tailr::CsvWriter curves({"x", "mixture", "kld_fit", "tvd_fit"});
  for (double x : grid.x) {
    curves.row({tailr::format_double(x), tailr::format_double(mix.density(x)),
                tailr::format_double(
                    tailr::gaussian_density(x, kld_fit.mu, kld_fit.sigma)),
                tailr::format_double(
                    tailr::gaussian_density(x, tvd_fit.mu, tvd_fit.sigma))});
  }
  curves.save(run.emit("toy_curves.csv"));

  if (run.cfg.plots) {
    tailr::plot::Series sm{"mixture", "#333333", grid.x, {}};
    tailr::plot::Series sk{"kld fit", "#d62728", grid.x, {}};
    tailr::plot::Series st{"tvd fit", "#1f77b4", grid.x, {}};
    for (double x : grid.x) {
      sm.y.push_back(mix.density(x));
      sk.y.push_back(tailr::gaussian_density(x, kld_fit.mu, kld_fit.sigma));
      st.y.push_back(tailr::gaussian_density(x, tvd_fit.mu, tvd_fit.sigma));
    }
    tailr::plot::write_line_plot(run.emit("toy_fit.svg"),
                                 "Single-Gaussian fits to the mixture", "x",
                                 "density", {sm, sk, st});
  }
  run.finish();
  return 0;
}

int cmd_synth(Run& run) {
  fs::create_directories(run.cfg.out);
  const auto oracle = make_oracle(run.cfg);
  const std::string oracle_ckpt = run.path("oracle.bin");
  oracle.save(oracle_ckpt);
  run.produced.push_back(oracle_ckpt);

  const auto data = make_data(run.cfg, oracle);
  const auto paths = tailr::save_synth(data, tailr::fnv1a64_file(oracle_ckpt),
                                       run.cfg.out);
  for (const auto& p : {paths.train, paths.dev, paths.test, paths.manifest}) {
    run.produced.push_back(p);
  }

  const tailr::Corpus test_refs = tailr::to_corpus(data.test);
  tailr::CsvWriter results({"model", "ppl_oracle", "ppl_test", "bleu4",
                            "selfbleu4"});
  for (const auto& objective : run.cfg.objectives) {
    auto learner = get_learner(run, objective, oracle, data, false);
    const auto samples = sample_corpus(
        learner, run.cfg.eval_samples, run.cfg.max_len,
        tailr::Rng::derive(run.cfg.seed,
                           tailr::fnv1a64(objective.data(), objective.size()) ^
                               0x5151));
    tailr::save_dataset(samples, run.emit("samples_" + objective + ".txt"));
    const tailr::Corpus gen = tailr::to_corpus(samples);
    results.row(
        {objective, tailr::format_double(oracle.perplexity(samples)),
         tailr::format_double(learner.perplexity(data.test)),
         tailr::format_double(tailr::bleu_n(gen, test_refs, run.cfg.bleu_order)),
         tailr::format_double(
             tailr::self_bleu_n(gen, run.cfg.bleu_order, run.cfg.selfbleu_cap,
                                tailr::Rng::derive(run.cfg.seed, 77)))});
  }
  results.save(run.emit("results.csv"));
  run.finish();
  return 0;
}

int cmd_perturb(Run& run) {
  fs::create_directories(run.cfg.out);
  const auto oracle = make_oracle(run.cfg);
  const auto data = make_data(run.cfg, oracle);
  const auto kinds = parse_kinds(run.cfg.kinds);

  tailr::Dataset origins(data.test.begin(),
                         data.test.begin() +
                             static_cast<std::ptrdiff_t>(std::min(
                                 run.cfg.n_origins, data.test.size())));

  for (const auto& objective : run.cfg.objectives) {
    auto learner = get_learner(run, objective, oracle, data, true);
    const auto traces = tailr::build_traces(
        origins, learner, oracle, run.cfg.n_perturb, kinds,
        tailr::Rng::derive(run.cfg.seed, 21));
    tailr::save_traces(traces, run.emit("traces_" + objective + ".csv"));

    const auto cells = tailr::error_map(traces, run.cfg.buckets);
    tailr::CsvWriter mapcsv({"bucket_lo", "bucket_hi", "step", "mean_error",
                             "count"});
    for (const auto& c : cells) {
      mapcsv.row({tailr::format_double(c.bucket_lo),
                  tailr::format_double(c.bucket_hi), std::to_string(c.step),
                  tailr::format_double(c.mean_error), std::to_string(c.count)});
    }
    mapcsv.save(run.emit("error_map_" + objective + ".csv"));

    const auto rows = tailr::max_overestimation_by_length(traces);
    tailr::CsvWriter lencsv({"length", "mean_max_error", "count"});
    for (const auto& r : rows) {
      lencsv.row({std::to_string(r.length), tailr::format_double(r.mean_max_error),
                  std::to_string(r.count)});
    }
    lencsv.save(run.emit("max_overestimation_" + objective + ".csv"));

    if (run.cfg.plots) {
      std::vector<tailr::plot::HeatCell> hc;
      for (const auto& c : cells) {
        hc.push_back({c.bucket_lo, c.bucket_hi, static_cast<double>(c.step) - 0.5,
                      static_cast<double>(c.step) + 0.5, c.mean_error});
      }
      if (!hc.empty()) {
        tailr::plot::write_heatmap(run.emit("error_map_" + objective + ".svg"),
                                   "Estimation error map (" + objective + ")",
                                   "log p_o", "perturbation step", hc);
      }
      tailr::plot::Series s{"mean max error", "#d62728", {}, {}};
      for (const auto& r : rows) {
        s.x.push_back(static_cast<double>(r.length));
        s.y.push_back(r.mean_max_error);
      }
      if (!s.x.empty()) {
        tailr::plot::write_line_plot(
            run.emit("max_overestimation_" + objective + ".svg"),
            "Max overestimation vs length (" + objective + ")", "origin length",
            "mean max error", {s});
      }
    }
  }
  run.finish();
  return 0;
}

int cmd_exacc(Run& run) {
  fs::create_directories(run.cfg.out);
  const auto oracle = make_oracle(run.cfg);
  const auto data = make_data(run.cfg, oracle);

  tailr::CsvWriter csv({"objective", "context_len", "exacc_percent", "mode"});
  for (const auto& objective : run.cfg.objectives) {
    auto learner = get_learner(run, objective, oracle, data, true);
    for (std::size_t l : run.cfg.context_lens) {
      tailr::ExAccConfig ec;
      ec.context_len = l;
      ec.samples = run.cfg.exacc_samples;
      ec.importance_sampling = run.cfg.importance_sampling;
      ec.is_inner_samples = run.cfg.is_inner_samples;
      ec.zero_eps = run.cfg.zero_eps;
      ec.seed = tailr::Rng::derive(run.cfg.seed, 31 + l);
      csv.row({objective, std::to_string(l),
               tailr::format_double(tailr::exacc_err(learner, oracle, ec)),
               ec.importance_sampling ? "importance_sampling" : "exact"});
    }
  }
  csv.save(run.emit("exacc.csv"));
  run.finish();
  return 0;
}

int cmd_sweep_gamma(Run& run) {
  fs::create_directories(run.cfg.out);
  const auto oracle = make_oracle(run.cfg);
  const std::string oracle_ckpt = run.path("oracle.bin");
  oracle.save(oracle_ckpt);
  run.produced.push_back(oracle_ckpt);
  const auto data = make_data(run.cfg, oracle);
  const tailr::Corpus test_refs = tailr::to_corpus(data.test);

  tailr::CsvWriter csv({"gamma", "ppl_oracle", "ppl_test", "bleu4",
                        "selfbleu4"});
  std::vector<double> xs, ppl_o;
  for (double gamma : run.cfg.gammas) {
    RunConfig sub = run.cfg;
    sub.tailr_cfg.gamma = gamma;
    tailr::TrainRun tr = make_train_run(sub, "tailr");
    tailr::SequenceModel model(sub.learner_arch, tailr::Rng::derive(tr.seed, 7));
    tailr::train(model, data.train, data.dev, tr);
    const auto samples = sample_corpus(
        model, sub.eval_samples, sub.max_len, tailr::Rng::derive(sub.seed, 0x5151));
    const tailr::Corpus gen = tailr::to_corpus(samples);
    csv.row({tailr::format_double(gamma),
             tailr::format_double(oracle.perplexity(samples)),
             tailr::format_double(model.perplexity(data.test)),
             tailr::format_double(tailr::bleu_n(gen, test_refs, sub.bleu_order)),
             tailr::format_double(tailr::self_bleu_n(
                 gen, sub.bleu_order, sub.selfbleu_cap,
                 tailr::Rng::derive(sub.seed, 77)))});
    xs.push_back(std::log10(gamma));
    ppl_o.push_back(oracle.perplexity(samples));
  }
  csv.save(run.emit("gamma_sweep.csv"));
  if (run.cfg.plots && xs.size() > 1) {
    tailr::plot::write_line_plot(run.emit("gamma_sweep.svg"),
                                 "Oracle PPL vs gamma", "log10 gamma",
                                 "ppl_oracle",
                                 {{"ppl_oracle", "#1f77b4", xs, ppl_o}});
  }
  run.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tailr: TVD-guided objective laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_override, objectives_csv;
  std::uint64_t seed_override = 0;
  bool seed_set = false, no_plots = false, inject_fault = false;
  long long trials_override = -1;

  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed_override, "override config seed")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--out", out_override, "output directory");
  app.add_option("--objectives", objectives_csv,
                 "comma-separated objective list");
  app.add_option("--trials", trials_override, "verifier trials");
  app.add_flag("--no-plots", no_plots, "skip SVG rendering");
  app.add_flag("--inject-fault", inject_fault,
               "negative control: force a verifier failure")
      ->group("");  // hidden; test-only

  auto* init = app.add_subcommand("init", "write a default config file");
  auto* verify = app.add_subcommand("verify", "run the bound/gradient verifier");
  auto* toy = app.add_subcommand("toy-gaussian", "mixture-fit divergence demo");
  auto* synth = app.add_subcommand("synth", "oracle + datasets + learners + metrics");
  auto* perturb = app.add_subcommand("perturb", "perturbation error analysis");
  auto* exacc = app.add_subcommand("exacc", "exposure-bias excess error");
  auto* sweep = app.add_subcommand("sweep-gamma", "metric-vs-gamma table");
  for (auto* sub : {init, verify, toy, synth, perturb, exacc, sweep}) {
    sub->fallthrough();  // accept the global flags after the subcommand too
  }

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty() && !init->parsed()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("config not found: " + config_path);
      ordered_json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
      }
      cfg = config_from_json(j);
    }
    if (seed_set) cfg.seed = seed_override;
    if (!out_override.empty()) cfg.out = out_override;
    if (no_plots) cfg.plots = false;
    if (trials_override >= 0) cfg.trials = static_cast<std::size_t>(trials_override);
    if (!objectives_csv.empty()) {
      cfg.objectives.clear();
      std::string item;
      std::istringstream ss(objectives_csv);
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) cfg.objectives.push_back(item);
      }
    }
    validate_config(cfg);

    Run run{cfg};
    if (init->parsed()) return cmd_init(cfg, config_path, out_override);
    if (verify->parsed()) return cmd_verify(run, inject_fault);
    if (toy->parsed()) return cmd_toy_gaussian(run);
    if (synth->parsed()) return cmd_synth(run);
    if (perturb->parsed()) return cmd_perturb(run);
    if (exacc->parsed()) return cmd_exacc(run);
    if (sweep->parsed()) return cmd_sweep_gamma(run);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
