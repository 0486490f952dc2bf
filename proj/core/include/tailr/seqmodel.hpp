#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tailr/autodiff.hpp"
#include "tailr/distributions.hpp"
#include "tailr/objectives.hpp"
#include "tailr/rng.hpp"
#include "tailr/sequence.hpp"

namespace tailr {

struct ModelConfig {
  std::size_t vocab = 50;     // output classes: EOS + regular tokens
  std::size_t embedding = 64;
  std::size_t hidden = 128;

  bool operator==(const ModelConfig&) const = default;
};

// 1-layer gated recurrent (GRU) language model with exact per-step
// conditionals. Parameters are autodiff leaves; evaluation paths
// (sampling, log-probs, perplexity) run a value-only forward.
class SequenceModel {
 public:
  // init_scale 0 gives all-zero weights (uniform conditionals)
  SequenceModel(ModelConfig cfg, std::uint64_t seed, double init_scale = 0.1);

  const ModelConfig& config() const { return cfg_; }
  std::vector<NodeRef>& params() { return params_; }
  const std::vector<NodeRef>& params() const { return params_; }
  std::size_t param_count() const;

  // exact p(. | prefix) after consuming BOS + the prefix tokens
  CategoricalDist step_dist(const std::vector<std::size_t>& prefix) const;

  // sum_t log p(y_t | y_<t), EOS term included
  double sequence_logprob(const TokenSequence& seq) const;

  struct SampleResult {
    TokenSequence seq;  // EOS-terminated even when truncated
    bool terminated = false;
  };
  SampleResult sample(std::size_t max_len, Rng& rng) const;

  double perplexity(const Dataset& data) const;

  // incremental decoding state for repeated conditional queries
  class Decoder {
   public:
    explicit Decoder(const SequenceModel& m);
    void feed(std::size_t token_id);
    CategoricalDist dist() const;
    std::vector<double> log_probs() const;

   private:
    const SequenceModel* model_;
    std::vector<double> h_;
  };

  void save(const std::string& path) const;
  static SequenceModel load(const std::string& path);

  // graph-building forward for one step of a batch: consumes input ids,
  // updates the hidden node, returns [B,V] log-probs
  NodeRef graph_step(NodeRef& hidden, const std::vector<std::size_t>& input_ids) const;
  NodeRef initial_hidden(std::size_t batch) const;

 private:
  void raw_step(std::size_t input_id, std::vector<double>& h) const;
  std::vector<double> raw_log_probs(const std::vector<double>& h) const;

  ModelConfig cfg_;
  std::vector<NodeRef> params_;
  // named views into params_
  NodeRef emb_, wxz_, whz_, bz_, wxr_, whr_, br_, wxh_, whh_, bh_, wout_, bout_;

  friend class Decoder;
};

struct TrainRun {
  std::string objective = "mle";  // mle|tailr|unlikelihood|loss_truncation|gold
  TailrConfig tailr;
  double unlikelihood_alpha = 1.0;
  double truncation_fraction = 0.1;
  std::size_t truncation_hotstart = 100;  // steps
  double gold_bound = 0.2;

  std::string optimizer = "adam";  // adam|sgd
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip = 1.0;  // global gradient norm; <= 0 disables

  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_ppl = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_ppl = 0.0;
};

// Step-level trainer so tests can compare trajectories step by step.
class Trainer {
 public:
  Trainer(SequenceModel& model, TrainRun run);

  // one optimizer step on a batch; returns the batch loss (mean per token)
  double step(const Dataset& batch);

  const TrainRun& run() const { return run_; }
  TruncationState& truncation_state() { return trunc_; }

 private:
  SequenceModel& model_;
  TrainRun run_;
  TruncationState trunc_;
  std::vector<Tensor> adam_m_, adam_v_;
  std::size_t step_count_ = 0;
};

// full protocol: shuffled minibatches, per-epoch dev perplexity,
// best checkpoint (lowest dev ppl) restored at the end
TrainResult train(SequenceModel& model, const Dataset& train_data,
                  const Dataset& dev_data, const TrainRun& run);

}  // namespace tailr
