#pragma once

#include <cstddef>
#include <vector>

#include "tailr/autodiff.hpp"
#include "tailr/distributions.hpp"
#include "tailr/sequence.hpp"

namespace tailr {

// gamma-mixture coefficient and weight floor of the TaiLr objective.
// Effective per-position weight: max(weight_floor, p / (gamma + (1-gamma) p)).
struct TailrConfig {
  double gamma = 0.1;
  double weight_floor = 0.0;  // b_m in [0,1)

  void validate() const;
};

// Per-position diagnostic surface of a loss evaluation. Rows of the
// log-prob matrix may be the timesteps of one sequence or the batch items
// of one timestep; the losses are row-local either way.
struct LossBreakdown {
  NodeRef total;  // scalar node: mean over unmasked positions
  NodeRef sum;    // scalar node: sum over unmasked positions
  double position_count = 0.0;
  std::vector<double> per_position_loss;    // 0 at masked positions
  std::vector<double> per_position_weight;  // 1 for MLE; 0 at masked positions
};

// targets: one token id per row of log_probs [N,V]; mask empty = all ones.
LossBreakdown nll_loss(const NodeRef& log_probs,
                       const std::vector<std::size_t>& targets,
                       const std::vector<double>& mask = {});

// TaiLr (weighted NLL with the weight detached from the gradient).
LossBreakdown tailr_loss(const NodeRef& log_probs,
                         const std::vector<std::size_t>& targets,
                         const TailrConfig& cfg,
                         const std::vector<double>& mask = {});

// GOLD-delta with uniform behavior policy: weight = max(bound, p), detached.
LossBreakdown gold_loss(const NodeRef& log_probs,
                        const std::vector<std::size_t>& targets,
                        double weight_lower_bound,
                        const std::vector<double>& mask = {});

// NLL plus alpha * sum over negative candidates of -log(1 - p(c)).
// candidates[r] lists the penalized token ids for row r (for a single
// sequence: the distinct tokens occurring earlier in the target prefix).
LossBreakdown unlikelihood_loss(
    const NodeRef& log_probs, const std::vector<std::size_t>& targets,
    double alpha, const std::vector<std::vector<std::size_t>>& candidates,
    const std::vector<double>& mask = {});

// convenience overloads taking a whole target sequence ([T,V] log-probs)
LossBreakdown nll_loss(const NodeRef& log_probs, const TokenSequence& targets);
LossBreakdown tailr_loss(const NodeRef& log_probs, const TokenSequence& targets,
                         const TailrConfig& cfg);
LossBreakdown gold_loss(const NodeRef& log_probs, const TokenSequence& targets,
                        double weight_lower_bound);
LossBreakdown unlikelihood_loss(const NodeRef& log_probs,
                                const TokenSequence& targets, double alpha);

// distinct earlier tokens per position (token-level repetition candidates)
std::vector<std::vector<std::size_t>> repetition_candidates(
    const std::vector<std::size_t>& targets);

// proxy TVD estimate evaluated exactly over the vocabulary:
// 1 - sum_y phat(y) min(1, p(y)/phat(y)) with phat the gamma-mixture proxy.
double proxy_tvd_estimate(const CategoricalDist& model_dist, std::size_t w,
                          double gamma);

// Streaming (1-c)-quantile state for loss truncation. Bounded memory:
// quantile recomputed over a fixed-size window of recent sequence NLLs.
struct TruncationState {
  double fraction = 0.0;  // c in [0,1)
  std::size_t hotstart_steps = 0;

  std::size_t steps_seen = 0;
  double quantile_estimate = 0.0;
  std::size_t window_capacity = 512;
  std::vector<double> window;  // ring buffer
  std::size_t window_next = 0;
};

// updates the state with the observed sequence NLL; true = keep the sample
bool loss_truncation_step(double sequence_nll, TruncationState& state);

}  // namespace tailr
