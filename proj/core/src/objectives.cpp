#include "tailr/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tailr {

void TailrConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("TailrConfig: gamma outside [0,1]");
  if (!(weight_floor >= 0.0 && weight_floor < 1.0))
    throw std::invalid_argument("TailrConfig: weight_floor outside [0,1)");
}

namespace {

struct Rows {
  std::size_t n = 0;
  std::size_t vocab = 0;
  std::vector<double> mask;
  double count = 0.0;
};

Rows check_rows(const NodeRef& log_probs,
                const std::vector<std::size_t>& targets,
                const std::vector<double>& mask) {
  Rows r;
  const Tensor& lp = log_probs->value;
  if (lp.shape.size() != 2)
    throw std::invalid_argument("loss: log_probs must be [N,V]");
  r.n = lp.shape[0];
  r.vocab = lp.shape[1];
  if (targets.size() != r.n)
    throw std::invalid_argument("loss: one target per row required");
  for (auto t : targets)
    if (t >= r.vocab)
      throw std::out_of_range("loss: target id " + std::to_string(t) +
                              " out of range for V=" + std::to_string(r.vocab));
  r.mask = mask.empty() ? std::vector<double>(r.n, 1.0) : mask;
  if (r.mask.size() != r.n)
    throw std::invalid_argument("loss: mask length mismatch");
  for (double m : r.mask) r.count += m;
  if (r.count <= 0.0)
    throw std::invalid_argument("loss: no unmasked positions");
  return r;
}

// -mean_masked(weights * picked) with the weight node already detached
LossBreakdown weighted_nll(const NodeRef& log_probs,
                           const std::vector<std::size_t>& targets,
                           const Rows& rows, const NodeRef& weights) {
  auto picked = take_per_row(log_probs, targets);
  auto mask_node = make_constant(Tensor::vector(rows.mask));
  auto masked = mul(mul(weights, picked), mask_node);

  LossBreakdown out;
  out.sum = neg(sum(masked));
  out.total = mul_const(out.sum, 1.0 / rows.count);
  out.position_count = rows.count;
  out.per_position_loss.resize(rows.n);
  out.per_position_weight.resize(rows.n);
  for (std::size_t i = 0; i < rows.n; ++i) {
    const double w = rows.mask[i] > 0.0 ? weights->value.v[i] : 0.0;
    out.per_position_weight[i] = w;
    out.per_position_loss[i] = -w * picked->value.v[i] * rows.mask[i];
  }
  return out;
}

}  // namespace

LossBreakdown nll_loss(const NodeRef& log_probs,
                       const std::vector<std::size_t>& targets,
                       const std::vector<double>& mask) {
  const Rows rows = check_rows(log_probs, targets, mask);
  auto ones = make_constant(Tensor::full({rows.n}, 1.0));
  return weighted_nll(log_probs, targets, rows, ones);
}

LossBreakdown tailr_loss(const NodeRef& log_probs,
                         const std::vector<std::size_t>& targets,
                         const TailrConfig& cfg,
                         const std::vector<double>& mask) {
  cfg.validate();
  const Rows rows = check_rows(log_probs, targets, mask);
  auto picked = take_per_row(log_probs, targets);
  auto p = exp(picked);
  // w = max(b_m, p / (gamma + (1-gamma) p)), treated as a constant
  auto denom = add_const(mul_const(p, 1.0 - cfg.gamma), cfg.gamma);
  auto w = stop_gradient(max_with_const(div(p, denom), cfg.weight_floor));
  return weighted_nll(log_probs, targets, rows, w);
}

LossBreakdown gold_loss(const NodeRef& log_probs,
                        const std::vector<std::size_t>& targets,
                        double weight_lower_bound,
                        const std::vector<double>& mask) {
  if (!(weight_lower_bound > 0.0 && weight_lower_bound <= 1.0))
    throw std::invalid_argument("gold_loss: bound outside (0,1]");
  const Rows rows = check_rows(log_probs, targets, mask);
  auto p = exp(take_per_row(log_probs, targets));
  auto w = stop_gradient(max_with_const(p, weight_lower_bound));
  return weighted_nll(log_probs, targets, rows, w);
}

std::vector<std::vector<std::size_t>> repetition_candidates(
    const std::vector<std::size_t>& targets) {
  std::vector<std::vector<std::size_t>> cands(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    std::vector<std::size_t> seen(targets.begin(), targets.begin() + t);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    cands[t] = std::move(seen);
  }
  return cands;
}

LossBreakdown unlikelihood_loss(
    const NodeRef& log_probs, const std::vector<std::size_t>& targets,
    double alpha, const std::vector<std::vector<std::size_t>>& candidates,
    const std::vector<double>& mask) {
  if (alpha < 0.0)
    throw std::invalid_argument("unlikelihood_loss: alpha must be >= 0");
  const Rows rows = check_rows(log_probs, targets, mask);
  if (candidates.size() != rows.n)
    throw std::invalid_argument("unlikelihood_loss: candidates per row");

  auto ones = make_constant(Tensor::full({rows.n}, 1.0));
  LossBreakdown out = weighted_nll(log_probs, targets, rows, ones);

  std::vector<std::size_t> flat;
  std::vector<std::size_t> flat_row;
  for (std::size_t r = 0; r < rows.n; ++r) {
    if (rows.mask[r] <= 0.0) continue;
    for (auto c : candidates[r]) {
      if (c >= rows.vocab)
        throw std::out_of_range("unlikelihood_loss: candidate out of range");
      flat.push_back(r * rows.vocab + c);
      flat_row.push_back(r);
    }
  }
  if (alpha > 0.0 && !flat.empty()) {
    auto p_neg = exp(take_flat(log_probs, flat));
    // clamp 1-p away from 0 so log stays finite when p saturates
    auto one_minus = max_with_const(add_const(neg(p_neg), 1.0), 1e-12);
    auto penalty = neg(sum(log(one_minus)));  // scalar
    out.sum = add(out.sum, mul_const(penalty, alpha));
    out.total = mul_const(out.sum, 1.0 / rows.count);
    for (std::size_t i = 0; i < flat.size(); ++i)
      out.per_position_loss[flat_row[i]] +=
          -alpha * std::log(std::max(1.0 - p_neg->value.v[i], 1e-12));
  }
  return out;
}

LossBreakdown nll_loss(const NodeRef& log_probs, const TokenSequence& targets) {
  return nll_loss(log_probs, targets.tokens);
}
LossBreakdown tailr_loss(const NodeRef& log_probs, const TokenSequence& targets,
                         const TailrConfig& cfg) {
  return tailr_loss(log_probs, targets.tokens, cfg);
}
LossBreakdown gold_loss(const NodeRef& log_probs, const TokenSequence& targets,
                        double weight_lower_bound) {
  return gold_loss(log_probs, targets.tokens, weight_lower_bound);
}
LossBreakdown unlikelihood_loss(const NodeRef& log_probs,
                                const TokenSequence& targets, double alpha) {
  return unlikelihood_loss(log_probs, targets.tokens, alpha,
                           repetition_candidates(targets.tokens));
}

double proxy_tvd_estimate(const CategoricalDist& model_dist, std::size_t w,
                          double gamma) {
  const CategoricalDist proxy = mixture_proxy_dist(gamma, w, model_dist);
  double s = 0.0;
  for (std::size_t y = 0; y < proxy.size(); ++y) {
    if (proxy[y] == 0.0) continue;
    s += proxy[y] * std::min(1.0, model_dist[y] / proxy[y]);
  }
  return 1.0 - s;
}

bool loss_truncation_step(double sequence_nll, TruncationState& state) {
  if (!(state.fraction >= 0.0 && state.fraction < 1.0))
    throw std::invalid_argument("loss_truncation_step: c outside [0,1)");
  if (state.window.size() < state.window_capacity) {
    state.window.push_back(sequence_nll);
  } else {
    state.window[state.window_next] = sequence_nll;
    state.window_next = (state.window_next + 1) % state.window_capacity;
  }
  // (1-c)-quantile of the window
  std::vector<double> sorted = state.window;
  const std::size_t idx = static_cast<std::size_t>(
      std::floor((1.0 - state.fraction) * double(sorted.size() - 1)));
  std::nth_element(sorted.begin(), sorted.begin() + idx, sorted.end());
  state.quantile_estimate = sorted[idx];

  const bool keep = state.steps_seen < state.hotstart_steps ||
                    state.fraction == 0.0 ||
                    sequence_nll <= state.quantile_estimate;
  ++state.steps_seen;
  return keep;
}

}  // namespace tailr
