#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tailr/distributions.hpp"
#include "tailr/rng.hpp"
#include "tailr/tensor.hpp"

namespace tailr {

// Autoregressive distribution over V^T given by explicit conditional
// tables: level t holds one CategoricalDist per length-t prefix
// (prefixes indexed as base-V numbers).
class FactorizedSeqDist {
 public:
  FactorizedSeqDist(std::size_t vocab, std::size_t horizon,
                    std::vector<std::vector<CategoricalDist>> tables);

  static FactorizedSeqDist random(std::size_t vocab, std::size_t horizon,
                                  Rng& rng);

  std::size_t vocab() const { return vocab_; }
  std::size_t horizon() const { return horizon_; }
  const CategoricalDist& conditional(std::size_t t,
                                     std::size_t prefix_index) const {
    return tables_[t][prefix_index];
  }
  // joint probability of the length-T sequence encoded as base-V digits
  double joint_prob(std::size_t code) const;

 private:
  std::size_t vocab_;
  std::size_t horizon_;
  std::vector<std::vector<CategoricalDist>> tables_;
};

struct BoundReport {
  std::string name;
  std::size_t trials = 0;
  double tolerance = 0.0;
  double max_violation = 0.0;  // positive means a violated bound
  std::string note;

  bool pass() const { return max_violation <= tolerance; }
};

// exact TVD between the joint distributions by full enumeration
double joint_tvd(const FactorizedSeqDist& p, const FactorizedSeqDist& q);

// joint TVD(p,q) <= E_{y~p}[sum_t TVD(p^{<t}, q^{<t})], exact expectation
BoundReport verify_sequence_tvd_bound(const FactorizedSeqDist& p,
                         const FactorizedSeqDist& q);

// |prod a_t - prod b_t| <= sum_t |a_t - b_t| (prod_{i<t} a_i)(prod_{j>t} b_j)
BoundReport verify_product_difference_lemma(const std::vector<double>& a,
                                  const std::vector<double>& b);

// TVD(p,q) <= sum_w p_w TVD(e^{(w)}, q), and RHS = 1 - sum_w p_w q_w
BoundReport verify_onehot_tvd_bound(const CategoricalDist& p, const CategoricalDist& q);

// Error <= Bias + Variance with the gamma-mixture closed forms
// cross-checked against direct expectations over w
BoundReport verify_error_decomposition(const CategoricalDist& p_o,
                                       const CategoricalDist& q, double gamma);

// gradient branch checks for a 1-step softmax model: the TVD surrogate's
// AD gradient equals -grad(p)/p_o below the oracle probability and 0 above;
// the NLL gradient norm exceeds it by the factor p_o/p_theta
BoundReport verify_gradient_cases(const Tensor& logits,
                                  const CategoricalDist& p_o, std::size_t w);

// exact E_{w~p}[TVD(e^{(w)}, p)] for cross-checks
double direct_onehot_variance(const CategoricalDist& p);

// draws a distribution by normalizing uniform weights clamped at 1e-12
CategoricalDist random_dist(std::size_t vocab, Rng& rng);

// the full seeded verifier suite; fault injection is a test-only negative
// control that perturbs one reported violation
std::vector<BoundReport> run_all_checks(std::size_t trials,
                                        std::uint64_t seed,
                                        bool inject_fault = false);

}  // namespace tailr
