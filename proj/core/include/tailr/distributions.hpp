#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tailr {

// Exact probability vector over a finite vocabulary. Validated on
// construction (sum within 1e-10 of 1) and renormalized to machine
// precision, since softmax outputs carry rounding noise.
class CategoricalDist {
 public:
  explicit CategoricalDist(std::vector<double> probs);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

  static CategoricalDist uniform(std::size_t v);
  static CategoricalDist one_hot(std::size_t w, std::size_t v);

 private:
  std::vector<double> probs_;
};

// half the L1 distance
double tvd_abs(const CategoricalDist& p, const CategoricalDist& q);
// 1 - sum of pointwise minima; identical to tvd_abs up to rounding
double tvd_min(const CategoricalDist& p, const CategoricalDist& q);

// sum p_i log(p_i/q_i) with 0 log 0 = 0. Throws kld_support_error when
// q_i = 0 at some i with p_i > 0 (the zero-avoiding asymmetry surfaced
// as an error rather than +inf).
double kld(const CategoricalDist& p, const CategoricalDist& q);

struct kld_support_error : std::invalid_argument {
  std::size_t index;
  explicit kld_support_error(std::size_t i)
      : std::invalid_argument("kld: q has zero mass at index " +
                              std::to_string(i) + " where p is positive"),
        index(i) {}
};

// (1/(alpha(alpha-1)))(1 - sum p_i^alpha); Shannon entropy at alpha = 1
double tsallis_entropy(const CategoricalDist& p, double alpha);

// exact E_{w~p}[TVD(e^{(w)}, p)] = 1 - sum p_w^2 = 2 * H_2(p)
double onehot_variance(const CategoricalDist& p);

// exact expectation sum_w p_w e^{(w)}; the identity map on p
CategoricalDist expected_onehot(const CategoricalDist& p);

// gamma * e^{(w)} + (1-gamma) * base
CategoricalDist mixture_proxy_dist(double gamma, std::size_t w,
                                   const CategoricalDist& base);

}  // namespace tailr
