#include "tailr/distributions.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tailr {

CategoricalDist::CategoricalDist(std::vector<double> probs)
    : probs_(std::move(probs)) {
  if (probs_.empty())
    throw std::invalid_argument("CategoricalDist: vocabulary must be >= 1");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || p > 1.0 + 1e-10)
      throw std::invalid_argument("CategoricalDist: entry outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-10)
    throw std::invalid_argument("CategoricalDist: entries sum to " +
                                std::to_string(sum) + ", not 1");
  for (double& p : probs_) p /= sum;
}

CategoricalDist CategoricalDist::uniform(std::size_t v) {
  return CategoricalDist(std::vector<double>(v, 1.0 / double(v)));
}

CategoricalDist CategoricalDist::one_hot(std::size_t w, std::size_t v) {
  if (w >= v) throw std::invalid_argument("one_hot: index out of range");
  std::vector<double> p(v, 0.0);
  p[w] = 1.0;
  return CategoricalDist(std::move(p));
}

namespace {
void check_sizes(const char* op, const CategoricalDist& p,
                 const CategoricalDist& q) {
  if (p.size() != q.size())
    throw std::invalid_argument(std::string(op) + ": size mismatch " +
                                std::to_string(p.size()) + " vs " +
                                std::to_string(q.size()));
}
}  // namespace

double tvd_abs(const CategoricalDist& p, const CategoricalDist& q) {
  check_sizes("tvd_abs", p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double tvd_min(const CategoricalDist& p, const CategoricalDist& q) {
  check_sizes("tvd_min", p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::min(p[i], q[i]);
  return 1.0 - s;
}

double kld(const CategoricalDist& p, const CategoricalDist& q) {
  check_sizes("kld", p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 log 0 := 0
    if (q[i] == 0.0) throw kld_support_error(i);
    s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

double tsallis_entropy(const CategoricalDist& p, double alpha) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("tsallis_entropy: alpha must be > 0");
  if (alpha == 1.0) {
    double h = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return h;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::pow(p[i], alpha);
  return (1.0 - s) / (alpha * (alpha - 1.0));
}

double onehot_variance(const CategoricalDist& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * p[i];
  return 1.0 - s;
}

CategoricalDist expected_onehot(const CategoricalDist& p) {
  std::vector<double> acc(p.size(), 0.0);
  for (std::size_t w = 0; w < p.size(); ++w) acc[w] += p[w] * 1.0;
  return CategoricalDist(std::move(acc));
}

CategoricalDist mixture_proxy_dist(double gamma, std::size_t w,
                                   const CategoricalDist& base) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("mixture_proxy_dist: gamma outside [0,1]");
  if (w >= base.size())
    throw std::invalid_argument("mixture_proxy_dist: target out of range");
  std::vector<double> p(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) p[i] = (1.0 - gamma) * base[i];
  p[w] += gamma;
  return CategoricalDist(std::move(p));
}

}  // namespace tailr
