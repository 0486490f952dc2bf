#include "tailr/gaussian_toy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tailr {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779399;
}

void GaussianMixture::validate() const {
  if (!(w1 > 0.0) || !(w2 > 0.0) || std::abs(w1 + w2 - 1.0) > 1e-12) {
    throw std::invalid_argument("mixture weights must be positive and sum to 1");
  }
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) {
    throw std::invalid_argument("mixture sigmas must be positive");
  }
}

double gaussian_density(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return kInvSqrt2Pi / sigma * std::exp(-0.5 * z * z);
}

double GaussianMixture::density(double x) const {
  return w1 * gaussian_density(x, mu1, sigma1) +
         w2 * gaussian_density(x, mu2, sigma2);
}

double GaussianMixture::variance() const {
  const double m = mean();
  return w1 * (sigma1 * sigma1 + (mu1 - m) * (mu1 - m)) +
         w2 * (sigma2 * sigma2 + (mu2 - m) * (mu2 - m));
}

Grid make_grid(const GaussianMixture& mix, const GridSpec& spec) {
  if (spec.points < 2) throw std::invalid_argument("grid needs >= 2 points");
  const double smax = std::max(mix.sigma1, mix.sigma2);
  const double lo = std::min(mix.mu1, mix.mu2) - spec.span_sigmas * smax;
  const double hi = std::max(mix.mu1, mix.mu2) + spec.span_sigmas * smax;
  Grid g;
  g.dx = (hi - lo) / static_cast<double>(spec.points - 1);
  g.x.resize(spec.points);
  for (std::size_t i = 0; i < spec.points; ++i) {
    g.x[i] = lo + g.dx * static_cast<double>(i);
  }
  return g;
}

double grid_kld(const GaussianMixture& mix, double mu, double sigma,
                const Grid& grid) {
  double acc = 0.0;
  for (double x : grid.x) {
    const double p = mix.density(x);
    if (p <= 0.0) continue;
    const double q = std::max(gaussian_density(x, mu, sigma), 1e-300);
    acc += p * (std::log(p) - std::log(q));
  }
  return acc * grid.dx;
}

double grid_tvd(const GaussianMixture& mix, double mu, double sigma,
                const Grid& grid) {
  double acc = 0.0;
  for (double x : grid.x) {
    acc += std::abs(mix.density(x) - gaussian_density(x, mu, sigma));
  }
  return 0.5 * acc * grid.dx;
}

namespace {

struct FitState {
  double mu, log_sigma, divergence;
  bool converged;
};

// analytic gradient of the quadrature objective w.r.t. (mu, log sigma)
void objective_grad(const GaussianMixture& mix, FitObjective obj,
                    const Grid& grid, double mu, double log_sigma,
                    double& gmu, double& gls, double& value) {
  const double sigma = std::exp(log_sigma);
  gmu = 0.0;
  gls = 0.0;
  if (obj == FitObjective::kld) {
    // d/dmu  sum p*(log p - log q) dx = -sum p * (x-mu)/sigma^2 dx
    // d/dlogs                        = -sum p * ((x-mu)^2/sigma^2 - 1) dx
    for (double x : grid.x) {
      const double p = mix.density(x);
      const double z = (x - mu) / sigma;
      gmu -= p * z / sigma;
      gls -= p * (z * z - 1.0);
    }
    gmu *= grid.dx;
    gls *= grid.dx;
    value = grid_kld(mix, mu, sigma, grid);
  } else {
    // subgradient of 0.5 * sum |p - q| dx
    for (double x : grid.x) {
      const double p = mix.density(x);
      const double q = gaussian_density(x, mu, sigma);
      const double s = (q > p) ? 1.0 : (q < p ? -1.0 : 0.0);
      const double z = (x - mu) / sigma;
      // dq/dmu = q*z/sigma ; dq/dlogs = q*(z^2 - 1)
      gmu += 0.5 * s * q * z / sigma;
      gls += 0.5 * s * q * (z * z - 1.0);
    }
    gmu *= grid.dx;
    gls *= grid.dx;
    value = grid_tvd(mix, mu, sigma, grid);
  }
}

FitState descend(const GaussianMixture& mix, FitObjective obj,
                 const Grid& grid, double mu0, double sigma0,
                 const DescentSpec& spec) {
  double mu = mu0;
  double ls = std::log(sigma0);
  // Adam on the two parameters; the TVD objective is only piecewise smooth,
  // so keep a best-seen snapshot instead of trusting the final iterate.
  double m_mu = 0, v_mu = 0, m_ls = 0, v_ls = 0;
  double best_val = 1e300, best_mu = mu, best_ls = ls;
  bool converged = false;
  for (std::size_t it = 1; it <= spec.max_iters; ++it) {
    double gmu, gls, val;
    objective_grad(mix, obj, grid, mu, ls, gmu, gls, val);
    if (val < best_val) {
      best_val = val;
      best_mu = mu;
      best_ls = ls;
    }
    const double gnorm = std::sqrt(gmu * gmu + gls * gls);
    if (gnorm < spec.grad_tol) {
      converged = true;
      break;
    }
    const double b1 = 0.9, b2 = 0.999, eps = 1e-12;
    m_mu = b1 * m_mu + (1 - b1) * gmu;
    v_mu = b2 * v_mu + (1 - b2) * gmu * gmu;
    m_ls = b1 * m_ls + (1 - b1) * gls;
    v_ls = b2 * v_ls + (1 - b2) * gls * gls;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(it));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(it));
    mu -= spec.lr * (m_mu / c1) / (std::sqrt(v_mu / c2) + eps);
    ls -= spec.lr * (m_ls / c1) / (std::sqrt(v_ls / c2) + eps);
  }
  // final evaluation in case a late iterate improved on the snapshot
  {
    double gmu, gls, val;
    objective_grad(mix, obj, grid, mu, ls, gmu, gls, val);
    if (val < best_val) {
      best_val = val;
      best_mu = mu;
      best_ls = ls;
    }
  }
  return {best_mu, best_ls, best_val, converged};
}

}  // namespace

ToyFitResult toy_gaussian_fit(const GaussianMixture& mix,
                              FitObjective objective,
                              const GridSpec& grid_spec,
                              const DescentSpec& descent) {
  mix.validate();
  const Grid grid = make_grid(mix, grid_spec);

  std::vector<std::pair<double, double>> starts;
  starts.emplace_back(mix.mean(), std::sqrt(mix.variance()));
  if (objective == FitObjective::tvd) {
    starts.emplace_back(mix.mu1, mix.sigma1);
    starts.emplace_back(mix.mu2, mix.sigma2);
  }

  FitState best{0, 0, 1e300, false};
  for (const auto& [mu0, s0] : starts) {
    const FitState st = descend(mix, objective, grid, mu0, s0, descent);
    if (st.divergence < best.divergence) best = st;
  }

  ToyFitResult res;
  res.mu = best.mu;
  res.sigma = std::exp(best.log_sigma);
  res.divergence = best.divergence;
  res.converged = best.converged;

  // void interval: grid points strictly between the component means where
  // the mixture density drops below 10% of its global maximum
  double dmax = 0.0;
  for (double x : grid.x) dmax = std::max(dmax, mix.density(x));
  const double lo_mode = std::min(mix.mu1, mix.mu2);
  const double hi_mode = std::max(mix.mu1, mix.mu2);
  double vlo = 0.0, vhi = 0.0;
  bool found = false;
  for (double x : grid.x) {
    if (x <= lo_mode || x >= hi_mode) continue;
    if (mix.density(x) < 0.1 * dmax) {
      if (!found) {
        vlo = x;
        found = true;
      }
      vhi = x;
    }
  }
  res.has_void = found;
  if (found) {
    res.void_lo = vlo;
    res.void_hi = vhi;
    double fm = 0.0, mm = 0.0;
    for (double x : grid.x) {
      if (x < vlo || x > vhi) continue;
      fm += gaussian_density(x, res.mu, res.sigma);
      mm += mix.density(x);
    }
    res.fit_void_mass = fm * grid.dx;
    res.mixture_void_mass = mm * grid.dx;
  }
  return res;
}

}  // namespace tailr
