#pragma once

#include <cstddef>
#include <vector>

namespace tailr {

struct GaussianMixture {
  double w1 = 0.8, mu1 = -2.0, sigma1 = 0.7;
  double w2 = 0.2, mu2 = 3.0, sigma2 = 0.7;

  void validate() const;
  double density(double x) const;
  double mean() const { return w1 * mu1 + w2 * mu2; }
  double variance() const;
};

struct GridSpec {
  std::size_t points = 4001;
  double span_sigmas = 8.0;  // grid spans [min mu - s*sigma_max, max mu + s*sigma_max]
};

struct DescentSpec {
  std::size_t max_iters = 4000;
  double lr = 0.05;
  double grad_tol = 1e-9;
};

enum class FitObjective { kld, tvd };

struct ToyFitResult {
  double mu = 0.0;
  double sigma = 1.0;
  double divergence = 0.0;
  bool converged = false;

  // closed interval between the mixture modes where the mixture density
  // is below 10% of its global max
  double void_lo = 0.0;
  double void_hi = 0.0;
  bool has_void = false;
  double fit_void_mass = 0.0;
  double mixture_void_mass = 0.0;
};

struct Grid {
  std::vector<double> x;
  double dx = 0.0;
};

Grid make_grid(const GaussianMixture& mix, const GridSpec& spec);

double gaussian_density(double x, double mu, double sigma);

// quadrature divergences between the mixture and a single Gaussian
double grid_kld(const GaussianMixture& mix, double mu, double sigma,
                const Grid& grid);
double grid_tvd(const GaussianMixture& mix, double mu, double sigma,
                const Grid& grid);

// fits a single Gaussian to the mixture by gradient descent on (mu, log sigma);
// multi-start (moment-matched init plus each component) for the TVD objective
ToyFitResult toy_gaussian_fit(const GaussianMixture& mix,
                              FitObjective objective,
                              const GridSpec& grid_spec = {},
                              const DescentSpec& descent = {});

}  // namespace tailr
