#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "gsmooth/common.hpp"

namespace gsmooth {

enum class DistKind { gaussian, folded_gaussian, exponential };

DistKind dist_kind_from_name(const std::string& name);
std::string dist_kind_name(DistKind kind);

// Smoothing distribution g(theta) ∝ exp(-psi(theta)) over parameter space
// R^m (folded-gaussian: componentwise |N(0, sigma^2)| for nonnegative-only
// parameters; exponential: g ∝ exp(-|theta|_2 / sigma)).
struct SmoothingDistribution {
  DistKind kind = DistKind::gaussian;
  double sigma = 1.0;
  int dim = 1;
};

SmoothingDistribution make_distribution(DistKind kind, double sigma, int dim);

// `count` i.i.d. draws, one per row; reproducible for a fixed seed.
Eigen::MatrixXd sample(const SmoothingDistribution& dist, int count,
                       std::uint64_t seed);

enum class PhiMode { analytic, monte_carlo };

// The function Phi(p) = E[gamma_u 1{gamma_u > quantile_gamma(p)}] with
// gamma_u = <u, grad psi(delta)>; by isotropy u is fixed to e1. Gaussian
// kind admits the closed form pdf(ppf(p)) / sigma; every kind also
// supports a Monte-Carlo table built from sorted gamma draws.
class PhiFunction {
 public:
  PhiFunction(const SmoothingDistribution& dist, PhiMode mode,
              int mc_samples = 200000, std::uint64_t seed = 1234);

  // Analytic for the Gaussian kind, Monte-Carlo otherwise.
  static PhiFunction make_default(const SmoothingDistribution& dist);

  double operator()(double p) const;  // Phi(p), p in (0,1)
  double quantile(double p) const;    // phi_u^{-1}(p) (MC table only)

  const SmoothingDistribution& dist() const { return dist_; }
  PhiMode mode() const { return mode_; }

 private:
  SmoothingDistribution dist_;
  PhiMode mode_;
  std::vector<double> sorted_gamma_;  // ascending
  std::vector<double> suffix_sum_;    // suffix_sum_[i] = sum of gamma[i..]
};

// The bare certified-radius integral of 1/Phi over [pB, pA]: closed form
// sigma * (ppf(pA) - ppf(pB)) for the analytic Gaussian, adaptive Simpson
// otherwise. Requires 0 < pB <= pA < 1.
double radius_integral(double p_a, double p_b, const PhiFunction& phi);

// Exact one-sided binomial lower bound packaged with its inputs.
struct ConfidenceBound {
  long long successes = 0;
  long long trials = 0;
  double alpha = 0.001;
  double lower_bound = 0.0;
};

ConfidenceBound make_confidence_bound(long long successes, long long trials,
                                      double alpha);

}  // namespace gsmooth
