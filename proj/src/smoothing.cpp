#include "gsmooth/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gsmooth/quadrature.hpp"
#include "gsmooth/stats.hpp"

namespace gsmooth {

DistKind dist_kind_from_name(const std::string& name) {
  if (name == "gaussian") return DistKind::gaussian;
  if (name == "folded-gaussian") return DistKind::folded_gaussian;
  if (name == "exponential") return DistKind::exponential;
  throw FormatError("unknown smoothing distribution '" + name +
                    "'; known: gaussian folded-gaussian exponential");
}

std::string dist_kind_name(DistKind kind) {
  switch (kind) {
    case DistKind::gaussian: return "gaussian";
    case DistKind::folded_gaussian: return "folded-gaussian";
    case DistKind::exponential: return "exponential";
  }
  return "?";
}

SmoothingDistribution make_distribution(DistKind kind, double sigma,
                                        int dim) {
  if (sigma <= 0.0)
    throw std::invalid_argument("smoothing sigma must be > 0");
  if (dim < 1) throw std::invalid_argument("smoothing dim must be >= 1");
  return {kind, sigma, dim};
}

Eigen::MatrixXd sample(const SmoothingDistribution& dist, int count,
                       std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  Rng rng = make_rng(seed);
  std::normal_distribution<double> nd(0.0, dist.sigma);
  Eigen::MatrixXd out(count, dist.dim);
  switch (dist.kind) {
    case DistKind::gaussian:
      for (int i = 0; i < count; ++i)
        for (int j = 0; j < dist.dim; ++j) out(i, j) = nd(rng);
      break;
    case DistKind::folded_gaussian:
      for (int i = 0; i < count; ++i)
        for (int j = 0; j < dist.dim; ++j) out(i, j) = std::fabs(nd(rng));
      break;
    case DistKind::exponential: {
      // Radius ~ Gamma(m, sigma), direction uniform on the sphere.
      std::gamma_distribution<double> gd(static_cast<double>(dist.dim),
                                         dist.sigma);
      std::normal_distribution<double> unit(0.0, 1.0);
      for (int i = 0; i < count; ++i) {
        Eigen::VectorXd dir(dist.dim);
        double n2 = 0.0;
        do {
          for (int j = 0; j < dist.dim; ++j) dir[j] = unit(rng);
          n2 = dir.norm();
        } while (n2 < 1e-12);
        out.row(i) = (gd(rng) / n2) * dir.transpose();
      }
      break;
    }
  }
  return out;
}

namespace {

// gamma_u(delta) = <e1, grad psi(delta)> for each smoothing kind.
double gamma_e1(const SmoothingDistribution& dist,
                const Eigen::VectorXd& delta) {
  switch (dist.kind) {
    case DistKind::gaussian:
    case DistKind::folded_gaussian:
      return delta[0] / (dist.sigma * dist.sigma);
    case DistKind::exponential: {
      const double r = delta.norm();
      return r < 1e-12 ? 0.0 : delta[0] / (dist.sigma * r);
    }
  }
  return 0.0;
}

}  // namespace

PhiFunction::PhiFunction(const SmoothingDistribution& dist, PhiMode mode,
                         int mc_samples, std::uint64_t seed)
    : dist_(dist), mode_(mode) {
  if (mode_ == PhiMode::analytic) {
    if (dist.kind != DistKind::gaussian)
      throw std::invalid_argument(
          "analytic Phi is only available for the gaussian kind");
    return;
  }
  if (mc_samples < 1000)
    throw std::invalid_argument("Phi needs at least 1000 MC samples");
  Eigen::MatrixXd draws = sample(dist_, mc_samples, seed);
  sorted_gamma_.resize(mc_samples);
  for (int i = 0; i < mc_samples; ++i)
    sorted_gamma_[i] = gamma_e1(dist_, draws.row(i).transpose());
  std::sort(sorted_gamma_.begin(), sorted_gamma_.end());
  suffix_sum_.assign(mc_samples + 1, 0.0);
  for (int i = mc_samples - 1; i >= 0; --i)
    suffix_sum_[i] = suffix_sum_[i + 1] + sorted_gamma_[i];
}

PhiFunction PhiFunction::make_default(const SmoothingDistribution& dist) {
  return PhiFunction(dist, dist.kind == DistKind::gaussian
                               ? PhiMode::analytic
                               : PhiMode::monte_carlo);
}

double PhiFunction::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("Phi quantile: p must be in (0,1)");
  if (mode_ == PhiMode::analytic)
    return norm_ppf(p) / dist_.sigma;  // gamma ~ N(0, 1/sigma^2)
  const double pos = p * (static_cast<double>(sorted_gamma_.size()) - 1.0);
  const auto i0 = static_cast<size_t>(pos);
  const size_t i1 = std::min(i0 + 1, sorted_gamma_.size() - 1);
  const double f = pos - static_cast<double>(i0);
  return (1.0 - f) * sorted_gamma_[i0] + f * sorted_gamma_[i1];
}

double PhiFunction::operator()(double p) const {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("Phi: p must be in (0,1)");
  if (mode_ == PhiMode::analytic)
    return norm_pdf(norm_ppf(p)) / dist_.sigma;
  // Mean of gamma over its top (1-p) tail, from the sorted table.
  const auto n = static_cast<double>(sorted_gamma_.size());
  const double pos = p * (n - 1.0);
  const auto k = static_cast<size_t>(std::ceil(pos));
  double acc = suffix_sum_[k];
  const double fractional = static_cast<double>(k) - pos;
  if (k > 0 && fractional > 0.0) acc += fractional * sorted_gamma_[k - 1];
  return std::max(acc / n, 0.0);
}

double radius_integral(double p_a, double p_b, const PhiFunction& phi) {
  if (!(p_b > 0.0 && p_a < 1.0) || p_a < p_b)
    throw std::invalid_argument(
        "radius_integral requires 0 < pB <= pA < 1");
  if (p_a == p_b) return 0.0;
  if (phi.mode() == PhiMode::analytic)
    return phi.dist().sigma * (norm_ppf(p_a) - norm_ppf(p_b));
  return integrate_simpson([&phi](double p) { return 1.0 / phi(p); }, p_b,
                           p_a, 1e-6);
}

ConfidenceBound make_confidence_bound(long long successes, long long trials,
                                      double alpha) {
  ConfidenceBound cb;
  cb.successes = successes;
  cb.trials = trials;
  cb.alpha = alpha;
  cb.lower_bound = clopper_pearson_lower(successes, trials, alpha);
  return cb;
}

}  // namespace gsmooth
