#include "gsmooth/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace gsmooth {

namespace {

double simpson_rec(const std::function<double(double)>& f, double lo,
                   double hi, double flo, double fmid, double fhi,
                   double whole, double rel_tol, int depth) {
  const double mid = 0.5 * (lo + hi);
  const double lmid = 0.5 * (lo + mid), rmid = 0.5 * (mid + hi);
  const double flm = f(lmid), frm = f(rmid);
  const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
  const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
  const double delta = left + right - whole;
  if (depth <= 0 ||
      std::fabs(delta) <=
          15.0 * rel_tol * (std::fabs(left + right) + 1e-300))
    return left + right + delta / 15.0;
  return simpson_rec(f, lo, mid, flo, flm, fmid, left, rel_tol, depth - 1) +
         simpson_rec(f, mid, hi, fmid, frm, fhi, right, rel_tol, depth - 1);
}

}  // namespace

double integrate_simpson(const std::function<double(double)>& f, double lo,
                         double hi, double rel_tol, int max_depth) {
  if (hi == lo) return 0.0;
  const double mid = 0.5 * (lo + hi);
  const double flo = f(lo), fmid = f(mid), fhi = f(hi);
  const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  return simpson_rec(f, lo, hi, flo, fmid, fhi, whole, rel_tol, max_depth);
}

GaussHermiteRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: need n >= 1");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double off = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = off;
    jacobi(i - 1, i) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermiteRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights.resize(n);
  const double sqrt_pi = std::sqrt(M_PI);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = sqrt_pi * v0 * v0;
  }
  return rule;
}

double gauss_hermite_expectation(const std::function<double(double)>& h,
                                 double sigma, int n) {
  const GaussHermiteRule rule = gauss_hermite(n);
  const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += rule.weights[i] * h(M_SQRT2 * sigma * rule.nodes[i]);
  return acc * inv_sqrt_pi;
}

}  // namespace gsmooth
