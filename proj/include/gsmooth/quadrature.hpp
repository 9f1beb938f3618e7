#pragma once

#include <Eigen/Core>
#include <functional>

namespace gsmooth {

// Adaptive composite Simpson integration to a relative tolerance.
double integrate_simpson(const std::function<double(double)>& f, double lo,
                         double hi, double rel_tol = 1e-6,
                         int max_depth = 40);

struct GaussHermiteRule {
  Eigen::VectorXd nodes;    // roots of H_n
  Eigen::VectorXd weights;  // physicists' convention: sum(w) = sqrt(pi)
};

// Golub-Welsch nodes/weights from the Hermite three-term recurrence.
GaussHermiteRule gauss_hermite(int n);

// E[h(theta)] for theta ~ N(0, sigma^2) via an n-node rule.
double gauss_hermite_expectation(const std::function<double(double)>& h,
                                 double sigma, int n = 64);

}  // namespace gsmooth
