#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <vector>

#include "gsmooth/models.hpp"

namespace gsmooth {

// Result of the grid maximization of the noise/Jacobian coefficient
// M*(x) = max_xi sqrt(1/sigma1^2 + r(xi)^2/sigma2^2) where r(xi) is the
// spectral norm of the encoder-through-decoder Jacobian residual at xi.
struct MStarEstimate {
  double value = 0.0;               // includes the safety factor
  Eigen::VectorXd argmax_xi;        // grid point where the max was attained
  int grid_points = 0;              // rows of the evaluation grid
  int inner_iterations = 0;         // power-iteration budget per grid point
  double safety_factor = 1.0;
  std::optional<double> oracle_value;  // brute-force cross-check when run
  // Per-grid-point diagnostics, aligned with the grid rows.
  std::vector<double> residual_norms;
  std::vector<double> m_star_terms;
};

// Largest singular value of an implicitly defined linear operator given by
// its forward and transpose matrix-vector products. Normalized power
// iteration on the input (dimension `dim`) side: one deterministic start
// plus `restarts - 1` random unit starts, max over starts.
using MatVec = std::function<Eigen::VectorXf(const Eigen::VectorXf&)>;
double spectral_norm_power(const MatVec& forward, const MatVec& transpose,
                           int dim, int iterations = 30, int restarts = 3,
                           std::uint64_t seed = 0);

// One grid term of the coefficient: sqrt(1/sigma1^2 + residual^2/sigma2^2).
double m_star_term(double residual, double sigma1, double sigma2);

// Spectral norm of D(xi) = d F2(y_xi)/d xi - A1, where y_xi is the decoded
// surrogate image for (xi, image). Normalized power iteration through
// vjp/jvp composition; `restarts` random unit starts, max over restarts.
double jacobian_residual_norm(const SurrogateModel& model,
                              const Eigen::VectorXd& xi, const Image& image,
                              int iterations = 30, int restarts = 3,
                              std::uint64_t seed = 0);

// Grid maximization of M* for one image; multiplies by safety_factor.
MStarEstimate estimate_m_star(const SurrogateModel& model, const Image& image,
                              double sigma1, double sigma2,
                              const Eigen::MatrixXd& grid,
                              double safety_factor = 1.05,
                              int iterations = 30, int restarts = 3,
                              std::uint64_t seed = 0);

// Conservative dataset-level mode: max of the per-image estimates over a
// calibration set.
MStarEstimate estimate_m_star_dataset(const SurrogateModel& model,
                                      const std::vector<Image>& images,
                                      double sigma1, double sigma2,
                                      const Eigen::MatrixXd& grid,
                                      double safety_factor = 1.05,
                                      int iterations = 30, int restarts = 3,
                                      std::uint64_t seed = 0);

// Oracle: builds the full residual Jacobian per grid point column by
// column with forward-mode probes, cross-checks against reverse mode,
// takes the exact largest singular value, and combines without any safety
// factor. Guarded to small models (param_dim * latent_dim <= 1e5).
double brute_force_m_star(const SurrogateModel& model, const Image& image,
                          double sigma1, double sigma2,
                          const Eigen::MatrixXd& grid);

}  // namespace gsmooth
