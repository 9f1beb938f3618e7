#include "gsmooth/jacobian.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

#include "gsmooth/ops.hpp"

namespace gsmooth {

namespace {

// Differentiable chain xi -> F2(H(F1(xi) + F2(x))). `th` is the only
// gradient leaf; `out` is the re-encoded latent of the decoded image.
struct ResidualGraph {
  Tensor th;   // [1, m]
  Tensor out;  // [1, l]
};

ResidualGraph build_residual_graph(const SurrogateModel& model,
                                   const Eigen::VectorXd& xi,
                                   const Image& image) {
  Tensor th = thetas_to_tensor(xi.transpose(), /*requires_grad=*/true);
  Tensor im = images_to_tensor({image});
  SurrogateModel::Encoded enc = model.f2(im);
  Tensor y = model.decode(add(model.f1(th), enc.latent), enc);
  return {th, model.f2(y).latent};
}

void check_finite(const Eigen::VectorXf& v, const char* what) {
  if (!v.allFinite())
    throw std::runtime_error(std::string("spectral_norm_power: ") + what +
                             " is non-finite");
}

double power_iterate(const MatVec& forward, const MatVec& transpose,
                     Eigen::VectorXf v, int iterations, double tol = 1e-6) {
  double value = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXf w = forward(v);
    check_finite(w, "forward product");
    const double norm_w = w.norm();
    if (norm_w == 0.0) return 0.0;
    Eigen::VectorXf u = transpose(w / static_cast<float>(norm_w));
    check_finite(u, "transpose product");
    const double norm_u = u.norm();
    if (norm_u == 0.0) return norm_w;
    v = u / static_cast<float>(norm_u);
    if (std::abs(norm_w - value) <= tol * std::max(1.0, norm_w)) return norm_w;
    value = norm_w;
  }
  return value;
}

void validate_grid(const SurrogateModel& model, const Eigen::MatrixXd& grid) {
  if (grid.rows() < 1) throw std::invalid_argument("m_star: empty grid");
  if (grid.cols() != model.config().param_dim)
    throw std::invalid_argument("m_star: grid dim " +
                                std::to_string(grid.cols()) +
                                " != param dim " +
                                std::to_string(model.config().param_dim));
}

}  // namespace

double m_star_term(double residual, double sigma1, double sigma2) {
  return std::sqrt(1.0 / (sigma1 * sigma1) +
                   residual * residual / (sigma2 * sigma2));
}

double spectral_norm_power(const MatVec& forward, const MatVec& transpose,
                           int dim, int iterations, int restarts,
                           std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("spectral_norm_power: dim < 1");
  if (iterations < 1 || restarts < 1)
    throw std::invalid_argument(
        "spectral_norm_power: iterations and restarts must be >= 1");
  double best = 0.0;
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXf v(dim);
    if (r == 0) {
      v.setOnes();  // deterministic start; restarts only add candidates
    } else {
      Rng rng = make_rng(seed, 500 + static_cast<std::uint64_t>(r));
      std::normal_distribution<float> nd(0.0f, 1.0f);
      for (int i = 0; i < dim; ++i) v[i] = nd(rng);
    }
    const double nv = v.norm();
    if (nv == 0.0) continue;
    best = std::max(best, power_iterate(forward, transpose,
                                        v / static_cast<float>(nv),
                                        iterations));
  }
  return best;
}

double jacobian_residual_norm(const SurrogateModel& model,
                              const Eigen::VectorXd& xi, const Image& image,
                              int iterations, int restarts,
                              std::uint64_t seed) {
  ResidualGraph graph = build_residual_graph(model, xi, image);
  const Eigen::MatrixXf a1 = model.a1_matrix();
  MatVec forward = [&graph, &a1](const Eigen::VectorXf& v) {
    return Eigen::VectorXf(jvp(graph.out, graph.th, v) - a1 * v);
  };
  MatVec transpose = [&graph, &a1](const Eigen::VectorXf& w) {
    return Eigen::VectorXf(vjp(graph.out, graph.th, w) - a1.transpose() * w);
  };
  return spectral_norm_power(forward, transpose, model.config().param_dim,
                             iterations, restarts, seed);
}

MStarEstimate estimate_m_star(const SurrogateModel& model, const Image& image,
                              double sigma1, double sigma2,
                              const Eigen::MatrixXd& grid,
                              double safety_factor, int iterations,
                              int restarts, std::uint64_t seed) {
  if (sigma1 <= 0.0 || sigma2 <= 0.0)
    throw std::invalid_argument("m_star: sigma1 and sigma2 must be > 0");
  validate_grid(model, grid);

  MStarEstimate est;
  est.grid_points = static_cast<int>(grid.rows());
  est.inner_iterations = iterations;
  est.safety_factor = safety_factor;
  est.residual_norms.reserve(grid.rows());
  est.m_star_terms.reserve(grid.rows());

  double best = -1.0;
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    const Eigen::VectorXd xi = grid.row(r).transpose();
    const double res =
        jacobian_residual_norm(model, xi, image, iterations, restarts, seed);
    const double term = m_star_term(res, sigma1, sigma2);
    est.residual_norms.push_back(res);
    est.m_star_terms.push_back(term);
    if (term > best) {
      best = term;
      est.argmax_xi = xi;
    }
  }
  est.value = best * safety_factor;
  return est;
}

MStarEstimate estimate_m_star_dataset(const SurrogateModel& model,
                                      const std::vector<Image>& images,
                                      double sigma1, double sigma2,
                                      const Eigen::MatrixXd& grid,
                                      double safety_factor, int iterations,
                                      int restarts, std::uint64_t seed) {
  if (images.empty())
    throw std::invalid_argument("m_star: empty calibration set");
  MStarEstimate best;
  for (const Image& image : images) {
    MStarEstimate e = estimate_m_star(model, image, sigma1, sigma2, grid,
                                      safety_factor, iterations, restarts,
                                      seed);
    if (e.value > best.value) best = std::move(e);
  }
  return best;
}

double brute_force_m_star(const SurrogateModel& model, const Image& image,
                          double sigma1, double sigma2,
                          const Eigen::MatrixXd& grid) {
  if (sigma1 <= 0.0 || sigma2 <= 0.0)
    throw std::invalid_argument("m_star: sigma1 and sigma2 must be > 0");
  validate_grid(model, grid);
  const int m = model.config().param_dim;
  const int l = model.latent_dim();
  if (static_cast<long long>(m) * l > 100000)
    throw std::invalid_argument(
        "brute_force_m_star: model too large (param_dim * latent_dim > 1e5)");

  const Eigen::MatrixXf a1 = model.a1_matrix();

  double best = 0.0;
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    const Eigen::VectorXd xi = grid.row(r).transpose();
    ResidualGraph g = build_residual_graph(model, xi, image);
    // Column-by-column forward-mode probes give the exact Jacobian of the
    // float forward pass (divided differences are noise-dominated here:
    // with float storage the cancellation error at any usable step size
    // swamps a high-curvature graph).
    Eigen::MatrixXf jac(l, m);
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXf e = Eigen::VectorXf::Zero(m);
      e[j] = 1.0f;
      jac.col(j) = jvp(g.out, g.th, e);
    }
    // Cross-check one random adjoint direction against reverse mode; the
    // two passes share no kernels, so agreement validates both.
    {
      Rng rng = make_rng(1234, static_cast<std::uint64_t>(r));
      std::normal_distribution<float> nd(0.0f, 1.0f);
      Eigen::VectorXf w(l);
      for (int i = 0; i < l; ++i) w[i] = nd(rng);
      w.normalize();
      const Eigen::VectorXf via_vjp = vjp(g.out, g.th, w);
      const Eigen::VectorXf via_fwd = jac.transpose() * w;
      const double scale = std::max(1.0, static_cast<double>(via_vjp.norm()));
      if ((via_vjp - via_fwd).norm() > 1e-3 * scale)
        throw std::runtime_error(
            "brute_force_m_star: forward-mode Jacobian disagrees with "
            "reverse mode at grid row " +
            std::to_string(r));
    }
    const Eigen::MatrixXf resid = jac - a1;
    const double spec =
        Eigen::JacobiSVD<Eigen::MatrixXf>(resid).singularValues()(0);
    best = std::max(best, m_star_term(spec, sigma1, sigma2));
  }
  return best;
}

}  // namespace gsmooth
