#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "gsmooth/image.hpp"

namespace gsmooth {

enum class TransformKind {
  translation,
  gaussian_blur,
  brightness_contrast,
  rotation,
  scaling,
  rotational_blur,
  defocus_blur,
  zoom_blur,
  pixelate,
};

// Static description of one transformation family: its parameter box P and
// (for resolvable families) composition metadata.
struct TransformSpec {
  TransformKind kind;
  std::string name;
  int param_dim = 1;
  Eigen::VectorXd lo, hi;  // axis-aligned P
  bool resolvable = false;
  // Closed-form spectral-norm bound for additive families; families whose
  // bound needs a grid search leave this empty.
  std::optional<double> m_star_closed_form;
};

// Registry of all supported families, keyed by name. Throws FormatError on
// unknown names.
const TransformSpec& transform_spec(const std::string& name);
const std::vector<TransformSpec>& all_transform_specs();

bool theta_in_box(const TransformSpec& spec, const Eigen::VectorXd& theta);
// Componentwise projection onto P (used when smoothing noise walks a
// parameter slightly past the box edge).
Eigen::VectorXd clamp_to_box(const TransformSpec& spec,
                             const Eigen::VectorXd& theta);

// Ground-truth transformation tau(theta, x). Output has the input's dims
// and is clamped to [0,1]. Rejects theta outside P.
Image apply(const TransformSpec& spec, const Eigen::VectorXd& theta,
            const Image& image);

// gamma(theta, xi): the parameter such that applying xi then theta equals
// one application of gamma. Only for resolvable families.
Eigen::VectorXd compose_resolvable(const TransformSpec& spec,
                                   const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& xi);

// M* of the composition map: 1 for additive families, a dense-grid maximum
// of the symbolic Jacobian norm for brightness-contrast.
double resolvable_m_star(const TransformSpec& spec);

}  // namespace gsmooth
