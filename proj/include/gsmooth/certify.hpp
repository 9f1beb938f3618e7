#pragma once

#include <string>
#include <vector>

#include "gsmooth/jacobian.hpp"
#include "gsmooth/smoothing.hpp"
#include "gsmooth/surrogate.hpp"
#include "gsmooth/transforms.hpp"

namespace gsmooth {

enum class CertifyPath { resolvable, surrogate };

CertifyPath certify_path_from_name(const std::string& name);
std::string certify_path_name(CertifyPath path);

struct CertifyConfig {
  double sigma1 = 0.25;  // transformation-noise scale
  double sigma2 = 0.10;  // augmented latent-noise scale (surrogate path)
  int n0 = 100;          // candidate-selection samples
  int n = 10000;         // estimation samples
  double alpha = 0.001;  // one-sided confidence level
  CertifyPath path = CertifyPath::resolvable;
  DistKind dist = DistKind::gaussian;  // smoothing distribution for theta
  double epsilon = 0.0;  // measured surrogate approximation error
  double a_hat = 0.0;    // error-ratio bound for the radius correction
  double m_star = 0.0;   // coefficient estimate (surrogate path)
  std::uint64_t seed = 0;
};

struct CertificationRecord {
  int sample_id = 0;
  int label = 0;
  int prediction = -1;  // candidate top class from the selection stage
  double p_a_lower = 0.0;
  double m_star = 0.0;
  double radius = 0.0;
  double radius_corrected = 0.0;
  bool abstain = true;
  double seconds = 0.0;
};

// Class histogram of the smoothed classifier over `count` draws of
// theta ~ g(sigma1) (clamped into P) and, on the surrogate path, latent
// noise theta' ~ N(0, sigma2^2). `stream` separates RNG streams so the
// selection and estimation stages use independent draws. A non-empty
// `theta_shift` recenters the parameter noise at xi = theta_shift, which
// evaluates the smoothed classifier at a perturbed parameter point (the
// object the certified radius bounds).
std::vector<long long> smooth_predict(
    const Classifier& clf, const TransformSpec& spec,
    const SurrogateModel* surrogate, const Image& image,
    const CertifyConfig& cfg, int count, std::uint64_t stream,
    const Eigen::VectorXd& theta_shift = Eigen::VectorXd());

// Full per-sample certification: candidate selection on n0 samples, a
// fresh n-sample confidence bound, the path-specific radius, and the
// error-corrected radius R_r = clamp(R * (1 - a_hat * epsilon), [0, R]).
CertificationRecord certify_sample(const Classifier& clf,
                                   const TransformSpec& spec,
                                   const SurrogateModel* surrogate,
                                   const Image& image, int label,
                                   int sample_id, const CertifyConfig& cfg);

// Error-ratio bound: multiplier times the max over (calibration image x
// grid point) of the three spectral norms tied to the surrogate chain --
// the affine parameter map, and the encoder Jacobian at the surrogate
// output and at the true transform output.
double estimate_error_ratio_A(const SurrogateModel& surrogate,
                              const TransformSpec& spec,
                              const std::vector<Image>& calibration,
                              const Eigen::MatrixXd& grid,
                              double multiplier = 10.0, int iterations = 30,
                              int restarts = 3, std::uint64_t seed = 0);

// Fixes the arbitrary latent-space gauge of a trained surrogate: scales
// the latent by 1/s where s is the max of the three Theorem-3 spectral
// norms over (calibration x grid), leaving the decoded function bit-level
// identical (decoder input weights absorb the scale). The smoothed
// classifier, M*, radius, and epsilon are all invariant as long as the
// caller also divides sigma2 by the returned s; the reported error-ratio
// bound drops to multiplier x 1 instead of multiplier x s.
double normalize_latent_gauge(SurrogateModel& surrogate,
                              const TransformSpec& spec,
                              const std::vector<Image>& calibration,
                              const Eigen::MatrixXd& grid,
                              int iterations = 30, int restarts = 3,
                              std::uint64_t seed = 0);

struct CertifiedAccuracyRow {
  double threshold = 0.0;
  double accuracy = 0.0;  // correct, non-abstained, radius_corrected >= t
};

std::vector<CertifiedAccuracyRow> certified_accuracy_report(
    const std::vector<CertificationRecord>& records,
    const std::vector<double>& thresholds);

// CSV with columns exactly:
// sample_id,label,prediction,p_a_lower,m_star,radius,radius_corrected,abstain,seconds
void write_certification_csv(const std::vector<CertificationRecord>& records,
                             const std::string& path);
std::vector<CertificationRecord> read_certification_csv(
    const std::string& path);

}  // namespace gsmooth
