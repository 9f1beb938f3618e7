#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "gsmooth/data_io.hpp"
#include "gsmooth/models.hpp"
#include "gsmooth/smoothing.hpp"
#include "gsmooth/transforms.hpp"

namespace gsmooth {

struct SurrogateTrainOptions {
  int epochs = 50;
  int batch_size = 16;
  float lr = 1e-3f;
  int epochs_per_halving = 50;  // Adam lr decay period
  std::uint64_t seed = 0;
  std::ostream* log = nullptr;  // line-oriented epoch records when set
};

// Ground-truth target the surrogate regresses onto; defaults to the true
// transformation kernel.
using TargetFn =
    std::function<Image(const Eigen::VectorXd&, const Image&)>;

struct TrainedSurrogate {
  SurrogateModel model;
  std::vector<double> train_l1;  // per epoch
  std::vector<double> val_l1;    // per epoch
};

// L1 regression of H(F1(theta)+F2(x)) onto apply(spec, theta, x) with
// theta uniform on P. Aborts with a diagnostic if the loss goes non-finite.
TrainedSurrogate train_surrogate(const TransformSpec& spec,
                                 const Dataset& train, const Dataset& val,
                                 const SurrogateConfig& cfg,
                                 const SurrogateTrainOptions& opt);

// Same loop against an arbitrary target (used for degenerate families in
// tests); `box` only supplies the parameter space to sample from.
TrainedSurrogate train_surrogate_target(const TransformSpec& box,
                                        const TargetFn& target,
                                        const Dataset& train,
                                        const Dataset& val,
                                        const SurrogateConfig& cfg,
                                        const SurrogateTrainOptions& opt);

// 99th-percentile per-pixel-RMS L2 error between surrogate and true kernel
// over the (held-out image) x (xi grid row) product.
double measure_epsilon(const SurrogateModel& model, const TransformSpec& spec,
                       const Dataset& heldout, const Eigen::MatrixXd& xi_grid);

// Same metric for an arbitrary evaluator (oracles in tests).
using EvalFn = std::function<Image(const Eigen::VectorXd&, const Image&)>;
double measure_epsilon_fn(const EvalFn& eval, const TransformSpec& spec,
                          const Dataset& heldout,
                          const Eigen::MatrixXd& xi_grid);

// Uniform grid over P: points^m rows (m <= 2 supported everywhere needed).
Eigen::MatrixXd param_grid(const TransformSpec& spec, int points_per_dim);

struct ClassifierTrainOptions {
  int epochs = 30;
  int batch_size = 16;
  float lr = 1e-3f;
  std::uint64_t seed = 0;
  std::ostream* log = nullptr;
};

// On-distribution augmentation for smoothed evaluation: every batch image
// is pushed through the pipeline being certified before the classifier
// sees it.
struct SmoothingAugment {
  const TransformSpec* spec = nullptr;        // required
  const SurrogateModel* surrogate = nullptr;  // null -> true-kernel path
  double sigma1 = 0.0;
  double sigma2 = 0.0;  // latent noise scale (surrogate path only)
};

// Cross-entropy training; returns final validation accuracy. `augment`
// may be null for plain training.
double train_classifier(Classifier& clf, const Dataset& train,
                        const Dataset& val,
                        const ClassifierTrainOptions& opt,
                        const SmoothingAugment* augment = nullptr);

double classifier_accuracy(const Classifier& clf, const Dataset& ds);

}  // namespace gsmooth
