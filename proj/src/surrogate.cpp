#include "gsmooth/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "gsmooth/ops.hpp"

namespace gsmooth {

namespace {

Eigen::VectorXd uniform_theta(const TransformSpec& box, Rng& rng) {
  Eigen::VectorXd theta(box.param_dim);
  for (int i = 0; i < box.param_dim; ++i) {
    std::uniform_real_distribution<double> ud(box.lo[i], box.hi[i]);
    theta[i] = ud(rng);
  }
  return theta;
}

double mean_l1(const SurrogateModel& model, const TransformSpec& box,
               const TargetFn& target, const Dataset& ds, Rng& rng) {
  double acc = 0.0;
  long long count = 0;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const Eigen::VectorXd theta = uniform_theta(box, rng);
    Image want = target(theta, ds.images[i]);
    Image got = model.evaluate(theta, ds.images[i]);
    acc += static_cast<double>((got.pixels - want.pixels).abs().sum());
    count += want.pixels.size();
  }
  return acc / static_cast<double>(count);
}

}  // namespace

Eigen::MatrixXd param_grid(const TransformSpec& spec, int points_per_dim) {
  if (points_per_dim < 2)
    throw std::invalid_argument("param_grid needs >= 2 points per dim");
  if (spec.param_dim > 2)
    throw std::invalid_argument("param_grid supports m <= 2");
  auto axis = [&](int d) {
    Eigen::VectorXd v(points_per_dim);
    for (int i = 0; i < points_per_dim; ++i)
      v[i] = spec.lo[d] + (spec.hi[d] - spec.lo[d]) * i /
                              (points_per_dim - 1.0);
    v[points_per_dim - 1] = spec.hi[d];  // avoid one-ulp overshoot of P
    return v;
  };
  if (spec.param_dim == 1) {
    Eigen::MatrixXd grid(points_per_dim, 1);
    grid.col(0) = axis(0);
    return grid;
  }
  const Eigen::VectorXd a = axis(0), b = axis(1);
  Eigen::MatrixXd grid(points_per_dim * points_per_dim, 2);
  for (int i = 0; i < points_per_dim; ++i)
    for (int j = 0; j < points_per_dim; ++j) {
      grid(i * points_per_dim + j, 0) = a[i];
      grid(i * points_per_dim + j, 1) = b[j];
    }
  return grid;
}

TrainedSurrogate train_surrogate_target(const TransformSpec& box,
                                        const TargetFn& target,
                                        const Dataset& train,
                                        const Dataset& val,
                                        const SurrogateConfig& cfg,
                                        const SurrogateTrainOptions& opt) {
  if (train.images.empty()) throw std::invalid_argument("empty training set");
  if (opt.epochs < 1) throw std::invalid_argument("epochs must be >= 1");

  TrainedSurrogate out{SurrogateModel(cfg, opt.seed), {}, {}};
  SurrogateModel& model = out.model;
  Adam optimizer(model.parameters(), opt.lr, 0.9f, 0.999f, 1e-8f,
                 opt.epochs_per_halving);

  Rng rng = make_rng(opt.seed, 7);
  std::vector<int> order(train.images.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    optimizer.note_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += opt.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + opt.batch_size);
      const int n = static_cast<int>(end - start);
      std::vector<Image> inputs, targets;
      Eigen::MatrixXd thetas(n, box.param_dim);
      inputs.reserve(n);
      targets.reserve(n);
      for (int k = 0; k < n; ++k) {
        const Image& x = train.images[order[start + k]];
        const Eigen::VectorXd theta = uniform_theta(box, rng);
        thetas.row(k) = theta.transpose();
        inputs.push_back(x);
        targets.push_back(target(theta, x));
      }
      Tensor pred =
          model.forward(thetas_to_tensor(thetas), images_to_tensor(inputs));
      Tensor loss = l1_loss(pred, images_to_tensor(targets));
      const float lv = loss.item();
      if (!std::isfinite(lv))
        throw std::runtime_error(
            "surrogate training diverged (non-finite L1 loss) at epoch " +
            std::to_string(epoch) + ", batch " + std::to_string(batches));
      optimizer.zero_grad();
      backward(loss);
      optimizer.step();
      epoch_loss += lv;
      ++batches;
    }
    out.train_l1.push_back(epoch_loss / std::max(batches, 1));
    Rng val_rng = make_rng(opt.seed, 9000 + static_cast<std::uint64_t>(epoch));
    out.val_l1.push_back(
        val.images.empty() ? 0.0 : mean_l1(model, box, target, val, val_rng));
    if (opt.log)
      (*opt.log) << "epoch=" << epoch << " train_l1=" << out.train_l1.back()
                 << " val_l1=" << out.val_l1.back() << "\n";
  }
  return out;
}

TrainedSurrogate train_surrogate(const TransformSpec& spec,
                                 const Dataset& train, const Dataset& val,
                                 const SurrogateConfig& cfg,
                                 const SurrogateTrainOptions& opt) {
  TargetFn target = [&spec](const Eigen::VectorXd& theta, const Image& x) {
    return apply(spec, theta, x);
  };
  return train_surrogate_target(spec, target, train, val, cfg, opt);
}

double measure_epsilon_fn(const EvalFn& eval, const TransformSpec& spec,
                          const Dataset& heldout,
                          const Eigen::MatrixXd& xi_grid) {
  if (heldout.images.empty())
    throw std::invalid_argument("measure_epsilon: empty held-out set");
  if (xi_grid.rows() < 1 || xi_grid.cols() != spec.param_dim)
    throw std::invalid_argument("measure_epsilon: bad xi grid");
  std::vector<double> errors;
  errors.reserve(heldout.images.size() * xi_grid.rows());
  for (const Image& x : heldout.images) {
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(x.size()));
    for (Eigen::Index r = 0; r < xi_grid.rows(); ++r) {
      const Eigen::VectorXd xi = xi_grid.row(r).transpose();
      Image want = apply(spec, xi, x);
      Image got = eval(xi, x);
      const double l2 = std::sqrt(static_cast<double>(
          (got.pixels - want.pixels).cast<double>().square().sum()));
      errors.push_back(l2 * inv_sqrt_n);  // per-pixel RMS
    }
  }
  std::sort(errors.begin(), errors.end());
  const std::size_t idx = std::min(
      errors.size() - 1,
      static_cast<std::size_t>(std::ceil(0.99 * errors.size())) - 1);
  return errors[idx];
}

double measure_epsilon(const SurrogateModel& model, const TransformSpec& spec,
                       const Dataset& heldout,
                       const Eigen::MatrixXd& xi_grid) {
  return measure_epsilon_fn(
      [&model](const Eigen::VectorXd& xi, const Image& x) {
        return model.evaluate(xi, x);
      },
      spec, heldout, xi_grid);
}

double classifier_accuracy(const Classifier& clf, const Dataset& ds) {
  if (ds.images.empty()) return 0.0;
  int hits = 0;
  // Predict in modest batches to bound graph memory.
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < ds.images.size(); start += chunk) {
    const std::size_t end = std::min(ds.images.size(), start + chunk);
    std::vector<Image> batch(ds.images.begin() + start,
                             ds.images.begin() + end);
    std::vector<int> pred = clf.predict(batch);
    for (std::size_t i = start; i < end; ++i)
      if (pred[i - start] == ds.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.images.size());
}

double train_classifier(Classifier& clf, const Dataset& train,
                        const Dataset& val,
                        const ClassifierTrainOptions& opt,
                        const SmoothingAugment* augment) {
  if (train.images.empty()) throw std::invalid_argument("empty training set");
  if (augment && !augment->spec)
    throw std::invalid_argument("augmentation requires a transform spec");

  Adam optimizer(clf.parameters(), opt.lr);
  Rng rng = make_rng(opt.seed, 8);
  std::normal_distribution<double> n1(0.0, augment ? augment->sigma1 : 1.0);
  std::normal_distribution<float> n2(
      0.0f, augment ? static_cast<float>(augment->sigma2) : 1.0f);

  std::vector<int> order(train.images.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    optimizer.note_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += opt.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + opt.batch_size);
      const int n = static_cast<int>(end - start);
      std::vector<Image> inputs;
      std::vector<int> labels;
      inputs.reserve(n);
      labels.reserve(n);
      for (int k = 0; k < n; ++k) {
        inputs.push_back(train.images[order[start + k]]);
        labels.push_back(train.labels[order[start + k]]);
      }
      if (augment) {
        const TransformSpec& spec = *augment->spec;
        Eigen::MatrixXd thetas(n, spec.param_dim);
        for (int k = 0; k < n; ++k) {
          Eigen::VectorXd theta(spec.param_dim);
          for (int d = 0; d < spec.param_dim; ++d) theta[d] = n1(rng);
          thetas.row(k) = clamp_to_box(spec, theta).transpose();
        }
        if (augment->surrogate) {
          const SurrogateModel& sur = *augment->surrogate;
          ArrayF noise(static_cast<Eigen::Index>(n) * sur.latent_dim());
          for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = n2(rng);
          Tensor out = sur.forward(
              thetas_to_tensor(thetas), images_to_tensor(inputs),
              Tensor::from({n, sur.latent_dim()}, std::move(noise)));
          for (int k = 0; k < n; ++k) inputs[k] = tensor_to_image(out, k);
        } else {
          for (int k = 0; k < n; ++k)
            inputs[k] = apply(spec, thetas.row(k).transpose(), inputs[k]);
        }
      }
      Tensor logits = clf.forward(images_to_tensor(inputs));
      Tensor loss = softmax_cross_entropy(logits, labels);
      const float lv = loss.item();
      if (!std::isfinite(lv))
        throw std::runtime_error(
            "classifier training diverged (non-finite loss) at epoch " +
            std::to_string(epoch));
      optimizer.zero_grad();
      backward(loss);
      optimizer.step();
      epoch_loss += lv;
      ++batches;
    }
    if (opt.log)
      (*opt.log) << "epoch=" << epoch
                 << " train_ce=" << epoch_loss / std::max(batches, 1) << "\n";
  }
  return classifier_accuracy(clf, val);
}

}  // namespace gsmooth
