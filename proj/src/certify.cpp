#include "gsmooth/certify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "gsmooth/data_io.hpp"
#include "gsmooth/ops.hpp"
#include "gsmooth/stats.hpp"

namespace gsmooth {

namespace {

constexpr std::size_t kPredictChunk = 64;

void validate_config(const CertifyConfig& cfg, const TransformSpec& spec,
                     const SurrogateModel* surrogate) {
  if (cfg.sigma1 <= 0.0 || cfg.sigma2 <= 0.0)
    throw std::invalid_argument("certify: sigma1 and sigma2 must be > 0");
  if (cfg.alpha <= 0.0 || cfg.alpha >= 1.0)
    throw std::invalid_argument("certify: alpha must lie in (0,1)");
  if (cfg.path == CertifyPath::surrogate) {
    if (!surrogate)
      throw std::invalid_argument("certify: surrogate path needs a model");
    if (surrogate->config().transform_name != spec.name)
      throw std::invalid_argument(
          "certify: surrogate was trained for '" +
          surrogate->config().transform_name + "', not '" + spec.name + "'");
  } else if (!spec.resolvable) {
    throw std::invalid_argument("certify: transform '" + spec.name +
                                "' is not resolvable; use the surrogate path");
  }
}

// One chunk of smoothed evaluation; appends argmax classes to the tally.
void tally_chunk(const Classifier& clf, const TransformSpec& spec,
                 const SurrogateModel* surrogate, const Image& image,
                 const CertifyConfig& cfg, const Eigen::MatrixXd& thetas,
                 Rng& noise_rng, std::vector<long long>& hist) {
  const int n = static_cast<int>(thetas.rows());
  std::vector<int> pred;
  if (cfg.path == CertifyPath::resolvable) {
    std::vector<Image> batch;
    batch.reserve(n);
    for (int k = 0; k < n; ++k)
      batch.push_back(apply(spec, thetas.row(k).transpose(), image));
    pred = clf.predict(batch);
  } else {
    std::normal_distribution<float> nd(0.0f,
                                       static_cast<float>(cfg.sigma2));
    ArrayF noise(static_cast<Eigen::Index>(n) * surrogate->latent_dim());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = nd(noise_rng);
    std::vector<Image> tiled(static_cast<std::size_t>(n), image);
    Tensor out = surrogate->forward(
        thetas_to_tensor(thetas), images_to_tensor(tiled),
        Tensor::from({n, surrogate->latent_dim()}, std::move(noise)));
    std::vector<Image> batch;
    batch.reserve(n);
    for (int k = 0; k < n; ++k) batch.push_back(tensor_to_image(out, k));
    pred = clf.predict(batch);
  }
  for (int c : pred) ++hist[static_cast<std::size_t>(c)];
}

int argmax_hist(const std::vector<long long>& hist) {
  return static_cast<int>(
      std::max_element(hist.begin(), hist.end()) - hist.begin());
}

}  // namespace

CertifyPath certify_path_from_name(const std::string& name) {
  if (name == "resolvable") return CertifyPath::resolvable;
  if (name == "surrogate") return CertifyPath::surrogate;
  throw FormatError("unknown certification path '" + name +
                    "'; known: resolvable surrogate");
}

std::string certify_path_name(CertifyPath path) {
  return path == CertifyPath::resolvable ? "resolvable" : "surrogate";
}

std::vector<long long> smooth_predict(const Classifier& clf,
                                      const TransformSpec& spec,
                                      const SurrogateModel* surrogate,
                                      const Image& image,
                                      const CertifyConfig& cfg, int count,
                                      std::uint64_t stream,
                                      const Eigen::VectorXd& theta_shift) {
  if (count < 1) throw std::invalid_argument("smooth_predict: count < 1");
  validate_config(cfg, spec, surrogate);
  if (theta_shift.size() != 0 && theta_shift.size() != spec.param_dim)
    throw std::invalid_argument("smooth_predict: theta_shift dim mismatch");

  SmoothingDistribution dist =
      make_distribution(cfg.dist, cfg.sigma1, spec.param_dim);
  Eigen::MatrixXd thetas =
      sample(dist, count, cfg.seed * 0x9e3779b97f4a7c15ULL + stream);
  if (theta_shift.size() != 0)
    thetas.rowwise() += theta_shift.transpose();
  for (Eigen::Index r = 0; r < thetas.rows(); ++r)
    thetas.row(r) =
        clamp_to_box(spec, thetas.row(r).transpose()).transpose();

  Rng noise_rng = make_rng(cfg.seed, 0xA000 + stream);
  std::vector<long long> hist(
      static_cast<std::size_t>(clf.num_classes()), 0);
  for (Eigen::Index start = 0; start < count;
       start += static_cast<Eigen::Index>(kPredictChunk)) {
    const Eigen::Index rows = std::min<Eigen::Index>(kPredictChunk,
                                                     count - start);
    tally_chunk(clf, spec, surrogate, image, cfg,
                thetas.middleRows(start, rows), noise_rng, hist);
  }
  return hist;
}

CertificationRecord certify_sample(const Classifier& clf,
                                   const TransformSpec& spec,
                                   const SurrogateModel* surrogate,
                                   const Image& image, int label,
                                   int sample_id, const CertifyConfig& cfg) {
  if (cfg.n0 < 1 || cfg.n <= cfg.n0)
    throw std::invalid_argument("certify: need 1 <= n0 < n");
  validate_config(cfg, spec, surrogate);
  const auto t0 = std::chrono::steady_clock::now();

  CertificationRecord rec;
  rec.sample_id = sample_id;
  rec.label = label;

  // Selection and estimation use disjoint RNG streams: no reuse.
  std::vector<long long> selection =
      smooth_predict(clf, spec, surrogate, image, cfg, cfg.n0,
                     2 * static_cast<std::uint64_t>(sample_id));
  rec.prediction = argmax_hist(selection);

  std::vector<long long> estimation =
      smooth_predict(clf, spec, surrogate, image, cfg, cfg.n,
                     2 * static_cast<std::uint64_t>(sample_id) + 1);
  const long long k = estimation[static_cast<std::size_t>(rec.prediction)];
  rec.p_a_lower = clopper_pearson_lower(k, cfg.n, cfg.alpha);
  rec.abstain = rec.p_a_lower <= 0.5;

  if (!rec.abstain) {
    const double p_a = rec.p_a_lower;
    const double p_b = 1.0 - p_a;
    if (cfg.path == CertifyPath::resolvable) {
      rec.m_star = resolvable_m_star(spec);
      PhiFunction phi = PhiFunction::make_default(
          make_distribution(cfg.dist, cfg.sigma1, spec.param_dim));
      rec.radius = radius_integral(p_a, p_b, phi) / (2.0 * rec.m_star);
    } else {
      if (cfg.m_star <= 0.0)
        throw std::invalid_argument(
            "certify: surrogate path needs a positive m_star estimate");
      rec.m_star = cfg.m_star;
      rec.radius =
          (norm_ppf(p_a) - norm_ppf(p_b)) / (2.0 * rec.m_star);
    }
    rec.radius_corrected = std::clamp(
        rec.radius * (1.0 - cfg.a_hat * cfg.epsilon), 0.0, rec.radius);
  }

  rec.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

double estimate_error_ratio_A(const SurrogateModel& surrogate,
                              const TransformSpec& spec,
                              const std::vector<Image>& calibration,
                              const Eigen::MatrixXd& grid,
                              double multiplier, int iterations, int restarts,
                              std::uint64_t seed) {
  if (calibration.empty())
    throw std::invalid_argument("estimate_error_ratio_A: empty calibration");
  if (grid.rows() < 1 || grid.cols() != spec.param_dim)
    throw std::invalid_argument("estimate_error_ratio_A: bad grid");

  // Encoder Jacobian norm at a fixed evaluation image.
  auto encoder_norm = [&](const Image& at) {
    Tensor img = images_to_tensor({at});
    img.set_requires_grad(true);
    Tensor out = surrogate.f2(img).latent;
    MatVec fwd = [&out, &img](const Eigen::VectorXf& v) {
      return jvp(out, img, v);
    };
    MatVec tr = [&out, &img](const Eigen::VectorXf& w) {
      return vjp(out, img, w);
    };
    return spectral_norm_power(fwd, tr, static_cast<int>(img.size()),
                               iterations, restarts, seed);
  };

  const Eigen::MatrixXf a1 = surrogate.a1_matrix();
  MatVec a1_fwd = [&a1](const Eigen::VectorXf& v) {
    return Eigen::VectorXf(a1 * v);
  };
  MatVec a1_tr = [&a1](const Eigen::VectorXf& w) {
    return Eigen::VectorXf(a1.transpose() * w);
  };
  double worst = spectral_norm_power(a1_fwd, a1_tr, surrogate.config().param_dim,
                                     iterations, restarts, seed);

  for (const Image& x : calibration) {
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
      const Eigen::VectorXd xi = grid.row(r).transpose();
      worst = std::max(worst, encoder_norm(surrogate.evaluate(xi, x)));
      worst = std::max(worst, encoder_norm(apply(spec, xi, x)));
    }
  }
  return multiplier * worst;
}

double normalize_latent_gauge(SurrogateModel& surrogate,
                              const TransformSpec& spec,
                              const std::vector<Image>& calibration,
                              const Eigen::MatrixXd& grid, int iterations,
                              int restarts, std::uint64_t seed) {
  const double s = estimate_error_ratio_A(surrogate, spec, calibration, grid,
                                          /*multiplier=*/1.0, iterations,
                                          restarts, seed);
  if (!(s > 0.0))
    throw std::runtime_error(
        "normalize_latent_gauge: degenerate surrogate (zero norms)");
  const float down = static_cast<float>(1.0 / s);
  const float up = static_cast<float>(s);
  bool scaled_d1 = false;
  for (NamedParam& p : surrogate.parameters()) {
    // Everything feeding the latent sum shrinks by 1/s; the decoder's
    // first convolution weight absorbs the scale so the decoded image is
    // unchanged (its bias stays put: conv(x/s, s*w) + b == conv(x, w) + b).
    if (p.name == "f1.w" || p.name == "f1.b" || p.name == "en2.gamma" ||
        p.name == "en2.beta") {
      p.tensor.values() *= down;
    } else if (p.name == "d1.w") {
      p.tensor.values() *= up;
      scaled_d1 = true;
    }
  }
  if (!scaled_d1)
    throw std::runtime_error(
        "normalize_latent_gauge: decoder entry layer not found");
  return s;
}

std::vector<CertifiedAccuracyRow> certified_accuracy_report(
    const std::vector<CertificationRecord>& records,
    const std::vector<double>& thresholds) {
  if (records.empty())
    throw std::invalid_argument("certified_accuracy_report: no records");
  std::vector<CertifiedAccuracyRow> rows;
  rows.reserve(thresholds.size());
  for (double t : thresholds) {
    long long hits = 0;
    for (const CertificationRecord& r : records)
      if (!r.abstain && r.prediction == r.label && r.radius_corrected >= t)
        ++hits;
    rows.push_back(
        {t, static_cast<double>(hits) / static_cast<double>(records.size())});
  }
  return rows;
}

void write_certification_csv(const std::vector<CertificationRecord>& records,
                             const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(records.size());
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  for (const CertificationRecord& r : records)
    rows.push_back({std::to_string(r.sample_id), std::to_string(r.label),
                    std::to_string(r.prediction), num(r.p_a_lower),
                    num(r.m_star), num(r.radius), num(r.radius_corrected),
                    r.abstain ? "1" : "0", num(r.seconds)});
  write_csv(path,
            {"sample_id", "label", "prediction", "p_a_lower", "m_star",
             "radius", "radius_corrected", "abstain", "seconds"},
            rows);
}

std::vector<CertificationRecord> read_certification_csv(
    const std::string& path) {
  std::vector<std::vector<std::string>> rows = read_csv(path);
  if (rows.empty() || rows.front().size() != 9)
    throw FormatError("certification CSV '" + path + "' has a bad header");
  std::vector<CertificationRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 9)
      throw FormatError("certification CSV '" + path + "' row " +
                        std::to_string(i) + " has " +
                        std::to_string(r.size()) + " fields");
    CertificationRecord rec;
    rec.sample_id = std::stoi(r[0]);
    rec.label = std::stoi(r[1]);
    rec.prediction = std::stoi(r[2]);
    rec.p_a_lower = std::stod(r[3]);
    rec.m_star = std::stod(r[4]);
    rec.radius = std::stod(r[5]);
    rec.radius_corrected = std::stod(r[6]);
    rec.abstain = r[7] == "1";
    rec.seconds = std::stod(r[8]);
    records.push_back(rec);
  }
  return records;
}

}  // namespace gsmooth
