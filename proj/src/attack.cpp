#include "gsmooth/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "gsmooth/data_io.hpp"
#include "gsmooth/ops.hpp"

namespace gsmooth {

namespace {

Tensor gaussian_tensor(std::vector<int> dims, double sigma, Rng& rng) {
  Eigen::Index total = 1;
  for (int d : dims) total *= d;
  ArrayF values(total);
  std::normal_distribution<float> nd(0.0f, static_cast<float>(sigma));
  for (Eigen::Index i = 0; i < total; ++i) values[i] = nd(rng);
  return Tensor::from(std::move(dims), std::move(values));
}

// One EoT estimate of the loss and its gradient w.r.t. xi.
double eot_loss(const Classifier& clf, const SurrogateModel& surrogate,
                const SurrogateModel::Encoded& enc, const Eigen::VectorXd& xi,
                int label, int k, const CertifyConfig& ccfg, Rng& rng,
                Eigen::VectorXd* grad_out) {
  const int m = surrogate.config().param_dim;
  Tensor th = thetas_to_tensor(xi.transpose(), /*requires_grad=*/true);
  Tensor shifted =
      add(tile_batch(th, k), gaussian_tensor({k, m}, ccfg.sigma1, rng));
  Tensor lat = add(add(surrogate.f1(shifted), tile_batch(enc.latent, k)),
                   gaussian_tensor({k, surrogate.latent_dim()}, ccfg.sigma2,
                                   rng));
  SurrogateModel::Encoded enc_k{lat, tile_batch(enc.skip0, k),
                                tile_batch(enc.skip1, k)};
  Tensor logits = clf.forward(surrogate.decode(lat, enc_k));
  Tensor loss = softmax_cross_entropy(
      logits, std::vector<int>(static_cast<std::size_t>(k), label));
  if (grad_out) {
    Eigen::VectorXf g = vjp(loss, th, Eigen::VectorXf::Ones(1));
    if (!g.allFinite()) {
      std::ostringstream os;
      os << "eot_pgd: non-finite gradient at xi = [" << xi.transpose()
         << "], loss = " << loss.values()[0];
      throw std::runtime_error(os.str());
    }
    *grad_out = g.cast<double>();
  }
  const double value = loss.values()[0];
  if (!std::isfinite(value))
    throw std::runtime_error("eot_pgd: non-finite loss");
  return value;
}

Eigen::VectorXd project_l2(Eigen::VectorXd xi, double budget) {
  const double norm = xi.norm();
  if (norm > budget) xi *= budget / norm;
  return xi;
}

}  // namespace

AttackRecord eot_pgd(const Classifier& clf, const TransformSpec& spec,
                     const SurrogateModel& surrogate, const Image& image,
                     int label, int sample_id, const AttackConfig& acfg,
                     const CertifyConfig& ccfg) {
  if (acfg.budget < 0.0)
    throw std::invalid_argument("eot_pgd: budget must be >= 0");
  if (acfg.steps < 1 || acfg.eot_samples < 1)
    throw std::invalid_argument(
        "eot_pgd: steps and eot_samples must be >= 1");
  if (surrogate.config().transform_name != spec.name)
    throw std::invalid_argument("eot_pgd: surrogate was trained for '" +
                                surrogate.config().transform_name +
                                "', not '" + spec.name + "'");
  if (label < 0 || label >= clf.num_classes())
    throw std::invalid_argument("eot_pgd: label out of range");

  const int m = surrogate.config().param_dim;
  const double step =
      acfg.step_size > 0.0 ? acfg.step_size : acfg.budget / 10.0;
  Rng rng = make_rng(acfg.seed, static_cast<std::uint64_t>(sample_id));
  SurrogateModel::Encoded enc = surrogate.f2(images_to_tensor({image}));

  Eigen::VectorXd xi = Eigen::VectorXd::Zero(m);
  if (acfg.budget > 0.0) {
    for (int it = 0; it < acfg.steps; ++it) {
      Eigen::VectorXd grad;
      eot_loss(clf, surrogate, enc, xi, label, acfg.eot_samples, ccfg, rng,
               &grad);
      const double gnorm = grad.norm();
      if (gnorm == 0.0) break;  // flat loss: nothing to ascend
      xi = project_l2(xi + (step / gnorm) * grad, acfg.budget);
    }
  }

  AttackRecord rec;
  rec.sample_id = sample_id;
  rec.label = label;
  rec.budget = acfg.budget;
  rec.xi_adv = xi;
  rec.loss_final = eot_loss(clf, surrogate, enc, xi, label, acfg.eot_samples,
                            ccfg, rng, nullptr);

  // Judge on the same smoothed pipeline the certificate speaks about:
  // parameter noise recentered at xi_adv, fresh high-sample vote.
  CertifyConfig judge = ccfg;
  judge.path = CertifyPath::surrogate;
  std::vector<long long> hist =
      smooth_predict(clf, spec, &surrogate, image, judge, judge.n,
                     0xADu + 2 * static_cast<std::uint64_t>(sample_id), xi);
  const int top = static_cast<int>(
      std::max_element(hist.begin(), hist.end()) - hist.begin());
  rec.success = top != label;
  return rec;
}

double empirical_robust_accuracy(const std::vector<AttackRecord>& records) {
  if (records.empty())
    throw std::invalid_argument("empirical_robust_accuracy: no records");
  long long survived = 0;
  for (const AttackRecord& r : records)
    if (!r.success) ++survived;
  return static_cast<double>(survived) /
         static_cast<double>(records.size());
}

void write_attack_csv(const std::vector<AttackRecord>& records,
                      const std::string& path) {
  if (records.empty())
    throw std::invalid_argument("write_attack_csv: no records");
  const Eigen::Index m = records.front().xi_adv.size();
  std::vector<std::string> header = {"sample_id", "budget"};
  for (Eigen::Index j = 0; j < m; ++j)
    header.push_back("xi_" + std::to_string(j));
  header.push_back("success");
  header.push_back("loss_final");

  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  std::vector<std::vector<std::string>> rows;
  rows.reserve(records.size());
  for (const AttackRecord& r : records) {
    if (r.xi_adv.size() != m)
      throw std::invalid_argument(
          "write_attack_csv: mixed parameter dimensions");
    std::vector<std::string> row = {std::to_string(r.sample_id),
                                    num(r.budget)};
    for (Eigen::Index j = 0; j < m; ++j) row.push_back(num(r.xi_adv[j]));
    row.push_back(r.success ? "1" : "0");
    row.push_back(num(r.loss_final));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

std::vector<AttackRecord> read_attack_csv(const std::string& path) {
  std::vector<std::vector<std::string>> rows = read_csv(path);
  if (rows.empty() || rows.front().size() < 4)
    throw FormatError("attack CSV '" + path + "' has a bad header");
  const std::size_t cols = rows.front().size();
  const std::size_t m = cols - 4;
  std::vector<AttackRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != cols)
      throw FormatError("attack CSV '" + path + "' row " +
                        std::to_string(i) + " has " +
                        std::to_string(r.size()) + " fields");
    AttackRecord rec;
    rec.sample_id = std::stoi(r[0]);
    rec.budget = std::stod(r[1]);
    rec.xi_adv.resize(static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j)
      rec.xi_adv[static_cast<Eigen::Index>(j)] = std::stod(r[2 + j]);
    rec.success = r[cols - 2] == "1";
    rec.loss_final = std::stod(r[cols - 1]);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace gsmooth
