#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>
#include <cmath>
#include <cstdio>

#include "gsmooth/certify.hpp"
#include "gsmooth/stats.hpp"

using namespace gsmooth;

namespace {

// A classifier with every weight zeroed emits identical logits for every
// image, so argmax resolves to class 0 deterministically. That turns the
// whole certification pipeline into closed-form arithmetic: k = n, so
// p_a_lower = alpha^(1/n) exactly.
Classifier constant_classifier(int image_size, int classes) {
  Classifier clf(image_size, 1, classes, /*seed=*/3);
  for (NamedParam& p : clf.parameters()) p.tensor.values().setZero();
  return clf;
}

Image test_image(std::uint64_t seed = 5) {
  return generate_synthetic_shapes(4, 16, 4, seed).images[0];
}

SurrogateConfig tiny_cfg() {
  SurrogateConfig cfg;
  cfg.transform_name = "brightness-contrast";
  cfg.param_dim = 2;
  cfg.image_size = 16;
  cfg.channels = 1;
  cfg.c0 = 2;
  cfg.c1 = 2;
  cfg.c2 = 2;
  return cfg;
}

}  // namespace

TEST_CASE("path names round-trip and unknown names are rejected") {
  CHECK(certify_path_from_name("resolvable") == CertifyPath::resolvable);
  CHECK(certify_path_from_name("surrogate") == CertifyPath::surrogate);
  for (CertifyPath p : {CertifyPath::resolvable, CertifyPath::surrogate})
    CHECK(certify_path_from_name(certify_path_name(p)) == p);
  CHECK_THROWS_AS(certify_path_from_name("exact"), FormatError);
}

TEST_CASE("smooth_predict histogram is deterministic and sums to count") {
  Classifier clf = constant_classifier(16, 4);
  const TransformSpec& spec = transform_spec("translation");
  CertifyConfig cfg;
  cfg.sigma1 = 1.0;
  cfg.seed = 9;
  std::vector<long long> h1 =
      smooth_predict(clf, spec, nullptr, test_image(), cfg, 130, 7);
  std::vector<long long> h2 =
      smooth_predict(clf, spec, nullptr, test_image(), cfg, 130, 7);
  REQUIRE(h1.size() == 4);
  CHECK(h1 == h2);
  CHECK(h1[0] == 130);  // constant classifier: everything lands in class 0
  CHECK(h1[1] + h1[2] + h1[3] == 0);
}

TEST_CASE("resolvable translation radius matches the closed form") {
  // k = n = 1000, alpha = 1e-3: p_a_lower = 0.001^(1/1000) = 0.9931160484,
  // and with sigma1 = 1, M* = 1 the radius is
  // (ppf(p_a) - ppf(1 - p_a)) / 2 = ppf(p_a) = 2.4632626148.
  Classifier clf = constant_classifier(16, 4);
  const TransformSpec& spec = transform_spec("translation");
  CertifyConfig cfg;
  cfg.sigma1 = 1.0;
  cfg.n0 = 25;
  cfg.n = 1000;
  cfg.alpha = 1e-3;
  cfg.seed = 11;
  CertificationRecord rec =
      certify_sample(clf, spec, nullptr, test_image(), 0, 42, cfg);
  CHECK(rec.sample_id == 42);
  CHECK(rec.label == 0);
  CHECK(rec.prediction == 0);
  CHECK_FALSE(rec.abstain);
  CHECK(rec.p_a_lower == doctest::Approx(0.9931160484209338).epsilon(1e-10));
  CHECK(rec.m_star == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rec.radius == doctest::Approx(2.4632626147808114).epsilon(1e-6));
  CHECK(rec.radius_corrected == doctest::Approx(rec.radius).epsilon(1e-12));
  CHECK(rec.seconds >= 0.0);
}

TEST_CASE("doubling sigma1 doubles the resolvable radius") {
  Classifier clf = constant_classifier(16, 4);
  const TransformSpec& spec = transform_spec("translation");
  CertifyConfig cfg;
  cfg.sigma1 = 0.5;
  cfg.n0 = 10;
  cfg.n = 400;
  cfg.seed = 21;
  CertificationRecord lo =
      certify_sample(clf, spec, nullptr, test_image(), 0, 0, cfg);
  cfg.sigma1 = 1.0;
  CertificationRecord hi =
      certify_sample(clf, spec, nullptr, test_image(), 0, 0, cfg);
  REQUIRE_FALSE(lo.abstain);
  REQUIRE_FALSE(hi.abstain);
  // Constant classifier: both runs see k = n, so p_a_lower is identical
  // and only the sigma scaling differs.
  CHECK(hi.p_a_lower == doctest::Approx(lo.p_a_lower).epsilon(1e-12));
  CHECK(hi.radius == doctest::Approx(2.0 * lo.radius).epsilon(1e-9));
}

TEST_CASE("surrogate path applies the standard-normal radius and correction") {
  // Same deterministic p_a = 0.001^(1/1000); with M* = 2.1 the radius is
  // ppf(p_a)/2.1 = 1.1729821975 and the Theorem-3 correction with
  // a_hat = 3, epsilon = 1e-2 scales it by 0.97.
  Classifier clf = constant_classifier(16, 4);
  const TransformSpec& spec = transform_spec("brightness-contrast");
  SurrogateModel model(tiny_cfg(), /*seed=*/17);
  CertifyConfig cfg;
  cfg.path = CertifyPath::surrogate;
  cfg.sigma1 = 0.25;
  cfg.sigma2 = 0.10;
  cfg.n0 = 25;
  cfg.n = 1000;
  cfg.alpha = 1e-3;
  cfg.m_star = 2.1;
  cfg.a_hat = 3.0;
  cfg.epsilon = 1e-2;
  cfg.seed = 13;
  CertificationRecord rec =
      certify_sample(clf, spec, &model, test_image(), 0, 0, cfg);
  REQUIRE_FALSE(rec.abstain);
  CHECK(rec.m_star == doctest::Approx(2.1).epsilon(1e-12));
  CHECK(rec.radius == doctest::Approx(1.1729821975146721).epsilon(1e-6));
  CHECK(rec.radius_corrected ==
        doctest::Approx(1.137792731589232).epsilon(1e-6));
  CHECK(rec.radius_corrected == doctest::Approx(0.97 * rec.radius)
                                    .epsilon(1e-12));
}

TEST_CASE("the corrected radius clamps to [0, R]") {
  Classifier clf = constant_classifier(16, 4);
  const TransformSpec& spec = transform_spec("translation");
  CertifyConfig cfg;
  cfg.sigma1 = 1.0;
  cfg.n0 = 10;
  cfg.n = 400;
  cfg.seed = 31;
  cfg.a_hat = 250.0;  // a_hat * epsilon > 1: correction would go negative
  cfg.epsilon = 0.01;
  CertificationRecord rec =
      certify_sample(clf, spec, nullptr, test_image(), 0, 0, cfg);
  REQUIRE_FALSE(rec.abstain);
  CHECK(rec.radius > 0.0);
  CHECK(rec.radius_corrected == 0.0);
}

TEST_CASE("a weak confidence bound abstains with empty radius fields") {
  // Even a perfect vote count cannot clear p > 1/2 at n = 2:
  // 0.001^(1/2) = 0.0316.
  Classifier clf = constant_classifier(16, 4);
  const TransformSpec& spec = transform_spec("translation");
  CertifyConfig cfg;
  cfg.sigma1 = 1.0;
  cfg.n0 = 1;
  cfg.n = 2;
  cfg.seed = 7;
  CertificationRecord rec =
      certify_sample(clf, spec, nullptr, test_image(), 1, 3, cfg);
  CHECK(rec.abstain);
  CHECK(rec.prediction == 0);
  CHECK(rec.p_a_lower == doctest::Approx(0.03162277660168379).epsilon(1e-10));
  CHECK(rec.radius == 0.0);
  CHECK(rec.radius_corrected == 0.0);
}

TEST_CASE("a trained classifier certifies an in-distribution sample") {
  Dataset ds = generate_synthetic_shapes(240, 16, 2, 14);
  auto [train, val] = split_dataset(ds, 192, 14);
  Classifier clf(16, 1, 2, 15);
  ClassifierTrainOptions opt;
  opt.epochs = 25;
  opt.seed = 15;
  const double acc = train_classifier(clf, train, val, opt);
  REQUIRE(acc >= 0.8);

  // Pick a correctly classified validation image and smooth with a small
  // sigma so the votes stay coherent.
  int idx = -1;
  std::vector<int> preds = clf.predict(val.images);
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == val.labels[i]) {
      idx = static_cast<int>(i);
      break;
    }
  REQUIRE(idx >= 0);

  CertifyConfig cfg;
  cfg.sigma1 = 0.25;
  cfg.n0 = 20;
  cfg.n = 300;
  cfg.alpha = 0.01;
  cfg.seed = 41;
  const TransformSpec& spec = transform_spec("translation");
  CertificationRecord rec = certify_sample(clf, spec, nullptr,
                                           val.images[idx], val.labels[idx],
                                           idx, cfg);
  if (!rec.abstain) {
    CHECK(rec.p_a_lower > 0.5);
    CHECK(rec.radius > 0.0);
    CHECK(rec.radius_corrected <= rec.radius);
    CHECK(rec.prediction == val.labels[idx]);
  }
}

TEST_CASE("error-ratio bound dominates the affine norm and scales linearly") {
  SurrogateModel model(tiny_cfg(), 43);
  const TransformSpec& spec = transform_spec("brightness-contrast");
  Eigen::MatrixXd grid(3, 2);
  grid << -0.4, -0.4, 0.0, 0.0, 0.4, 0.4;
  std::vector<Image> cal = {test_image(2), test_image(6)};

  const double a1_norm =
      Eigen::JacobiSVD<Eigen::MatrixXf>(model.a1_matrix()).singularValues()(0);
  const double a10 = estimate_error_ratio_A(model, spec, cal, grid, 10.0);
  CHECK(a10 >= 10.0 * a1_norm * (1.0 - 1e-6));
  const double a20 = estimate_error_ratio_A(model, spec, cal, grid, 20.0);
  CHECK(a20 == doctest::Approx(2.0 * a10).epsilon(1e-9));

  CHECK_THROWS_AS(estimate_error_ratio_A(model, spec, {}, grid),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      estimate_error_ratio_A(model, spec, cal, Eigen::MatrixXd(2, 1)),
      std::invalid_argument);
}

TEST_CASE("latent gauge normalization preserves the decoded function") {
  SurrogateModel model(tiny_cfg(), 47);
  const TransformSpec& spec = transform_spec("brightness-contrast");
  Eigen::MatrixXd grid(2, 2);
  grid << -0.4, 0.4, 0.2, -0.1;
  std::vector<Image> cal = {test_image(3)};

  // Decoded outputs at a few probe points, before the gauge change.
  std::vector<Image> before;
  for (Eigen::Index r = 0; r < grid.rows(); ++r)
    before.push_back(model.evaluate(grid.row(r).transpose(), cal[0]));

  const double s = normalize_latent_gauge(model, spec, cal, grid);
  CHECK(s > 0.0);
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    Image after = model.evaluate(grid.row(r).transpose(), cal[0]);
    CHECK((after.pixels - before[r].pixels).abs().maxCoeff() <= 1e-5f);
  }
  // The error-ratio bound collapses to the bare multiplier: the max norm
  // is 1 by construction after the rescale.
  const double ratio = estimate_error_ratio_A(model, spec, cal, grid, 10.0);
  CHECK(ratio == doctest::Approx(10.0).epsilon(1e-3));
  // Idempotence up to rounding: a second pass finds scale ~ 1.
  const double s2 = normalize_latent_gauge(model, spec, cal, grid);
  CHECK(s2 == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("certified accuracy is monotone in the threshold") {
  std::vector<CertificationRecord> recs(4);
  recs[0] = {0, 1, 1, 0.99, 1.0, 0.8, 0.7, false, 0.1};
  recs[1] = {1, 0, 0, 0.95, 1.0, 0.3, 0.2, false, 0.1};
  recs[2] = {2, 1, 0, 0.90, 1.0, 0.5, 0.5, false, 0.1};  // wrong class
  recs[3] = {3, 0, 0, 0.40, 0.0, 0.0, 0.0, true, 0.1};   // abstained
  std::vector<CertifiedAccuracyRow> rows =
      certified_accuracy_report(recs, {0.0, 0.2, 0.5, 1.0});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].accuracy == doctest::Approx(0.5));   // both correct certs
  CHECK(rows[1].accuracy == doctest::Approx(0.5));
  CHECK(rows[2].accuracy == doctest::Approx(0.25));  // only the 0.7 radius
  CHECK(rows[3].accuracy == doctest::Approx(0.0));
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i].accuracy <= rows[i - 1].accuracy);

  std::vector<CertificationRecord> abstained(2);
  abstained[0].abstain = abstained[1].abstain = true;
  for (const CertifiedAccuracyRow& r :
       certified_accuracy_report(abstained, {0.0, 0.1}))
    CHECK(r.accuracy == 0.0);
  CHECK_THROWS_AS(certified_accuracy_report({}, {0.0}),
                  std::invalid_argument);
}

TEST_CASE("certification CSV round-trips every field") {
  std::vector<CertificationRecord> recs(2);
  recs[0] = {7, 1, 1, 0.9876543210123456, 1.8315555302699322,
             0.6102626502593335, 0.5919547707515535, false, 1.25};
  recs[1] = {8, 0, 2, 0.25, 0.0, 0.0, 0.0, true, 0.5};
  const std::string path = "certify_roundtrip.csv";
  write_certification_csv(recs, path);
  std::vector<CertificationRecord> back = read_certification_csv(path);
  std::remove(path.c_str());
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].sample_id == recs[i].sample_id);
    CHECK(back[i].label == recs[i].label);
    CHECK(back[i].prediction == recs[i].prediction);
    CHECK(back[i].p_a_lower == recs[i].p_a_lower);
    CHECK(back[i].m_star == recs[i].m_star);
    CHECK(back[i].radius == recs[i].radius);
    CHECK(back[i].radius_corrected == recs[i].radius_corrected);
    CHECK(back[i].abstain == recs[i].abstain);
    CHECK(back[i].seconds == recs[i].seconds);
  }
  CHECK_THROWS_AS(read_certification_csv("no_such_certification.csv"),
                  std::exception);
}

TEST_CASE("configuration errors are rejected up front") {
  Classifier clf = constant_classifier(16, 4);
  Image img = test_image();
  CertifyConfig cfg;
  cfg.n0 = 10;
  cfg.n = 100;

  SUBCASE("surrogate path without a model") {
    cfg.path = CertifyPath::surrogate;
    cfg.m_star = 1.0;
    CHECK_THROWS_AS(certify_sample(clf, transform_spec("brightness-contrast"),
                                   nullptr, img, 0, 0, cfg),
                    std::invalid_argument);
  }
  SUBCASE("resolvable path on a non-resolvable family") {
    CHECK_THROWS_AS(
        certify_sample(clf, transform_spec("rotation"), nullptr, img, 0, 0,
                       cfg),
        std::invalid_argument);
  }
  SUBCASE("surrogate trained for a different family") {
    SurrogateModel model(tiny_cfg(), 3);
    cfg.path = CertifyPath::surrogate;
    cfg.m_star = 1.0;
    CHECK_THROWS_AS(certify_sample(clf, transform_spec("rotation"), &model,
                                   img, 0, 0, cfg),
                    std::invalid_argument);
  }
  SUBCASE("surrogate path needs a positive M*") {
    SurrogateModel model(tiny_cfg(), 3);
    cfg.path = CertifyPath::surrogate;
    cfg.m_star = 0.0;
    CHECK_THROWS_AS(certify_sample(clf, transform_spec("brightness-contrast"),
                                   &model, img, 0, 0, cfg),
                    std::invalid_argument);
  }
  SUBCASE("degenerate alpha and sample budgets") {
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(certify_sample(clf, transform_spec("translation"),
                                   nullptr, img, 0, 0, cfg),
                    std::invalid_argument);
    cfg.alpha = 0.001;
    cfg.n = cfg.n0;
    CHECK_THROWS_AS(certify_sample(clf, transform_spec("translation"),
                                   nullptr, img, 0, 0, cfg),
                    std::invalid_argument);
    CHECK_THROWS_AS(smooth_predict(clf, transform_spec("translation"),
                                   nullptr, img, cfg, 0, 0),
                    std::invalid_argument);
  }
}
