#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "gsmooth/adam.hpp"
#include "gsmooth/layers.hpp"
#include "gsmooth/ops.hpp"
#include "gsmooth/tensor.hpp"

using namespace gsmooth;

namespace {

using Builder = std::function<Tensor(const Tensor&)>;

// Scalarizes an output with fixed coefficients, accumulating in double so
// the finite-difference probe is not limited by f32 summation noise.
double probe_loss(const Tensor& out, const Eigen::VectorXd& c) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    acc += c[i] * static_cast<double>(out.values()[i]);
  return acc;
}

// Central finite differences (h = 1e-3) against the reverse-mode gradient,
// compared in relative 2-norm.
double gradcheck(const Builder& build, Tensor& x, Rng& rng,
                 double h = 1e-3) {
  Tensor out = build(x);
  Eigen::VectorXd c(out.size());
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = nd(rng);

  Eigen::VectorXf g = vjp(out, x, c.cast<float>());

  Eigen::VectorXd fd(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const float keep = x.values()[i];
    x.values()[i] = keep + static_cast<float>(h);
    const double up = probe_loss(build(x), c);
    x.values()[i] = keep - static_cast<float>(h);
    const double dn = probe_loss(build(x), c);
    x.values()[i] = keep;
    fd[i] = (up - dn) / (2.0 * h);
  }
  const double denom = std::max(fd.norm(), 1e-8);
  return (fd - g.cast<double>()).norm() / denom;
}

// Pushes values away from zero so relu kinks do not poison the probe.
void avoid_kinks(Tensor& x, float margin = 0.05f) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    float& v = x.values()[i];
    if (std::fabs(v) < margin) v = (v >= 0.0f) ? margin : -margin;
  }
}

double adjoint_gap(const Tensor& out, const Tensor& in, Rng& rng) {
  std::normal_distribution<float> nd(0.0f, 1.0f);
  Eigen::VectorXf u(out.size()), v(in.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = nd(rng);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = nd(rng);
  const double lhs = u.cast<double>().dot(jvp(out, in, v).cast<double>());
  const double rhs = vjp(out, in, u).cast<double>().dot(v.cast<double>());
  const double scale = std::max({std::fabs(lhs), std::fabs(rhs), 1.0});
  return std::fabs(lhs - rhs) / scale;
}

}  // namespace

TEST_CASE("elementwise ops: gradcheck") {
  Rng rng = make_rng(11);
  Tensor a = Tensor::randn({3, 5}, rng, 1.0f, true);
  Tensor b = Tensor::randn({3, 5}, rng, 1.0f, false);

  CHECK(gradcheck([&](const Tensor& x) { return add(x, b); }, a, rng) < 1e-3);
  CHECK(gradcheck([&](const Tensor& x) { return sub(b, x); }, a, rng) < 1e-3);
  CHECK(gradcheck([&](const Tensor& x) { return mul(x, b); }, a, rng) < 1e-3);
  CHECK(gradcheck([&](const Tensor& x) { return scale(x, -2.5f); }, a, rng) <
        1e-3);
  CHECK(gradcheck([&](const Tensor& x) { return mul(x, x); }, a, rng) < 1e-3);
}

TEST_CASE("activations: gradcheck") {
  Rng rng = make_rng(12);
  Tensor a = Tensor::randn({4, 6}, rng, 1.0f, true);
  avoid_kinks(a);
  CHECK(gradcheck([&](const Tensor& x) { return relu(x); }, a, rng) < 1e-3);
  CHECK(gradcheck([&](const Tensor& x) { return sigmoid(x); }, a, rng) <
        1e-3);
}

TEST_CASE("dense: gradcheck wrt input, weight and bias") {
  Rng rng = make_rng(13);
  Tensor x = Tensor::randn({4, 7}, rng, 1.0f, true);
  Tensor w = Tensor::randn({3, 7}, rng, 0.5f, true);
  Tensor b = Tensor::randn({3}, rng, 0.5f, true);

  CHECK(gradcheck([&](const Tensor& t) { return dense(t, w, b); }, x, rng) <
        1e-3);
  CHECK(gradcheck([&](const Tensor& t) { return dense(x, t, b); }, w, rng) <
        1e-3);
  CHECK(gradcheck([&](const Tensor& t) { return dense(x, w, t); }, b, rng) <
        1e-3);
}

TEST_CASE("conv2d: gradcheck, stride 1 and 2") {
  Rng rng = make_rng(14);
  for (int stride : {1, 2}) {
    Tensor x = Tensor::randn({2, 3, 6, 6}, rng, 1.0f, true);
    Tensor w = Tensor::randn({4, 3, 3, 3}, rng, 0.4f, true);
    Tensor b = Tensor::randn({4}, rng, 0.3f, true);
    CHECK(gradcheck([&](const Tensor& t) { return conv2d(t, w, b, stride); },
                    x, rng) < 1e-3);
    CHECK(gradcheck([&](const Tensor& t) { return conv2d(x, t, b, stride); },
                    w, rng) < 1e-3);
    CHECK(gradcheck([&](const Tensor& t) { return conv2d(x, w, t, stride); },
                    b, rng) < 1e-3);
  }
}

TEST_CASE("group_norm: gradcheck wrt input, gamma and beta") {
  Rng rng = make_rng(15);
  Tensor x = Tensor::randn({2, 4, 3, 3}, rng, 1.0f, true);
  Tensor gamma = Tensor::randn({4}, rng, 0.4f, true);
  Tensor beta = Tensor::randn({4}, rng, 0.4f, true);
  for (int groups : {1, 2, 4}) {
    CHECK(gradcheck(
              [&](const Tensor& t) { return group_norm(t, gamma, beta, groups); },
              x, rng) < 1e-3);
    CHECK(gradcheck(
              [&](const Tensor& t) { return group_norm(x, t, beta, groups); },
              gamma, rng) < 1e-3);
    CHECK(gradcheck(
              [&](const Tensor& t) { return group_norm(x, gamma, t, groups); },
              beta, rng) < 1e-3);
  }
}

TEST_CASE("shape ops: gradcheck") {
  Rng rng = make_rng(16);
  Tensor x = Tensor::randn({2, 3, 4, 4}, rng, 1.0f, true);
  Tensor y = Tensor::randn({2, 2, 4, 4}, rng, 1.0f, false);
  Tensor one = Tensor::randn({1, 3, 4, 4}, rng, 1.0f, true);

  CHECK(gradcheck([&](const Tensor& t) { return upsample2_nearest(t); }, x,
                  rng) < 1e-3);
  CHECK(gradcheck([&](const Tensor& t) { return concat_channels(t, y); }, x,
                  rng) < 1e-3);
  CHECK(gradcheck([&](const Tensor& t) { return concat_channels(y, t); }, x,
                  rng) < 1e-3);
  CHECK(gradcheck([&](const Tensor& t) { return reshape(t, {2, 48}); }, x,
                  rng) < 1e-3);
  CHECK(gradcheck([&](const Tensor& t) { return tile_batch(t, 3); }, one,
                  rng) < 1e-3);
}

TEST_CASE("reductions and losses: gradcheck") {
  Rng rng = make_rng(17);
  Tensor x = Tensor::randn({5, 4}, rng, 1.0f, true);
  Tensor t = Tensor::randn({5, 4}, rng, 1.0f, false);
  // Keep pred - target away from the |.| kink.
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::fabs(x.values()[i] - t.values()[i]) < 0.05f)
      x.values()[i] = t.values()[i] + 0.05f;

  CHECK(gradcheck([&](const Tensor& a) { return sum(a); }, x, rng) < 1e-3);
  CHECK(gradcheck([&](const Tensor& a) { return mean_all(a); }, x, rng) <
        1e-3);
  CHECK(gradcheck([&](const Tensor& a) { return l1_loss(a, t); }, x, rng) <
        1e-3);
  CHECK(gradcheck([&](const Tensor& a) { return dot(a, t); }, x, rng) < 1e-3);

  std::vector<int> labels = {0, 2, 1, 3, 2};
  Tensor logits = Tensor::randn({5, 4}, rng, 1.0f, true);
  CHECK(gradcheck(
            [&](const Tensor& a) { return softmax_cross_entropy(a, labels); },
            logits, rng) < 1e-3);
}

TEST_CASE("composite network: gradcheck through every layer kind") {
  Rng rng = make_rng(18);
  Conv2dLayer c1(2, 4, 3, 1, rng, "c1");
  GroupNormLayer gn(4, 2, "gn");
  Conv2dLayer c2(4, 4, 3, 2, rng, "c2");
  DenseLayer fc(4 * 2 * 2, 3, rng, "fc");

  auto net = [&](const Tensor& in) {
    Tensor h = relu(gn(c1(in)));
    h = relu(c2(h));
    h = reshape(h, {2, 4 * 2 * 2});
    return sigmoid(fc(h));
  };

  Tensor x = Tensor::randn({2, 2, 4, 4}, rng, 1.0f, true);
  CHECK(gradcheck(net, x, rng) < 1e-3);
  CHECK(gradcheck([&](const Tensor& t) {
          Tensor h = relu(gn(c1(x)));
          h = relu(conv2d(h, t, c2.b, 2));
          h = reshape(h, {2, 4 * 2 * 2});
          return sigmoid(fc(h));
        },
                  c2.w, rng) < 1e-3);
}

TEST_CASE("vjp matches brute-force Jacobian columns") {
  Rng rng = make_rng(19);
  const int n_in = 6, n_out = 5;
  Tensor w = Tensor::randn({n_out, n_in}, rng, 0.7f, false);
  Tensor b = Tensor::randn({n_out}, rng, 0.3f, false);
  Tensor x = Tensor::randn({1, n_in}, rng, 1.0f, true);

  auto build = [&](const Tensor& t) { return sigmoid(dense(t, w, b)); };

  // Column-wise finite-difference Jacobian.
  const double h = 1e-3;
  Eigen::MatrixXd jac(n_out, n_in);
  for (int j = 0; j < n_in; ++j) {
    const float keep = x.values()[j];
    x.values()[j] = keep + static_cast<float>(h);
    ArrayF up = build(x).values();
    x.values()[j] = keep - static_cast<float>(h);
    ArrayF dn = build(x).values();
    x.values()[j] = keep;
    for (int i = 0; i < n_out; ++i)
      jac(i, j) = (static_cast<double>(up[i]) - dn[i]) / (2.0 * h);
  }

  Tensor out = build(x);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  for (int rep = 0; rep < 4; ++rep) {
    Eigen::VectorXf u(n_out);
    for (int i = 0; i < n_out; ++i) u[i] = nd(rng);
    Eigen::VectorXd want = jac.transpose() * u.cast<double>();
    Eigen::VectorXd got = vjp(out, x, u).cast<double>();
    CHECK((want - got).norm() / std::max(want.norm(), 1e-8) < 1e-3);
  }
}

TEST_CASE("vjp/jvp adjoint identity per layer kind") {
  Rng rng = make_rng(20);

  {
    Tensor x = Tensor::randn({3, 5}, rng, 1.0f, true);
    Tensor b = Tensor::randn({3, 5}, rng, 1.0f, false);
    CHECK(adjoint_gap(mul(add(x, b), x), x, rng) < 1e-5);
  }
  {
    Tensor x = Tensor::randn({2, 6}, rng, 1.0f, true);
    Tensor w = Tensor::randn({4, 6}, rng, 0.6f, false);
    Tensor b = Tensor::randn({4}, rng, 0.3f, false);
    CHECK(adjoint_gap(sigmoid(dense(x, w, b)), x, rng) < 1e-5);
  }
  {
    Tensor x = Tensor::randn({2, 3, 6, 6}, rng, 1.0f, true);
    Tensor w = Tensor::randn({4, 3, 3, 3}, rng, 0.4f, false);
    Tensor b = Tensor::randn({4}, rng, 0.3f, false);
    CHECK(adjoint_gap(conv2d(x, w, b, 2), x, rng) < 1e-5);
  }
  {
    Tensor x = Tensor::randn({2, 4, 3, 3}, rng, 1.0f, true);
    Tensor gamma = Tensor::full({4}, 1.2f, false);
    Tensor beta = Tensor::zeros({4}, false);
    CHECK(adjoint_gap(group_norm(x, gamma, beta, 2), x, rng) < 1e-5);
  }
  {
    Tensor x = Tensor::randn({2, 3, 4, 4}, rng, 1.0f, true);
    avoid_kinks(x);
    CHECK(adjoint_gap(relu(upsample2_nearest(x)), x, rng) < 1e-5);
  }
  {
    Tensor x = Tensor::randn({1, 2, 4, 4}, rng, 1.0f, true);
    Tensor y = Tensor::randn({3, 2, 4, 4}, rng, 1.0f, false);
    CHECK(adjoint_gap(concat_channels(tile_batch(x, 3), y), x, rng) < 1e-5);
  }
  {
    // Deep composite: the identity must survive an entire network.
    Conv2dLayer c1(2, 4, 3, 1, rng, "c1");
    GroupNormLayer gn(4, 2, "gn");
    DenseLayer fc(4 * 4 * 4, 3, rng, "fc");
    Tensor x = Tensor::randn({2, 2, 4, 4}, rng, 1.0f, true);
    Tensor out = sigmoid(fc(reshape(relu(gn(c1(x))), {2, 4 * 4 * 4})));
    CHECK(adjoint_gap(out, x, rng) < 1e-5);
  }
}

TEST_CASE("backward rejects non-scalar roots and accumulates on repeat") {
  Rng rng = make_rng(21);
  Tensor x = Tensor::randn({2, 3}, rng, 1.0f, true);
  CHECK_THROWS_AS(backward(scale(x, 2.0f)), ShapeError);

  Tensor s = sum(scale(x, 3.0f));
  backward(s);
  ArrayF g1 = x.grad();
  backward(s);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0f * g1[i]));
}

TEST_CASE("Adam drives a least-squares problem to the optimum") {
  Rng rng = make_rng(22);
  Tensor w = Tensor::randn({1, 4}, rng, 1.0f, true);
  Tensor target = Tensor::from({1, 4}, ArrayF::LinSpaced(4, -1.0f, 2.0f));

  ParamList params{{"w", w}};
  Adam opt(params, 5e-2f);
  for (int it = 0; it < 400; ++it) {
    opt.zero_grad();
    Tensor diff = sub(w, target);
    backward(dot(diff, diff));
    opt.step();
  }
  for (Eigen::Index i = 0; i < w.size(); ++i)
    CHECK(std::fabs(w.values()[i] - target.values()[i]) < 1e-3f);
}

TEST_CASE("Adam learning-rate schedule halves every 50 epochs") {
  Rng rng = make_rng(23);
  Tensor w = Tensor::randn({2}, rng, 1.0f, true);
  Adam opt({{"w", w}}, 1e-3f);
  opt.note_epoch(0);
  CHECK(opt.learning_rate() == doctest::Approx(1e-3f));
  opt.note_epoch(49);
  CHECK(opt.learning_rate() == doctest::Approx(1e-3f));
  opt.note_epoch(50);
  CHECK(opt.learning_rate() == doctest::Approx(5e-4f));
  opt.note_epoch(100);
  CHECK(opt.learning_rate() == doctest::Approx(2.5e-4f));
}

TEST_CASE("Adam refuses to step a parameter with no gradient") {
  Rng rng = make_rng(24);
  Tensor w = Tensor::randn({3}, rng, 1.0f, true);
  Adam opt({{"w", w}});
  CHECK_THROWS(opt.step());
}
