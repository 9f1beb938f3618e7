#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gsmooth/common.hpp"
#include "gsmooth/transforms.hpp"

using namespace gsmooth;

namespace {

Eigen::VectorXd vec1(double a) {
  Eigen::VectorXd v(1);
  v[0] = a;
  return v;
}
Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

// Band-limited test image: a few low-frequency harmonics well inside [0,1],
// so spectral interpolation and clamping introduce no artifacts.
Image smooth_image(int n = 16) {
  Image im = make_image(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double ty = 2.0 * M_PI * y / n, tx = 2.0 * M_PI * x / n;
      im.at(0, y, x) = static_cast<float>(0.5 + 0.18 * std::sin(ty) +
                                          0.13 * std::cos(tx) +
                                          0.08 * std::sin(ty + 2.0 * tx));
    }
  return im;
}

// Textured image with block structure plus per-pixel noise; interpolation
// losses show up strongly on it.
Image textured_image(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<float> ud(0.1f, 0.9f);
  Image im = make_image(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      im.at(0, y, x) = 0.5f * ((((y / 4) + (x / 4)) % 2) ? 0.8f : 0.2f) +
                       0.5f * ud(rng);
  return im;
}

double max_pixel_diff(const Image& a, const Image& b) {
  return (a.pixels - b.pixels).abs().maxCoeff();
}

}  // namespace

TEST_CASE("registry: all nine families present with finite boxes") {
  const char* names[] = {"translation",     "gaussian-blur",
                         "brightness-contrast", "rotation",
                         "scaling",         "rotational-blur",
                         "defocus-blur",    "zoom-blur",
                         "pixelate"};
  for (const char* n : names) {
    const TransformSpec& s = transform_spec(n);
    CHECK(s.lo.size() == s.param_dim);
    CHECK(s.hi.size() == s.param_dim);
    for (int i = 0; i < s.param_dim; ++i) {
      CHECK(std::isfinite(s.lo[i]));
      CHECK(std::isfinite(s.hi[i]));
      CHECK(s.lo[i] < s.hi[i]);
    }
    CHECK(s.resolvable ==
          (s.kind == TransformKind::translation ||
           s.kind == TransformKind::gaussian_blur ||
           s.kind == TransformKind::brightness_contrast));
  }
  CHECK_THROWS_AS(transform_spec("motion-blur"), FormatError);
}

TEST_CASE("identity: neutral parameter reproduces the image exactly") {
  Image x = textured_image(16, 31);
  for (const TransformSpec& s : all_transform_specs()) {
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(s.param_dim);
    Image y = apply(s, zero, x);
    CHECK_MESSAGE(max_pixel_diff(x, y) == 0.0, s.name);
  }
}

TEST_CASE("apply rejects parameters outside P and bad dims") {
  Image x = smooth_image();
  const TransformSpec& tr = transform_spec("translation");
  CHECK_THROWS_AS(apply(tr, vec2(100.0, 0.0), x), std::invalid_argument);
  CHECK_THROWS_AS(apply(tr, vec1(1.0), x), ShapeError);
  const TransformSpec& gb = transform_spec("gaussian-blur");
  CHECK_THROWS_AS(apply(gb, vec1(-0.5), x), std::invalid_argument);
  CHECK(theta_in_box(tr, vec2(8.0, -8.0)));
  CHECK(!theta_in_box(tr, vec2(8.1, 0.0)));
  Eigen::VectorXd clamped = clamp_to_box(tr, vec2(9.3, -12.0));
  CHECK(clamped[0] == 8.0);
  CHECK(clamped[1] == -8.0);
}

TEST_CASE("rotation by 90 degrees permutes a 2x2 image one quarter turn") {
  Image x = make_image(2, 2, 1);
  x.at(0, 0, 0) = 0.1f;
  x.at(0, 0, 1) = 0.2f;
  x.at(0, 1, 0) = 0.3f;
  x.at(0, 1, 1) = 0.4f;
  Image y = apply(transform_spec("rotation"), vec1(90.0), x);
  CHECK(y.at(0, 0, 0) == doctest::Approx(0.2f));
  CHECK(y.at(0, 0, 1) == doctest::Approx(0.4f));
  CHECK(y.at(0, 1, 1) == doctest::Approx(0.3f));
  CHECK(y.at(0, 1, 0) == doctest::Approx(0.1f));
}

TEST_CASE("integer translation is an exact circular roll") {
  Image x = textured_image(16, 32);
  Image y = apply(transform_spec("translation"), vec2(3.0, -2.0), x);
  for (int yy = 0; yy < 16; ++yy)
    for (int xx = 0; xx < 16; ++xx)
      CHECK(y.at(0, yy, xx) ==
            x.at(0, (yy + 2 + 16) % 16, (xx - 3 + 16) % 16));
}

TEST_CASE("compose_resolvable: parameter algebra") {
  const TransformSpec& tr = transform_spec("translation");
  Eigen::VectorXd g = compose_resolvable(tr, vec2(1.0, 0.0), vec2(2.0, 0.0));
  CHECK(g[0] == 3.0);
  CHECK(g[1] == 0.0);

  const TransformSpec& gb = transform_spec("gaussian-blur");
  CHECK(compose_resolvable(gb, vec1(1.5), vec1(2.0))[0] == 3.5);

  const TransformSpec& bc = transform_spec("brightness-contrast");
  Eigen::VectorXd c = compose_resolvable(bc, vec2(0.2, 0.1), vec2(0.1, -0.2));
  CHECK(c[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(std::exp(0.2) * -0.2 + 0.1).epsilon(1e-12));

  CHECK_THROWS_AS(
      compose_resolvable(transform_spec("rotation"), vec1(5), vec1(5)),
      std::invalid_argument);
  // Composition leaving P is rejected.
  CHECK_THROWS_AS(compose_resolvable(tr, vec2(6.0, 0.0), vec2(6.0, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("resolvability residual: translation exact to 1e-6") {
  Image x = smooth_image();
  const TransformSpec& tr = transform_spec("translation");
  const Eigen::VectorXd theta = vec2(1.37, -0.81), xi = vec2(-2.45, 1.92);
  Image two_step = apply(tr, theta, apply(tr, xi, x));
  Image one_step = apply(tr, compose_resolvable(tr, theta, xi), x);
  CHECK(max_pixel_diff(two_step, one_step) <= 1e-6);
}

TEST_CASE("resolvability residual: brightness-contrast exact to 1e-6") {
  // Stay well inside [0,1] so the clamp never engages.
  Image x = smooth_image();
  x.pixels = 0.35f + 0.25f * (x.pixels - 0.5f + 0.5f);
  const TransformSpec& bc = transform_spec("brightness-contrast");
  const Eigen::VectorXd theta = vec2(0.08, -0.05), xi = vec2(-0.06, 0.09);
  Image two_step = apply(bc, theta, apply(bc, xi, x));
  Image one_step = apply(bc, compose_resolvable(bc, theta, xi), x);
  CHECK(max_pixel_diff(two_step, one_step) <= 1e-6);
}

TEST_CASE("resolvability residual: gaussian-blur semigroup to 1e-3") {
  Image x = textured_image(16, 33);
  const TransformSpec& gb = transform_spec("gaussian-blur");
  const Eigen::VectorXd theta = vec1(1.3), xi = vec1(2.1);
  Image two_step = apply(gb, theta, apply(gb, xi, x));
  Image one_step = apply(gb, compose_resolvable(gb, theta, xi), x);
  CHECK(max_pixel_diff(two_step, one_step) <= 1e-3);
}

TEST_CASE("resolvable m_star: closed forms and grid value") {
  CHECK(resolvable_m_star(transform_spec("translation")) == 1.0);
  CHECK(resolvable_m_star(transform_spec("gaussian-blur")) == 1.0);
  CHECK(resolvable_m_star(transform_spec("brightness-contrast")) ==
        doctest::Approx(1.8315555302699322).epsilon(1e-6));
  CHECK_THROWS_AS(resolvable_m_star(transform_spec("pixelate")),
                  std::invalid_argument);
}

TEST_CASE("continuity in theta on smooth families") {
  Image x = smooth_image();
  const double h = 1e-2;
  const double xnorm = std::sqrt(
      static_cast<double>((x.pixels.cast<double>() * x.pixels.cast<double>()).sum()));
  struct Probe {
    const char* name;
    Eigen::VectorXd theta;
    double C;
  };
  std::vector<Probe> probes = {
      {"translation", vec2(1.3, -0.7), 10.0},
      {"gaussian-blur", vec1(1.0), 5.0},
      {"brightness-contrast", vec2(0.1, 0.05), 5.0},
      {"rotation", vec1(12.0), 5.0},
      {"scaling", vec1(0.1), 20.0},
      {"rotational-blur", vec1(4.0), 5.0},
      {"defocus-blur", vec1(1.2), 5.0},
      {"zoom-blur", vec1(0.1), 20.0},
  };
  for (const Probe& p : probes) {
    const TransformSpec& s = transform_spec(p.name);
    Image base = apply(s, p.theta, x);
    for (int i = 0; i < s.param_dim; ++i) {
      Eigen::VectorXd t2 = p.theta;
      t2[i] += h;
      Image moved = apply(s, t2, x);
      const double diff = std::sqrt(static_cast<double>(
          ((moved.pixels - base.pixels).cast<double>().square()).sum()));
      CHECK_MESSAGE(diff / xnorm <= p.C * h, p.name);
    }
  }
}

TEST_CASE("non-resolvable witnesses: no single parameter reproduces a composition") {
  Image x = textured_image(16, 34);

  auto min_grid_residual = [&](const char* name, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& xi, double glo,
                               double ghi) {
    const TransformSpec& s = transform_spec(name);
    Image composed = apply(s, theta, apply(s, xi, x));
    double best = 1e9;
    const int steps = 241;
    for (int k = 0; k < steps; ++k) {
      Eigen::VectorXd g = vec1(glo + (ghi - glo) * k / (steps - 1.0));
      best = std::min(best, max_pixel_diff(composed, apply(s, g, x)));
    }
    return best;
  };

  // 10x the loosest resolvable composition tolerance (1e-3).
  CHECK(min_grid_residual("rotation", vec1(20.0), vec1(17.0), 0.0, 60.0) >
        1e-2);
  CHECK(min_grid_residual("zoom-blur", vec1(0.2), vec1(0.15), 0.0, 0.3) >
        1e-2);
  CHECK(min_grid_residual("pixelate", vec1(0.3), vec1(0.2), 0.0, 0.5) >
        1e-2);
}
