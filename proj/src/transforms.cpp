#include "gsmooth/transforms.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>
#include <sstream>

namespace gsmooth {

namespace {

std::vector<TransformSpec> build_registry() {
  auto vec1 = [](double a) {
    Eigen::VectorXd v(1);
    v[0] = a;
    return v;
  };
  auto vec2 = [](double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
  };
  std::vector<TransformSpec> reg;
  reg.push_back({TransformKind::translation, "translation", 2, vec2(-8, -8),
                 vec2(8, 8), true, 1.0});
  reg.push_back({TransformKind::gaussian_blur, "gaussian-blur", 1, vec1(0),
                 vec1(9), true, 1.0});
  reg.push_back({TransformKind::brightness_contrast, "brightness-contrast",
                 2, vec2(-0.4, -0.4), vec2(0.4, 0.4), true, std::nullopt});
  reg.push_back({TransformKind::rotation, "rotation", 1, vec1(-180),
                 vec1(180), false, std::nullopt});
  reg.push_back({TransformKind::scaling, "scaling", 1, vec1(-0.3), vec1(0.3),
                 false, std::nullopt});
  reg.push_back({TransformKind::rotational_blur, "rotational-blur", 1,
                 vec1(0), vec1(10), false, std::nullopt});
  reg.push_back({TransformKind::defocus_blur, "defocus-blur", 1, vec1(0),
                 vec1(3), false, std::nullopt});
  reg.push_back({TransformKind::zoom_blur, "zoom-blur", 1, vec1(0),
                 vec1(0.3), false, std::nullopt});
  reg.push_back({TransformKind::pixelate, "pixelate", 1, vec1(0), vec1(0.5),
                 false, std::nullopt});
  return reg;
}

int mod(int a, int n) {
  int r = a % n;
  return r < 0 ? r + n : r;
}

bool near_integer(double v) { return std::fabs(v - std::round(v)) < 1e-12; }

// Band-limited periodic interpolation kernel for a fractional circular
// shift d over length n. For even n the Nyquist bin is dropped (the only
// spectral treatment under which fractional shifts compose additively);
// integer shifts are handled by exact rolls elsewhere and never reach this.
std::vector<double> shift_kernel(int n, double d) {
  const int kmax = (n % 2 == 0) ? n / 2 - 1 : (n - 1) / 2;
  std::vector<double> ker(n);
  for (int t = 0; t < n; ++t) {
    const double u = 2.0 * M_PI * (t - d) / n;
    double acc = 1.0;
    for (int k = 1; k <= kmax; ++k) acc += 2.0 * std::cos(k * u);
    ker[t] = acc / n;
  }
  return ker;
}

// Circular translation by (dx, dy): exact roll on integer shifts, spectral
// interpolation otherwise; exactly additive either way (up to the Nyquist
// projection noted above).
Image translate(const Image& in, double dx, double dy) {
  const int H = in.height, W = in.width;
  Image out = in;
  if (near_integer(dx) && near_integer(dy)) {
    const int ix = static_cast<int>(std::lround(dx));
    const int iy = static_cast<int>(std::lround(dy));
    for (int c = 0; c < in.channels; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          out.at(c, y, x) = in.at(c, mod(y - iy, H), mod(x - ix, W));
    return out;
  }
  const std::vector<double> kx = shift_kernel(W, dx);
  const std::vector<double> ky = shift_kernel(H, dy);
  Image tmp = in;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int m = 0; m < W; ++m) acc += in.at(c, y, m) * kx[mod(x - m, W)];
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
  for (int c = 0; c < in.channels; ++c)
    for (int x = 0; x < W; ++x)
      for (int y = 0; y < H; ++y) {
        double acc = 0.0;
        for (int m = 0; m < H; ++m) acc += tmp.at(c, m, x) * ky[mod(y - m, H)];
        out.at(c, y, x) = static_cast<float>(acc);
      }
  return out;
}

// Separable circular Gaussian blur parameterized by kernel variance, so
// that blur(a) then blur(b) equals blur(a+b) up to truncation error.
Image gaussian_blur(const Image& in, double variance) {
  if (variance <= 0.0) return in;
  const double sigma = std::sqrt(variance);
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> ker(2 * radius + 1);
  double norm = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    ker[t + radius] = std::exp(-0.5 * t * t / variance);
    norm += ker[t + radius];
  }
  for (double& k : ker) k /= norm;

  const int H = in.height, W = in.width;
  Image tmp = in, out = in;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t)
          acc += ker[t + radius] * in.at(c, y, mod(x - t, W));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t)
          acc += ker[t + radius] * tmp.at(c, mod(y - t, H), x);
        out.at(c, y, x) = static_cast<float>(acc);
      }
  return out;
}

float bilinear(const Image& in, int c, double sy, double sx) {
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const double fy = sy - y0, fx = sx - x0;
  auto px = [&](int y, int x) -> double {
    if (y < 0 || y >= in.height || x < 0 || x >= in.width) return 0.0;
    return in.at(c, y, x);
  };
  const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                   fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
  return static_cast<float>(v);
}

Image rotate(const Image& in, double degrees) {
  if (degrees == 0.0) return in;
  const double rad = degrees * M_PI / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (in.height - 1) / 2.0, cx = (in.width - 1) / 2.0;
  Image out = in;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        const double ry = y - cy, rx = x - cx;
        // Inverse rotation back into the source image.
        const double sy = cy + (cs * ry + sn * rx);
        const double sx = cx + (-sn * ry + cs * rx);
        out.at(c, y, x) = bilinear(in, c, sy, sx);
      }
  return out;
}

Image rescale(const Image& in, double factor) {
  if (factor == 1.0) return in;
  if (factor <= 0.0) throw std::invalid_argument("scaling factor must be > 0");
  const double cy = (in.height - 1) / 2.0, cx = (in.width - 1) / 2.0;
  Image out = in;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        const double sy = cy + (y - cy) / factor;
        const double sx = cx + (x - cx) / factor;
        out.at(c, y, x) = bilinear(in, c, sy, sx);
      }
  return out;
}

Image average_of(const std::vector<Image>& frames) {
  Image out = frames[0];
  out.pixels.setZero();
  for (const Image& f : frames) out.pixels += f.pixels;
  out.pixels /= static_cast<float>(frames.size());
  return out;
}

Image rotational_blur(const Image& in, double alpha) {
  if (alpha == 0.0) return in;
  const int K = 11;
  std::vector<Image> frames;
  frames.reserve(K);
  for (int k = 0; k < K; ++k)
    frames.push_back(rotate(in, alpha * k / (K - 1)));
  return average_of(frames);
}

Image zoom_blur(const Image& in, double alpha) {
  if (alpha == 0.0) return in;
  const int K = 11;
  std::vector<Image> frames;
  frames.reserve(K);
  for (int k = 0; k < K; ++k)
    frames.push_back(rescale(in, 1.0 + alpha * k / (K - 1)));
  return average_of(frames);
}

// Disk kernel of radius r with soft (linear-ramp) edge; degenerates to the
// identity as r -> 0 because normalization leaves only the center tap.
Image defocus_blur(const Image& in, double r) {
  if (r <= 0.0) return in;
  const int radius = static_cast<int>(std::ceil(r + 0.5));
  const int n = 2 * radius + 1;
  std::vector<double> ker(static_cast<size_t>(n) * n);
  double norm = 0.0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const double dist = std::sqrt(double(dy) * dy + double(dx) * dx);
      const double w = std::clamp(r + 0.5 - dist, 0.0, 1.0);
      ker[(dy + radius) * n + (dx + radius)] = w;
      norm += w;
    }
  for (double& k : ker) k /= norm;

  Image out = in;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        double acc = 0.0;
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx)
            acc += ker[(dy + radius) * n + (dx + radius)] *
                   in.at(c, mod(y - dy, in.height), mod(x - dx, in.width));
        out.at(c, y, x) = static_cast<float>(acc);
      }
  return out;
}

// Exact box-overlap weights for resizing a length-`from` axis to `to`.
std::vector<std::vector<std::pair<int, double>>> area_weights(int from,
                                                              int to) {
  std::vector<std::vector<std::pair<int, double>>> w(to);
  const double step = static_cast<double>(from) / to;
  for (int i = 0; i < to; ++i) {
    const double lo = i * step, hi = (i + 1) * step;
    for (int s = static_cast<int>(std::floor(lo));
         s < static_cast<int>(std::ceil(hi)); ++s) {
      const double overlap =
          std::min<double>(hi, s + 1) - std::max<double>(lo, s);
      if (overlap > 1e-12) w[i].push_back({s, overlap / step});
    }
  }
  return w;
}

Image area_downsample(const Image& in, int h2, int w2) {
  const auto wy = area_weights(in.height, h2);
  const auto wx = area_weights(in.width, w2);
  Image out = make_image(h2, w2, in.channels);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x) {
        double acc = 0.0;
        for (const auto& [sy, ay] : wy[y])
          for (const auto& [sx, ax] : wx[x]) acc += ay * ax * in.at(c, sy, sx);
        out.at(c, y, x) = static_cast<float>(acc);
      }
  return out;
}

Image bilinear_upsample(const Image& in, int h2, int w2) {
  Image out = make_image(h2, w2, in.channels);
  const double ry = static_cast<double>(in.height) / h2;
  const double rx = static_cast<double>(in.width) / w2;
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x) {
        // Pixel-center alignment with edge clamping (no dark borders).
        double sy = std::clamp((y + 0.5) * ry - 0.5, 0.0,
                               static_cast<double>(in.height - 1));
        double sx = std::clamp((x + 0.5) * rx - 0.5, 0.0,
                               static_cast<double>(in.width - 1));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x0 = static_cast<int>(std::floor(sx));
        const int y1 = std::min(y0 + 1, in.height - 1);
        const int x1 = std::min(x0 + 1, in.width - 1);
        const double fy = sy - y0, fx = sx - x0;
        const double v =
            (1 - fy) * ((1 - fx) * in.at(c, y0, x0) + fx * in.at(c, y0, x1)) +
            fy * ((1 - fx) * in.at(c, y1, x0) + fx * in.at(c, y1, x1));
        out.at(c, y, x) = static_cast<float>(v);
      }
  return out;
}

Image pixelate_to(const Image& in, int grid_h, int grid_w) {
  if (grid_h == in.height && grid_w == in.width) return in;
  return bilinear_upsample(area_downsample(in, grid_h, grid_w), in.height,
                           in.width);
}

// Continuous pixelation: the effective grid side shrinks to n*(1-alpha);
// fractional grids blend the two nearest integer grids linearly.
Image pixelate(const Image& in, double alpha) {
  if (alpha == 0.0) return in;
  const double gh = in.height * (1.0 - alpha);
  const double gw = in.width * (1.0 - alpha);
  const int gh0 = std::max(1, static_cast<int>(std::floor(gh)));
  const int gw0 = std::max(1, static_cast<int>(std::floor(gw)));
  const int gh1 = std::min(in.height, gh0 + 1);
  const int gw1 = std::min(in.width, gw0 + 1);
  const double fy = std::clamp(gh - gh0, 0.0, 1.0);
  const double fx = std::clamp(gw - gw0, 0.0, 1.0);
  // Blend along both axes' fractional parts (equal here since square
  // factors are used, but kept general).
  Image a = pixelate_to(in, gh0, gw0);
  Image b = pixelate_to(in, gh1, gw1);
  const double f = 0.5 * (fy + fx);
  Image out = a;
  out.pixels =
      (1.0f - static_cast<float>(f)) * a.pixels +
      static_cast<float>(f) * b.pixels;
  return out;
}

}  // namespace

const std::vector<TransformSpec>& all_transform_specs() {
  static const std::vector<TransformSpec> reg = build_registry();
  return reg;
}

const TransformSpec& transform_spec(const std::string& name) {
  for (const TransformSpec& s : all_transform_specs())
    if (s.name == name) return s;
  std::ostringstream os;
  os << "unknown transform '" << name << "'; known:";
  for (const TransformSpec& s : all_transform_specs()) os << " " << s.name;
  throw FormatError(os.str());
}

bool theta_in_box(const TransformSpec& spec, const Eigen::VectorXd& theta) {
  if (theta.size() != spec.param_dim) return false;
  for (int i = 0; i < spec.param_dim; ++i)
    if (theta[i] < spec.lo[i] || theta[i] > spec.hi[i]) return false;
  return true;
}

Eigen::VectorXd clamp_to_box(const TransformSpec& spec,
                             const Eigen::VectorXd& theta) {
  if (theta.size() != spec.param_dim)
    throw ShapeError("parameter dim " + std::to_string(theta.size()) +
                     " does not match transform '" + spec.name + "'");
  return theta.cwiseMax(spec.lo).cwiseMin(spec.hi);
}

Image apply(const TransformSpec& spec, const Eigen::VectorXd& theta,
            const Image& image) {
  validate_image(image, "apply(" + spec.name + ")");
  if (theta.size() != spec.param_dim)
    throw ShapeError("parameter dim " + std::to_string(theta.size()) +
                     " does not match transform '" + spec.name + "' (" +
                     std::to_string(spec.param_dim) + ")");
  if (!theta_in_box(spec, theta))
    throw std::invalid_argument("parameter outside P for transform '" +
                                spec.name + "'");
  Image out;
  switch (spec.kind) {
    case TransformKind::translation:
      out = translate(image, theta[0], theta[1]);
      break;
    case TransformKind::gaussian_blur:
      out = gaussian_blur(image, theta[0]);
      break;
    case TransformKind::brightness_contrast: {
      out = image;
      const float k = static_cast<float>(std::exp(theta[0]));
      const float b = static_cast<float>(theta[1]);
      out.pixels = k * image.pixels + b;
      break;
    }
    case TransformKind::rotation:
      out = rotate(image, theta[0]);
      break;
    case TransformKind::scaling:
      out = rescale(image, 1.0 + theta[0]);
      break;
    case TransformKind::rotational_blur:
      out = rotational_blur(image, theta[0]);
      break;
    case TransformKind::defocus_blur:
      out = defocus_blur(image, theta[0]);
      break;
    case TransformKind::zoom_blur:
      out = zoom_blur(image, theta[0]);
      break;
    case TransformKind::pixelate:
      out = pixelate(image, theta[0]);
      break;
  }
  clamp01(out);
  return out;
}

Eigen::VectorXd compose_resolvable(const TransformSpec& spec,
                                   const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& xi) {
  if (!spec.resolvable)
    throw std::invalid_argument("transform '" + spec.name +
                                "' is not resolvable");
  if (!theta_in_box(spec, theta) || !theta_in_box(spec, xi))
    throw std::invalid_argument("composition parameters outside P for '" +
                                spec.name + "'");
  Eigen::VectorXd out(spec.param_dim);
  switch (spec.kind) {
    case TransformKind::translation:
    case TransformKind::gaussian_blur:
      out = theta + xi;
      break;
    case TransformKind::brightness_contrast:
      // tau((c,b), x) = e^c x + b; outer theta after inner xi.
      out[0] = theta[0] + xi[0];
      out[1] = std::exp(theta[0]) * xi[1] + theta[1];
      break;
    default:
      throw std::logic_error("resolvable composition not implemented");
  }
  if (!theta_in_box(spec, out))
    throw std::invalid_argument("composed parameter leaves P for '" +
                                spec.name + "'");
  return out;
}

double resolvable_m_star(const TransformSpec& spec) {
  if (!spec.resolvable)
    throw std::invalid_argument("transform '" + spec.name +
                                "' is not resolvable");
  if (spec.m_star_closed_form) return *spec.m_star_closed_form;
  // Brightness-contrast: M = (dgamma/dxi) (dgamma/dtheta)^{-1}, maximized
  // over a dense grid of P x P.
  const int grid = 100;
  double best = 0.0;
  for (int i = 0; i < grid; ++i) {
    const double c2 =
        spec.lo[0] + (spec.hi[0] - spec.lo[0]) * i / (grid - 1.0);
    for (int j = 0; j < grid; ++j) {
      const double b1 =
          spec.lo[1] + (spec.hi[1] - spec.lo[1]) * j / (grid - 1.0);
      Eigen::Matrix2d dxi, dtheta;
      dxi << 1.0, 0.0, 0.0, std::exp(c2);
      dtheta << 1.0, 0.0, std::exp(c2) * b1, 1.0;
      const Eigen::Matrix2d m = dxi * dtheta.inverse();
      const double norm = m.jacobiSvd().singularValues()[0];
      best = std::max(best, norm);
    }
  }
  return best;
}

}  // namespace gsmooth
