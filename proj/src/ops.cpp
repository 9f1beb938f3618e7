#include "gsmooth/ops.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace gsmooth {

namespace {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;

NodePtr new_node(std::string op, std::vector<int> dims,
                 std::vector<NodePtr> parents) {
  auto n = std::make_shared<TensorNode>();
  n->op = std::move(op);
  n->data = ArrayF::Zero(dims_product(dims));
  n->dims = std::move(dims);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

void check_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size())
    throw ShapeError(std::string(op) + ": operand sizes differ, " +
                     dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
}

const ArrayF& tangent_of(TensorNode& parent) {
  return parent.ensure_tangent();
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_size(a, b, "add");
  auto n = new_node("add", a.dims(), {a.shared_node(), b.shared_node()});
  n->data = a.values() + b.values();
  n->backward_fn = [](TensorNode& self) {
    self.parents[0]->ensure_grad() += self.grad;
    self.parents[1]->ensure_grad() += self.grad;
  };
  n->tangent_fn = [](TensorNode& self) {
    self.tangent = tangent_of(*self.parents[0]) + tangent_of(*self.parents[1]);
  };
  return Tensor(std::move(n));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_size(a, b, "sub");
  auto n = new_node("sub", a.dims(), {a.shared_node(), b.shared_node()});
  n->data = a.values() - b.values();
  n->backward_fn = [](TensorNode& self) {
    self.parents[0]->ensure_grad() += self.grad;
    self.parents[1]->ensure_grad() -= self.grad;
  };
  n->tangent_fn = [](TensorNode& self) {
    self.tangent = tangent_of(*self.parents[0]) - tangent_of(*self.parents[1]);
  };
  return Tensor(std::move(n));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_size(a, b, "mul");
  auto n = new_node("mul", a.dims(), {a.shared_node(), b.shared_node()});
  n->data = a.values() * b.values();
  n->backward_fn = [](TensorNode& self) {
    self.parents[0]->ensure_grad() += self.grad * self.parents[1]->data;
    self.parents[1]->ensure_grad() += self.grad * self.parents[0]->data;
  };
  n->tangent_fn = [](TensorNode& self) {
    self.tangent = tangent_of(*self.parents[0]) * self.parents[1]->data +
                   self.parents[0]->data * tangent_of(*self.parents[1]);
  };
  return Tensor(std::move(n));
}

Tensor scale(const Tensor& a, float s) {
  auto n = new_node("scale", a.dims(), {a.shared_node()});
  n->data = a.values() * s;
  n->backward_fn = [s](TensorNode& self) {
    self.parents[0]->ensure_grad() += self.grad * s;
  };
  n->tangent_fn = [s](TensorNode& self) {
    self.tangent = tangent_of(*self.parents[0]) * s;
  };
  return Tensor(std::move(n));
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b,
             const std::string& name) {
  if (x.dims().size() != 2 || w.dims().size() != 2)
    throw ShapeError(name + ": dense expects x [N,Fin], w [Fout,Fin]");
  const int N = x.dims()[0], fin = x.dims()[1];
  const int fout = w.dims()[0];
  if (w.dims()[1] != fin || b.size() != fout)
    throw ShapeError(name + ": weight " + dims_to_string(w.dims()) +
                     " or bias incompatible with input " + dims_to_string(x.dims()));
  auto n = new_node("dense:" + name, {N, fout},
                    {x.shared_node(), w.shared_node(), b.shared_node()});
  // Row-major [N,F] views as column-major [F,N].
  Eigen::Map<const MatF> xm(x.values().data(), fin, N);
  Eigen::Map<const MatF> wm(w.values().data(), fin, fout);
  Eigen::Map<MatF> ym(n->data.data(), fout, N);
  ym.noalias() = wm.transpose() * xm;
  ym.colwise() += Eigen::Map<const Eigen::VectorXf>(b.values().data(), fout);
  n->backward_fn = [N, fin, fout](TensorNode& self) {
    TensorNode& xp = *self.parents[0];
    TensorNode& wp = *self.parents[1];
    TensorNode& bp = *self.parents[2];
    Eigen::Map<const MatF> gy(self.grad.data(), fout, N);
    Eigen::Map<const MatF> xm(xp.data.data(), fin, N);
    Eigen::Map<const MatF> wm(wp.data.data(), fin, fout);
    Eigen::Map<MatF> gx(xp.ensure_grad().data(), fin, N);
    gx.noalias() += wm * gy;
    Eigen::Map<MatF> gw(wp.ensure_grad().data(), fin, fout);
    gw.noalias() += xm * gy.transpose();
    Eigen::Map<Eigen::VectorXf> gb(bp.ensure_grad().data(), fout);
    gb.noalias() += gy.rowwise().sum();
  };
  n->tangent_fn = [N, fin, fout](TensorNode& self) {
    TensorNode& xp = *self.parents[0];
    TensorNode& wp = *self.parents[1];
    TensorNode& bp = *self.parents[2];
    self.ensure_tangent();
    Eigen::Map<MatF> ty(self.tangent.data(), fout, N);
    Eigen::Map<const MatF> tx(tangent_of(xp).data(), fin, N);
    Eigen::Map<const MatF> wm(wp.data.data(), fin, fout);
    ty.noalias() = wm.transpose() * tx;
    Eigen::Map<const MatF> tw(tangent_of(wp).data(), fin, fout);
    Eigen::Map<const MatF> xm(xp.data.data(), fin, N);
    ty.noalias() += tw.transpose() * xm;
    ty.colwise() +=
        Eigen::Map<const Eigen::VectorXf>(tangent_of(bp).data(), fout);
  };
  return Tensor(std::move(n));
}

namespace {

struct ConvGeom {
  int N, C, H, W, K, kh, kw, stride, pad, Ho, Wo;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& w, const Tensor& b,
                       int stride, const std::string& name) {
  if (x.dims().size() != 4 || w.dims().size() != 4)
    throw ShapeError(name + ": conv2d expects x [N,C,H,W], w [K,C,kh,kw]");
  ConvGeom g;
  g.N = x.dims()[0]; g.C = x.dims()[1]; g.H = x.dims()[2]; g.W = x.dims()[3];
  g.K = w.dims()[0]; g.kh = w.dims()[2]; g.kw = w.dims()[3];
  g.stride = stride;
  g.pad = g.kh / 2;
  if (w.dims()[1] != g.C)
    throw ShapeError(name + ": weight channels " + dims_to_string(w.dims()) +
                     " do not match input " + dims_to_string(x.dims()));
  if (b.size() != g.K) throw ShapeError(name + ": bias size mismatch");
  if (stride != 1 && stride != 2) throw ShapeError(name + ": stride must be 1 or 2");
  g.Ho = (g.H + 2 * g.pad - g.kh) / stride + 1;
  g.Wo = (g.W + 2 * g.pad - g.kw) / stride + 1;
  return g;
}

// col: [C*kh*kw, Ho*Wo] column-major, for one image.
void im2col(const float* x, const ConvGeom& g, MatF& col) {
  col.setZero(g.C * g.kh * g.kw, g.Ho * g.Wo);
  for (int c = 0; c < g.C; ++c) {
    const float* xc = x + static_cast<ptrdiff_t>(c) * g.H * g.W;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const int row = (c * g.kh + ki) * g.kw + kj;
        for (int oy = 0; oy < g.Ho; ++oy) {
          const int iy = oy * g.stride + ki - g.pad;
          if (iy < 0 || iy >= g.H) continue;
          float* dst = col.data() + row;  // stride between cols = rows()
          const Eigen::Index ld = col.rows();
          for (int ox = 0; ox < g.Wo; ++ox) {
            const int ix = ox * g.stride + kj - g.pad;
            if (ix < 0 || ix >= g.W) continue;
            dst[(oy * g.Wo + ox) * ld] = xc[iy * g.W + ix];
          }
        }
      }
    }
  }
}

void col2im_add(const MatF& col, const ConvGeom& g, float* gx) {
  for (int c = 0; c < g.C; ++c) {
    float* xc = gx + static_cast<ptrdiff_t>(c) * g.H * g.W;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const int row = (c * g.kh + ki) * g.kw + kj;
        const Eigen::Index ld = col.rows();
        const float* src = col.data() + row;
        for (int oy = 0; oy < g.Ho; ++oy) {
          const int iy = oy * g.stride + ki - g.pad;
          if (iy < 0 || iy >= g.H) continue;
          for (int ox = 0; ox < g.Wo; ++ox) {
            const int ix = ox * g.stride + kj - g.pad;
            if (ix < 0 || ix >= g.W) continue;
            xc[iy * g.W + ix] += src[(oy * g.Wo + ox) * ld];
          }
        }
      }
    }
  }
}

// out[n] = W * im2col(x[n]) + b for every image in the batch.
void conv_forward(const float* x, const float* w, const float* bias,
                  const ConvGeom& g, float* out) {
  const int kin = g.C * g.kh * g.kw;
  const int spatial = g.Ho * g.Wo;
  Eigen::Map<const MatF> wm(w, kin, g.K);  // row-major [K,kin] as [kin,K]
  MatF col;
  for (int n = 0; n < g.N; ++n) {
    im2col(x + static_cast<ptrdiff_t>(n) * g.C * g.H * g.W, g, col);
    Eigen::Map<MatF> om(out + static_cast<ptrdiff_t>(n) * g.K * spatial,
                        spatial, g.K);
    om.noalias() = col.transpose() * wm;
    if (bias)
      om.rowwise() +=
          Eigen::Map<const Eigen::RowVectorXf>(bias, g.K);
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              const std::string& name) {
  ConvGeom g = conv_geometry(x, w, b, stride, name);
  auto n = new_node("conv2d:" + name, {g.N, g.K, g.Ho, g.Wo},
                    {x.shared_node(), w.shared_node(), b.shared_node()});
  conv_forward(x.values().data(), w.values().data(), b.values().data(), g,
               n->data.data());
  n->backward_fn = [g](TensorNode& self) {
    TensorNode& xp = *self.parents[0];
    TensorNode& wp = *self.parents[1];
    TensorNode& bp = *self.parents[2];
    const int kin = g.C * g.kh * g.kw;
    const int spatial = g.Ho * g.Wo;
    Eigen::Map<const MatF> wm(wp.data.data(), kin, g.K);
    Eigen::Map<MatF> gw(wp.ensure_grad().data(), kin, g.K);
    Eigen::Map<Eigen::VectorXf> gb(bp.ensure_grad().data(), g.K);
    xp.ensure_grad();
    MatF col, gcol;
    for (int img = 0; img < g.N; ++img) {
      Eigen::Map<const MatF> go(
          self.grad.data() + static_cast<ptrdiff_t>(img) * g.K * spatial,
          spatial, g.K);
      im2col(xp.data.data() + static_cast<ptrdiff_t>(img) * g.C * g.H * g.W, g,
             col);
      gw.noalias() += col * go;
      gb.noalias() += go.colwise().sum().transpose();
      gcol.noalias() = wm * go.transpose();
      col2im_add(gcol, g,
                 xp.grad.data() + static_cast<ptrdiff_t>(img) * g.C * g.H * g.W);
    }
  };
  n->tangent_fn = [g](TensorNode& self) {
    TensorNode& xp = *self.parents[0];
    TensorNode& wp = *self.parents[1];
    TensorNode& bp = *self.parents[2];
    self.ensure_tangent();
    conv_forward(tangent_of(xp).data(), wp.data.data(),
                 tangent_of(bp).data(), g, self.tangent.data());
    // Add x (*) dW when weights carry a tangent.
    if (tangent_of(wp).abs().maxCoeff() > 0.0f) {
      ArrayF extra(self.tangent.size());
      conv_forward(xp.data.data(), wp.tangent.data(), nullptr, g, extra.data());
      self.tangent += extra;
    }
  };
  return Tensor(std::move(n));
}

Tensor relu(const Tensor& x) {
  auto n = new_node("relu", x.dims(), {x.shared_node()});
  n->data = x.values().max(0.0f);
  n->backward_fn = [](TensorNode& self) {
    self.parents[0]->ensure_grad() +=
        self.grad * (self.parents[0]->data > 0.0f).cast<float>();
  };
  n->tangent_fn = [](TensorNode& self) {
    self.tangent = tangent_of(*self.parents[0]) *
                   (self.parents[0]->data > 0.0f).cast<float>();
  };
  return Tensor(std::move(n));
}

Tensor clamp01_leaky(const Tensor& x, float slope) {
  auto n = new_node("clamp01_leaky", x.dims(), {x.shared_node()});
  const ArrayF& v = x.values();
  n->data = (v < 0.0f).select(slope * v,
            (v > 1.0f).select(1.0f + slope * (v - 1.0f), v));
  auto dmask = [slope](const ArrayF& in) {
    return ((in >= 0.0f) && (in <= 1.0f)).cast<float>() * (1.0f - slope) +
           slope;
  };
  n->backward_fn = [dmask](TensorNode& self) {
    self.parents[0]->ensure_grad() += self.grad * dmask(self.parents[0]->data);
  };
  n->tangent_fn = [dmask](TensorNode& self) {
    self.tangent = tangent_of(*self.parents[0]) * dmask(self.parents[0]->data);
  };
  return Tensor(std::move(n));
}

Tensor sigmoid(const Tensor& x) {
  auto n = new_node("sigmoid", x.dims(), {x.shared_node()});
  n->data = 0.5f * ((0.5f * x.values()).tanh() + 1.0f);
  n->backward_fn = [](TensorNode& self) {
    self.parents[0]->ensure_grad() +=
        self.grad * self.data * (1.0f - self.data);
  };
  n->tangent_fn = [](TensorNode& self) {
    self.tangent =
        tangent_of(*self.parents[0]) * self.data * (1.0f - self.data);
  };
  return Tensor(std::move(n));
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, float eps, const std::string& name) {
  if (x.dims().size() != 4)
    throw ShapeError(name + ": group_norm expects [N,C,H,W]");
  const int N = x.dims()[0], C = x.dims()[1], S = x.dims()[2] * x.dims()[3];
  if (groups <= 0 || C % groups != 0)
    throw ShapeError(name + ": group count " + std::to_string(groups) +
                     " must divide channel count " + std::to_string(C));
  if (gamma.size() != C || beta.size() != C)
    throw ShapeError(name + ": gamma/beta must have C entries");
  const int cg = C / groups;   // channels per group
  const int M = cg * S;        // elements per group
  auto n = new_node("group_norm:" + name, x.dims(),
                    {x.shared_node(), gamma.shared_node(), beta.shared_node()});
  // Statistics per (image, group), double accumulation.
  auto mean = std::make_shared<std::vector<double>>(N * groups);
  auto invstd = std::make_shared<std::vector<double>>(N * groups);
  const float* xd = x.values().data();
  for (int img = 0; img < N; ++img) {
    for (int gi = 0; gi < groups; ++gi) {
      const float* base = xd + (static_cast<ptrdiff_t>(img) * C + gi * cg) * S;
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < M; ++i) {
        s += base[i];
        s2 += static_cast<double>(base[i]) * base[i];
      }
      const double mu = s / M;
      const double var = s2 / M - mu * mu;
      (*mean)[img * groups + gi] = mu;
      (*invstd)[img * groups + gi] = 1.0 / std::sqrt(var + eps);
    }
  }
  float* yd = n->data.data();
  const float* gd = gamma.values().data();
  const float* bd = beta.values().data();
  for (int img = 0; img < N; ++img) {
    for (int gi = 0; gi < groups; ++gi) {
      const double mu = (*mean)[img * groups + gi];
      const double is = (*invstd)[img * groups + gi];
      for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
        const ptrdiff_t off = (static_cast<ptrdiff_t>(img) * C + c) * S;
        for (int i = 0; i < S; ++i)
          yd[off + i] = static_cast<float>(
              gd[c] * (xd[off + i] - mu) * is + bd[c]);
      }
    }
  }
  n->backward_fn = [N, C, S, cg, groups, mean, invstd](TensorNode& self) {
    TensorNode& xp = *self.parents[0];
    TensorNode& gp = *self.parents[1];
    TensorNode& bp = *self.parents[2];
    const int M = cg * S;
    const float* xd = xp.data.data();
    const float* gd = gp.data.data();
    const float* gy = self.grad.data();
    float* gx = xp.ensure_grad().data();
    float* ggamma = gp.ensure_grad().data();
    float* gbeta = bp.ensure_grad().data();
    for (int img = 0; img < N; ++img) {
      for (int gi = 0; gi < groups; ++gi) {
        const double mu = (*mean)[img * groups + gi];
        const double is = (*invstd)[img * groups + gi];
        // dxhat = gy * gamma; need its mean and <dxhat, xhat> mean.
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
          const ptrdiff_t off = (static_cast<ptrdiff_t>(img) * C + c) * S;
          double sg = 0.0, sgx = 0.0;
          for (int i = 0; i < S; ++i) {
            const double xh = (xd[off + i] - mu) * is;
            const double dxh = static_cast<double>(gy[off + i]) * gd[c];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
            sg += gy[off + i];
            sgx += static_cast<double>(gy[off + i]) * xh;
          }
          gbeta[c] += static_cast<float>(sg);
          ggamma[c] += static_cast<float>(sgx);
        }
        const double m_dxh = sum_dxh / M;
        const double m_dxh_xh = sum_dxh_xh / M;
        for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
          const ptrdiff_t off = (static_cast<ptrdiff_t>(img) * C + c) * S;
          for (int i = 0; i < S; ++i) {
            const double xh = (xd[off + i] - mu) * is;
            const double dxh = static_cast<double>(gy[off + i]) * gd[c];
            gx[off + i] +=
                static_cast<float>(is * (dxh - m_dxh - xh * m_dxh_xh));
          }
        }
      }
    }
  };
  n->tangent_fn = [N, C, S, cg, groups, mean, invstd](TensorNode& self) {
    TensorNode& xp = *self.parents[0];
    TensorNode& gp = *self.parents[1];
    TensorNode& bp = *self.parents[2];
    const int M = cg * S;
    const float* xd = xp.data.data();
    const float* gd = gp.data.data();
    const float* tx = tangent_of(xp).data();
    const float* tg = tangent_of(gp).data();
    const float* tb = tangent_of(bp).data();
    self.ensure_tangent();
    float* ty = self.tangent.data();
    for (int img = 0; img < N; ++img) {
      for (int gi = 0; gi < groups; ++gi) {
        const double mu = (*mean)[img * groups + gi];
        const double is = (*invstd)[img * groups + gi];
        double dmu = 0.0, dvar = 0.0;
        for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
          const ptrdiff_t off = (static_cast<ptrdiff_t>(img) * C + c) * S;
          for (int i = 0; i < S; ++i) {
            dmu += tx[off + i];
            dvar += 2.0 * (xd[off + i] - mu) * tx[off + i];
          }
        }
        dmu /= M;
        // Biased variance tangent: 2E[(x-mu)(dx-dmu)] = 2E[(x-mu)dx],
        // since E[x-mu] = 0 kills the dmu cross term.
        dvar /= M;
        const double dis = -0.5 * is * is * is * dvar;
        for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
          const ptrdiff_t off = (static_cast<ptrdiff_t>(img) * C + c) * S;
          for (int i = 0; i < S; ++i) {
            const double xc = xd[off + i] - mu;
            const double dxhat = (tx[off + i] - dmu) * is + xc * dis;
            ty[off + i] = static_cast<float>(
                gd[c] * dxhat + tg[c] * xc * is + tb[c]);
          }
        }
      }
    }
  };
  return Tensor(std::move(n));
}

Tensor upsample2_nearest(const Tensor& x) {
  if (x.dims().size() != 4) throw ShapeError("upsample2_nearest expects [N,C,H,W]");
  const int N = x.dims()[0], C = x.dims()[1], H = x.dims()[2], W = x.dims()[3];
  auto n = new_node("upsample2", {N, C, 2 * H, 2 * W}, {x.shared_node()});
  auto up = [N, C, H, W](const float* src, float* dst) {
    for (ptrdiff_t nc = 0; nc < static_cast<ptrdiff_t>(N) * C; ++nc) {
      const float* s = src + nc * H * W;
      float* d = dst + nc * 4 * H * W;
      for (int y = 0; y < H; ++y)
        for (int x2 = 0; x2 < W; ++x2) {
          const float v = s[y * W + x2];
          d[(2 * y) * 2 * W + 2 * x2] = v;
          d[(2 * y) * 2 * W + 2 * x2 + 1] = v;
          d[(2 * y + 1) * 2 * W + 2 * x2] = v;
          d[(2 * y + 1) * 2 * W + 2 * x2 + 1] = v;
        }
    }
  };
  up(x.values().data(), n->data.data());
  n->backward_fn = [N, C, H, W](TensorNode& self) {
    TensorNode& xp = *self.parents[0];
    float* gx = xp.ensure_grad().data();
    const float* gy = self.grad.data();
    for (ptrdiff_t nc = 0; nc < static_cast<ptrdiff_t>(N) * C; ++nc) {
      float* g = gx + nc * H * W;
      const float* gyc = gy + nc * 4 * H * W;
      for (int y = 0; y < H; ++y)
        for (int x2 = 0; x2 < W; ++x2)
          g[y * W + x2] += gyc[(2 * y) * 2 * W + 2 * x2] +
                           gyc[(2 * y) * 2 * W + 2 * x2 + 1] +
                           gyc[(2 * y + 1) * 2 * W + 2 * x2] +
                           gyc[(2 * y + 1) * 2 * W + 2 * x2 + 1];
    }
  };
  n->tangent_fn = [up](TensorNode& self) {
    self.ensure_tangent();
    up(tangent_of(*self.parents[0]).data(), self.tangent.data());
  };
  return Tensor(std::move(n));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dims().size() != 4 || b.dims().size() != 4)
    throw ShapeError("concat_channels expects [N,C,H,W] operands");
  if (a.dims()[0] != b.dims()[0] || a.dims()[2] != b.dims()[2] ||
      a.dims()[3] != b.dims()[3])
    throw ShapeError("concat_channels: batch/spatial dims differ: " +
                     dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
  const int N = a.dims()[0], Ca = a.dims()[1], Cb = b.dims()[1];
  const int S = a.dims()[2] * a.dims()[3];
  auto n = new_node("concat_channels", {N, Ca + Cb, a.dims()[2], a.dims()[3]},
                    {a.shared_node(), b.shared_node()});
  auto cat = [N, Ca, Cb, S](const float* pa, const float* pb, float* dst) {
    for (int img = 0; img < N; ++img) {
      std::copy(pa + static_cast<ptrdiff_t>(img) * Ca * S,
                pa + static_cast<ptrdiff_t>(img + 1) * Ca * S,
                dst + static_cast<ptrdiff_t>(img) * (Ca + Cb) * S);
      std::copy(pb + static_cast<ptrdiff_t>(img) * Cb * S,
                pb + static_cast<ptrdiff_t>(img + 1) * Cb * S,
                dst + static_cast<ptrdiff_t>(img) * (Ca + Cb) * S + Ca * S);
    }
  };
  cat(a.values().data(), b.values().data(), n->data.data());
  n->backward_fn = [N, Ca, Cb, S](TensorNode& self) {
    float* ga = self.parents[0]->ensure_grad().data();
    float* gb = self.parents[1]->ensure_grad().data();
    const float* gy = self.grad.data();
    for (int img = 0; img < N; ++img) {
      const float* src = gy + static_cast<ptrdiff_t>(img) * (Ca + Cb) * S;
      for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(Ca) * S; ++i)
        ga[static_cast<ptrdiff_t>(img) * Ca * S + i] += src[i];
      for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(Cb) * S; ++i)
        gb[static_cast<ptrdiff_t>(img) * Cb * S + i] += src[Ca * S + i];
    }
  };
  n->tangent_fn = [cat](TensorNode& self) {
    self.ensure_tangent();
    cat(tangent_of(*self.parents[0]).data(),
        tangent_of(*self.parents[1]).data(), self.tangent.data());
  };
  return Tensor(std::move(n));
}

Tensor reshape(const Tensor& x, std::vector<int> dims) {
  if (dims_product(dims) != x.size())
    throw ShapeError("reshape: element count mismatch, " +
                     dims_to_string(x.dims()) + " -> " + dims_to_string(dims));
  auto n = new_node("reshape", std::move(dims), {x.shared_node()});
  n->data = x.values();
  n->backward_fn = [](TensorNode& self) {
    self.parents[0]->ensure_grad() += self.grad;
  };
  n->tangent_fn = [](TensorNode& self) {
    self.tangent = tangent_of(*self.parents[0]);
  };
  return Tensor(std::move(n));
}

Tensor tile_batch(const Tensor& x, int count) {
  if (x.dims()[0] != 1) throw ShapeError("tile_batch expects leading dim 1");
  if (count < 1) throw ShapeError("tile_batch: count must be >= 1");
  std::vector<int> dims = x.dims();
  dims[0] = count;
  auto n = new_node("tile_batch", std::move(dims), {x.shared_node()});
  const Eigen::Index m = x.size();
  for (int i = 0; i < count; ++i) n->data.segment(i * m, m) = x.values();
  n->backward_fn = [count, m](TensorNode& self) {
    ArrayF& g = self.parents[0]->ensure_grad();
    for (int i = 0; i < count; ++i) g += self.grad.segment(i * m, m);
  };
  n->tangent_fn = [count, m](TensorNode& self) {
    self.ensure_tangent();
    const ArrayF& t = tangent_of(*self.parents[0]);
    for (int i = 0; i < count; ++i) self.tangent.segment(i * m, m) = t;
  };
  return Tensor(std::move(n));
}

Tensor sum(const Tensor& x) {
  auto n = new_node("sum", {1}, {x.shared_node()});
  n->data[0] = static_cast<float>(x.values().cast<double>().sum());
  n->backward_fn = [](TensorNode& self) {
    self.parents[0]->ensure_grad() += self.grad[0];
  };
  n->tangent_fn = [](TensorNode& self) {
    self.ensure_tangent();
    self.tangent[0] =
        static_cast<float>(tangent_of(*self.parents[0]).cast<double>().sum());
  };
  return Tensor(std::move(n));
}

Tensor mean_all(const Tensor& x) {
  return scale(sum(x), 1.0f / static_cast<float>(x.size()));
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  check_same_size(pred, target, "l1_loss");
  auto n = new_node("l1_loss", {1}, {pred.shared_node(), target.shared_node()});
  n->data[0] = static_cast<float>(
      (pred.values() - target.values()).abs().cast<double>().sum() /
      pred.size());
  n->backward_fn = [](TensorNode& self) {
    const ArrayF d = self.parents[0]->data - self.parents[1]->data;
    const float w = self.grad[0] / static_cast<float>(d.size());
    ArrayF sgn = (d > 0.0f).cast<float>() - (d < 0.0f).cast<float>();
    self.parents[0]->ensure_grad() += w * sgn;
    self.parents[1]->ensure_grad() -= w * sgn;
  };
  n->tangent_fn = [](TensorNode& self) {
    const ArrayF d = self.parents[0]->data - self.parents[1]->data;
    ArrayF sgn = (d > 0.0f).cast<float>() - (d < 0.0f).cast<float>();
    const ArrayF dt =
        tangent_of(*self.parents[0]) - tangent_of(*self.parents[1]);
    self.ensure_tangent();
    self.tangent[0] = static_cast<float>((sgn * dt).cast<double>().sum() /
                                         d.size());
  };
  return Tensor(std::move(n));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check_same_size(a, b, "dot");
  auto n = new_node("dot", {1}, {a.shared_node(), b.shared_node()});
  n->data[0] =
      static_cast<float>((a.values() * b.values()).cast<double>().sum());
  n->backward_fn = [](TensorNode& self) {
    self.parents[0]->ensure_grad() += self.grad[0] * self.parents[1]->data;
    self.parents[1]->ensure_grad() += self.grad[0] * self.parents[0]->data;
  };
  n->tangent_fn = [](TensorNode& self) {
    self.ensure_tangent();
    self.tangent[0] = static_cast<float>(
        (tangent_of(*self.parents[0]) * self.parents[1]->data +
         self.parents[0]->data * tangent_of(*self.parents[1]))
            .cast<double>()
            .sum());
  };
  return Tensor(std::move(n));
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels) {
  if (logits.dims().size() != 2)
    throw ShapeError("softmax_cross_entropy expects logits [N,K]");
  const int N = logits.dims()[0], K = logits.dims()[1];
  if (static_cast<int>(labels.size()) != N)
    throw ShapeError("softmax_cross_entropy: label count mismatch");
  for (int lab : labels)
    if (lab < 0 || lab >= K) throw ShapeError("label out of range");
  auto n = new_node("softmax_ce", {1}, {logits.shared_node()});
  auto probs = std::make_shared<ArrayF>(logits.values());
  double loss = 0.0;
  for (int i = 0; i < N; ++i) {
    auto row = probs->segment(i * K, K);
    const float mx = row.maxCoeff();
    row = (row - mx).exp();
    const double z = row.cast<double>().sum();
    loss += std::log(z) - std::log(static_cast<double>(row[labels[i]]));
    row /= static_cast<float>(z);
  }
  n->data[0] = static_cast<float>(loss / N);
  auto labs = std::make_shared<std::vector<int>>(labels);
  n->backward_fn = [N, K, probs, labs](TensorNode& self) {
    ArrayF& g = self.parents[0]->ensure_grad();
    const float w = self.grad[0] / static_cast<float>(N);
    for (int i = 0; i < N; ++i) {
      g.segment(i * K, K) += w * probs->segment(i * K, K);
      g[i * K + (*labs)[i]] -= w;
    }
  };
  n->tangent_fn = [N, K, probs, labs](TensorNode& self) {
    const ArrayF& t = tangent_of(*self.parents[0]);
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
      for (int k = 0; k < K; ++k)
        acc += static_cast<double>((*probs)[i * K + k]) * t[i * K + k];
      acc -= t[i * K + (*labs)[i]];
    }
    self.ensure_tangent();
    self.tangent[0] = static_cast<float>(acc / N);
  };
  return Tensor(std::move(n));
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.dims().size() != 2) throw ShapeError("argmax_rows expects [N,K]");
  const int N = logits.dims()[0], K = logits.dims()[1];
  std::vector<int> out(N);
  for (int i = 0; i < N; ++i) {
    Eigen::Index idx = 0;
    logits.values().segment(i * K, K).maxCoeff(&idx);
    out[i] = static_cast<int>(idx);
  }
  return out;
}

}  // namespace gsmooth
