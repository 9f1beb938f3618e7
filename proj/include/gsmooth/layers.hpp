#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gsmooth/ops.hpp"

namespace gsmooth {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

struct DenseLayer {
  Tensor w, b;
  std::string name;

  DenseLayer() = default;
  DenseLayer(int in, int out, Rng& rng, std::string layer_name)
      : name(std::move(layer_name)) {
    const float s = std::sqrt(2.0f / static_cast<float>(in));
    w = Tensor::randn({out, in}, rng, s, true);
    b = Tensor::zeros({out}, true);
  }
  Tensor operator()(const Tensor& x) const { return dense(x, w, b, name); }
  void collect(ParamList& out) const {
    out.push_back({name + ".w", w});
    out.push_back({name + ".b", b});
  }
};

struct Conv2dLayer {
  Tensor w, b;
  int stride = 1;
  std::string name;

  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int k, int stride_, Rng& rng,
              std::string layer_name)
      : stride(stride_), name(std::move(layer_name)) {
    const float s = std::sqrt(2.0f / static_cast<float>(cin * k * k));
    w = Tensor::randn({cout, cin, k, k}, rng, s, true);
    b = Tensor::zeros({cout}, true);
  }
  Tensor operator()(const Tensor& x) const {
    return conv2d(x, w, b, stride, name);
  }
  void collect(ParamList& out) const {
    out.push_back({name + ".w", w});
    out.push_back({name + ".b", b});
  }
};

struct GroupNormLayer {
  Tensor gamma, beta;
  int groups = 1;
  std::string name;

  GroupNormLayer() = default;
  GroupNormLayer(int channels, int groups_, std::string layer_name)
      : groups(groups_), name(std::move(layer_name)) {
    gamma = Tensor::full({channels}, 1.0f, true);
    beta = Tensor::zeros({channels}, true);
  }
  Tensor operator()(const Tensor& x) const {
    return group_norm(x, gamma, beta, groups, 1e-5f, name);
  }
  void collect(ParamList& out) const {
    out.push_back({name + ".gamma", gamma});
    out.push_back({name + ".beta", beta});
  }
};

}  // namespace gsmooth
