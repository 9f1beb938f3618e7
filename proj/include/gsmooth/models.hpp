#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "gsmooth/adam.hpp"
#include "gsmooth/image.hpp"
#include "gsmooth/layers.hpp"

namespace gsmooth {

// Batch conversion helpers between planar images and [N,C,H,W] tensors.
Tensor images_to_tensor(const std::vector<Image>& images,
                        bool requires_grad = false);
Image tensor_to_image(const Tensor& t, int index, bool clamp = true);
Tensor thetas_to_tensor(const Eigen::MatrixXd& thetas,
                        bool requires_grad = false);

struct SurrogateConfig {
  std::string transform_name;
  int param_dim = 1;
  int image_size = 16;
  int channels = 1;
  int c0 = 6;   // full-resolution stem width
  int c1 = 8;   // encoder width after the first down-block
  int c2 = 12;  // bottleneck width (latent dim = c2 * (size/4)^2)
};

// Surrogate transformation tau_hat(theta, x) = H(F1(theta) + F2(x)) with an
// optional augmented-noise vector added to the latent sum. F1 is a single
// affine map (A1 theta + b1); H is a small U-Net decoder fed skip
// activations from F2's first down-block only, keeping the additive latent
// structure intact.
class SurrogateModel {
 public:
  SurrogateModel(SurrogateConfig cfg, std::uint64_t seed);

  const SurrogateConfig& config() const { return cfg_; }
  int latent_dim() const { return latent_dim_; }

  // Graph-building passes (differentiable end to end).
  Tensor f1(const Tensor& theta) const;  // [N,m] -> [N,l], exactly affine
  struct Encoded {
    Tensor latent;  // [N,l]
    Tensor skip0;   // [N,c0,size,size]
    Tensor skip1;   // [N,c1,size/2,size/2]
  };
  Encoded f2(const Tensor& images) const;
  Tensor decode(const Tensor& latent, const Encoded& enc) const;
  // H(F1(theta) + noise + F2(images)); noise may be an invalid Tensor.
  Tensor forward(const Tensor& theta, const Tensor& images,
                 const Tensor& noise = Tensor()) const;

  // Single-image convenience; output clamped to [0,1].
  Image evaluate(const Eigen::VectorXd& theta, const Image& image,
                 const Eigen::VectorXd* noise = nullptr) const;

  // A1 / b1 of the affine parameter path.
  Eigen::MatrixXf a1_matrix() const;

  ParamList parameters();
  const ParamList& parameters() const { return params_; }

 private:
  SurrogateConfig cfg_;
  int latent_dim_ = 0;
  DenseLayer f1_;
  Conv2dLayer e0_, e1_, e2_;
  GroupNormLayer en1_, en2_;
  Conv2dLayer d1_, d2_, d3_, d3b_, d4_;
  GroupNormLayer dn1_, dn2_;
  ParamList params_;
};

// Two-down-block CNN classifier over [0,1] images.
class Classifier {
 public:
  Classifier(int image_size, int channels, int num_classes, std::uint64_t seed,
             int c1 = 8, int c2 = 16);

  Tensor forward(const Tensor& images) const;  // logits [N,K]
  std::vector<int> predict(const std::vector<Image>& images) const;
  int num_classes() const { return num_classes_; }
  int image_size() const { return size_; }
  int channels() const { return channels_; }

  ParamList parameters();
  const ParamList& parameters() const { return params_; }

 private:
  int size_, channels_, num_classes_;
  Conv2dLayer c1_, c2_;
  GroupNormLayer n1_, n2_;
  DenseLayer fc_;
  ParamList params_;
};

}  // namespace gsmooth
