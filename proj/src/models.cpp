#include "gsmooth/models.hpp"

#include <stdexcept>

#include "gsmooth/ops.hpp"

namespace gsmooth {

Tensor images_to_tensor(const std::vector<Image>& images,
                        bool requires_grad) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const Image& first = images.front();
  const Eigen::Index per = first.pixels.size();
  ArrayF data(static_cast<Eigen::Index>(images.size()) * per);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = images[i];
    if (im.height != first.height || im.width != first.width ||
        im.channels != first.channels)
      throw ShapeError("images_to_tensor: ragged batch");
    data.segment(static_cast<Eigen::Index>(i) * per, per) = im.pixels;
  }
  return Tensor::from({static_cast<int>(images.size()), first.channels,
                       first.height, first.width},
                      std::move(data), requires_grad);
}

Image tensor_to_image(const Tensor& t, int index, bool clamp) {
  const std::vector<int>& d = t.dims();
  if (d.size() != 4) throw ShapeError("tensor_to_image: need a [N,C,H,W] tensor");
  if (index < 0 || index >= d[0]) throw ShapeError("tensor_to_image: index out of range");
  Image im = make_image(d[2], d[3], d[1]);
  const Eigen::Index per = im.pixels.size();
  im.pixels = t.values().segment(static_cast<Eigen::Index>(index) * per, per);
  if (clamp) clamp01(im);
  return im;
}

Tensor thetas_to_tensor(const Eigen::MatrixXd& thetas, bool requires_grad) {
  ArrayF data(thetas.size());
  for (Eigen::Index i = 0; i < thetas.rows(); ++i)
    for (Eigen::Index j = 0; j < thetas.cols(); ++j)
      data[i * thetas.cols() + j] = static_cast<float>(thetas(i, j));
  return Tensor::from(
      {static_cast<int>(thetas.rows()), static_cast<int>(thetas.cols())},
      std::move(data), requires_grad);
}

SurrogateModel::SurrogateModel(SurrogateConfig cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg_.image_size % 4 != 0)
    throw ShapeError("surrogate image size must be divisible by 4");
  if (cfg_.c0 % 2 != 0 || cfg_.c1 % 2 != 0 || cfg_.c2 % 2 != 0)
    throw ShapeError("surrogate widths must be even (GroupNorm groups=2)");
  const int bottleneck = cfg_.image_size / 4;
  latent_dim_ = cfg_.c2 * bottleneck * bottleneck;

  Rng rng = make_rng(seed, 101);
  f1_ = DenseLayer(cfg_.param_dim, latent_dim_, rng, "f1");
  e0_ = Conv2dLayer(cfg_.channels, cfg_.c0, 3, 1, rng, "e0");
  e1_ = Conv2dLayer(cfg_.c0, cfg_.c1, 3, 2, rng, "e1");
  en1_ = GroupNormLayer(cfg_.c1, 2, "en1");
  e2_ = Conv2dLayer(cfg_.c1, cfg_.c2, 3, 2, rng, "e2");
  en2_ = GroupNormLayer(cfg_.c2, 2, "en2");
  d1_ = Conv2dLayer(cfg_.c2, cfg_.c1, 3, 1, rng, "d1");
  dn1_ = GroupNormLayer(cfg_.c1, 2, "dn1");
  d2_ = Conv2dLayer(2 * cfg_.c1, cfg_.c1, 3, 1, rng, "d2");
  dn2_ = GroupNormLayer(cfg_.c1, 2, "dn2");
  d3_ = Conv2dLayer(cfg_.c1 + cfg_.c0, cfg_.c0, 3, 1, rng, "d3");
  d3b_ = Conv2dLayer(cfg_.c0, cfg_.c0, 3, 1, rng, "d3b");
  d4_ = Conv2dLayer(cfg_.c0, cfg_.channels, 3, 1, rng, "d4");

  f1_.collect(params_);
  e0_.collect(params_);
  e1_.collect(params_);
  en1_.collect(params_);
  e2_.collect(params_);
  en2_.collect(params_);
  d1_.collect(params_);
  dn1_.collect(params_);
  d2_.collect(params_);
  dn2_.collect(params_);
  d3_.collect(params_);
  d3b_.collect(params_);
  d4_.collect(params_);
}

Tensor SurrogateModel::f1(const Tensor& theta) const { return f1_(theta); }

SurrogateModel::Encoded SurrogateModel::f2(const Tensor& images) const {
  Tensor s0 = relu(e0_(images));    // [N,c0,size,size]
  Tensor s1 = relu(en1_(e1_(s0)));  // [N,c1,size/2,size/2]
  Tensor s2 = relu(en2_(e2_(s1)));  // [N,c2,size/4,size/4]
  const int n = images.dims()[0];
  return {reshape(s2, {n, latent_dim_}), s0, s1};
}

Tensor SurrogateModel::decode(const Tensor& latent, const Encoded& enc) const {
  const int n = latent.dims()[0];
  const int b = cfg_.image_size / 4;
  Tensor h = reshape(latent, {n, cfg_.c2, b, b});
  h = relu(dn1_(d1_(upsample2_nearest(h))));  // [N,c1,size/2,size/2]
  h = relu(dn2_(d2_(concat_channels(h, enc.skip1))));
  h = upsample2_nearest(h);  // [N,c1,size,size]
  // No normalization at full resolution: per-image scale and shift must
  // survive to the output.
  h = relu(d3_(concat_channels(h, enc.skip0)));
  h = relu(d3b_(h));
  // Leaky clamp to the pixel range: targets live in [0,1], so saturated
  // regions should not accumulate loss once the pre-activation overshoots.
  return clamp01_leaky(d4_(h));  // [N,C,size,size]
}

Tensor SurrogateModel::forward(const Tensor& theta, const Tensor& images,
                               const Tensor& noise) const {
  Encoded enc = f2(images);
  Tensor latent = add(f1(theta), enc.latent);
  if (noise.valid()) latent = add(latent, noise);
  return decode(latent, enc);
}

Image SurrogateModel::evaluate(const Eigen::VectorXd& theta,
                               const Image& image,
                               const Eigen::VectorXd* noise) const {
  if (theta.size() != cfg_.param_dim)
    throw ShapeError("surrogate evaluate: parameter dim mismatch");
  Tensor th = thetas_to_tensor(theta.transpose());
  Tensor im = images_to_tensor({image});
  Tensor nz;
  if (noise) {
    if (noise->size() != latent_dim_)
      throw ShapeError("surrogate evaluate: noise dim " +
                       std::to_string(noise->size()) + " != latent dim " +
                       std::to_string(latent_dim_));
    ArrayF nd(latent_dim_);
    for (int i = 0; i < latent_dim_; ++i)
      nd[i] = static_cast<float>((*noise)[i]);
    nz = Tensor::from({1, latent_dim_}, std::move(nd));
  }
  Tensor out = forward(th, im, nz);
  return tensor_to_image(out, 0);
}

Eigen::MatrixXf SurrogateModel::a1_matrix() const {
  // DenseLayer weight is [out, in] row-major.
  Eigen::MatrixXf a1(latent_dim_, cfg_.param_dim);
  const ArrayF& w = f1_.w.values();
  for (int r = 0; r < latent_dim_; ++r)
    for (int c = 0; c < cfg_.param_dim; ++c)
      a1(r, c) = w[static_cast<Eigen::Index>(r) * cfg_.param_dim + c];
  return a1;
}

ParamList SurrogateModel::parameters() { return params_; }

Classifier::Classifier(int image_size, int channels, int num_classes,
                       std::uint64_t seed, int c1, int c2)
    : size_(image_size), channels_(channels), num_classes_(num_classes) {
  if (image_size % 4 != 0)
    throw ShapeError("classifier image size must be divisible by 4");
  Rng rng = make_rng(seed, 202);
  c1_ = Conv2dLayer(channels, c1, 3, 2, rng, "c1");
  n1_ = GroupNormLayer(c1, 2, "n1");
  c2_ = Conv2dLayer(c1, c2, 3, 2, rng, "c2");
  n2_ = GroupNormLayer(c2, 2, "n2");
  const int b = image_size / 4;
  fc_ = DenseLayer(c2 * b * b, num_classes, rng, "fc");
  c1_.collect(params_);
  n1_.collect(params_);
  c2_.collect(params_);
  n2_.collect(params_);
  fc_.collect(params_);
}

Tensor Classifier::forward(const Tensor& images) const {
  Tensor h = relu(n1_(c1_(images)));
  h = relu(n2_(c2_(h)));
  const int n = images.dims()[0];
  const int b = size_ / 4;
  h = reshape(h, {n, c2_.w.dims()[0] * b * b});
  return fc_(h);
}

std::vector<int> Classifier::predict(const std::vector<Image>& images) const {
  Tensor logits = forward(images_to_tensor(images));
  return argmax_rows(logits);
}

ParamList Classifier::parameters() { return params_; }

}  // namespace gsmooth
