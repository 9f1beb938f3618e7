#pragma once

#include <string>
#include <vector>

#include "gsmooth/tensor.hpp"

namespace gsmooth {

// Elementwise; operands must have identical element counts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);

// x:[N,Fin] w:[Fout,Fin] b:[Fout] -> [N,Fout]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b,
             const std::string& name = "dense");

// Same-padding 2-D convolution. x:[N,C,H,W] w:[K,C,kh,kw] b:[K],
// stride 1 or 2, pad = kh/2.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              const std::string& name = "conv2d");

Tensor relu(const Tensor& x);
// Identity on [0,1], slope `slope` outside; keeps a small gradient so
// saturated pixels can still recover during training.
Tensor clamp01_leaky(const Tensor& x, float slope = 0.01f);
Tensor sigmoid(const Tensor& x);

// Per-group mean/variance normalization with learned scale/shift.
// x:[N,C,H,W], gamma/beta:[C], groups must divide C.
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, float eps = 1e-5f,
                  const std::string& name = "group_norm");

// Nearest-neighbour x2 upsampling. x:[N,C,H,W] -> [N,C,2H,2W]
Tensor upsample2_nearest(const Tensor& x);

// [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W]
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, std::vector<int> dims);

// [1,rest...] -> [n,rest...] by replication.
Tensor tile_batch(const Tensor& x, int n);

// Reductions (double accumulation).
Tensor sum(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor l1_loss(const Tensor& pred, const Tensor& target);
Tensor dot(const Tensor& a, const Tensor& b);

// logits:[N,K]; mean cross entropy with in-graph softmax.
Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels);

// Row-wise argmax of a [N,K] tensor's values (not on the tape).
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace gsmooth
