#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gsmooth/common.hpp"

namespace gsmooth {

using ArrayF = Eigen::ArrayXf;

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the computation tape. `data` is the forward value, `grad`
// the reverse-mode adjoint, `tangent` the forward-mode directional
// derivative. grad/tangent stay empty until a pass touches them.
struct TensorNode {
  std::vector<int> dims;
  ArrayF data;
  ArrayF grad;
  ArrayF tangent;
  bool requires_grad = false;
  std::string op;
  std::vector<NodePtr> parents;
  // Pushes this node's grad into its parents' grads (accumulating).
  std::function<void(TensorNode&)> backward_fn;
  // Pulls parents' tangents and writes this node's tangent.
  std::function<void(TensorNode&)> tangent_fn;

  Eigen::Index size() const { return data.size(); }
  ArrayF& ensure_grad() {
    if (grad.size() != data.size()) grad = ArrayF::Zero(data.size());
    return grad;
  }
  ArrayF& ensure_tangent() {
    if (tangent.size() != data.size()) tangent = ArrayF::Zero(data.size());
    return tangent;
  }
};

// Value-semantics handle to a tape node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor zeros(std::vector<int> dims, bool requires_grad = false);
  static Tensor full(std::vector<int> dims, float value,
                     bool requires_grad = false);
  static Tensor from(std::vector<int> dims, ArrayF values,
                     bool requires_grad = false);
  static Tensor randn(std::vector<int> dims, Rng& rng, float stddev,
                      bool requires_grad = false);

  bool valid() const { return n_ != nullptr; }
  const std::vector<int>& dims() const { return n_->dims; }
  Eigen::Index size() const { return n_->size(); }
  ArrayF& values() { return n_->data; }
  const ArrayF& values() const { return n_->data; }
  ArrayF& grad() { return n_->ensure_grad(); }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }
  void zero_grad() {
    if (n_->grad.size() > 0) n_->grad.setZero();
  }
  float item() const;
  TensorNode* node() const { return n_.get(); }
  NodePtr shared_node() const { return n_; }

 private:
  NodePtr n_;
};

// Total element count implied by dims; throws on non-positive entries.
Eigen::Index dims_product(const std::vector<int>& dims);

// Reverse-mode pass from a scalar loss; accumulates into grads. Repeated
// calls without zeroing keep accumulating.
void backward(const Tensor& loss);

// Reverse-mode pass with an explicit output adjoint (u has out.size()).
// Returns grad of `in` (zeroing all graph grads first).
Eigen::VectorXf vjp(const Tensor& out, const Tensor& in,
                    const Eigen::VectorXf& u);

// Forward-mode pass: seeds tangent of `in` with v, propagates through the
// recorded graph, returns the tangent of `out`.
Eigen::VectorXf jvp(const Tensor& out, const Tensor& in,
                    const Eigen::VectorXf& v);

// Topological order (parents first) of the graph below `root`.
std::vector<TensorNode*> topo_order(TensorNode* root);

void zero_graph_grads(const Tensor& out);

std::string dims_to_string(const std::vector<int>& dims);

}  // namespace gsmooth
