#include "gsmooth/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace gsmooth {

Eigen::Index dims_product(const std::vector<int>& dims) {
  if (dims.empty()) throw ShapeError("tensor must have at least one dim");
  Eigen::Index p = 1;
  for (int d : dims) {
    if (d <= 0) throw ShapeError("tensor dims must be positive, got " + dims_to_string(dims));
    p *= d;
  }
  return p;
}

std::string dims_to_string(const std::vector<int>& dims) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> dims, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->data = ArrayF::Zero(dims_product(dims));
  n->dims = std::move(dims);
  n->requires_grad = requires_grad;
  n->op = "leaf";
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> dims, float value, bool requires_grad) {
  Tensor t = zeros(std::move(dims), requires_grad);
  t.values().setConstant(value);
  return t;
}

Tensor Tensor::from(std::vector<int> dims, ArrayF values, bool requires_grad) {
  if (dims_product(dims) != values.size())
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match dims " + dims_to_string(dims));
  auto n = std::make_shared<TensorNode>();
  n->dims = std::move(dims);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  n->op = "leaf";
  return Tensor(std::move(n));
}

Tensor Tensor::randn(std::vector<int> dims, Rng& rng, float stddev,
                     bool requires_grad) {
  Tensor t = zeros(std::move(dims), requires_grad);
  std::normal_distribution<float> nd(0.0f, stddev);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values()[i] = nd(rng);
  return t;
}

float Tensor::item() const {
  if (n_->size() != 1) throw ShapeError("item() on non-scalar tensor " + dims_to_string(n_->dims));
  return n_->data[0];
}

std::vector<TensorNode*> topo_order(TensorNode* root) {
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> done;
  // Iterative DFS; graphs from long training loops can be deep.
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (done.count(f.node)) {
      stack.pop_back();
      continue;
    }
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (!done.count(p)) stack.push_back({p, 0});
    } else {
      done.insert(f.node);
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  return order;
}

namespace {

void backward_from(TensorNode* root, const ArrayF& seed) {
  auto order = topo_order(root);
  // Interior adjoints are scratch state for this pass; only leaf grads
  // accumulate across calls.
  for (TensorNode* n : order)
    if (n->backward_fn && n->grad.size() > 0) n->grad.setZero();
  root->ensure_grad() += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
  }
}

}  // namespace

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward() requires a scalar loss, got " +
                     dims_to_string(loss.dims()));
  ArrayF seed(1);
  seed[0] = 1.0f;
  backward_from(loss.node(), seed);
}

void zero_graph_grads(const Tensor& out) {
  for (TensorNode* n : topo_order(out.node()))
    if (n->grad.size() > 0) n->grad.setZero();
}

Eigen::VectorXf vjp(const Tensor& out, const Tensor& in,
                    const Eigen::VectorXf& u) {
  if (u.size() != out.size())
    throw ShapeError("vjp: adjoint size " + std::to_string(u.size()) +
                     " does not match output " + dims_to_string(out.dims()));
  zero_graph_grads(out);
  backward_from(out.node(), u.array());
  TensorNode* n = in.node();
  n->ensure_grad();
  return n->grad.matrix();
}

Eigen::VectorXf jvp(const Tensor& out, const Tensor& in,
                    const Eigen::VectorXf& v) {
  if (v.size() != in.size())
    throw ShapeError("jvp: tangent size " + std::to_string(v.size()) +
                     " does not match input " + dims_to_string(in.dims()));
  auto order = topo_order(out.node());
  for (TensorNode* n : order) n->tangent.resize(0);
  in.node()->tangent = v.array();
  for (TensorNode* n : order) {
    if (n == in.node()) continue;
    if (n->tangent_fn) {
      n->tangent_fn(*n);
    } else {
      n->ensure_tangent();  // leaves not seeded carry zero tangent
    }
  }
  out.node()->ensure_tangent();
  return out.node()->tangent.matrix();
}

}  // namespace gsmooth
