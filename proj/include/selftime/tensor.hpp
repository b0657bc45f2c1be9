#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace selftime::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <class Real>
struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs that require grad.
  std::function<void(Node&)> backward;

  Real* grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), Real(0));
    return grad.data();
  }
};

}  // namespace detail

// Graph recording is on by default; NoGradGuard switches it off for the
// current thread (frozen-feature extraction, evaluation).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major array with an optional gradient. Copies share the
// underlying node, so a parameter handed to several ops is one parameter.
template <class Real>
class BasicTensor {
 public:
  using value_type = Real;
  using NodePtr = std::shared_ptr<detail::Node<Real>>;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, bool requires_grad = false);
  BasicTensor(Shape shape, std::vector<Real> values, bool requires_grad = false);
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

  static BasicTensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<Real> data() { return node_->data; }
  std::span<const Real> data() const { return node_->data; }
  Real item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool is_leaf() const { return !node_->backward; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return {node_->grad_buffer(), node_->data.size()}; }
  void zero_grad() { node_->grad.clear(); }

  // New leaf holding a copy of the values, cut from any graph.
  BasicTensor detach() const;
  BasicTensor clone(bool requires_grad) const;

  const void* identity() const { return node_.get(); }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Runs reverse-mode differentiation from a scalar loss. Gradients accumulate
// into every requires_grad leaf; interior nodes are released afterwards.
template <class Real>
void backward(const BasicTensor<Real>& loss);

namespace detail {

// Builds an op result. The node records its inputs and backward closure only
// when grad mode is on and some input requires grad.
template <class Real>
BasicTensor<Real> make_result(Shape shape, std::vector<Real> values,
                              std::vector<std::shared_ptr<Node<Real>>> inputs,
                              std::function<void(Node<Real>&)> backward_fn);

}  // namespace detail

}  // namespace selftime::nn
