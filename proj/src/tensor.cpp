#include "selftime/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "selftime/errors.hpp"

namespace selftime::nn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class Real>
BasicTensor<Real>::BasicTensor(Shape shape, bool requires_grad)
    : node_(std::make_shared<detail::Node<Real>>()) {
  node_->data.assign(shape_numel(shape), Real(0));
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <class Real>
BasicTensor<Real>::BasicTensor(Shape shape, std::vector<Real> values, bool requires_grad)
    : node_(std::make_shared<detail::Node<Real>>()) {
  if (shape_numel(shape) != values.size()) {
    throw InvalidArgument("tensor: shape " + shape_string(shape) + " does not hold " +
                          std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

template <class Real>
BasicTensor<Real> BasicTensor<Real>::scalar(Real value, bool requires_grad) {
  return BasicTensor(Shape{}, std::vector<Real>{value}, requires_grad);
}

template <class Real>
Real BasicTensor<Real>::item() const {
  if (numel() != 1) throw InvalidArgument("item: tensor has " + std::to_string(numel()) + " elements");
  return node_->data[0];
}

template <class Real>
BasicTensor<Real> BasicTensor<Real>::detach() const {
  return BasicTensor(node_->shape, node_->data, false);
}

template <class Real>
BasicTensor<Real> BasicTensor<Real>::clone(bool requires_grad) const {
  return BasicTensor(node_->shape, node_->data, requires_grad);
}

template <class Real>
void backward(const BasicTensor<Real>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw InvalidArgument("backward: loss must be a scalar, got shape " +
                          (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw InvalidArgument("backward: loss is not attached to a differentiable graph");
  }
  using NodeT = detail::Node<Real>;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  for (NodeT* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->inputs.clear();
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

namespace detail {

template <class Real>
BasicTensor<Real> make_result(Shape shape, std::vector<Real> values,
                              std::vector<std::shared_ptr<Node<Real>>> inputs,
                              std::function<void(Node<Real>&)> backward_fn) {
  BasicTensor<Real> out(std::move(shape), std::move(values), false);
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in->requires_grad;
  }
  if (needs_grad) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.inputs = std::move(inputs);
    node.backward = std::move(backward_fn);
  }
  return out;
}

}  // namespace detail

template class BasicTensor<float>;
template class BasicTensor<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);
template BasicTensor<float> detail::make_result<float>(Shape, std::vector<float>,
                                                       std::vector<std::shared_ptr<detail::Node<float>>>,
                                                       std::function<void(detail::Node<float>&)>);
template BasicTensor<double> detail::make_result<double>(Shape, std::vector<double>,
                                                         std::vector<std::shared_ptr<detail::Node<double>>>,
                                                         std::function<void(detail::Node<double>&)>);

}  // namespace selftime::nn
