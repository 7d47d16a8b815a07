#include "wscl/tensor.hpp"

#include <malloc.h>

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace wscl {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::uint64_t next_node_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<Node<T>>()) {
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
  node_->seq = next_node_seq();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node<T>>()) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->seq = next_node_seq();
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                             BackwardFn<T> backward, const char* op) {
  Tensor out(std::move(shape), std::move(values));
  out.node_->op = op;
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->backward = std::move(backward);
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  return out;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node_->is_leaf()) {
    throw std::logic_error(std::string("tensor: result of '") + node_->op + "' is immutable");
  }
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->data.size() != 1) {
    throw std::invalid_argument("tensor: item() on shape " + shape_str(node_->shape));
  }
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(node_->shape, node_->data);
  out.node_->requires_grad = node_->requires_grad;
  return out;
}

template <typename T>
void Tensor<T>::backward() const {
  if (node_->data.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(node_->shape));
  }
  if (!node_->requires_grad) {
    throw std::logic_error("backward: loss does not depend on any tensor requiring grad");
  }

  // Owning handles keep every node alive while the graph is torn down below.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::shared_ptr<Node<T>>> stack{node_};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    for (auto& p : n->parents) {
      if (p && p->requires_grad && !seen.count(p.get())) stack.push_back(p);
    }
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });

  node_->ensure_grad()[0] += T(1);
  for (auto& n : order) {
    if (n->is_leaf() || n->grad.empty()) continue;
    n->backward(*n);
  }
  // Interior grads and the graph are single-use.
  for (auto& n : order) {
    if (n->is_leaf()) continue;
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->backward = nullptr;
    n->parents.clear();
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace wscl
