#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wscl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Probability clamp applied by sigmoid and inside BCE.
inline constexpr double kProbEps = 1e-7;

template <typename T>
struct Node;

template <typename T>
using BackwardFn = std::function<void(Node<T>& self)>;

// One recorded operation. Nodes are numbered in creation order, so sorting
// the reachable set by `seq` descending is a valid reverse topological order.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<T>>> parents;
  BackwardFn<T> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
  bool is_leaf() const { return !backward; }
};

std::uint64_t next_node_seq();

bool grad_enabled();

// Keeps large tensor buffers on the heap instead of fresh mmaps; call once
// from main before training.
void tune_allocator();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  // Result of an op. Parents and the backward closure are only retained when
  // recording is enabled and some parent requires grad.
  static Tensor from_op(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                        BackwardFn<T> backward, const char* op);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Only leaves may be written (parameters, inputs); op results are immutable.
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t flat) const { return node_->data.at(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  // Same values, no history.
  Tensor detach() const;
  Tensor clone() const;

  // Reverse-mode sweep from a scalar. Releases the recorded graph afterwards.
  void backward() const;

  const char* op_name() const { return node_->op; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace wscl
