#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bigraph/errors.hpp"

namespace bigraph {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense n-d array of scalars participating in a differentiation graph.
// A Tensor is a cheap handle; the node owns storage, parent links and the
// backward closure recorded when the value was produced by a primitive.
// Values are immutable after forward construction except for grad
// accumulation, which is additive across fan-out.
template <typename T>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // allocated on first accumulation, same extent as values
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    int64_t numel() const { return static_cast<int64_t>(values.size()); }
    void ensure_grad() {
      if (grad.empty()) grad.assign(values.size(), T(0));
    }
  };
  using NodePtr = std::shared_ptr<Node>;

  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->values.assign(static_cast<size_t>(shape_numel(shape)), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.node_->values) v = value;
    return t;
  }

  static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false) {
    BG_CHECK_DIM(shape_numel(shape) == static_cast<int64_t>(values.size()),
                 "tensor: shape " << shape_str(shape) << " does not match " << values.size()
                                  << " values");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_values({1}, {v}, requires_grad);
  }

  static Tensor identity_matrix(int64_t n) {
    Tensor t = zeros({n, n});
    for (int64_t i = 0; i < n; ++i) t.node_->values[static_cast<size_t>(i * n + i)] = T(1);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int64_t dim(size_t i) const { return node_->shape[i]; }
  size_t rank() const { return node_->shape.size(); }

  std::span<const T> values() const { return node_->values; }
  std::span<T> values_mut() { return node_->values; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }

  void ensure_grad() { node_->ensure_grad(); }

  // Gradient accumulation is additive; call this between optimizer steps.
  void zero_grad() {
    for (auto& g : node_->grad) g = T(0);
  }

  // Leaf copy of the values, cut off from the graph.
  Tensor detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->values = node_->values;
    n->requires_grad = false;
    return Tensor(std::move(n));
  }

  T item() const {
    BG_CHECK(node_ && node_->numel() == 1,
             "item: tensor is not scalar, shape " << (node_ ? shape_str(node_->shape) : "{}"));
    return node_->values[0];
  }

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// Differentiation tape: the ordered record of executed primitives reachable
// from a root, parents before consumers. Reverse replay visits each node
// exactly once.
template <typename T>
class Tape {
 public:
  using Node = typename Tensor<T>::Node;
  using NodePtr = typename Tensor<T>::NodePtr;

  static Tape build(const Tensor<T>& root) {
    BG_CHECK(root.defined(), "tape: undefined root");
    Tape tape;
    struct Frame {
      NodePtr n;
      size_t next_parent;
    };
    std::unordered_set<const Node*> visited;
    std::vector<Frame> stack;
    stack.push_back({root.node(), 0});
    visited.insert(root.node().get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.n->parents.size()) {
        NodePtr p = f.n->parents[f.next_parent++];
        if (visited.insert(p.get()).second) stack.push_back({std::move(p), 0});
      } else {
        tape.order_.push_back(f.n);
        stack.pop_back();
      }
    }
    return tape;
  }

  const std::vector<NodePtr>& nodes() const { return order_; }

  // Seeds the root gradient with 1 and replays the record in reverse.
  void run_backward() {
    BG_CHECK(!order_.empty(), "tape: empty");
    Node* root = order_.back().get();
    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      Node* n = it->get();
      if (n->backprop && n->requires_grad && !n->grad.empty()) n->backprop(*n);
    }
  }

 private:
  std::vector<NodePtr> order_;
};

// Populates grad for every requires_grad tensor reachable from `loss`.
template <typename T>
void backward(const Tensor<T>& loss) {
  BG_CHECK(loss.defined() && loss.numel() == 1,
           "backward: loss must be scalar, got shape "
               << (loss.defined() ? shape_str(loss.shape()) : "{}"));
  Tape<T>::build(loss).run_backward();
}

}  // namespace bigraph
