#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "sshnet/nn/tensor.hpp"

namespace sshnet::nn {

// Reverse-mode graph node. Backward closures accumulate into parents' grads;
// every kernel runs in a fixed sequential order so results are bit-stable
// run to run.
template <typename T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void()> backward_fn;
  std::string name;

  void ensure_grad() {
    if (grad.v.empty()) grad = Tensor<T>(val.shape);
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> t, bool requires_grad = false, std::string name = {}) {
    node_ = std::make_shared<Node<T>>();
    node_->val = std::move(t);
    node_->requires_grad = requires_grad;
    node_->name = std::move(name);
  }

  bool defined() const { return node_ != nullptr; }
  Tensor<T>& val() { return node_->val; }
  const Tensor<T>& val() const { return node_->val; }
  Tensor<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<int>& shape() const { return node_->val.shape; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::string& name() const { return node_->name; }

  void zero_grad() {
    if (!node_) return;
    node_->ensure_grad();
    std::fill(node_->grad.v.begin(), node_->grad.v.end(), T(0));
  }

  std::shared_ptr<Node<T>> node_;
};

// Thread-local guard disabling graph recording (inference / data paths).
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool f = true;
    return f;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev); }
};

// Runs reverse-mode accumulation from a scalar loss.
template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.node_->val.numel() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar");

  // Iterative post-order DFS over parents.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({loss.node_.get(), 0});
  seen.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node_->ensure_grad();
  loss.node_->grad.v[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->requires_grad && node->backward_fn) node->backward_fn();
  }
}

}  // namespace sshnet::nn
