#include "touchadd/nn/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace touchadd::nn {

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor::Tensor(Mat value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(Real v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), false);
}

Tensor Tensor::from_op(Mat value, std::vector<Tensor> inputs,
                       std::function<void(Node&)> backward_fn) {
  Tensor out(std::move(value), false);
  if (!t_grad_enabled) return out;
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (auto& t : inputs) out.node_->inputs.push_back(t.node_);
  out.node_->backward_fn = std::move(backward_fn);
  return out;
}

void Tensor::backward() {
  if (!node_ || node_->value.size() != 1) throw std::logic_error("backward() needs a scalar tensor");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer().array() += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  // Release interior buffers so a retained loss does not pin activations.
  for (Node* n : order) {
    if (n->backward_fn) {
      n->grad.resize(0, 0);
    }
  }
}

}  // namespace touchadd::nn
