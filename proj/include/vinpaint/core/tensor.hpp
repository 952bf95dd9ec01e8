#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace vinpaint {

using real = double;
using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

[[noreturn]] inline void tensor_fail(const std::string& msg) {
  throw std::invalid_argument("tensor: " + msg);
}

// When enabled, every op scans its output for NaN/Inf and aborts with the op
// name. Off by default; the gradcheck CLI and some tests switch it on.
inline bool& finite_check_mode() {
  static bool on = false;
  return on;
}

// A value in a recorded computation. Tensors are cheap shared handles onto
// graph nodes; ops allocate a fresh node holding the result, its parents and
// a backward closure. Untracked inputs produce plain nodes with no tape.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<real> value;
    std::vector<real> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(Node&)> backward_fn;
    const char* op = "leaf";

    void ensure_grad() {
      if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }

    ~Node() {
      // Graphs form long chains; tear down iteratively so the destructor
      // does not recurse once per node.
      std::vector<std::shared_ptr<Node>> stack;
      auto grab = [&stack](std::vector<Tensor>& ps) {
        for (Tensor& t : ps)
          if (t.node_ && t.node_.use_count() == 1)
            stack.push_back(std::move(t.node_));
        ps.clear();
      };
      grab(parents);
      while (!stack.empty()) {
        std::shared_ptr<Node> n = std::move(stack.back());
        stack.pop_back();
        grab(n->parents);
      }
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool tracked = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(shape_numel(t.node_->shape), 0.0);
    t.node_->requires_grad = tracked;
    return t;
  }

  static Tensor full(Shape shape, real v) {
    Tensor t = zeros(std::move(shape));
    for (real& x : t.node_->value) x = v;
    return t;
  }

  static Tensor scalar(real v) { return full({1}, v); }

  static Tensor from_data(Shape shape, std::vector<real> data) {
    if (shape_numel(shape) != (int64_t)data.size())
      tensor_fail("from_data: shape " + shape_str(shape) + " needs " +
                  std::to_string(shape_numel(shape)) + " values, got " +
                  std::to_string(data.size()));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return (int)node_->shape.size(); }
  int dim(int i) const { return node_->shape[i < 0 ? i + ndim() : i]; }
  int64_t numel() const { return (int64_t)node_->value.size(); }

  const std::vector<real>& values() const { return node_->value; }
  // Direct mutation is for leaves (parameter updates, data loading); mutating
  // an interior node after recording would corrupt the tape.
  std::vector<real>& values_mut() { return node_->value; }

  real item() const {
    if (numel() != 1) tensor_fail("item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
  }

  bool tracked() const { return node_->requires_grad; }
  Tensor& set_tracked(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const std::vector<real>& grad() const {
    if (!has_grad()) tensor_fail("grad not computed");
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  void drop_grad() { node_->grad.clear(); }

  // Reverse-mode sweep from a scalar. Seeds d(self)/d(self) = 1, walks the
  // recorded graph in reverse topological order and accumulates into every
  // tracked node's grad.
  void backward() {
    if (numel() != 1) tensor_fail("backward() from non-scalar");
    std::vector<Node*> order = topo_order();
    node_->ensure_grad();
    node_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn) {
        for (Tensor& p : n->parents)
          if (p.node_->requires_grad) p.node_->ensure_grad();
        n->backward_fn(*n);
      }
    }
  }

  Node* node() const { return node_.get(); }

  // Builds an op node. Skips recording entirely when no parent is tracked.
  static Tensor make_op(const char* op, Shape shape, std::vector<real> value,
                        std::vector<Tensor> parents,
                        std::function<void(Node&)> backward_fn) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(value);
    t.node_->op = op;
    if ((int64_t)t.node_->value.size() != shape_numel(t.node_->shape))
      tensor_fail(std::string(op) + ": internal size mismatch");
    if (finite_check_mode()) {
      for (real v : t.node_->value)
        if (!std::isfinite(v))
          tensor_fail(std::string(op) + " produced a non-finite value");
    }
    bool track = false;
    for (const Tensor& p : parents) track = track || p.node_->requires_grad;
    if (track) {
      t.node_->requires_grad = true;
      t.node_->parents = std::move(parents);
      t.node_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

 private:
  std::shared_ptr<Node> node_;

  std::vector<Node*> topo_order() const {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative DFS; second visit emits the node.
    std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        Node* p = n->parents[idx++].node_.get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;
  }
};

using Node = Tensor::Node;

// Named trainable tensor. Names are unique within a model; the checkpoint
// format and the Adam state are keyed by them.
struct Parameter {
  std::string name;
  Tensor tensor;
};

}  // namespace vinpaint
