#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pren/tensor.hpp"

namespace pren {

// Records the forward pass as an ordered list of nodes. Construction order is
// a topological order by design: an op can only reference nodes that already
// exist, so reverse replay visits every node exactly once.
//
// Leaf nodes either own their value (constants) or reference an external
// parameter tensor; for the latter, backward() accumulates the node gradient
// into the parameter's grad buffer.
template <class S>
class Tape {
 public:
  // Called during reverse replay with the id of the node it belongs to, so
  // the rule can read its own output gradient via tape.grad(self).
  using BackwardFn = std::function<void(Tape<S>&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int leaf(Tensor<S> value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, {}, {}, "leaf"});
    return last();
  }

  int param(Tensor<S>* p) {
    nodes_.push_back(Node{{}, p, {}, {}, {}, "param"});
    return last();
  }

  int push(Tensor<S> value, std::vector<int> parents, BackwardFn back,
           const char* op_name) {
    for (int p : parents) check_id(p);
    nodes_.push_back(Node{std::move(value), nullptr, {}, std::move(back),
                          std::move(parents), op_name});
    return last();
  }

  const Tensor<S>& value(int id) const {
    check_id(id);
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.owned;
  }

  std::vector<S>& grad(int id) {
    check_id(id);
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() != static_cast<std::size_t>(value(id).size()))
      n.grad.assign(static_cast<std::size_t>(value(id).size()), S(0));
    return n.grad;
  }

  const char* op_name(int id) const {
    check_id(id);
    return nodes_[static_cast<std::size_t>(id)].op;
  }

  std::size_t node_count() const { return nodes_.size(); }

  // Reverse-topological replay from a scalar loss node. Gradients accumulate
  // additively across fan-out; parameter-leaf gradients are added into the
  // external tensors' grad buffers.
  void backward(int loss) {
    check_id(loss);
    if (value(loss).size() != 1)
      throw std::invalid_argument(
          "backward requires a scalar loss node, got shape " +
          shape_str(value(loss).shape));
    grad(loss)[0] = S(1);
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.empty()) continue;  // unreachable from the loss
      if (n.back) n.back(*this, id);
      if (n.external) {
        n.external->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          n.external->grad[i] += n.grad[i];
      }
    }
  }

 private:
  struct Node {
    Tensor<S> owned;
    Tensor<S>* external = nullptr;
    std::vector<S> grad;
    BackwardFn back;
    std::vector<int> parents;
    const char* op = "";
  };

  int last() const { return static_cast<int>(nodes_.size()) - 1; }

  void check_id(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw std::out_of_range("tape node id " + std::to_string(id) +
                              " out of range");
  }

  std::vector<Node> nodes_;
};

}  // namespace pren
