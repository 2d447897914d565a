#ifndef APN_TAPE_HPP_
#define APN_TAPE_HPP_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "apn/tensor.hpp"

namespace apn {

using NodeId = std::size_t;

// Receives the gradient flowing into a node's output and accumulates into the
// gradients of its inputs. Entries of `input_grads` are null for inputs that
// do not require a gradient.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> input_grads)>;

class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

  bool has(NodeId id) const { return id < grads_.size() && !grads_[id].empty(); }
  const Tensor& of(NodeId id) const;

 private:
  std::vector<Tensor> grads_;
};

/// Records a fixed computation graph in topological order and replays it in
/// reverse to produce exact gradients.
///
/// Ops that contain a discrete choice (ReLU gate, argmax) append that choice
/// to the branch signature; two forward passes with equal signatures evaluate
/// the same smooth piece of the function.
class Tape {
 public:
  NodeId leaf(Tensor value, bool requires_grad = false);
  NodeId record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Loss must be a single-element node.
  Gradients backward(NodeId loss) const;

  void note_branch(std::uint64_t choice);
  std::uint64_t branch_signature() const { return signature_; }

 private:
  struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;  // stable references on append
  std::uint64_t signature_ = 0xcbf29ce484222325ull;
};

}  // namespace apn

#endif  // APN_TAPE_HPP_
