#include "apn/tape.hpp"

#include "apn/errors.hpp"

namespace apn {

const Tensor& Gradients::of(NodeId id) const {
  if (!has(id)) throw ContractError("no gradient recorded for node " + std::to_string(id));
  return grads_[id];
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
  return nodes_.size() - 1;
}

NodeId Tape::record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  bool needs = false;
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) throw ContractError("tape input refers to a future node");
    needs = needs || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), needs});
  return nodes_.size() - 1;
}

Gradients Tape::backward(NodeId loss) const {
  if (loss >= nodes_.size()) throw ContractError("unknown loss node");
  if (nodes_[loss].value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_string(nodes_[loss].value.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  if (!nodes_[loss].requires_grad) return Gradients(std::move(grads));
  grads[loss] = Tensor(nodes_[loss].value.shape(), 1.0);

  std::vector<Tensor*> input_grads;
  for (std::size_t n = loss + 1; n-- > 0;) {
    const Node& node = nodes_[n];
    if (grads[n].empty() || !node.backward) continue;
    input_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const NodeId in = node.inputs[i];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
      input_grads[i] = &grads[in];
    }
    node.backward(grads[n], input_grads);
    // Interior gradients are no longer needed once propagated.
    if (!node.inputs.empty()) grads[n] = Tensor();
  }
  return Gradients(std::move(grads));
}

void Tape::note_branch(std::uint64_t choice) {
  signature_ ^= choice + 0x9e3779b97f4a7c15ull;
  signature_ *= 0x100000001b3ull;
}

}  // namespace apn
