#ifndef APN_OPTIMIZER_HPP_
#define APN_OPTIMIZER_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "apn/attributes.hpp"
#include "apn/model.hpp"
#include "apn/tensor.hpp"

namespace apn {

struct SgdConfig {
  double base_lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  int decay_every = 10;  // epochs
  double decay_factor = 0.5;
  int epochs = 30;
  std::uint64_t seed = 0;

  void validate() const;
};

// Velocity per parameter tensor, zero-initialized on first use.
struct SgdState {
  std::vector<Tensor> velocity;
};

// base_lr * decay_factor^floor(epoch / decay_every).
double lr_schedule(int epoch, const SgdConfig& cfg);

// Coupled weight decay with classical momentum:
//   v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, SgdState& state,
              double lr, const SgdConfig& cfg);

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose +-h probe crossed a kink or tie
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;
  bool passed = true;

  std::size_t skipped() const;
  std::vector<std::string> failing() const;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-6;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-3;
};

/// Compares tape gradients of loss_apn against central differences for
/// every parameter coordinate. Intended for smoke-scale models.
GradCheckReport grad_check(const ApnModel& model, std::span<const Example> batch,
                           const AttributeTable& attrs, const LossWeights& weights,
                           const GradCheckOptions& options);

}  // namespace apn

#endif  // APN_OPTIMIZER_HPP_
