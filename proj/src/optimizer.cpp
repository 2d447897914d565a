#include "apn/optimizer.hpp"

#include <cmath>

#include "apn/errors.hpp"
#include "apn/ops.hpp"

namespace apn {

void SgdConfig::validate() const {
  if (!(base_lr > 0.0)) throw ContractError("base_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0,1)");
  if (weight_decay < 0) throw ContractError("weight_decay must be >= 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ContractError("decay_factor must lie in (0,1]");
  if (decay_every <= 0) throw ContractError("decay_every must be positive");
  if (epochs < 0) throw ContractError("epochs must be >= 0");
}

double lr_schedule(int epoch, const SgdConfig& cfg) {
  if (epoch < 0) throw ContractError("epoch must be >= 0");
  return cfg.base_lr * std::pow(cfg.decay_factor, double(epoch / cfg.decay_every));
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, SgdState& state,
              double lr, const SgdConfig& cfg) {
  if (params.size() != grads.size()) throw DimensionError("sgd_step: one gradient per parameter");
  if (state.velocity.empty()) {
    for (const Tensor* p : params) state.velocity.emplace_back(p->shape(), 0.0);
  }
  if (state.velocity.size() != params.size()) throw DimensionError("sgd_step: optimizer state mismatch");
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    Tensor& v = state.velocity[t];
    require_same_shape(p, grads[t], "sgd_step gradient");
    require_same_shape(p, v, "sgd_step velocity");
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = cfg.momentum * v[i] + grads[t][i] + cfg.weight_decay * p[i];
      p[i] -= lr * v[i];
    }
  }
}

std::size_t GradCheckReport::skipped() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.skipped;
  return n;
}

std::vector<std::string> GradCheckReport::failing() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (!e.passed) out.push_back(e.name);
  return out;
}

GradCheckReport grad_check(const ApnModel& model, std::span<const Example> batch,
                           const AttributeTable& attrs, const LossWeights& weights,
                           const GradCheckOptions& options) {
  Tape tape;
  const ModelNodes nodes = bind_parameters(tape, model);
  const LossBreakdown loss = loss_apn(tape, nodes, batch, attrs, weights);
  const Gradients grads = tape.backward(loss.total_node);
  const std::uint64_t reference_signature = tape.branch_signature();
  const std::vector<NodeId> ids = nodes.ordered();

  GradCheckReport report;
  report.tolerance = options.tolerance;
  ApnModel probe_model = model;
  auto probe_params = probe_model.parameters();
  for (std::size_t t = 0; t < probe_params.size(); ++t) {
    auto& [name, target] = probe_params[t];
    const Tensor original = *target;
    const Tensor& analytic = grads.of(ids[t]);

    // finite_diff_grad probes coordinate i with calls 2i (+h) and 2i+1 (-h).
    std::vector<bool> off_piece(original.size(), false);
    std::size_t call = 0;
    auto loss_at = [&](const Tensor& values) {
      *target = values;
      Tape probe;
      const ModelNodes pn = bind_parameters(probe, probe_model, false);
      const double v = loss_apn(probe, pn, batch, attrs, weights).total;
      if (probe.branch_signature() != reference_signature) off_piece[call / 2] = true;
      ++call;
      return v;
    };
    const Tensor numeric = finite_diff_grad(loss_at, original, options.step);
    *target = original;

    GradCheckEntry entry;
    entry.name = name;
    for (std::size_t i = 0; i < original.size(); ++i) {
      if (off_piece[i]) {
        ++entry.skipped;
        continue;
      }
      ++entry.checked;
      const double a = analytic[i], n = numeric[i];
      const double denom = std::max({std::abs(a), std::abs(n), options.abs_floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - n) / denom);
    }
    entry.passed = entry.max_rel_error < options.tolerance;
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace apn
