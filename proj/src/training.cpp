#include "apn/training.hpp"

#include <cstdio>
#include <numeric>

#include "apn/errors.hpp"
#include "apn/random.hpp"

namespace apn {

LossBreakdown train_step(ApnModel& model, std::span<const Example> batch,
                         const AttributeTable& attrs, const LossWeights& weights, SgdState& state,
                         double lr, const SgdConfig& sgd) {
  Tape tape;
  const ModelNodes nodes = bind_parameters(tape, model);
  const LossBreakdown loss = loss_apn(tape, nodes, batch, attrs, weights);
  const Gradients grads = tape.backward(loss.total_node);

  std::vector<Tensor*> params;
  std::vector<Tensor> g;
  const std::vector<NodeId> ids = nodes.ordered();
  auto named = model.parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    params.push_back(named[i].second);
    g.push_back(grads.has(ids[i]) ? grads.of(ids[i]) : Tensor(named[i].second->shape(), 0.0));
  }
  sgd_step(params, g, state, lr, sgd);
  return loss;
}

std::vector<EpochLog> train(ApnModel& model, std::span<const Example> examples,
                            const AttributeTable& attrs, const TrainConfig& cfg,
                            const EpochCallback& on_epoch) {
  cfg.sgd.validate();
  if (examples.empty()) throw ContractError("training set is empty");
  if (cfg.batch_size == 0) throw ContractError("batch size must be positive");
  attrs.validate();
  model.validate();
  if (model.num_attributes() != attrs.num_attributes()) {
    throw DimensionError("model K=" + std::to_string(model.num_attributes()) +
                         " but attribute table has K=" + std::to_string(attrs.num_attributes()));
  }
  for (const Example& ex : examples) attrs.seen_index(ex.class_id);

  SgdState state;
  std::vector<EpochLog> logs;
  std::vector<std::size_t> order(examples.size());
  for (int epoch = 0; epoch < cfg.sgd.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.sgd.seed, std::uint64_t(epoch)));
    rng.shuffle(order);

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_schedule(epoch, cfg.sgd);
    std::vector<Example> batch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(examples[order[i]]);
      }
      const LossBreakdown loss = train_step(model, batch, attrs, cfg.weights, state, log.lr, cfg.sgd);
      const double w = double(batch.size()) / double(order.size());
      log.cls += w * loss.cls;
      log.reg += w * loss.reg;
      log.ad += w * loss.ad;
      log.cpt += w * loss.cpt;
      log.total += w * loss.total;
    }
    if (!model.V.all_finite() || !model.P.all_finite()) {
      throw ContractError("training diverged at epoch " + std::to_string(epoch));
    }
    logs.push_back(log);
    if (on_epoch) on_epoch(log, model);
  }
  return logs;
}

void write_training_log(std::ostream& os, std::span<const EpochLog> logs) {
  os << "epoch,lr,L_CLS,L_Reg,L_AD,L_CPT,total\n";
  char buf[256];
  for (const EpochLog& l : logs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", l.epoch, l.lr, l.cls,
                  l.reg, l.ad, l.cpt, l.total);
    os << buf;
  }
}

}  // namespace apn
