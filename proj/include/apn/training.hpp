#ifndef APN_TRAINING_HPP_
#define APN_TRAINING_HPP_

#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "apn/attributes.hpp"
#include "apn/model.hpp"
#include "apn/optimizer.hpp"

namespace apn {

struct TrainConfig {
  SgdConfig sgd;
  LossWeights weights;
  std::size_t batch_size = 16;
};

// Batch-size-weighted epoch means of each loss term.
struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double ad = 0.0;
  double cpt = 0.0;
  double total = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&, const ApnModel&)>;

/// Mini-batch SGD on loss_apn. Each epoch visits the examples in an order
/// drawn from (sgd.seed, epoch).
std::vector<EpochLog> train(ApnModel& model, std::span<const Example> examples,
                            const AttributeTable& attrs, const TrainConfig& cfg,
                            const EpochCallback& on_epoch = {});

// One full-batch step on `batch`; returns the loss before the update.
LossBreakdown train_step(ApnModel& model, std::span<const Example> batch,
                         const AttributeTable& attrs, const LossWeights& weights, SgdState& state,
                         double lr, const SgdConfig& sgd);

// Columns: epoch,lr,L_CLS,L_Reg,L_AD,L_CPT,total.
void write_training_log(std::ostream& os, std::span<const EpochLog> logs);

}  // namespace apn

#endif  // APN_TRAINING_HPP_
