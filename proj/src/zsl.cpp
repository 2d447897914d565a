#include "apn/zsl.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "apn/errors.hpp"
#include "apn/model.hpp"

namespace apn {
namespace {

std::size_t argmax_over(const Tensor& scores, std::span<const std::size_t> ids, double seen_penalty,
                        const AttributeTable* attrs) {
  std::size_t best = 0;
  double best_score = 0.0;
  bool have = false;
  for (std::size_t id : ids) {
    if (id >= scores.size()) throw ContractError("class id outside the score vector");
    double s = scores[id];
    if (attrs && seen_penalty != 0.0 && attrs->is_seen(id)) s -= seen_penalty;
    if (!have || s > best_score || (s == best_score && id < best)) {
      best = id;
      best_score = s;
      have = true;
    }
  }
  if (!have) throw ContractError("no candidate classes");
  return best;
}

}  // namespace

Tensor class_scores(const Tensor& g, const Tensor& V, const AttributeTable& attrs) {
  return compatibility_logits(g, V, attrs.phi);
}

std::size_t zsl_predict(const Tensor& scores, const AttributeTable& attrs) {
  if (attrs.unseen_ids.empty()) throw ContractError("ZSL needs at least one unseen class");
  return argmax_over(scores, attrs.unseen_ids, 0.0, nullptr);
}

std::size_t zsl_predict(const Tensor& g, const Tensor& V, const AttributeTable& attrs) {
  return zsl_predict(class_scores(g, V, attrs), attrs);
}

std::size_t gzsl_predict(const Tensor& scores, const AttributeTable& attrs, double gamma) {
  if (!std::isfinite(gamma)) throw ContractError("gamma must be finite");
  std::vector<std::size_t> all;
  all.insert(all.end(), attrs.seen_ids.begin(), attrs.seen_ids.end());
  all.insert(all.end(), attrs.unseen_ids.begin(), attrs.unseen_ids.end());
  return argmax_over(scores, all, gamma, &attrs);
}

std::size_t gzsl_predict(const Tensor& g, const Tensor& V, const AttributeTable& attrs,
                         double gamma) {
  return gzsl_predict(class_scores(g, V, attrs), attrs, gamma);
}

double per_class_top1(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                      std::span<const std::size_t> class_ids, std::vector<std::string>* warnings) {
  if (predictions.size() != labels.size()) throw DimensionError("one prediction per label required");
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> tally;  // class -> (correct, total)
  for (std::size_t id : class_ids) tally[id];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = tally.find(labels[i]);
    if (it == tally.end()) throw ContractError("label " + std::to_string(labels[i]) + " not among evaluated classes");
    it->second.second += 1;
    it->second.first += predictions[i] == labels[i] ? 1 : 0;
  }
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& [id, ct] : tally) {
    if (ct.second == 0) {
      if (warnings) warnings->push_back("class " + std::to_string(id) + " has no samples; excluded");
      continue;
    }
    total += double(ct.first) / double(ct.second);
    ++used;
  }
  return used ? total / double(used) : 0.0;
}

double harmonic_mean(double s, double u) {
  return s + u > 0.0 ? 2.0 * s * u / (s + u) : 0.0;
}

EvalReport evaluate_zsl(std::span<const Tensor> scores, std::span<const std::size_t> labels,
                        const AttributeTable& attrs) {
  if (scores.size() != labels.size()) throw DimensionError("one score vector per label required");
  std::vector<std::size_t> preds, labs;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (attrs.is_seen(labels[i])) continue;
    preds.push_back(zsl_predict(scores[i], attrs));
    labs.push_back(labels[i]);
  }
  EvalReport r;
  for (std::size_t id : attrs.unseen_ids) {
    std::size_t n = 0, ok = 0;
    for (std::size_t i = 0; i < labs.size(); ++i)
      if (labs[i] == id) ++n, ok += preds[i] == id;
    if (n) r.per_class_acc[id] = double(ok) / double(n);
  }
  r.top1 = per_class_top1(preds, labs, attrs.unseen_ids);
  return r;
}

EvalReport evaluate_gzsl(std::span<const Tensor> scores, std::span<const std::size_t> labels,
                         const AttributeTable& attrs, double gamma) {
  if (scores.size() != labels.size()) throw DimensionError("one score vector per label required");
  std::vector<std::size_t> ps, ls, pu, lu;
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> tally;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::size_t p = gzsl_predict(scores[i], attrs, gamma);
    auto& t = tally[labels[i]];
    t.first += p == labels[i];
    t.second += 1;
    if (attrs.is_seen(labels[i])) {
      ps.push_back(p);
      ls.push_back(labels[i]);
    } else {
      pu.push_back(p);
      lu.push_back(labels[i]);
    }
  }
  EvalReport r;
  r.gamma = gamma;
  for (const auto& [id, t] : tally) r.per_class_acc[id] = double(t.first) / double(t.second);
  r.acc_seen = per_class_top1(ps, ls, attrs.seen_ids);
  r.acc_unseen = per_class_top1(pu, lu, attrs.unseen_ids);
  r.harmonic = harmonic_mean(r.acc_seen, r.acc_unseen);
  std::vector<std::size_t> all_p = ps, all_l = ls, ids = attrs.seen_ids;
  all_p.insert(all_p.end(), pu.begin(), pu.end());
  all_l.insert(all_l.end(), lu.begin(), lu.end());
  ids.insert(ids.end(), attrs.unseen_ids.begin(), attrs.unseen_ids.end());
  r.top1 = per_class_top1(all_p, all_l, ids);
  return r;
}

CalibrationSweep calibration_sweep(std::span<const Tensor> scores, std::span<const std::size_t> labels,
                                   const AttributeTable& attrs, std::span<const double> gamma_grid) {
  if (gamma_grid.empty()) throw ContractError("gamma grid is empty");
  CalibrationSweep sweep;
  for (double gamma : gamma_grid) {
    sweep.rows.push_back(evaluate_gzsl(scores, labels, attrs, gamma));
    if (sweep.rows.back().harmonic > sweep.rows[sweep.best].harmonic) sweep.best = sweep.rows.size() - 1;
  }
  return sweep;
}

std::vector<double> gamma_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw ContractError("gamma grid needs lo <= hi and step > 0");
  const long n = std::lround(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (long i = 0; i < n; ++i) grid.push_back(lo + double(i) * step);
  return grid;
}

std::vector<double> parse_gamma_grid(const std::string& spec) {
  double lo, hi, step;
  char tail;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf%c", &lo, &hi, &step, &tail) != 3) {
    throw ContractError("gamma grid must look like lo:hi:step, got '" + spec + "'");
  }
  return gamma_grid(lo, hi, step);
}

void write_sweep_csv(std::ostream& os, const CalibrationSweep& sweep) {
  os << "gamma,s,u,H\n";
  char buf[128];
  for (const EvalReport& r : sweep.rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%.17g,%.17g,%.17g\n", r.gamma, r.acc_seen, r.acc_unseen,
                  r.harmonic);
    os << buf;
  }
}

BinaryAttributePrediction predict_binary_attributes(const Tensor& a_hat, const Tensor* truth) {
  BinaryAttributePrediction out;
  out.bits.reserve(a_hat.size());
  for (double v : a_hat.data()) out.bits.push_back(v >= 0.5 ? 1 : 0);
  if (truth) {
    if (truth->size() != a_hat.size()) throw DimensionError("attribute truth length mismatch");
    std::size_t agree = 0;
    for (std::size_t k = 0; k < a_hat.size(); ++k) agree += out.bits[k] == ((*truth)[k] >= 0.5 ? 1 : 0);
    out.accuracy = double(agree) / double(a_hat.size());
  }
  return out;
}

}  // namespace apn
