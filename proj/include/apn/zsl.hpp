#ifndef APN_ZSL_HPP_
#define APN_ZSL_HPP_

#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "apn/attributes.hpp"
#include "apn/tensor.hpp"

namespace apn {

// g^T V phi(y) for every class id y (index = class id).
Tensor class_scores(const Tensor& g, const Tensor& V, const AttributeTable& attrs);

// argmax over unseen classes; ties go to the smallest class id.
std::size_t zsl_predict(const Tensor& scores, const AttributeTable& attrs);
std::size_t zsl_predict(const Tensor& g, const Tensor& V, const AttributeTable& attrs);

// argmax over all classes of score - gamma * [class is seen]; ties go to
// the smallest class id.
std::size_t gzsl_predict(const Tensor& scores, const AttributeTable& attrs, double gamma);
std::size_t gzsl_predict(const Tensor& g, const Tensor& V, const AttributeTable& attrs, double gamma);

/// Mean over `class_ids` of per-class accuracy. Classes without samples are
/// left out and reported through `warnings` when given.
double per_class_top1(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                      std::span<const std::size_t> class_ids,
                      std::vector<std::string>* warnings = nullptr);

double harmonic_mean(double s, double u);

struct EvalReport {
  std::map<std::size_t, double> per_class_acc;
  double top1 = 0.0;
  // GZSL only.
  double acc_seen = 0.0;
  double acc_unseen = 0.0;
  double harmonic = 0.0;
  double gamma = 0.0;
};

// ZSL: predictions over unseen classes for unseen-class samples.
EvalReport evaluate_zsl(std::span<const Tensor> scores, std::span<const std::size_t> labels,
                        const AttributeTable& attrs);

// GZSL at one gamma over samples of both seen and unseen classes.
EvalReport evaluate_gzsl(std::span<const Tensor> scores, std::span<const std::size_t> labels,
                         const AttributeTable& attrs, double gamma);

struct CalibrationSweep {
  std::vector<EvalReport> rows;  // one per gamma, grid order
  std::size_t best = 0;          // row with the highest H (first on ties)
};

CalibrationSweep calibration_sweep(std::span<const Tensor> scores, std::span<const std::size_t> labels,
                                   const AttributeTable& attrs, std::span<const double> gamma_grid);

// "lo:hi:step" inclusive grid; 0:1:0.02 has 51 points.
std::vector<double> parse_gamma_grid(const std::string& spec);
std::vector<double> gamma_grid(double lo, double hi, double step);

// gamma,s,u,H
void write_sweep_csv(std::ostream& os, const CalibrationSweep& sweep);

struct BinaryAttributePrediction {
  std::vector<int> bits;
  double accuracy = 0.0;  // agreement with `truth` (only if provided)
};

// bit k = (a_hat_k >= 0.5).
BinaryAttributePrediction predict_binary_attributes(const Tensor& a_hat,
                                                    const Tensor* truth = nullptr);

}  // namespace apn

#endif  // APN_ZSL_HPP_
