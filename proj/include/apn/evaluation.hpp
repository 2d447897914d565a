#ifndef APN_EVALUATION_HPP_
#define APN_EVALUATION_HPP_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apn/dataset.hpp"
#include "apn/localization.hpp"
#include "apn/model.hpp"
#include "apn/parallel.hpp"
#include "apn/zsl.hpp"

namespace apn {

struct Inference {
  std::string sample_id;
  std::size_t class_id = 0;
  Tensor fmap;    // [H x W x C]
  Tensor scores;  // per class id
  SimilarityStack sim;
};

std::vector<Inference> run_inference(const ApnModel& model, const AttributeTable& attrs,
                                     std::span<const Sample* const> samples, std::size_t threads);

struct LocalizeOptions {
  double fraction = 0.25;
  double threshold = 0.5;
  bool cam = false;  // BaseMod + CAM maps instead of prototype similarity maps
  std::optional<std::filesystem::path> heatmap_dir;
};

/// Predicts one box per part (group) and scores it with PCP against
/// keypoint-style ground truth of the same size.
PcpResult localize(const Dataset& data, const ApnModel& model, std::span<const Sample* const> samples,
                   std::span<const Inference> inference, const LocalizeOptions& options);

// Ground-truth boxes at the evaluation size for every sample with parts.
std::vector<ImageParts> ground_truth_parts(const Dataset& data, std::span<const Sample* const> samples,
                                           double fraction);

// Mean per-sample accuracy of thresholded a_hat against the sample's
// class-level binary attributes (phi >= 0.5), restricted to `class_filter`.
double attribute_accuracy(std::span<const Inference> inference, const AttributeTable& attrs,
                          const std::function<bool(std::size_t)>& class_filter);

}  // namespace apn

#endif  // APN_EVALUATION_HPP_
