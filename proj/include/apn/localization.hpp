#ifndef APN_LOCALIZATION_HPP_
#define APN_LOCALIZATION_HPP_

#include <cstddef>
#include <filesystem>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "apn/model.hpp"
#include "apn/tensor.hpp"

namespace apn {

// Pixel box, half-open on the max edges: [x_min, x_max) x [y_min, y_max).
struct Box {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  long area() const { return long(width()) * long(height()); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  friend bool operator==(const Box&, const Box&) = default;
};

std::ostream& operator<<(std::ostream& os, const Box& b);

// A (w x h) box whose top-left corner is round(center - size/2), shifted
// (never shrunk) to lie inside the image.
Box place_box(double center_x, double center_y, int w, int h, int image_w, int image_h);

/// Upsamples `map` [H x W] to the image (corner-aligned bilinear), takes the
/// row-major-first peak and returns the (box_w x box_h) box centred on it.
Box attention_box(const Tensor& map, int image_w, int image_h, int box_w, int box_h);

// (fraction * W_b, fraction * H_b), rounded to nearest, at least 1.
std::pair<int, int> box_size_from_object(const Box& object, double fraction);

// Keypoint-style ground truth: a box of the evaluation size centred on the
// annotated part.
Box ground_truth_box(const Box& part, const Box& object, double fraction, int image_w, int image_h);

// CAM baseline: map k at (i,j) is <V[:,k], f_ij>. Same code path as
// similarity_maps(fmap, V^T).
SimilarityStack cam_maps(const Tensor& fmap, const Tensor& V);

double iou(const Box& a, const Box& b);

/// Similarity map used to localize part `part_index`: the map of the group
/// attribute with the largest phi for the sample's class (lowest index on
/// ties).
Tensor part_map_from_attributes(const SimilarityStack& sim, const IndexGroups& groups,
                                std::size_t part_index, const Tensor& sample_phi);

using PartBoxes = std::map<std::string, Box>;

struct ImageParts {
  std::string image_id;
  PartBoxes boxes;
};

struct LocalizationRecord {
  std::string image_id;
  std::string part;
  Box pred;
  Box gt;
  double iou = 0.0;
  bool correct = false;
};

struct PcpResult {
  std::map<std::string, double> per_part;  // accuracy in [0,1]
  std::map<std::string, std::size_t> counts;
  double mean = 0.0;
  std::vector<LocalizationRecord> records;
};

/// A part is correctly localized iff iou(pred, gt) >= threshold. Images
/// lacking a ground-truth box for a part are excluded for that part.
PcpResult pcp(std::span<const ImageParts> predictions, std::span<const ImageParts> ground_truth,
              double threshold);

// image_id,part,pred_box,gt_box,iou,correct
void write_localization_csv(std::ostream& os, const PcpResult& result);

// Binary PGM (P5), min-max normalized to 0..255.
void write_pgm(const std::filesystem::path& path, const Tensor& map);

// Boxes over the image frame: predictions blue, ground truth red.
void write_box_svg(const std::filesystem::path& path, int image_w, int image_h,
                   std::span<const Box> predicted, std::span<const Box> ground_truth);

}  // namespace apn

#endif  // APN_LOCALIZATION_HPP_
