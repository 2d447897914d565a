#include "apn/localization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "apn/errors.hpp"

namespace apn {

std::ostream& operator<<(std::ostream& os, const Box& b) {
  return os << '[' << b.x_min << ' ' << b.y_min << ' ' << b.x_max << ' ' << b.y_max << ']';
}

Box place_box(double center_x, double center_y, int w, int h, int image_w, int image_h) {
  if (w <= 0 || h <= 0 || w > image_w || h > image_h) {
    throw ContractError("box size must be positive and fit inside the image");
  }
  auto place = [](double center, int size, int limit) {
    int lo = int(std::floor(center - 0.5 * size + 0.5));
    lo = std::clamp(lo, 0, limit - size);
    return lo;
  };
  const int x = place(center_x, w, image_w);
  const int y = place(center_y, h, image_h);
  return Box{x, y, x + w, y + h};
}

Box attention_box(const Tensor& map, int image_w, int image_h, int box_w, int box_h) {
  if (map.ndim() != 2) throw DimensionError("attention_box expects an [H x W] map");
  const Tensor up = bilinear_upsample(map, std::size_t(image_h), std::size_t(image_w));
  std::size_t best = 0;
  for (std::size_t p = 1; p < up.size(); ++p)
    if (up[p] > up[best]) best = p;
  const double py = double(best / std::size_t(image_w));
  const double px = double(best % std::size_t(image_w));
  return place_box(px, py, box_w, box_h, image_w, image_h);
}

std::pair<int, int> box_size_from_object(const Box& object, double fraction) {
  if (!object.valid()) throw ContractError("object box is empty");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("box fraction must lie in (0,1]");
  const int w = std::max(1, int(std::lround(fraction * object.width())));
  const int h = std::max(1, int(std::lround(fraction * object.height())));
  return {w, h};
}

Box ground_truth_box(const Box& part, const Box& object, double fraction, int image_w, int image_h) {
  const auto [w, h] = box_size_from_object(object, fraction);
  return place_box(part.center_x(), part.center_y(), w, h, image_w, image_h);
}

SimilarityStack cam_maps(const Tensor& fmap, const Tensor& V) {
  if (V.ndim() != 2) throw DimensionError("V must be [C x K]");
  return similarity_maps(fmap, transpose2d(V));
}

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw ContractError("iou of an empty box");
  const long iw = std::max(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const long ih = std::max(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const long inter = iw * ih;
  return double(inter) / double(a.area() + b.area() - inter);
}

Tensor part_map_from_attributes(const SimilarityStack& sim, const IndexGroups& groups,
                                std::size_t part_index, const Tensor& sample_phi) {
  if (part_index >= groups.size()) throw ContractError("part index out of range");
  const auto& group = groups[part_index];
  if (group.empty()) throw ContractError("attribute group is empty");
  std::size_t best = group.front();
  for (std::size_t k : group) {
    if (k >= sample_phi.size() || k >= sim.num_maps()) throw ContractError("group index out of range");
    if (sample_phi[k] > sample_phi[best] || (sample_phi[k] == sample_phi[best] && k < best)) best = k;
  }
  return sim.map(best);
}

PcpResult pcp(std::span<const ImageParts> predictions, std::span<const ImageParts> ground_truth,
              double threshold) {
  std::map<std::string, const ImageParts*> by_id;
  for (const ImageParts& p : predictions) by_id[p.image_id] = &p;

  PcpResult out;
  std::map<std::string, std::size_t> correct;
  for (const ImageParts& gt : ground_truth) {
    const auto it = by_id.find(gt.image_id);
    if (it == by_id.end()) throw ContractError("no prediction for image " + gt.image_id);
    for (const auto& [part, gt_box] : gt.boxes) {
      const auto pit = it->second->boxes.find(part);
      if (pit == it->second->boxes.end()) {
        throw ContractError("no prediction for part '" + part + "' of image " + gt.image_id);
      }
      LocalizationRecord rec{gt.image_id, part, pit->second, gt_box, iou(pit->second, gt_box), false};
      rec.correct = rec.iou >= threshold;
      out.counts[part] += 1;
      correct[part] += rec.correct ? 1 : 0;
      out.records.push_back(std::move(rec));
    }
  }
  double total = 0.0;
  for (const auto& [part, n] : out.counts) {
    out.per_part[part] = double(correct[part]) / double(n);
    total += out.per_part[part];
  }
  out.mean = out.counts.empty() ? 0.0 : total / double(out.counts.size());
  return out;
}

void write_localization_csv(std::ostream& os, const PcpResult& result) {
  os << "image_id,part,pred_box,gt_box,iou,correct\n";
  char buf[64];
  for (const LocalizationRecord& r : result.records) {
    std::snprintf(buf, sizeof buf, "%.6f", r.iou);
    os << r.image_id << ',' << r.part << ',' << r.pred.x_min << ' ' << r.pred.y_min << ' '
       << r.pred.x_max << ' ' << r.pred.y_max << ',' << r.gt.x_min << ' ' << r.gt.y_min << ' '
       << r.gt.x_max << ' ' << r.gt.y_max << ',' << buf << ',' << (r.correct ? 1 : 0) << '\n';
  }
}

void write_pgm(const std::filesystem::path& path, const Tensor& map) {
  if (map.ndim() != 2) throw DimensionError("write_pgm expects an [H x W] map");
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const double range = *hi - *lo;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P5\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
  for (double v : map.data()) {
    const double t = range > 0.0 ? (v - *lo) / range : 0.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
  }
}

void write_box_svg(const std::filesystem::path& path, int image_w, int image_h,
                   std::span<const Box> predicted, std::span<const Box> ground_truth) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << image_w << "\" height=\"" << image_h
     << "\">\n<rect width=\"" << image_w << "\" height=\"" << image_h
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  auto rect = [&os](const Box& b, const char* color) {
    os << "<rect x=\"" << b.x_min << "\" y=\"" << b.y_min << "\" width=\"" << b.width()
       << "\" height=\"" << b.height() << "\" fill=\"none\" stroke=\"" << color << "\"/>\n";
  };
  for (const Box& b : ground_truth) rect(b, "red");
  for (const Box& b : predicted) rect(b, "blue");
  os << "</svg>\n";
}

}  // namespace apn
