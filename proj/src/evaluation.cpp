#include "apn/evaluation.hpp"

#include "apn/errors.hpp"

namespace apn {

std::vector<Inference> run_inference(const ApnModel& model, const AttributeTable& attrs,
                                     std::span<const Sample* const> samples, std::size_t threads) {
  if (model.num_attributes() != attrs.num_attributes()) {
    throw DimensionError("checkpoint has K=" + std::to_string(model.num_attributes()) +
                         " but the dataset has K=" + std::to_string(attrs.num_attributes()));
  }
  std::vector<Inference> out(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const Sample& s = *samples[i];
    ForwardResult fwd = forward(model, s.input);
    Inference& r = out[i];
    r.sample_id = s.id;
    r.class_id = s.class_id;
    r.scores = class_scores(fwd.g, model.V, attrs);
    r.sim = similarity_maps(fwd.fmap, model.P);
    r.fmap = std::move(fwd.fmap);
  });
  return out;
}

std::vector<ImageParts> ground_truth_parts(const Dataset& data, std::span<const Sample* const> samples,
                                           double fraction) {
  std::vector<ImageParts> out;
  for (const Sample* s : samples) {
    ImageParts gt{s->id, {}};
    for (const auto& [name, box] : s->parts) {
      gt.boxes[name] = ground_truth_box(box, data.object_box(*s), fraction, data.image_width(),
                                        data.image_height());
    }
    out.push_back(std::move(gt));
  }
  return out;
}

PcpResult localize(const Dataset& data, const ApnModel& model, std::span<const Sample* const> samples,
                   std::span<const Inference> inference, const LocalizeOptions& options) {
  if (samples.size() != inference.size()) throw DimensionError("one inference per sample required");
  const AttributeTable& attrs = data.attrs;
  const int iw = data.image_width(), ih = data.image_height();
  std::vector<ImageParts> predictions;
  bool any_parts = false;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = *samples[i];
    if (s.parts.empty()) continue;
    any_parts = true;
    const SimilarityStack stack = options.cam ? cam_maps(inference[i].fmap, model.V) : inference[i].sim;
    const Tensor phi = attrs.class_vector(s.class_id);
    const auto [bw, bh] = box_size_from_object(data.object_box(s), options.fraction);
    ImageParts pred{s.id, {}};
    for (const auto& [name, box] : s.parts) {
      const std::size_t l = attrs.group_index(name);
      const Tensor map = part_map_from_attributes(stack, attrs.groups, l, phi);
      pred.boxes[name] = attention_box(map, iw, ih, bw, bh);
      if (options.heatmap_dir) {
        const Tensor up = bilinear_upsample(map, std::size_t(ih), std::size_t(iw));
        write_pgm(*options.heatmap_dir / (s.id + "_" + name + ".pgm"), up);
      }
    }
    if (options.heatmap_dir) {
      std::vector<Box> p, g;
      for (const auto& [name, box] : s.parts) {
        p.push_back(pred.boxes[name]);
        g.push_back(ground_truth_box(box, data.object_box(s), options.fraction, iw, ih));
      }
      write_box_svg(*options.heatmap_dir / (s.id + ".svg"), iw, ih, p, g);
    }
    predictions.push_back(std::move(pred));
  }
  if (!any_parts) throw ContractError("dataset has no part annotations to localize");
  std::vector<const Sample*> annotated;
  for (const Sample* s : samples)
    if (!s->parts.empty()) annotated.push_back(s);
  const auto gt = ground_truth_parts(data, annotated, options.fraction);
  return pcp(predictions, gt, options.threshold);
}

double attribute_accuracy(std::span<const Inference> inference, const AttributeTable& attrs,
                          const std::function<bool(std::size_t)>& class_filter) {
  double total = 0.0;
  std::size_t n = 0;
  for (const Inference& r : inference) {
    if (!class_filter(r.class_id)) continue;
    const Tensor truth = attrs.class_vector(r.class_id);
    total += predict_binary_attributes(predict_attributes(r.sim), &truth).accuracy;
    ++n;
  }
  return n ? total / double(n) : 0.0;
}

}  // namespace apn
