#include "apn/model.hpp"

#include <cmath>

#include "apn/errors.hpp"
#include "apn/random.hpp"

namespace apn {
namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

void init_head(ApnModel& m, std::size_t c, std::size_t k, Rng& rng) {
  m.V = uniform_tensor(Shape{c, k}, std::sqrt(6.0 / double(c)), rng);
  m.P = uniform_tensor(Shape{k, c}, 1.0 / std::sqrt(double(c)), rng);
}

const char* kKernelNames[3] = {"enc_k1", "enc_k2", "enc_k3"};
const char* kBiasNames[3] = {"enc_b1", "enc_b2", "enc_b3"};

}  // namespace

std::size_t EncoderConfig::output_size() const {
  std::size_t s = input_size;
  for (int i = 0; i < 3; ++i) {
    if (s + 2 * kPad < kKernel) throw DimensionError("encoder input too small");
    s = (s + 2 * kPad - kKernel) / kStride + 1;
  }
  return s;
}

ApnModel ApnModel::initialize(const EncoderConfig& encoder, std::size_t num_attributes,
                              std::uint64_t seed) {
  if (num_attributes == 0) throw ContractError("model needs at least one attribute");
  ApnModel m;
  m.has_encoder = true;
  m.encoder = encoder;
  Rng rng(seed);
  std::size_t in = encoder.in_channels;
  for (int b = 0; b < 3; ++b) {
    const std::size_t out = encoder.channels[b];
    const std::size_t fan_in = in * EncoderConfig::kKernel * EncoderConfig::kKernel;
    m.kernels[b] = uniform_tensor(Shape{out, in, EncoderConfig::kKernel, EncoderConfig::kKernel},
                                  std::sqrt(6.0 / double(fan_in)), rng);
    m.biases[b] = Tensor(Shape{out}, 0.0);
    in = out;
  }
  init_head(m, encoder.feature_channels(), num_attributes, rng);
  return m;
}

ApnModel ApnModel::initialize_feature_mode(std::size_t feature_channels,
                                           std::size_t num_attributes, std::uint64_t seed) {
  if (num_attributes == 0 || feature_channels == 0) throw ContractError("empty model dimensions");
  ApnModel m;
  m.has_encoder = false;
  Rng rng(seed);
  init_head(m, feature_channels, num_attributes, rng);
  return m;
}

std::vector<std::pair<std::string, Tensor*>> ApnModel::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  if (has_encoder) {
    for (int b = 0; b < 3; ++b) out.emplace_back(kKernelNames[b], &kernels[b]);
    for (int b = 0; b < 3; ++b) out.emplace_back(kBiasNames[b], &biases[b]);
  }
  out.emplace_back("V", &V);
  out.emplace_back("P", &P);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ApnModel::parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<ApnModel*>(this)->parameters()) out.emplace_back(name, t);
  return out;
}

std::size_t ApnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.second->size();
  return n;
}

void ApnModel::validate() const {
  if (V.ndim() != 2 || P.ndim() != 2) throw DimensionError("V and P must be matrices");
  if (P.dim(0) != V.dim(1)) throw DimensionError("P must have one row per attribute (K)");
  if (P.dim(1) != V.dim(0)) throw DimensionError("P rows must have length C");
  if (has_encoder) {
    std::size_t in = encoder.in_channels;
    for (int b = 0; b < 3; ++b) {
      const Shape want{encoder.channels[b], in, EncoderConfig::kKernel, EncoderConfig::kKernel};
      if (kernels[b].shape() != want) {
        throw DimensionError(std::string(kKernelNames[b]) + " has shape " +
                             shape_string(kernels[b].shape()) + ", expected " + shape_string(want));
      }
      if (biases[b].shape() != Shape{encoder.channels[b]}) {
        throw DimensionError(std::string(kBiasNames[b]) + " has wrong shape");
      }
      in = encoder.channels[b];
    }
    if (encoder.feature_channels() != V.dim(0)) throw DimensionError("encoder output channels != C");
  }
  for (const auto& [name, t] : parameters()) {
    if (!t->all_finite()) throw ContractError("parameter " + name + " is not finite");
  }
}

std::vector<NodeId> ModelNodes::ordered() const {
  std::vector<NodeId> out;
  if (has_encoder) {
    out.insert(out.end(), kernels.begin(), kernels.end());
    out.insert(out.end(), biases.begin(), biases.end());
  }
  out.push_back(V);
  out.push_back(P);
  return out;
}

ModelNodes bind_parameters(Tape& tape, const ApnModel& model, bool requires_grad) {
  ModelNodes n;
  n.has_encoder = model.has_encoder;
  if (model.has_encoder) {
    for (int b = 0; b < 3; ++b) n.kernels[b] = tape.leaf(model.kernels[b], requires_grad);
    for (int b = 0; b < 3; ++b) n.biases[b] = tape.leaf(model.biases[b], requires_grad);
  }
  n.V = tape.leaf(model.V, requires_grad);
  n.P = tape.leaf(model.P, requires_grad);
  return n;
}

Tensor SimilarityStack::map(std::size_t k) const {
  const std::size_t h = height(), w = width();
  std::vector<double> d(maps.data().begin() + k * h * w, maps.data().begin() + (k + 1) * h * w);
  return Tensor(Shape{h, w}, std::move(d));
}

SimilarityStack SimilarityStack::from_maps(Tensor maps) {
  if (maps.ndim() != 3) throw DimensionError("similarity maps must be [K x H x W]");
  SimilarityStack s;
  const std::size_t k = maps.dim(0), w = maps.dim(2), cells = maps.dim(1) * w;
  s.peaks.resize(k);
  s.values.resize(k);
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* row = maps.data().data() + kk * cells;
    std::size_t best = 0;
    for (std::size_t p = 1; p < cells; ++p)
      if (row[p] > row[best]) best = p;
    s.peaks[kk] = {best / w, best % w};
    s.values[kk] = row[best];
  }
  s.maps = std::move(maps);
  return s;
}

NodeId encode(Tape& tape, NodeId image, const ModelNodes& params) {
  if (!params.has_encoder) throw ContractError("model has no encoder (feature mode)");
  const Tensor& x = tape.value(image);
  const Tensor& k1 = tape.value(params.kernels[0]);
  if (x.ndim() != 3 || x.dim(0) != k1.dim(1) || x.dim(1) != x.dim(2)) {
    throw DimensionError("encoder expects a square [" + std::to_string(k1.dim(1)) +
                         " x S x S] image, got " + shape_string(x.shape()));
  }
  NodeId h = image;
  for (int b = 0; b < 3; ++b) {
    h = ops::conv2d(tape, h, params.kernels[b], params.biases[b], EncoderConfig::kStride,
                    EncoderConfig::kPad);
    h = ops::relu(tape, h);
  }
  return ops::chw_to_hwc(tape, h);
}

NodeId compatibility_logits(Tape& tape, NodeId g, NodeId V, NodeId phi_subset) {
  const NodeId projected = ops::vec_mat(tape, g, V);
  return ops::mat_vec(tape, phi_subset, projected);
}

Tensor compatibility_logits(const Tensor& g, const Tensor& V, const Tensor& phi_subset) {
  Tape tape;
  const NodeId out = compatibility_logits(tape, tape.leaf(g), tape.leaf(V), tape.leaf(phi_subset));
  return tape.value(out);
}

NodeId loss_cls(Tape& tape, NodeId logits, std::size_t label_index) {
  return ops::softmax_cross_entropy(tape, logits, label_index);
}

TapedSimilarity similarity_maps(Tape& tape, NodeId fmap, NodeId protos) {
  const NodeId maps = ops::fiber_inner_products(tape, fmap, protos);
  return TapedSimilarity{maps, SimilarityStack::from_maps(tape.value(maps))};
}

SimilarityStack similarity_maps(const Tensor& fmap, const Tensor& protos) {
  Tape tape;
  return similarity_maps(tape, tape.leaf(fmap), tape.leaf(protos)).stack;
}

NodeId predict_attributes(Tape& tape, const TapedSimilarity& sim) {
  return ops::spatial_max(tape, sim.maps).values;
}

Tensor predict_attributes(const SimilarityStack& sim) {
  return Tensor(Shape{sim.values.size()}, sim.values);
}

NodeId loss_reg(Tape& tape, NodeId a_hat, NodeId phi_y) {
  return ops::squared_distance(tape, a_hat, phi_y);
}

NodeId loss_ad(Tape& tape, NodeId protos, const IndexGroups& groups) {
  return ops::group_norm_sum(tape, protos, groups, kGroupNormEps);
}

NodeId loss_cpt(Tape& tape, const TapedSimilarity& sim, bool raw) {
  const std::size_t w = sim.stack.width();
  std::vector<std::size_t> peaks;
  peaks.reserve(sim.stack.peaks.size());
  for (const auto& [i, j] : sim.stack.peaks) peaks.push_back(i * w + j);
  return ops::compactness(tape, sim.maps, peaks, !raw);
}

LossBreakdown loss_apn(Tape& tape, const ModelNodes& params, std::span<const Example> batch,
                       const AttributeTable& attrs, const LossWeights& weights) {
  if (batch.empty()) throw ContractError("loss_apn: empty batch");
  if (weights.reg < 0 || weights.ad < 0 || weights.cpt < 0) {
    throw ContractError("loss weights must be non-negative");
  }
  const NodeId phi_seen = tape.leaf(attrs.rows(attrs.seen_ids));
  std::vector<NodeId> cls_terms, reg_terms, cpt_terms;
  for (const Example& ex : batch) {
    const NodeId input = tape.leaf(*ex.input);
    const NodeId fmap = params.has_encoder ? encode(tape, input, params) : input;
    if (tape.value(fmap).ndim() != 3) throw DimensionError("feature map must be [H x W x C]");
    const NodeId g = ops::global_avg_pool(tape, fmap);
    const NodeId logits = compatibility_logits(tape, g, params.V, phi_seen);
    cls_terms.push_back(loss_cls(tape, logits, attrs.seen_index(ex.class_id)));

    const TapedSimilarity sim = similarity_maps(tape, fmap, params.P);
    const NodeId a_hat = predict_attributes(tape, sim);
    reg_terms.push_back(loss_reg(tape, a_hat, tape.leaf(attrs.class_vector(ex.class_id))));
    cpt_terms.push_back(loss_cpt(tape, sim, weights.cpt_raw));
  }
  const std::vector<double> mean(batch.size(), 1.0 / double(batch.size()));
  const NodeId cls = ops::linear_combination(tape, cls_terms, mean);
  const NodeId reg = ops::linear_combination(tape, reg_terms, mean);
  const NodeId cpt = ops::linear_combination(tape, cpt_terms, mean);
  const NodeId ad = loss_ad(tape, params.P, attrs.groups);

  const std::array<NodeId, 4> terms{cls, reg, ad, cpt};
  const std::array<double, 4> coeffs{1.0, weights.reg, weights.ad, weights.cpt};
  LossBreakdown out;
  out.total_node = ops::linear_combination(tape, terms, coeffs);
  out.cls = tape.value(cls).item();
  out.reg = tape.value(reg).item();
  out.ad = tape.value(ad).item();
  out.cpt = tape.value(cpt).item();
  out.total = tape.value(out.total_node).item();
  return out;
}

ForwardResult forward(const ApnModel& model, const Tensor& input) {
  Tape tape;
  const ModelNodes params = bind_parameters(tape, model, false);
  const NodeId in = tape.leaf(input);
  const NodeId fmap = model.has_encoder ? encode(tape, in, params) : in;
  const Tensor& f = tape.value(fmap);
  if (f.ndim() != 3 || f.dim(2) != model.channels()) {
    throw DimensionError("feature map " + shape_string(f.shape()) + " does not match C=" +
                         std::to_string(model.channels()));
  }
  const NodeId g = ops::global_avg_pool(tape, fmap);
  return ForwardResult{f, tape.value(g)};
}

}  // namespace apn
