#ifndef APN_MODEL_HPP_
#define APN_MODEL_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "apn/attributes.hpp"
#include "apn/ops.hpp"
#include "apn/tape.hpp"
#include "apn/tensor.hpp"

namespace apn {

/// Three conv blocks (3x3, stride 2, pad 1, ReLU). With the defaults a
/// 3x64x64 image becomes an 8x8x32 feature map.
struct EncoderConfig {
  std::size_t input_size = 64;
  std::size_t in_channels = 3;
  std::array<std::size_t, 3> channels{16, 32, 32};

  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kStride = 2;
  static constexpr std::size_t kPad = 1;

  std::size_t output_size() const;
  std::size_t feature_channels() const { return channels[2]; }
};

/// Encoder weights, the visual-semantic embedding V [C x K] and the
/// prototype bank P [K x C]. Without an encoder the model consumes
/// precomputed H x W x C feature maps directly.
struct ApnModel {
  bool has_encoder = true;
  EncoderConfig encoder;
  std::array<Tensor, 3> kernels;
  std::array<Tensor, 3> biases;
  Tensor V;
  Tensor P;

  // Kernels and V uniform in +-sqrt(6/fan_in), biases zero, P uniform in
  // +-1/sqrt(C). `feature_channels` is only used without an encoder.
  static ApnModel initialize(const EncoderConfig& encoder, std::size_t num_attributes,
                             std::uint64_t seed);
  static ApnModel initialize_feature_mode(std::size_t feature_channels, std::size_t num_attributes,
                                          std::uint64_t seed);

  std::size_t channels() const { return V.dim(0); }
  std::size_t num_attributes() const { return V.dim(1); }

  // Parameter tensors in a fixed order: enc_k1..3, enc_b1..3, V, P.
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
  std::size_t parameter_count() const;

  void validate() const;
};

// Model parameters recorded as tape leaves.
struct ModelNodes {
  bool has_encoder = true;
  std::array<NodeId, 3> kernels{};
  std::array<NodeId, 3> biases{};
  NodeId V = 0;
  NodeId P = 0;

  // Same order as ApnModel::parameters().
  std::vector<NodeId> ordered() const;
};

ModelNodes bind_parameters(Tape& tape, const ApnModel& model, bool requires_grad = true);

/// K similarity maps of one image with their row-major-first peaks.
struct SimilarityStack {
  Tensor maps;  // [K x H x W]
  std::vector<std::pair<std::size_t, std::size_t>> peaks;
  std::vector<double> values;

  std::size_t num_maps() const { return maps.dim(0); }
  std::size_t height() const { return maps.dim(1); }
  std::size_t width() const { return maps.dim(2); }
  Tensor map(std::size_t k) const;

  static SimilarityStack from_maps(Tensor maps);
};

struct TapedSimilarity {
  NodeId maps;
  SimilarityStack stack;
};

// image [3 x S x S] -> feature map [H x W x C].
NodeId encode(Tape& tape, NodeId image, const ModelNodes& params);

// logit_n = g^T V phi_n for each row of phi_subset.
NodeId compatibility_logits(Tape& tape, NodeId g, NodeId V, NodeId phi_subset);
Tensor compatibility_logits(const Tensor& g, const Tensor& V, const Tensor& phi_subset);

NodeId loss_cls(Tape& tape, NodeId logits, std::size_t label_index);

TapedSimilarity similarity_maps(Tape& tape, NodeId fmap, NodeId protos);
SimilarityStack similarity_maps(const Tensor& fmap, const Tensor& protos);

// a_hat_k = max_ij M^k_ij; the gradient flows to the peak cell only.
NodeId predict_attributes(Tape& tape, const TapedSimilarity& sim);
Tensor predict_attributes(const SimilarityStack& sim);

NodeId loss_reg(Tape& tape, NodeId a_hat, NodeId phi_y);

inline constexpr double kGroupNormEps = 1e-12;
NodeId loss_ad(Tape& tape, NodeId protos, const IndexGroups& groups);

NodeId loss_cpt(Tape& tape, const TapedSimilarity& sim, bool raw = false);

struct LossWeights {
  double reg = 1.0;  // lambda1
  double ad = 0.1;   // lambda2
  double cpt = 0.2;  // lambda3
  bool cpt_raw = false;
};

struct Example {
  const Tensor* input;  // image [3 x S x S] or feature map [H x W x C]
  std::size_t class_id;
};

struct LossBreakdown {
  double cls = 0.0;
  double reg = 0.0;
  double ad = 0.0;
  double cpt = 0.0;
  double total = 0.0;
  NodeId total_node = 0;
};

// Batch mean of L_CLS, L_Reg and L_CPT plus lambda2 * L_AD (once per batch).
LossBreakdown loss_apn(Tape& tape, const ModelNodes& params, std::span<const Example> batch,
                       const AttributeTable& attrs, const LossWeights& weights);

struct ForwardResult {
  Tensor fmap;  // [H x W x C]
  Tensor g;     // [C]
};

// Feature map and pooled feature for one input without recording gradients.
ForwardResult forward(const ApnModel& model, const Tensor& input);

}  // namespace apn

#endif  // APN_MODEL_HPP_
