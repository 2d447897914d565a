#ifndef APN_OPS_HPP_
#define APN_OPS_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "apn/tape.hpp"
#include "apn/tensor.hpp"

namespace apn {

// Disjoint index sets S_1..S_L over {0..K-1}.
using IndexGroups = std::vector<std::vector<std::size_t>>;

// Throws ContractError unless `groups` are pairwise disjoint, non-empty and
// cover {0..k-1}.
void validate_partition(const IndexGroups& groups, std::size_t k);

namespace ops {

// Cross-correlation with zero padding. input [Cin x H x W], kernels
// [Cout x Cin x k x k], bias [Cout] -> [Cout x H' x W'].
NodeId conv2d(Tape& tape, NodeId input, NodeId kernels, NodeId bias, std::size_t stride,
              std::size_t pad);

// Gradient is zero at x == 0.
NodeId relu(Tape& tape, NodeId x);

// [C x H x W] -> [H x W x C].
NodeId chw_to_hwc(Tape& tape, NodeId x);

// [H x W x C] -> [C], mean over the spatial grid.
NodeId global_avg_pool(Tape& tape, NodeId fmap);

// v [C], m [C x K] -> v^T m [K].
NodeId vec_mat(Tape& tape, NodeId v, NodeId m);

// m [n x K], v [K] -> m v [n].
NodeId mat_vec(Tape& tape, NodeId m, NodeId v);

// -log softmax(logits)[label], stabilized by max subtraction.
NodeId softmax_cross_entropy(Tape& tape, NodeId logits, std::size_t label);

// fmap [H x W x C], protos [K x C] -> [K x H x W], entry <protos_k, fmap_ij>.
NodeId fiber_inner_products(Tape& tape, NodeId fmap, NodeId protos);

struct SpatialMax {
  NodeId values;                    // [K]
  std::vector<std::size_t> argmax;  // flat i*W+j per map, first hit in row-major order
};

// Max over each [H x W] slice of maps [K x H x W]. The gradient of value k is
// routed to argmax[k] only.
SpatialMax spatial_max(Tape& tape, NodeId maps);

// sum_i (a_i - b_i)^2.
NodeId squared_distance(Tape& tape, NodeId a, NodeId b);

// sum_c sum_l sqrt(sum_{k in S_l} P[k,c]^2 + eps) for P [K x C].
NodeId group_norm_sum(Tape& tape, NodeId protos, const IndexGroups& groups, double eps);

// sum_k sum_ij w(M[k,i,j]) * ((i - pi_k)^2 + (j - pj_k)^2) with w = relu when
// `clamp_negative`, identity otherwise. Peaks are constants (flat indices).
NodeId compactness(Tape& tape, NodeId maps, std::span<const std::size_t> peaks,
                   bool clamp_negative);

NodeId sum(Tape& tape, NodeId x);

// sum_i coeffs[i] * terms[i]; all terms share one shape.
NodeId linear_combination(Tape& tape, std::span<const NodeId> terms,
                          std::span<const double> coeffs);

namespace testing {

// While alive, the backward pass of the named op negates its input
// gradients on the current thread. Used to check that gradient checks catch
// broken backward code.
class ScopedBackwardFault {
 public:
  explicit ScopedBackwardFault(std::string op_name);
  ~ScopedBackwardFault();
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;

 private:
  std::string previous_;
};

}  // namespace testing
}  // namespace ops

/// Corner-aligned bilinear resize of map [H x W] to [h_out x w_out]
/// (h_out >= H, w_out >= W). Output corners equal input corners and every
/// output value lies within the range of its four neighbouring inputs. When
/// (h_out-1) and (w_out-1) are multiples of (H-1) and (W-1), every input
/// grid value reappears in the output, so the global max and min are kept.
Tensor bilinear_upsample(const Tensor& map, std::size_t h_out, std::size_t w_out);

// Central differences (L(x + h e_i) - L(x - h e_i)) / 2h for every coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& loss, const Tensor& params,
                        double h);

}  // namespace apn

#endif  // APN_OPS_HPP_
