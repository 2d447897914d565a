#ifndef APN_SMOKE_HPP_
#define APN_SMOKE_HPP_

#include <cstdint>
#include <vector>

#include "apn/attributes.hpp"
#include "apn/model.hpp"

namespace apn {

/// Tiny self-contained problem for gradient checks: 32x32 images through
/// channels 3->4->4->3 give a 4x4x3 feature map, K=6 attributes in two
/// groups, four classes (three seen) and a two-image batch.
struct SmokeProblem {
  ApnModel model;
  AttributeTable attrs;
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;

  std::vector<Example> batch() const;
};

SmokeProblem make_smoke_problem(std::uint64_t seed);

}  // namespace apn

#endif  // APN_SMOKE_HPP_
