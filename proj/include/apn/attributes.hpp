#ifndef APN_ATTRIBUTES_HPP_
#define APN_ATTRIBUTES_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "apn/ops.hpp"
#include "apn/tensor.hpp"

namespace apn {

/// Class-level attribute vectors phi(y) with the seen/unseen split and the
/// attribute grouping used by the decorrelation loss. Class ids are row
/// indices into `phi`.
struct AttributeTable {
  Tensor phi;  // [num_classes x K]
  std::vector<std::size_t> seen_ids;
  std::vector<std::size_t> unseen_ids;
  IndexGroups groups;
  std::vector<std::string> group_names;      // one per group, may be empty
  std::vector<std::string> attribute_names;  // one per attribute, may be empty

  std::size_t num_classes() const { return phi.dim(0); }
  std::size_t num_attributes() const { return phi.dim(1); }

  // Checks the split is disjoint and in range and the groups partition K.
  void validate() const;

  bool is_seen(std::size_t class_id) const;
  // Position of `class_id` inside seen_ids; throws if the class is unseen.
  std::size_t seen_index(std::size_t class_id) const;

  Tensor class_vector(std::size_t class_id) const;
  // Rows of phi for `ids`, in order. Throws ContractError when ids is empty.
  Tensor rows(std::span<const std::size_t> ids) const;

  std::string group_name(std::size_t l) const;
  std::size_t group_index(const std::string& name) const;
};

// Per-class L2 normalization of phi (rows with zero norm are left as is).
AttributeTable normalize_rows(AttributeTable table);

// phi entries become 1 where phi >= threshold and 0 otherwise.
AttributeTable binarize_attributes(AttributeTable table, double threshold);

}  // namespace apn

#endif  // APN_ATTRIBUTES_HPP_
