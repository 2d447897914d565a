#include "apn/attributes.hpp"

#include <algorithm>
#include <cmath>

#include "apn/errors.hpp"

namespace apn {

void AttributeTable::validate() const {
  if (phi.ndim() != 2) throw DimensionError("attribute table must be [classes x K]");
  if (!phi.all_finite()) throw ContractError("attribute table contains non-finite values");
  std::vector<int> owner(num_classes(), 0);
  for (std::size_t id : seen_ids) {
    if (id >= num_classes()) throw ContractError("seen class id " + std::to_string(id) + " out of range");
    if (owner[id]++) throw ContractError("class id " + std::to_string(id) + " listed twice");
  }
  for (std::size_t id : unseen_ids) {
    if (id >= num_classes()) throw ContractError("unseen class id " + std::to_string(id) + " out of range");
    if (owner[id]++) throw ContractError("class id " + std::to_string(id) + " is both seen and unseen");
  }
  validate_partition(groups, num_attributes());
  if (!group_names.empty() && group_names.size() != groups.size()) {
    throw ContractError("group_names must name every group");
  }
  if (!attribute_names.empty() && attribute_names.size() != num_attributes()) {
    throw ContractError("attribute_names must name every attribute");
  }
}

bool AttributeTable::is_seen(std::size_t class_id) const {
  return std::find(seen_ids.begin(), seen_ids.end(), class_id) != seen_ids.end();
}

std::size_t AttributeTable::seen_index(std::size_t class_id) const {
  const auto it = std::find(seen_ids.begin(), seen_ids.end(), class_id);
  if (it == seen_ids.end()) throw ContractError("class " + std::to_string(class_id) + " is not a seen class");
  return std::size_t(it - seen_ids.begin());
}

Tensor AttributeTable::class_vector(std::size_t class_id) const {
  if (class_id >= num_classes()) throw ContractError("class id " + std::to_string(class_id) + " out of range");
  return phi.row(class_id);
}

Tensor AttributeTable::rows(std::span<const std::size_t> ids) const {
  if (ids.empty()) throw ContractError("empty class subset");
  const std::size_t k = num_attributes();
  std::vector<double> data;
  data.reserve(ids.size() * k);
  for (std::size_t id : ids) {
    if (id >= num_classes()) throw ContractError("class id " + std::to_string(id) + " out of range");
    for (std::size_t j = 0; j < k; ++j) data.push_back(phi.at(id, j));
  }
  return Tensor(Shape{ids.size(), k}, std::move(data));
}

std::string AttributeTable::group_name(std::size_t l) const {
  if (l < group_names.size()) return group_names[l];
  return "group" + std::to_string(l);
}

std::size_t AttributeTable::group_index(const std::string& name) const {
  for (std::size_t l = 0; l < groups.size(); ++l)
    if (group_name(l) == name) return l;
  throw ContractError("no attribute group named '" + name + "'");
}

AttributeTable normalize_rows(AttributeTable table) {
  for (std::size_t c = 0; c < table.num_classes(); ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < table.num_attributes(); ++k) s += table.phi.at(c, k) * table.phi.at(c, k);
    if (s <= 0.0) continue;
    const double inv = 1.0 / std::sqrt(s);
    for (std::size_t k = 0; k < table.num_attributes(); ++k) table.phi.at(c, k) *= inv;
  }
  return table;
}

AttributeTable binarize_attributes(AttributeTable table, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("binarize threshold must lie in (0,1)");
  for (double& v : table.phi.data()) v = v >= threshold ? 1.0 : 0.0;
  return table;
}

}  // namespace apn
