#ifndef APN_CHECKPOINT_HPP_
#define APN_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>

#include "apn/model.hpp"

namespace apn {

struct CheckpointInfo {
  std::uint64_t seed = 0;
  int epoch = 0;
  bool final = false;
  bool cpt_raw = false;
  bool normalize_phi = false;
  double binary_threshold = 0.0;  // > 0: phi was binarized at this value
};

// Directory of APNT tensors (enc_k1..3, enc_b1..3, V, P) plus metadata.json.
void save_checkpoint(const std::filesystem::path& dir, const ApnModel& model,
                     const CheckpointInfo& info);
ApnModel load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

}  // namespace apn

#endif  // APN_CHECKPOINT_HPP_
