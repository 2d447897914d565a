#include "apn/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "apn/errors.hpp"
#include "apn/tensor_io.hpp"

namespace apn {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const fs::path& dir, const ApnModel& model, const CheckpointInfo& info) {
  model.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  json shapes = json::object();
  for (const auto& [name, t] : model.parameters()) {
    write_apnt(dir / (name + ".apnt"), *t);
    shapes[name] = t->shape();
  }
  json meta = {
      {"format", "apn-checkpoint"},
      {"version", 1},
      {"has_encoder", model.has_encoder},
      {"C", model.channels()},
      {"K", model.num_attributes()},
      {"shapes", shapes},
      {"seed", info.seed},
      {"epoch", info.epoch},
      {"final", info.final},
      {"flags",
       {{"cpt_raw", info.cpt_raw},
        {"normalize_phi", info.normalize_phi},
        {"binary_threshold", info.binary_threshold}}},
  };
  if (model.has_encoder) {
    meta["encoder"] = {{"input_size", model.encoder.input_size},
                       {"in_channels", model.encoder.in_channels},
                       {"channels", model.encoder.channels}};
  }
  std::ofstream os(dir / "metadata.json");
  if (!os) throw IoError("cannot write " + (dir / "metadata.json").string());
  os << meta.dump(2) << '\n';
}

ApnModel load_checkpoint(const fs::path& dir, CheckpointInfo* info) {
  std::ifstream is(dir / "metadata.json");
  if (!is) throw IoError("checkpoint metadata not found in " + dir.string());
  json meta;
  try {
    is >> meta;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint metadata: " + std::string(e.what()));
  }
  ApnModel model;
  try {
    model.has_encoder = meta.at("has_encoder").get<bool>();
    if (model.has_encoder) {
      const json& enc = meta.at("encoder");
      model.encoder.input_size = enc.at("input_size").get<std::size_t>();
      model.encoder.in_channels = enc.at("in_channels").get<std::size_t>();
      model.encoder.channels = enc.at("channels").get<std::array<std::size_t, 3>>();
    }
    if (info) {
      info->seed = meta.at("seed").get<std::uint64_t>();
      info->epoch = meta.at("epoch").get<int>();
      info->final = meta.value("final", false);
      info->cpt_raw = meta.at("flags").value("cpt_raw", false);
      info->normalize_phi = meta.at("flags").value("normalize_phi", false);
      info->binary_threshold = meta.at("flags").value("binary_threshold", 0.0);
    }
  } catch (const json::exception& e) {
    throw IoError("checkpoint metadata missing field: " + std::string(e.what()));
  }
  for (auto& [name, t] : model.parameters()) *t = read_apnt(dir / (name + ".apnt"));
  model.validate();
  return model;
}

}  // namespace apn
