#ifndef APN_DATASET_HPP_
#define APN_DATASET_HPP_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "apn/attributes.hpp"
#include "apn/localization.hpp"
#include "apn/model.hpp"
#include "apn/tensor.hpp"

namespace apn {

enum class DataMode { kImage, kFeature };
enum class Split { kTrain, kTest };

struct Sample {
  std::string id;
  std::size_t class_id = 0;
  Tensor input;  // image [3 x S x S] or feature map [H x W x C]
  PartBoxes parts;
  std::optional<Box> object;
  Split split = Split::kTrain;
};

struct Dataset {
  DataMode mode = DataMode::kImage;
  Shape input_shape;
  AttributeTable attrs;
  std::vector<Sample> samples;

  std::vector<Example> examples(Split split) const;
  std::vector<const Sample*> select(Split split) const;
  // Object extent of a sample: its own annotation, else the whole frame.
  Box object_box(const Sample& s) const;
  int image_width() const;
  int image_height() const;

  // Checks split, groups, sample classes and tensor shapes.
  void validate() const;
};

/// Writes manifest.json, attributes.csv and tensors/<id>.apnt into `dir`.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Loads a manifest (the file itself, or a directory holding manifest.json).
/// Missing files raise IoError, tensors that disagree with the declared
/// geometry raise DimensionError, bad groups or splits raise ContractError.
Dataset load_manifest(const std::filesystem::path& path);

}  // namespace apn

#endif  // APN_DATASET_HPP_
