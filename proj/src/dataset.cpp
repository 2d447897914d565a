#include "apn/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "apn/errors.hpp"
#include "apn/tensor_io.hpp"

namespace apn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Box box_from_json(const json& j) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() != 4) throw ContractError("boxes are [x_min, y_min, x_max, y_max]");
  Box b{v[0], v[1], v[2], v[3]};
  if (!b.valid()) throw ContractError("empty box in manifest");
  return b;
}

json box_to_json(const Box& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

std::string read_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<Example> Dataset::examples(Split split) const {
  std::vector<Example> out;
  for (const Sample& s : samples)
    if (s.split == split) out.push_back(Example{&s.input, s.class_id});
  return out;
}

std::vector<const Sample*> Dataset::select(Split split) const {
  std::vector<const Sample*> out;
  for (const Sample& s : samples)
    if (s.split == split) out.push_back(&s);
  return out;
}

int Dataset::image_width() const {
  if (mode == DataMode::kImage) return int(input_shape.at(2));
  throw ContractError("feature-mode datasets carry no image geometry");
}

int Dataset::image_height() const {
  if (mode == DataMode::kImage) return int(input_shape.at(1));
  throw ContractError("feature-mode datasets carry no image geometry");
}

Box Dataset::object_box(const Sample& s) const {
  if (s.object) return *s.object;
  return Box{0, 0, image_width(), image_height()};
}

void Dataset::validate() const {
  attrs.validate();
  const std::size_t want_ndim = 3;
  if (input_shape.size() != want_ndim) throw DimensionError("input_shape must have three dimensions");
  if (mode == DataMode::kImage && input_shape[0] != 3) {
    throw DimensionError("image-mode tensors must be [3 x H x W]");
  }
  for (const Sample& s : samples) {
    if (s.class_id >= attrs.num_classes()) {
      throw ContractError("sample " + s.id + " references unknown class " + std::to_string(s.class_id));
    }
    if (s.input.shape() != input_shape) {
      throw DimensionError("sample " + s.id + " has shape " + shape_string(s.input.shape()) +
                           ", manifest declares " + shape_string(input_shape));
    }
    if (s.split == Split::kTrain && !attrs.is_seen(s.class_id)) {
      throw ContractError("training sample " + s.id + " belongs to an unseen class");
    }
  }
}

void save_dataset(const Dataset& data, const fs::path& dir) {
  data.validate();
  std::error_code ec;
  fs::create_directories(dir / "tensors", ec);
  if (ec) throw IoError("cannot create " + (dir / "tensors").string() + ": " + ec.message());

  {
    std::ofstream os(dir / "attributes.csv");
    if (!os) throw IoError("cannot write attributes.csv");
    const AttributeTable& a = data.attrs;
    for (std::size_t k = 0; k < a.num_attributes(); ++k) {
      if (k) os << ',';
      os << (a.attribute_names.empty() ? "attr" + std::to_string(k) : a.attribute_names[k]);
    }
    os << '\n';
    char buf[64];
    for (std::size_t c = 0; c < a.num_classes(); ++c) {
      for (std::size_t k = 0; k < a.num_attributes(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", a.phi.at(c, k));
        if (k) os << ',';
        os << buf;
      }
      os << '\n';
    }
  }

  json samples = json::array();
  for (const Sample& s : data.samples) {
    const std::string rel = "tensors/" + s.id + ".apnt";
    write_apnt(dir / rel, s.input);
    json parts = json::object();
    for (const auto& [name, box] : s.parts) parts[name] = box_to_json(box);
    json js = {{"id", s.id},
               {"class", s.class_id},
               {"tensor", rel},
               {"parts", parts},
               {"split", s.split == Split::kTrain ? "train" : "test"}};
    if (s.object) js["object"] = box_to_json(*s.object);
    samples.push_back(std::move(js));
  }
  json manifest = {{"mode", data.mode == DataMode::kImage ? "image" : "feature"},
                   {"input_shape", data.input_shape},
                   {"attributes_csv", "attributes.csv"},
                   {"groups", data.attrs.groups},
                   {"group_names", data.attrs.group_names},
                   {"seen", data.attrs.seen_ids},
                   {"unseen", data.attrs.unseen_ids},
                   {"samples", samples}};
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write manifest.json");
  os << manifest.dump(1) << '\n';
}

Dataset load_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  const fs::path root = file.parent_path();
  json m;
  try {
    m = json::parse(read_text(file));
  } catch (const json::parse_error& e) {
    throw IoError("malformed manifest " + file.string() + ": " + e.what());
  }

  Dataset data;
  try {
    const std::string mode = m.at("mode").get<std::string>();
    if (mode == "image") {
      data.mode = DataMode::kImage;
    } else if (mode == "feature") {
      data.mode = DataMode::kFeature;
    } else {
      throw ContractError("manifest mode must be 'image' or 'feature', got '" + mode + "'");
    }

    // Attribute table.
    const std::string csv = read_text(root / m.at("attributes_csv").get<std::string>());
    std::istringstream lines(csv);
    std::string line;
    if (!std::getline(lines, line)) throw ContractError("attributes CSV is empty");
    data.attrs.attribute_names = split_csv_line(line);
    const std::size_t k = data.attrs.attribute_names.size();
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
      if (line.empty() || line == "\r") continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != k) {
        throw DimensionError("attributes CSV row " + std::to_string(rows + 1) + " has " +
                             std::to_string(cells.size()) + " values, header has " + std::to_string(k));
      }
      for (const auto& c : cells) {
        std::size_t used = 0;
        double v;
        try {
          v = std::stod(c, &used);
        } catch (const std::exception&) {
          throw ContractError("attributes CSV value '" + c + "' is not a number");
        }
        if (used != c.size()) throw ContractError("attributes CSV value '" + c + "' is not a number");
        values.push_back(v);
      }
      ++rows;
    }
    if (rows == 0) throw ContractError("attributes CSV has no classes");
    data.attrs.phi = Tensor(Shape{rows, k}, std::move(values));
    data.attrs.groups = m.at("groups").get<IndexGroups>();
    data.attrs.group_names = m.value("group_names", std::vector<std::string>{});
    data.attrs.seen_ids = m.at("seen").get<std::vector<std::size_t>>();
    data.attrs.unseen_ids = m.at("unseen").get<std::vector<std::size_t>>();
    data.attrs.validate();

    if (m.contains("input_shape")) data.input_shape = m.at("input_shape").get<Shape>();

    for (const json& js : m.at("samples")) {
      Sample s;
      s.id = js.at("id").get<std::string>();
      s.class_id = js.at("class").get<std::size_t>();
      if (s.class_id >= data.attrs.num_classes()) {
        throw ContractError("sample " + s.id + " references unknown class " + std::to_string(s.class_id));
      }
      if (js.contains("parts")) {
        for (const auto& [name, box] : js.at("parts").items()) s.parts[name] = box_from_json(box);
      }
      if (js.contains("object")) s.object = box_from_json(js.at("object"));
      if (js.contains("split")) {
        const std::string sp = js.at("split").get<std::string>();
        if (sp != "train" && sp != "test") throw ContractError("sample split must be train or test");
        s.split = sp == "train" ? Split::kTrain : Split::kTest;
      } else {
        s.split = data.attrs.is_seen(s.class_id) ? Split::kTrain : Split::kTest;
      }
      s.input = read_apnt(root / js.at("tensor").get<std::string>());
      if (data.input_shape.empty()) data.input_shape = s.input.shape();
      data.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ContractError("invalid manifest " + file.string() + ": " + e.what());
  }
  data.validate();
  return data;
}

}  // namespace apn
