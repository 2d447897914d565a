#include "apn/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>

#include "apn/errors.hpp"
#include "apn/parallel.hpp"
#include "apn/random.hpp"

namespace apn {
namespace {

constexpr std::uint64_t kClassStream = 0x636c617373ull;
constexpr std::uint64_t kSampleStream = 0x73616d706cull;

using Combo = std::vector<std::size_t>;  // colour per part

std::array<double, 3> hue_to_rgb(double hue) {
  // HSV with s = 0.85, v = 0.9.
  const double v = 0.9, s = 0.85;
  const double h6 = hue * 6.0;
  const int sector = int(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

bool glyph_pixel(std::size_t shape, std::size_t u, std::size_t v, std::size_t size) {
  const double c = 0.5 * double(size) - 0.5;
  const double du = double(u) - c, dv = double(v) - c;
  switch (shape % 4) {
    case 0:  // solid square
      return true;
    case 1:  // horizontal bars
      return (v / 2) % 2 == 0;
    case 2:  // disk
      return du * du + dv * dv <= 0.25 * double(size * size);
    default:  // plus sign
      return std::abs(du) < double(size) / 6.0 || std::abs(dv) < double(size) / 6.0;
  }
}

// Distinct (part a colour, part b colour) pairs present in `classes`.
std::set<std::array<std::size_t, 4>> color_pairs(const std::vector<Combo>& combos,
                                                  const std::vector<std::size_t>& classes) {
  std::set<std::array<std::size_t, 4>> out;
  for (std::size_t c : classes) {
    const Combo& k = combos[c];
    for (std::size_t a = 0; a < k.size(); ++a)
      for (std::size_t b = a + 1; b < k.size(); ++b) out.insert({a, k[a], b, k[b]});
  }
  return out;
}

bool covers_all(const std::vector<Combo>& combos, const std::vector<std::size_t>& classes,
                std::size_t parts, std::size_t colors) {
  std::vector<bool> hit(parts * colors, false);
  for (std::size_t c : classes)
    for (std::size_t p = 0; p < parts; ++p) hit[p * colors + combos[c][p]] = true;
  return std::all_of(hit.begin(), hit.end(), [](bool b) { return b; });
}

}  // namespace

void GlyphSpec::validate() const {
  if (num_parts == 0 || colors_per_part == 0) throw ContractError("glyph spec needs parts and colours");
  if (glyph_size == 0 || image_size == 0) throw ContractError("glyph and image sizes must be positive");
  const std::size_t cols = std::size_t(std::ceil(std::sqrt(double(num_parts))));
  const std::size_t rows = (num_parts + cols - 1) / cols;
  const std::size_t cell = image_size / std::max(cols, rows);
  if (cell < glyph_size + 2 * jitter) {
    throw ContractError("glyphs of size " + std::to_string(glyph_size) + " with jitter " +
                        std::to_string(jitter) + " do not fit in " + std::to_string(cell) +
                        "-pixel cells without overlapping");
  }
  if (noise < 0.0 || noise > 1.0) throw ContractError("noise amplitude must lie in [0,1]");
  if (label_flip < 0.0 || label_flip >= 0.5) throw ContractError("label flip rate must lie in [0,0.5)");
  if (seen_test_fraction < 0.0 || seen_test_fraction >= 1.0) {
    throw ContractError("seen test fraction must lie in [0,1)");
  }
}

std::vector<std::string> part_names(std::size_t num_parts) {
  static const char* kNames[] = {"head", "wing", "belly", "leg"};
  std::vector<std::string> out;
  for (std::size_t p = 0; p < num_parts; ++p) {
    out.push_back(p < 4 ? kNames[p] : "part" + std::to_string(p));
  }
  return out;
}

double glyph_hue(std::size_t part, std::size_t color, std::size_t num_parts,
                 std::size_t colors_per_part) {
  return double(color * num_parts + part) / double(num_parts * colors_per_part);
}

Dataset gen_glyph_dataset(const GlyphSpec& spec, std::size_t num_classes,
                          std::size_t samples_per_class, double unseen_fraction) {
  spec.validate();
  if (!(unseen_fraction > 0.0 && unseen_fraction < 1.0)) {
    throw ContractError("unseen fraction must lie in (0,1)");
  }
  if (samples_per_class == 0) throw ContractError("samples per class must be positive");
  const std::size_t parts = spec.num_parts, colors = spec.colors_per_part;

  double bound = std::pow(double(colors), double(parts));
  if (double(num_classes) > bound) {
    throw ContractError("cannot build " + std::to_string(num_classes) +
                        " distinct classes: at most colors_per_part^num_parts = " +
                        std::to_string(static_cast<unsigned long long>(bound)));
  }
  const std::size_t n_unseen = std::size_t(std::lround(unseen_fraction * double(num_classes)));
  if (n_unseen == 0 || n_unseen >= num_classes) {
    throw ContractError("unseen fraction must leave at least one seen and one unseen class");
  }

  // Distinct class definitions.
  Rng class_rng(derive_seed(spec.seed, kClassStream));
  std::vector<Combo> combos;
  std::set<Combo> used;
  while (combos.size() < num_classes) {
    Combo c(parts);
    for (auto& v : c) v = std::size_t(class_rng.below(colors));
    if (used.insert(c).second) combos.push_back(std::move(c));
  }

  // Greedy hold-out: each step removes the seen class whose departure creates
  // the most colour pairs absent from the remaining seen classes, subject to
  // every attribute staying covered.
  std::vector<std::size_t> seen(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) seen[i] = i;
  std::vector<std::size_t> unseen;
  while (unseen.size() < n_unseen) {
    std::size_t best = num_classes;
    std::size_t best_novel = 0;
    for (std::size_t cand : seen) {
      std::vector<std::size_t> rest;
      for (std::size_t c : seen)
        if (c != cand) rest.push_back(c);
      if (!covers_all(combos, rest, parts, colors)) continue;
      const auto pairs = color_pairs(combos, rest);
      std::vector<std::size_t> held = unseen;
      held.push_back(cand);
      std::size_t novel = 0;
      for (const auto& p : color_pairs(combos, held)) novel += pairs.count(p) ? 0 : 1;
      if (best == num_classes || novel > best_novel) {
        best = cand;
        best_novel = novel;
      }
    }
    if (best == num_classes) {
      throw ContractError("cannot hold out " + std::to_string(n_unseen) +
                          " classes: an unseen class would need a (part, colour) attribute that no "
                          "seen class has");
    }
    unseen.push_back(best);
    seen.erase(std::find(seen.begin(), seen.end(), best));
  }
  std::sort(unseen.begin(), unseen.end());

  Dataset data;
  data.mode = DataMode::kImage;
  const std::size_t S = spec.image_size;
  data.input_shape = Shape{3, S, S};
  AttributeTable& attrs = data.attrs;
  attrs.seen_ids = seen;
  attrs.unseen_ids = unseen;
  attrs.group_names = part_names(parts);
  for (std::size_t p = 0; p < parts; ++p) {
    std::vector<std::size_t> g;
    for (std::size_t c = 0; c < colors; ++c) {
      g.push_back(p * colors + c);
      char name[16];
      std::snprintf(name, sizeof name, "_hue%03d", int(std::lround(360.0 * glyph_hue(p, c, parts, colors))));
      attrs.attribute_names.push_back(attrs.group_names[p] + name);
    }
    attrs.groups.push_back(std::move(g));
  }
  const std::size_t K = parts * colors;
  Tensor label_sums(Shape{num_classes, K}, 0.0);

  std::vector<std::array<double, 3>> palette;  // indexed by attribute
  for (std::size_t p = 0; p < parts; ++p)
    for (std::size_t c = 0; c < colors; ++c) palette.push_back(hue_to_rgb(glyph_hue(p, c, parts, colors)));

  const std::size_t cols = std::size_t(std::ceil(std::sqrt(double(parts))));
  const std::size_t rows = (parts + cols - 1) / cols;
  const std::size_t cell = S / std::max(cols, rows);
  const std::size_t n_train_seen =
      std::size_t(std::lround(double(samples_per_class) * (1.0 - spec.seen_test_fraction)));

  const std::size_t total = num_classes * samples_per_class;
  data.samples.resize(total);
  std::vector<std::vector<char>> labels(total, std::vector<char>(K, 0));
  parallel_for(total, thread_count_from_env(), [&](std::size_t index) {
    const std::size_t cls = index / samples_per_class, n = index % samples_per_class;
    const bool is_seen = !std::binary_search(unseen.begin(), unseen.end(), cls);
    Rng rng(derive_seed(derive_seed(spec.seed, kSampleStream), index));
    Sample& s = data.samples[index];
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", index);
    s.id = id;
    s.class_id = cls;
    s.split = is_seen && n < n_train_seen ? Split::kTrain : Split::kTest;
    s.object = Box{0, 0, int(S), int(S)};
    s.input = Tensor(Shape{3, S, S});
    for (double& v : s.input.data()) v = spec.noise * rng.uniform();

    for (std::size_t p = 0; p < parts; ++p) {
      const std::size_t r = p / cols, c = p % cols;
      const long base_x = long(c * cell + (cell - spec.glyph_size) / 2);
      const long base_y = long(r * cell + (cell - spec.glyph_size) / 2);
      const long span = 2 * long(spec.jitter) + 1;
      const long x0 = base_x + long(rng.below(std::uint64_t(span))) - long(spec.jitter);
      const long y0 = base_y + long(rng.below(std::uint64_t(span))) - long(spec.jitter);
      const auto& rgb = palette[p * colors + combos[cls][p]];
      for (std::size_t v = 0; v < spec.glyph_size; ++v)
        for (std::size_t u = 0; u < spec.glyph_size; ++u) {
          if (!glyph_pixel(p, u, v, spec.glyph_size)) continue;
          for (std::size_t ch = 0; ch < 3; ++ch) {
            s.input.at(ch, std::size_t(y0) + v, std::size_t(x0) + u) = rgb[ch];
          }
        }
      s.parts[attrs.group_names[p]] =
          Box{int(x0), int(y0), int(x0 + long(spec.glyph_size)), int(y0 + long(spec.glyph_size))};
    }

    // Noisy image-level labels; their class mean becomes phi.
    for (std::size_t k = 0; k < K; ++k) {
      const bool truth = combos[cls][k / colors] == k % colors;
      labels[index][k] = (rng.bernoulli(spec.label_flip) ? !truth : truth) ? 1 : 0;
    }
  });
  for (std::size_t index = 0; index < total; ++index)
    for (std::size_t k = 0; k < K; ++k) label_sums.at(index / samples_per_class, k) += labels[index][k];
  label_sums *= 1.0 / double(samples_per_class);
  attrs.phi = std::move(label_sums);
  data.validate();
  return data;
}

}  // namespace apn
