#ifndef APN_SYNTH_HPP_
#define APN_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "apn/dataset.hpp"

namespace apn {

/// Glyph scenes: every part is drawn as a small part-specific shape in one of
/// `colors_per_part` colours, at a jittered position inside its own cell of
/// the image, over low-amplitude uniform noise. Each part owns its own set of
/// hues, interleaved around the colour wheel.
struct GlyphSpec {
  std::size_t num_parts = 4;
  std::size_t colors_per_part = 4;
  std::size_t image_size = 64;
  std::size_t glyph_size = 12;
  std::size_t jitter = 6;
  double noise = 0.05;
  double label_flip = 0.1;           // per-sample attribute label noise
  double seen_test_fraction = 0.2;   // share of each seen class held out for testing
  std::uint64_t seed = 42;

  void validate() const;
};

std::vector<std::string> part_names(std::size_t num_parts);
// Hue in [0,1) of colour `color` of part `part`.
double glyph_hue(std::size_t part, std::size_t color, std::size_t num_parts, std::size_t colors_per_part);

/// Deterministic for a fixed spec. Attribute k = part * colors_per_part +
/// color; one group per part. phi is the class mean of per-sample binary
/// labels with `label_flip` noise. Unseen classes are chosen greedily to
/// maximise colour-pair combinations never seen in training while every
/// single (part, colour) attribute stays covered by a seen class.
Dataset gen_glyph_dataset(const GlyphSpec& spec, std::size_t num_classes,
                          std::size_t samples_per_class, double unseen_fraction);

}  // namespace apn

#endif  // APN_SYNTH_HPP_
