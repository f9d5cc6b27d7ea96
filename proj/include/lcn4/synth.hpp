#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "lcn4/dataset.hpp"
#include "lcn4/image_io.hpp"

// Procedural fine-grained classes. Every class belongs to a super-group that
// fixes a coarse shape and colour; the class itself is identified only by
// where a small asymmetric 5x5 glyph sits on that shape and how it is
// rotated. Background texture, shape jitter and glyph jitter depend on
// (seed, group, instance) and not on the class, so two classes of one group
// rendered at the same instance index differ only inside their glyph boxes.
namespace lcn4::synth {

struct SynthSpec {
  std::size_t base_classes = 12;
  std::size_t val_classes = 4;
  std::size_t novel_classes = 5;
  std::size_t per_class = 40;
  std::size_t resolution = 84;
  std::size_t groups = 2;  // 1..4 coarse shapes
  double noise = 0.15;            // per-pixel Gaussian sigma
  double glyph_contrast = 0.9;    // glyph cell offset from the shape colour
  double position_jitter = 8.0;   // shape centre jitter, pixels at 84
  std::size_t distractors = 3;    // instance-dependent glyph-sized blobs
  std::size_t glyph_scale = 3;    // pixels per glyph cell at 84
  std::uint64_t seed = 0;
};

struct ClassSpec {
  std::size_t group;
  std::size_t anchor;       // 0..3, quadrant of the shape holding the glyph
  std::size_t orientation;  // quarter turns
};

inline constexpr std::size_t kGlyphCells = 5;

// Class factors in split order (base, val, novel); distinct combinations.
std::vector<ClassSpec> class_layout(const SynthSpec& spec);

struct Box {
  std::size_t x0, y0, x1, y1;  // half-open pixel rectangle
};

// Unnormalised render of one instance, plus the glyph rectangle.
image::Image render(const SynthSpec& spec, const ClassSpec& cls, std::size_t instance,
                    Box* glyph_box = nullptr);

// Full dataset, normalised with base statistics. Class names are
// "g<group>_a<anchor>_o<orientation>".
data::DatasetSplits generate(const SynthSpec& spec);

}  // namespace lcn4::synth
