#include "lcn4/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lcn4/errors.hpp"

namespace lcn4::synth {

namespace {

constexpr std::size_t kAnchors = 4;
constexpr std::size_t kOrientations = 4;

// Asymmetric under every rotation and reflection.
constexpr std::array<std::array<int, 5>, 5> kGlyph{{
    {1, 1, 1, 1, 1},
    {1, 0, 0, 0, 0},
    {1, 1, 1, 0, 0},
    {1, 0, 0, 0, 0},
    {1, 0, 0, 1, 0},
}};

constexpr std::array<std::array<double, 3>, 4> kShapeColour{{
    {0.75, 0.35, 0.30},
    {0.30, 0.65, 0.35},
    {0.30, 0.40, 0.75},
    {0.70, 0.65, 0.30},
}};

int glyph_cell(std::size_t orientation, std::size_t y, std::size_t x) {
  const std::size_t n = kGlyphCells - 1;
  switch (orientation % kOrientations) {
    case 0: return kGlyph[y][x];
    case 1: return kGlyph[n - x][y];
    case 2: return kGlyph[n - y][n - x];
    default: return kGlyph[x][n - y];
  }
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), 0x5eedu};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

bool inside_shape(std::size_t group, double dx, double dy, double radius) {
  switch (group % 4) {
    case 0: return dx * dx + dy * dy <= radius * radius;
    case 1: return std::abs(dx) <= radius && std::abs(dy) <= radius;
    case 2: return dy <= radius && dy >= -radius && std::abs(dx) <= (dy + radius) * 0.6;
    default: {
      const double r2 = dx * dx + dy * dy;
      return r2 <= radius * radius && r2 >= 0.25 * radius * radius;
    }
  }
}

}  // namespace

std::vector<ClassSpec> class_layout(const SynthSpec& spec) {
  if (spec.groups == 0 || spec.groups > 4) throw PreconditionError("synthetic groups must be 1..4");
  const std::size_t total = spec.base_classes + spec.val_classes + spec.novel_classes;
  const std::size_t capacity = spec.groups * kAnchors * kOrientations;
  if (total == 0 || total > capacity) {
    throw PreconditionError("synthetic generator supports 1.." + std::to_string(capacity) +
                            " classes with " + std::to_string(spec.groups) + " groups");
  }
  std::vector<ClassSpec> all;
  for (std::size_t g = 0; g < spec.groups; ++g) {
    for (std::size_t a = 0; a < kAnchors; ++a) {
      for (std::size_t o = 0; o < kOrientations; ++o) all.push_back({g, a, o});
    }
  }
  std::mt19937_64 rng(mix(spec.seed, 0xC1A55, 0));
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(total);
  return all;
}

image::Image render(const SynthSpec& spec, const ClassSpec& cls, std::size_t instance,
                    Box* glyph_box) {
  const std::size_t r = spec.resolution;
  if (r < 32) throw PreconditionError("synthetic resolution must be at least 32");
  std::mt19937_64 rng(mix(spec.seed, cls.group, instance));
  std::normal_distribution<double> noise(0.0, spec.noise);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);

  const double scale = static_cast<double>(r) / 84.0;
  const double cx = r / 2.0 + spec.position_jitter * scale * jitter(rng);
  const double cy = r / 2.0 + spec.position_jitter * scale * jitter(rng);
  const double radius = (26.0 + 3.0 * jitter(rng)) * scale;
  const double tint = 0.08 * jitter(rng);
  const double background = 0.45 + 0.05 * jitter(rng);
  const long glyph_jx = std::lround(jitter(rng));
  const long glyph_jy = std::lround(jitter(rng));

  image::Image img;
  img.width = r;
  img.height = r;
  img.pixels.resize(3 * r * r);
  const std::size_t plane = r * r;
  const auto& colour = kShapeColour[cls.group % 4];
  for (std::size_t y = 0; y < r; ++y) {
    for (std::size_t x = 0; x < r; ++x) {
      const bool on = inside_shape(cls.group, static_cast<double>(x) + 0.5 - cx,
                                   static_cast<double>(y) + 0.5 - cy, radius);
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = on ? colour[c] + tint : background;
        img.pixels[c * plane + y * r + x] = base + noise(rng);
      }
    }
  }

  const std::size_t cell = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(spec.glyph_scale) * scale)));
  const std::size_t side = kGlyphCells * cell;
  std::uniform_int_distribution<std::size_t> place(0, r - side);
  for (std::size_t d = 0; d < spec.distractors; ++d) {
    const std::size_t bx = place(rng), by = place(rng);
    const double shade = 0.5 + 0.5 * jitter(rng);
    for (std::size_t y = by; y < by + side; ++y) {
      for (std::size_t x = bx; x < bx + side; ++x) {
        if (((x - bx) / cell + (y - by) / cell) % 2 == 0) continue;
        for (std::size_t c = 0; c < 3; ++c) img.pixels[c * plane + y * r + x] = shade;
      }
    }
  }

  // Glyph centred in one quadrant of the shape.
  const double offset = 0.45 * radius;
  const double gx = cx + ((cls.anchor & 1) ? offset : -offset);
  const double gy = cy + ((cls.anchor & 2) ? offset : -offset);
  const long x0 = std::clamp<long>(std::lround(gx - side / 2.0) + glyph_jx, 0, static_cast<long>(r - side));
  const long y0 = std::clamp<long>(std::lround(gy - side / 2.0) + glyph_jy, 0, static_cast<long>(r - side));
  for (std::size_t gyc = 0; gyc < kGlyphCells; ++gyc) {
    for (std::size_t gxc = 0; gxc < kGlyphCells; ++gxc) {
      const double sign = glyph_cell(cls.orientation, gyc, gxc) ? 0.5 : -0.5;
      for (std::size_t py = 0; py < cell; ++py) {
        for (std::size_t px = 0; px < cell; ++px) {
          const std::size_t y = static_cast<std::size_t>(y0) + gyc * cell + py;
          const std::size_t x = static_cast<std::size_t>(x0) + gxc * cell + px;
          for (std::size_t c = 0; c < 3; ++c) {
            img.pixels[c * plane + y * r + x] =
                colour[c] + sign * spec.glyph_contrast + noise(rng);
          }
        }
      }
    }
  }
  if (glyph_box) {
    *glyph_box = {static_cast<std::size_t>(x0), static_cast<std::size_t>(y0),
                  static_cast<std::size_t>(x0) + side, static_cast<std::size_t>(y0) + side};
  }
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

data::DatasetSplits generate(const SynthSpec& spec) {
  const auto layout = class_layout(spec);
  data::DatasetSplits splits;
  splits.resolution = spec.resolution;
  const std::size_t per_image = splits.image_numel();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const ClassSpec& cls = layout[i];
    data::ClassImages images;
    images.name = "g" + std::to_string(cls.group) + "_a" + std::to_string(cls.anchor) + "_o" +
                  std::to_string(cls.orientation);
    images.count = spec.per_class;
    images.pixels.reserve(spec.per_class * per_image);
    for (std::size_t j = 0; j < spec.per_class; ++j) {
      const image::Image img = render(spec, cls, j);
      images.pixels.insert(images.pixels.end(), img.pixels.begin(), img.pixels.end());
    }
    const data::Split split = i < spec.base_classes ? data::Split::base
                              : i < spec.base_classes + spec.val_classes ? data::Split::val
                                                                         : data::Split::novel;
    splits.split(split).push_back(std::move(images));
  }
  data::normalize_with_base_statistics(splits);
  return splits;
}

}  // namespace lcn4::synth
