#pragma once

// Procedural 10-class image generator used for the desk-scale reference
// model, its training set, and every fixture cohort. Output is quantized to
// 8-bit levels so that a PPM round trip is lossless.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nlx/error.hpp"
#include "nlx/image.hpp"
#include "nlx/rng.hpp"

namespace nlx::synthetic {

inline constexpr std::size_t kImageSize = 36;

struct ClassInfo {
  const char* name;
  std::array<const char*, 6> motifs;
};

inline const std::array<ClassInfo, 10>& classes() {
  static const std::array<ClassInfo, 10> kClasses = {{
      {"basset", {"brown dog fur", "long floppy ears", "grassy ground", "white and brown patches",
                  "rounded animal bodies", "dark ear shapes"}},
      {"coral reef", {"orange coral blobs", "deep blue water", "scattered bright spots", "warm colored clusters",
                      "underwater scenes", "speckled textures"}},
      {"fountain", {"gushes of water", "white spray", "stone basins", "thin vertical streaks", "splashing jets",
                    "grey stone rims"}},
      {"lakeside", {"calm blue water", "green tree lines", "water ripples", "pale sky", "horizontal shorelines",
                    "layered landscapes"}},
      {"library", {"rows of book spines", "wooden shelves", "colorful vertical stripes", "stacked rectangles",
                   "beige walls", "dense shelf patterns"}},
      {"overskirt", {"flared pink fabric", "purple cloth folds", "bell-shaped garments", "soft pastel surfaces",
                     "widening trapezoids", "draped textiles"}},
      {"palace", {"golden building facades", "rounded domes", "blue sky above buildings", "ornate rooftops",
                  "wide stone buildings", "yellow horizontal blocks"}},
      {"prison", {"dark vertical bars", "grey metal grids", "repeated parallel lines", "cross beams",
                  "cold grey walls", "caged structures"}},
      {"volcano", {"steep brown slopes", "red glowing peaks", "grey smoke plumes", "triangular mountains",
                   "molten orange tips", "rocky terrain"}},
      {"wall clock", {"clocks and other gauges", "circular rims", "thin dark hands", "round faces",
                      "black and white objects", "plain light walls"}},
  }};
  return kClasses;
}

inline std::vector<std::string> class_names() {
  std::vector<std::string> out;
  for (const auto& c : classes()) out.emplace_back(c.name);
  return out;
}

inline std::size_t class_index(const std::string& name) {
  const auto& cs = classes();
  for (std::size_t i = 0; i < cs.size(); ++i)
    if (name == cs[i].name) return i;
  throw LookupError("unknown synthetic class '" + name + "'");
}

namespace detail {

struct Rgb {
  float r, g, b;
};

class Canvas {
 public:
  Canvas(std::size_t n, Rng& rng) : n_(n), px_(n * n), rng_(rng) {}

  std::size_t n() const { return n_; }
  Rng& rng() { return rng_; }

  Rgb jitter(Rgb c, double amount = 0.08) {
    auto j = [&](float v) { return static_cast<float>(std::clamp(v + rng_.uniform(-amount, amount), 0.0, 1.0)); };
    return {j(c.r), j(c.g), j(c.b)};
  }

  void set(long y, long x, Rgb c) {
    if (y < 0 || x < 0 || y >= static_cast<long>(n_) || x >= static_cast<long>(n_)) return;
    px_[static_cast<std::size_t>(y) * n_ + static_cast<std::size_t>(x)] = c;
  }

  void fill(Rgb c) { std::fill(px_.begin(), px_.end(), c); }

  void vgradient(Rgb top, Rgb bottom, long y0, long y1) {
    for (long y = y0; y < y1; ++y) {
      const float t = y1 - y0 > 1 ? static_cast<float>(y - y0) / static_cast<float>(y1 - y0 - 1) : 0.0f;
      const Rgb c{top.r + (bottom.r - top.r) * t, top.g + (bottom.g - top.g) * t, top.b + (bottom.b - top.b) * t};
      for (long x = 0; x < static_cast<long>(n_); ++x) set(y, x, c);
    }
  }

  void rect(long y0, long x0, long h, long w, Rgb c) {
    for (long y = y0; y < y0 + h; ++y)
      for (long x = x0; x < x0 + w; ++x) set(y, x, c);
  }

  void disk(double cy, double cx, double r, Rgb c) {
    for (long y = 0; y < static_cast<long>(n_); ++y)
      for (long x = 0; x < static_cast<long>(n_); ++x)
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) set(y, x, c);
  }

  void ellipse(double cy, double cx, double ry, double rx, Rgb c) {
    for (long y = 0; y < static_cast<long>(n_); ++y)
      for (long x = 0; x < static_cast<long>(n_); ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        if (dy * dy + dx * dx <= 1.0) set(y, x, c);
      }
  }

  void ring(double cy, double cx, double r_in, double r_out, Rgb c) {
    for (long y = 0; y < static_cast<long>(n_); ++y)
      for (long x = 0; x < static_cast<long>(n_); ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        if (d2 <= r_out * r_out && d2 >= r_in * r_in) set(y, x, c);
      }
  }

  void line(double y0, double x0, double y1, double x1, Rgb c) {
    const int steps = static_cast<int>(std::max(std::abs(y1 - y0), std::abs(x1 - x0)) * 2) + 1;
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      set(std::lround(y0 + (y1 - y0) * t), std::lround(x0 + (x1 - x0) * t), c);
    }
  }

  // Filled triangle with apex (ay, ax) and a horizontal base at row by
  // spanning [bx0, bx1].
  void triangle(double ay, double ax, double by, double bx0, double bx1, Rgb c) {
    for (long y = static_cast<long>(std::ceil(ay)); y <= static_cast<long>(by); ++y) {
      const double t = by > ay ? (y - ay) / (by - ay) : 1.0;
      const double l = ax + (bx0 - ax) * t, r = ax + (bx1 - ax) * t;
      for (long x = static_cast<long>(std::ceil(l)); x <= static_cast<long>(r); ++x) set(y, x, c);
    }
  }

  Image finish(double noise) {
    Image img(n_, n_, 3);
    const double gain = rng_.uniform(0.85, 1.1);
    for (std::size_t y = 0; y < n_; ++y)
      for (std::size_t x = 0; x < n_; ++x) {
        const Rgb& c = px_[y * n_ + x];
        const float vals[3] = {c.r, c.g, c.b};
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double v = std::clamp(vals[ch] * gain + rng_.normal() * noise, 0.0, 1.0);
          img.at(y, x, ch) = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
        }
      }
    return img;
  }

 private:
  std::size_t n_;
  std::vector<Rgb> px_;
  Rng& rng_;
};

inline void draw_basset(Canvas& cv) {
  auto& r = cv.rng();
  cv.vgradient(cv.jitter({0.55f, 0.75f, 0.45f}), cv.jitter({0.3f, 0.55f, 0.25f}), 0, 36);
  const double cy = 20 + r.uniform(-4, 4), cx = 16 + r.uniform(-5, 5);
  cv.ellipse(cy, cx, 7 + r.uniform(-1, 1), 11 + r.uniform(-2, 2), cv.jitter({0.6f, 0.38f, 0.2f}));
  cv.ellipse(cy + 2, cx - 2, 3, 5, cv.jitter({0.92f, 0.9f, 0.85f}));
  cv.ellipse(cy - 6, cx + 9, 4, 4, cv.jitter({0.6f, 0.38f, 0.2f}));
  cv.ellipse(cy - 3, cx + 12, 5, 2, cv.jitter({0.25f, 0.15f, 0.08f}, 0.04));
  cv.ellipse(cy - 3, cx + 6, 5, 2, cv.jitter({0.25f, 0.15f, 0.08f}, 0.04));
}

inline void draw_coral(Canvas& cv) {
  auto& r = cv.rng();
  cv.vgradient(cv.jitter({0.1f, 0.35f, 0.65f}), cv.jitter({0.05f, 0.2f, 0.45f}), 0, 36);
  const int blobs = 5 + static_cast<int>(r.below(5));
  for (int i = 0; i < blobs; ++i) {
    const Rgb warm = r.uniform() < 0.5 ? Rgb{0.95f, 0.5f, 0.2f} : Rgb{0.9f, 0.3f, 0.35f};
    cv.disk(r.uniform(14, 34), r.uniform(2, 34), r.uniform(2, 4.5), cv.jitter(warm));
  }
  for (int i = 0; i < 6; ++i) cv.disk(r.uniform(0, 36), r.uniform(0, 36), 1, cv.jitter({0.95f, 0.9f, 0.4f}));
}

inline void draw_fountain(Canvas& cv) {
  auto& r = cv.rng();
  cv.vgradient(cv.jitter({0.7f, 0.8f, 0.88f}), cv.jitter({0.55f, 0.62f, 0.7f}), 0, 36);
  const double cx = 18 + r.uniform(-4, 4);
  const long basin = 26 + static_cast<long>(r.below(4));
  cv.rect(basin, 3, 36 - basin, 30, cv.jitter({0.5f, 0.5f, 0.5f}));
  cv.rect(basin + 2, 5, 36 - basin - 2, 26, cv.jitter({0.3f, 0.5f, 0.8f}));
  const Rgb spray = cv.jitter({0.97f, 0.97f, 1.0f}, 0.03);
  const double top = r.uniform(4, 10);
  for (int s = -3; s <= 3; ++s) {
    const double spread = s * r.uniform(1.2, 2.2);
    cv.line(basin, cx + s * 0.5, top + std::abs(s) * 2.0, cx + spread, spray);
  }
}

inline void draw_lakeside(Canvas& cv) {
  auto& r = cv.rng();
  const long shore = 12 + static_cast<long>(r.below(5));
  cv.vgradient(cv.jitter({0.65f, 0.8f, 0.95f}), cv.jitter({0.8f, 0.88f, 0.95f}), 0, shore);
  const long water = shore + 5 + static_cast<long>(r.below(3));
  cv.rect(shore, 0, water - shore, 36, cv.jitter({0.2f, 0.5f, 0.25f}));
  for (int t = 0; t < 8; ++t) cv.disk(shore, r.uniform(0, 36), r.uniform(2, 4), cv.jitter({0.15f, 0.45f, 0.2f}));
  cv.vgradient(cv.jitter({0.25f, 0.45f, 0.7f}), cv.jitter({0.15f, 0.3f, 0.55f}), water, 36);
  for (int i = 0; i < 7; ++i) {
    const double y = r.uniform(water + 1, 35), x = r.uniform(0, 30);
    cv.line(y, x, y, x + r.uniform(3, 7), cv.jitter({0.6f, 0.75f, 0.9f}, 0.04));
  }
}

inline void draw_library(Canvas& cv) {
  auto& r = cv.rng();
  cv.fill(cv.jitter({0.85f, 0.78f, 0.62f}));
  const long top = 6 + static_cast<long>(r.below(8));
  const Rgb shelf = cv.jitter({0.45f, 0.28f, 0.12f});
  for (long y = top; y < 36; y += 10) {
    cv.rect(y, 0, 2, 36, shelf);
    long x = static_cast<long>(r.below(3));
    while (x < 36) {
      const long w = 2 + static_cast<long>(r.below(2));
      const Rgb book{static_cast<float>(r.uniform(0.1, 0.9)), static_cast<float>(r.uniform(0.1, 0.6)),
                     static_cast<float>(r.uniform(0.1, 0.7))};
      cv.rect(y + 2, x, 8 - static_cast<long>(r.below(3)), w, book);
      x += w + static_cast<long>(r.below(2));
    }
  }
}

inline void draw_overskirt(Canvas& cv) {
  auto& r = cv.rng();
  cv.fill(cv.jitter({0.9f, 0.88f, 0.86f}));
  const double cx = 18 + r.uniform(-4, 4), top = 6 + r.uniform(-2, 3);
  const double base = 30 + r.uniform(-2, 3), half = 11 + r.uniform(-2, 3);
  const Rgb fabric = r.uniform() < 0.5 ? Rgb{0.9f, 0.5f, 0.7f} : Rgb{0.6f, 0.4f, 0.8f};
  cv.rect(static_cast<long>(top), static_cast<long>(cx - 4), 4, 9, cv.jitter(fabric));
  cv.triangle(top - 6, cx, base, cx - half, cx + half, cv.jitter(fabric));
  for (int f = -2; f <= 2; ++f) cv.line(top + 4, cx + f * 1.5, base, cx + f * half / 2.5, cv.jitter(fabric, 0.15));
}

inline void draw_palace(Canvas& cv) {
  auto& r = cv.rng();
  const long ground = 16 + static_cast<long>(r.below(6));
  cv.vgradient(cv.jitter({0.45f, 0.65f, 0.95f}), cv.jitter({0.7f, 0.82f, 0.95f}), 0, ground);
  cv.rect(ground, 0, 36 - ground, 36, cv.jitter({0.85f, 0.7f, 0.3f}));
  for (long x = 2; x < 36; x += 6) cv.rect(ground + 4, x, 5, 2, cv.jitter({0.35f, 0.25f, 0.15f}));
  const int domes = 1 + static_cast<int>(r.below(3));
  for (int d = 0; d < domes; ++d)
    cv.disk(ground, 6 + d * 12 + r.uniform(-2, 2), r.uniform(3, 5), cv.jitter({0.9f, 0.8f, 0.35f}));
  cv.rect(32, 0, 4, 36, cv.jitter({0.6f, 0.55f, 0.5f}));
}

inline void draw_prison(Canvas& cv) {
  auto& r = cv.rng();
  cv.fill(cv.jitter({0.62f, 0.62f, 0.64f}));
  const Rgb bar = cv.jitter({0.15f, 0.15f, 0.17f}, 0.05);
  const long spacing = 5 + static_cast<long>(r.below(3));
  for (long x = static_cast<long>(r.below(4)); x < 36; x += spacing) cv.rect(0, x, 36, 2, bar);
  const long beam = 4 + static_cast<long>(r.below(24));
  cv.rect(beam, 0, 2, 36, bar);
}

inline void draw_volcano(Canvas& cv) {
  auto& r = cv.rng();
  cv.vgradient(cv.jitter({0.6f, 0.7f, 0.85f}), cv.jitter({0.85f, 0.75f, 0.65f}), 0, 36);
  const double ax = 18 + r.uniform(-5, 5), ay = 8 + r.uniform(-2, 4);
  cv.triangle(ay, ax, 35, ax - 20, ax + 20, cv.jitter({0.45f, 0.3f, 0.2f}));
  cv.triangle(ay, ax, ay + 5, ax - 4, ax + 4, cv.jitter({0.95f, 0.35f, 0.1f}));
  for (int p = 0; p < 4; ++p) cv.disk(ay - 2 - p * 2, ax + r.uniform(-3, 3), 2 + p * 0.5, cv.jitter({0.5f, 0.5f, 0.5f}));
}

inline void draw_wall_clock(Canvas& cv) {
  auto& r = cv.rng();
  cv.fill(cv.jitter({0.85f, 0.82f, 0.75f}));
  const double cy = 18 + r.uniform(-4, 4), cx = 18 + r.uniform(-4, 4), rad = r.uniform(8, 12);
  cv.disk(cy, cx, rad, cv.jitter({0.97f, 0.97f, 0.95f}, 0.03));
  cv.ring(cy, cx, rad - 1.5, rad + 0.5, cv.jitter({0.1f, 0.1f, 0.1f}, 0.05));
  const double a1 = r.uniform(0, 2 * M_PI), a2 = r.uniform(0, 2 * M_PI);
  const Rgb hand{0.1f, 0.1f, 0.1f};
  cv.line(cy, cx, cy + std::sin(a1) * rad * 0.75, cx + std::cos(a1) * rad * 0.75, hand);
  cv.line(cy, cx, cy + std::sin(a2) * rad * 0.5, cx + std::cos(a2) * rad * 0.5, hand);
}

}  // namespace detail

// Deterministic sample: same (class, seed) always yields the same image.
inline Image generate(std::size_t class_idx, std::uint64_t seed) {
  if (class_idx >= classes().size()) throw InputError("synthetic class index out of range");
  Rng rng(derive_seed(seed, class_idx));
  detail::Canvas cv(kImageSize, rng);
  using Painter = void (*)(detail::Canvas&);
  static constexpr std::array<Painter, 10> kPainters = {
      detail::draw_basset,  detail::draw_coral,     detail::draw_fountain, detail::draw_lakeside,
      detail::draw_library, detail::draw_overskirt, detail::draw_palace,   detail::draw_prison,
      detail::draw_volcano, detail::draw_wall_clock};
  kPainters[class_idx](cv);
  return cv.finish(0.04);
}

// Seed of image `i` of class `c` in a cohort with base seed `base`.
inline std::uint64_t sample_seed(std::uint64_t base, std::size_t c, std::size_t i) {
  return derive_seed(derive_seed(base, c), i);
}

struct Sample {
  std::size_t class_idx;
  std::string label;
  Image image;
};

// Stratified cohort: `per_class` images for each of the first `n_classes`
// classes, ordered class-major.
inline std::vector<Sample> cohort(std::size_t n_classes, std::size_t per_class, std::uint64_t base_seed) {
  if (n_classes == 0 || n_classes > classes().size()) throw InputError("class count must be in 1..10");
  std::vector<Sample> out;
  out.reserve(n_classes * per_class);
  for (std::size_t c = 0; c < n_classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i)
      out.push_back({c, classes()[c].name, generate(c, sample_seed(base_seed, c, i))});
  return out;
}

}  // namespace nlx::synthetic
