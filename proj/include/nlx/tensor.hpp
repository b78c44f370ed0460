#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nlx/error.hpp"

namespace nlx {

// Dense channel-major (C x H x W) float tensor for a single sample. Fully
// connected outputs are represented as C x 1 x 1.
struct Tensor {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane() const noexcept { return height * width; }

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }

  std::span<float> channel(std::size_t c) { return {data.data() + c * plane(), plane()}; }
  std::span<const float> channel(std::size_t c) const {
    return {data.data() + c * plane(), plane()};
  }

  bool same_shape(const Tensor& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  std::string shape_string() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// 2D real grid, row-major. Used for single-filter activation maps.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
  Grid(std::size_t h, std::size_t w, std::vector<double> v) : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) throw InputError("grid value count does not match its shape");
  }

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  bool empty() const noexcept { return values.empty(); }

  friend bool operator==(const Grid&, const Grid&) = default;
};

}  // namespace nlx
