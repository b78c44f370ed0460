#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "nlx/digest.hpp"
#include "nlx/error.hpp"
#include "nlx/tensor.hpp"

namespace nlx {

// RGB (or any channel count) image with values in [0, 1], stored
// height x width x channels.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f)
      : height_(height), width_(width), channels_(channels), pixels_(height * width * channels, fill) {
    if (height < 3 || width < 3) throw InputError("image must be at least 3x3");
    if (channels == 0) throw InputError("image needs at least one channel");
    if (fill < 0.0f || fill > 1.0f) throw InputError("pixel fill outside [0,1]");
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return pixels_.size(); }

  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels_[(y * width_ + x) * channels_ + c];
  }
  // Caller keeps values inside [0,1]; validate() re-checks.
  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels_[(y * width_ + x) * channels_ + c];
  }

  const std::vector<float>& pixels() const noexcept { return pixels_; }
  std::vector<float>& pixels() noexcept { return pixels_; }

  void validate() const {
    for (float v : pixels_)
      if (!(v >= 0.0f && v <= 1.0f)) throw InputError("pixel value outside [0,1]");
  }

  // Channel-major network input.
  Tensor to_tensor() const {
    Tensor t(channels_, height_, width_);
    for (std::size_t y = 0; y < height_; ++y)
      for (std::size_t x = 0; x < width_; ++x)
        for (std::size_t c = 0; c < channels_; ++c) t.at(c, y, x) = at(y, x, c);
    return t;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> pixels_;
};

namespace detail {

inline void skip_ppm_space(const std::vector<std::uint8_t>& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
}

inline std::size_t read_ppm_int(const std::vector<std::uint8_t>& buf, std::size_t& pos,
                                const std::string& path) {
  skip_ppm_space(buf, pos);
  std::size_t v = 0;
  bool any = false;
  while (pos < buf.size() && std::isdigit(buf[pos])) {
    v = v * 10 + (buf[pos] - '0');
    ++pos;
    any = true;
  }
  if (!any) throw FormatError("malformed PPM header in " + path);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Binary 8-bit PPM (P6). Values map to v / 255.
inline Image decode_ppm(const std::vector<std::uint8_t>& buf, const std::string& name = "<memory>") {
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '6') throw FormatError(name + " is not a binary PPM (P6)");
  std::size_t pos = 2;
  const std::size_t width = detail::read_ppm_int(buf, pos, name);
  const std::size_t height = detail::read_ppm_int(buf, pos, name);
  const std::size_t maxval = detail::read_ppm_int(buf, pos, name);
  if (maxval == 0 || maxval > 255) throw FormatError(name + ": only 8-bit PPM is supported");
  ++pos;  // single whitespace after maxval
  if (buf.size() < pos + width * height * 3) throw FormatError(name + ": truncated pixel data");
  Image img(height, width, 3);
  auto& px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<float>(buf[pos + i]) / static_cast<float>(maxval);
  return img;
}

inline Image load_ppm(const std::filesystem::path& path) {
  return decode_ppm(read_file_bytes(path), path.string());
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  if (img.channels() != 3) throw InputError("PPM output needs a 3-channel image");
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.size());
  for (float v : img.pixels()) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<std::uint8_t>(clamped * 255.0f + 0.5f));
  }
  return out;
}

inline void save_ppm(const Image& img, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::string image_digest(const Image& img) {
  std::string key = std::to_string(img.height()) + "x" + std::to_string(img.width()) + "x" +
                    std::to_string(img.channels()) + ":";
  key.append(reinterpret_cast<const char*>(img.pixels().data()), img.size() * sizeof(float));
  return sha256_hex(key);
}

}  // namespace nlx
