#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "nlx/container.hpp"
#include "nlx/network.hpp"
#include "nlx/rng.hpp"

namespace testsupport {

inline std::filesystem::path source_dir() { return NLX_SOURCE_DIR; }
inline std::filesystem::path reference_model() { return source_dir() / "models" / "reference.nlxc"; }
inline std::filesystem::path reference_table() { return source_dir() / "models" / "reference_annotations.tsv"; }
inline std::filesystem::path fixtures() { return source_dir() / "tests" / "fixtures"; }

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("nlx-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::vector<float> uniform(nlx::Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

inline nlx::Conv2d conv(nlx::Rng& rng, const std::string& name, std::size_t in, std::size_t out, bool bias) {
  nlx::Conv2d c{name, in, out, 3, 3, 1, 1, uniform(rng, out * in * 9, -0.5, 0.5), {}};
  c.bias = bias ? uniform(rng, out, -0.1, 0.1) : std::vector<float>(out, 0.0f);
  return c;
}

// 3-conv net on 3x12x12 inputs, 5 classes.
inline nlx::Network small_net(std::uint64_t seed, bool bias = false) {
  nlx::Rng rng(seed);
  std::vector<nlx::Layer> layers;
  layers.push_back(conv(rng, "conv1", 3, 4, bias));
  layers.push_back(nlx::Relu{"relu1"});
  layers.push_back(nlx::MaxPool{"pool1", 2, 2});
  layers.push_back(conv(rng, "conv2", 4, 6, bias));
  layers.push_back(nlx::Relu{"relu2"});
  layers.push_back(nlx::AvgPool{"pool2", 2, 2});
  layers.push_back(conv(rng, "conv3", 6, 8, bias));
  layers.push_back(nlx::Relu{"relu3"});
  layers.push_back(nlx::Flatten{"flatten"});
  nlx::Dense d{"fc", 8 * 3 * 3, 5, uniform(rng, 5 * 72, -0.5, 0.5), {}};
  d.bias = bias ? uniform(rng, 5, -0.1, 0.1) : std::vector<float>(5, 0.0f);
  layers.push_back(d);
  return nlx::Network({3, 12, 12}, std::move(layers), {"a", "b", "c", "d", "e"});
}

inline nlx::Image random_image(std::uint64_t seed, std::size_t h = 12, std::size_t w = 12) {
  nlx::Rng rng(seed);
  nlx::Image img(h, w, 3);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

inline const nlx::ModelBundle& reference() {
  static const nlx::ModelBundle m = nlx::load_model(reference_model());
  return m;
}

}  // namespace testsupport
