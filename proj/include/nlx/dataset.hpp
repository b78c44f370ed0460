#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "nlx/error.hpp"
#include "nlx/image.hpp"
#include "nlx/synthetic.hpp"

namespace nlx {

struct DatasetEntry {
  std::filesystem::path path;  // relative to the dataset root
  std::string label;
};

// Directory-per-class image collection. Entries are ordered lexicographically
// by relative path; that order is the tie-break order everywhere.
class DatasetIndex {
 public:
  DatasetIndex() = default;
  DatasetIndex(std::filesystem::path root, std::vector<DatasetEntry> entries)
      : root_(std::move(root)), entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) { return a.path.generic_string() < b.path.generic_string(); });
    std::set<std::string> seen;
    for (const auto& e : entries_)
      if (seen.insert(e.label).second) classes_.push_back(e.label);
    std::sort(classes_.begin(), classes_.end());
  }

  static DatasetIndex scan(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw InputError("dataset root '" + root.string() + "' is not a directory");
    std::vector<DatasetEntry> entries;
    for (const auto& cls : fs::directory_iterator(root)) {
      if (!cls.is_directory()) continue;
      for (const auto& f : fs::directory_iterator(cls.path())) {
        if (!f.is_regular_file() || f.path().extension() != ".ppm") continue;
        entries.push_back({fs::relative(f.path(), root), cls.path().filename().string()});
      }
    }
    return DatasetIndex(root, std::move(entries));
  }

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<DatasetEntry>& entries() const noexcept { return entries_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  Image load(std::size_t i) const { return load_ppm(root_ / entries_.at(i).path); }

  // Index of an entry by relative path (as written in replay files).
  std::size_t find(const std::string& rel) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].path.generic_string() == rel) return i;
    throw LookupError("image '" + rel + "' is not in the dataset index");
  }

 private:
  std::filesystem::path root_;
  std::vector<DatasetEntry> entries_;
  std::vector<std::string> classes_;
};

// Writes a stratified synthetic cohort as <root>/<class>/<nnnn>.ppm.
inline DatasetIndex write_synthetic_dataset(const std::filesystem::path& root, std::size_t n_classes,
                                            std::size_t per_class, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  const auto& cls = synthetic::classes();
  for (std::size_t c = 0; c < n_classes; ++c) {
    fs::create_directories(root / cls[c].name);
    for (std::size_t i = 0; i < per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.ppm", i);
      save_ppm(synthetic::generate(c, synthetic::sample_seed(seed, c, i)), root / cls[c].name / name);
    }
  }
  return DatasetIndex::scan(root);
}

}  // namespace nlx
