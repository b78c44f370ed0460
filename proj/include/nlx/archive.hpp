#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlx/error.hpp"
#include "nlx/image.hpp"

namespace nlx {

// Tensor archive: one file holding a JSON manifest and a payload of raw
// little-endian float32 arrays. Layout (see docs/container_format.md):
//
//   bytes 0..7    magic "NLXARCH1"
//   bytes 8..11   manifest length M, uint32 little-endian
//   bytes 12..    M bytes of UTF-8 JSON manifest
//   then          payload; tensor t occupies [offset, offset + 4*count)
//                 relative to the payload start
struct NamedTensor {
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

struct TensorArchive {
  nlohmann::json manifest = nlohmann::json::object();
  std::map<std::string, NamedTensor> tensors;
};

inline constexpr char kArchiveMagic[9] = "NLXARCH1";

namespace detail {

inline std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

inline std::uint32_t load_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float load_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = load_u32_le(p);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

inline void store_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_archive(const TensorArchive& archive) {
  nlohmann::json manifest = archive.manifest;
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    std::size_t expect = 1;
    for (auto d : t.shape) expect *= d;
    if (expect != t.values.size()) throw FormatError("tensor '" + name + "': shape does not match value count");
    entries.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += t.values.size() * 4;
  }
  manifest["tensors"] = entries;
  const std::string text = manifest.dump(2) + "\n";

  std::vector<std::uint8_t> out(kArchiveMagic, kArchiveMagic + 8);
  detail::store_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : archive.tensors) {
    for (float v : t.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      detail::store_u32_le(out, bits);
    }
  }
  return out;
}

inline TensorArchive decode_archive(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>") {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kArchiveMagic, 8) != 0)
    throw FormatError(name + ": not a tensor archive (bad magic)");
  const std::uint32_t mlen = detail::load_u32_le(bytes.data() + 8);
  if (bytes.size() < 12ull + mlen) throw FormatError(name + ": truncated manifest");
  TensorArchive archive;
  try {
    archive.manifest = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + mlen);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": manifest is not valid JSON: " + e.what());
  }
  if (!archive.manifest.is_object() || !archive.manifest.contains("tensors") ||
      !archive.manifest["tensors"].is_array())
    throw FormatError(name + ": manifest lacks a 'tensors' list");
  const std::size_t payload = 12 + mlen;
  for (const auto& e : archive.manifest["tensors"]) {
    std::string tname = "?";
    try {
      tname = e.at("name").get<std::string>();
      NamedTensor t;
      t.shape = e.at("shape").get<std::vector<std::size_t>>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      std::size_t expect = 1;
      for (auto d : t.shape) expect *= d;
      if (expect != count) throw FormatError(name + ": tensor '" + tname + "' shape does not match count");
      if (offset % 4 != 0 || payload + offset + 4 * count > bytes.size())
        throw FormatError(name + ": tensor '" + tname + "' lies outside the payload");
      t.values.resize(count);
      const auto* p = bytes.data() + payload + offset;
      for (std::size_t i = 0; i < count; ++i) t.values[i] = detail::load_f32_le(p + 4 * i);
      if (!archive.tensors.emplace(tname, std::move(t)).second)
        throw FormatError(name + ": duplicate tensor '" + tname + "'");
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(name + ": malformed tensor entry '" + tname + "': " + ex.what());
    }
  }
  archive.manifest.erase("tensors");
  return archive;
}

inline TensorArchive read_archive(const std::filesystem::path& path) {
  return decode_archive(read_file_bytes(path), path.string());
}

inline void write_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  const auto bytes = encode_archive(archive);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path.string());
}

}  // namespace nlx
