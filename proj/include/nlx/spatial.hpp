#pragma once

// Coarse localization of an activation map: binarize at half the map maximum,
// pool the bits into a 3x3 grid, then rewrite the active cells into readable
// position names.
//
// Cells are numbered row-major, 0 = top-left, 8 = bottom-right.

#include <algorithm>
#include <array>
#include <initializer_list>
#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nlx/error.hpp"
#include "nlx/tensor.hpp"

namespace nlx {

struct BinaryMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
  friend bool operator==(const BinaryMap&, const BinaryMap&) = default;
};

// Subset of the nine grid cells, as a 9-bit mask.
class CellSet {
 public:
  constexpr CellSet() = default;
  constexpr explicit CellSet(std::uint16_t mask) : mask_(mask & 0x1FF) {}
  constexpr CellSet(std::initializer_list<int> cells) {
    for (int c : cells) insert(c);
  }

  constexpr void insert(int cell) {
    if (cell < 0 || cell > 8) throw InputError("grid cell index must be in 0..8");
    mask_ |= static_cast<std::uint16_t>(1u << cell);
  }
  constexpr bool contains(int cell) const { return (mask_ >> cell) & 1u; }
  constexpr bool includes(CellSet other) const { return (other.mask_ & ~mask_) == 0; }
  constexpr std::uint16_t mask() const { return mask_; }
  constexpr int size() const { return std::popcount(mask_); }
  constexpr bool empty() const { return mask_ == 0; }

  std::vector<int> cells() const {
    std::vector<int> out;
    for (int c = 0; c < 9; ++c)
      if (contains(c)) out.push_back(c);
    return out;
  }

  constexpr CellSet operator|(CellSet o) const { return CellSet(static_cast<std::uint16_t>(mask_ | o.mask_)); }
  friend constexpr bool operator==(CellSet, CellSet) = default;

 private:
  std::uint16_t mask_ = 0;
};

enum class Position : std::uint8_t {
  TopLeftCorner,
  Top,
  TopRightCorner,
  Left,
  Center,
  Right,
  BottomLeftCorner,
  Bottom,
  BottomRightCorner,
  EntireTop,
  EntireBottom,
  EntireLeft,
  EntireRight,
  Perimeter,
  CenterCross,
  UpperHalf,
  LowerHalf,
  LeftHalf,
  RightHalf,
  EntireImage,
};

inline constexpr std::size_t kPositionCount = 20;

struct PositionInfo {
  Position position;
  std::string_view name;
  CellSet cells;
};

// Basic cells first (index == cell number), then compounds in rule order,
// then the whole-image label.
inline constexpr std::array<PositionInfo, kPositionCount> kPositions = {{
    {Position::TopLeftCorner, "top-left corner", CellSet{0}},
    {Position::Top, "top", CellSet{1}},
    {Position::TopRightCorner, "top-right corner", CellSet{2}},
    {Position::Left, "left", CellSet{3}},
    {Position::Center, "center", CellSet{4}},
    {Position::Right, "right", CellSet{5}},
    {Position::BottomLeftCorner, "bottom-left corner", CellSet{6}},
    {Position::Bottom, "bottom", CellSet{7}},
    {Position::BottomRightCorner, "bottom-right corner", CellSet{8}},
    {Position::EntireTop, "entire top", CellSet{0, 1, 2}},
    {Position::EntireBottom, "entire bottom", CellSet{6, 7, 8}},
    {Position::EntireLeft, "entire left", CellSet{0, 3, 6}},
    {Position::EntireRight, "entire right", CellSet{2, 5, 8}},
    {Position::Perimeter, "perimeter", CellSet{0, 1, 2, 5, 8, 7, 6, 3}},
    {Position::CenterCross, "center cross", CellSet{1, 3, 4, 5, 7}},
    {Position::UpperHalf, "upper half", CellSet{0, 1, 2, 3, 4, 5}},
    {Position::LowerHalf, "lower half", CellSet{3, 4, 5, 6, 7, 8}},
    {Position::LeftHalf, "left half", CellSet{0, 1, 3, 4, 6, 7}},
    {Position::RightHalf, "right half", CellSet{1, 2, 4, 5, 7, 8}},
    {Position::EntireImage, "entire image", CellSet(std::uint16_t{0x1FF})},
}};

inline constexpr std::size_t kFirstCompound = 9;
inline constexpr std::size_t kCompoundCount = 10;

inline constexpr const PositionInfo& info(Position p) { return kPositions[static_cast<std::size_t>(p)]; }

inline std::string to_string(Position p) { return std::string(info(p).name); }

inline std::optional<Position> parse_position(std::string_view name) {
  for (const auto& p : kPositions)
    if (p.name == name) return p.position;
  return std::nullopt;
}

inline bool is_compound(Position p) {
  const auto i = static_cast<std::size_t>(p);
  return i >= kFirstCompound && i < kFirstCompound + kCompoundCount;
}

// Bit = 1 iff value > 0.5 * max(map). Strict comparison.
inline BinaryMap binarize(const Grid& map) {
  if (map.empty()) throw InputError("cannot binarize an empty activation map");
  double mx = map.values.front();
  for (double v : map.values) mx = v > mx ? v : mx;
  const double threshold = 0.5 * mx;
  BinaryMap out{map.height, map.width, std::vector<std::uint8_t>(map.values.size())};
  for (std::size_t i = 0; i < map.values.size(); ++i) out.bits[i] = map.values[i] > threshold ? 1 : 0;
  return out;
}

// Band of a coordinate along an axis of length n split into three bands of
// floor(n/3), with the remainder added to the last band.
inline std::size_t grid_band(std::size_t coord, std::size_t n) {
  const std::size_t band = n / 3;
  return std::min<std::size_t>(coord / band, 2);
}

inline CellSet grid_cells(const BinaryMap& bmap) {
  if (bmap.height < 3 || bmap.width < 3) throw InputError("binary map must be at least 3x3 for grid division");
  CellSet cells;
  for (std::size_t y = 0; y < bmap.height; ++y)
    for (std::size_t x = 0; x < bmap.width; ++x)
      if (bmap.at(y, x)) cells.insert(static_cast<int>(grid_band(y, bmap.height) * 3 + grid_band(x, bmap.width)));
  return cells;
}

inline std::vector<Position> simplify_positions(CellSet cells) {
  if (cells.empty()) return {};
  if (cells.size() >= 7) return {Position::EntireImage};

  std::array<bool, kPositionCount> keep{};
  for (std::size_t i = kFirstCompound; i < kFirstCompound + kCompoundCount; ++i)
    keep[i] = cells.includes(kPositions[i].cells);

  // "entire X" is dropped when the matching half is present.
  constexpr std::array<std::pair<Position, Position>, 4> kSubsumed = {{
      {Position::EntireTop, Position::UpperHalf},
      {Position::EntireBottom, Position::LowerHalf},
      {Position::EntireLeft, Position::LeftHalf},
      {Position::EntireRight, Position::RightHalf},
  }};
  for (const auto& [entire, half] : kSubsumed)
    if (keep[static_cast<std::size_t>(entire)] && keep[static_cast<std::size_t>(half)])
      keep[static_cast<std::size_t>(entire)] = false;

  std::vector<Position> out;
  CellSet covered;
  for (std::size_t i = kFirstCompound; i < kFirstCompound + kCompoundCount; ++i) {
    if (!keep[i]) continue;
    out.push_back(kPositions[i].position);
    covered = covered | kPositions[i].cells;
  }
  for (int c = 0; c < 9; ++c)
    if (cells.contains(c) && !covered.contains(c)) out.push_back(static_cast<Position>(c));
  return out;
}

// Convenience: activation map straight to position labels.
inline std::vector<Position> locate(const Grid& activation_map) {
  return simplify_positions(grid_cells(binarize(activation_map)));
}

}  // namespace nlx
