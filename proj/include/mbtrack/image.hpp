#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mbtrack {

/// Axis-aligned pixel rectangle; (x, y) is the top-left corner, w/h are extents.
struct PixelRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool empty() const { return w <= 0 || h <= 0; }
  long long area() const { return empty() ? 0 : static_cast<long long>(w) * h; }

  bool contains(int px, int py) const { return px >= x && px < right() && py >= y && py < bottom(); }

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

PixelRect intersect(const PixelRect& a, const PixelRect& b);
PixelRect clip_to_frame(const PixelRect& r, int width, int height);

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB raster, row-major, channel-interleaved.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {});
  RgbImage(int width, int height, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }

  Rgb at(int x, int y) const {
    const std::size_t i = index(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t i = index(x, y);
    data_[i] = c.r;
    data_[i + 1] = c.g;
    data_[i + 2] = c.b;
  }
  std::uint8_t channel(int x, int y, int c) const { return data_[index(x, y) + static_cast<std::size_t>(c)]; }

  std::span<const std::uint8_t> bytes() const { return data_; }
  std::span<std::uint8_t> bytes() { return data_; }

  RgbImage crop(const PixelRect& r) const;

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Binary raster used for masks and occupancy grids.
class BinaryGrid {
 public:
  BinaryGrid() = default;
  BinaryGrid(int width, int height) : width_(width), height_(height), cells_(static_cast<std::size_t>(width) * height, 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool get(int x, int y) const { return cells_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v) { cells_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const BinaryGrid&, const BinaryGrid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Labels of an 8-connected component pass. Label 0 is background; components are
/// numbered 1..count in raster order of their first cell.
struct ComponentLabels {
  int width = 0;
  int height = 0;
  int count = 0;
  std::vector<int> labels;
  std::vector<std::size_t> areas;  // areas[k] is the size of component k+1

  int at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

ComponentLabels label_components_8(const BinaryGrid& grid);

}  // namespace mbtrack
