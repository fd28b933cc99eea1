#include "mbtrack/image.hpp"

#include <algorithm>
#include <numeric>

namespace mbtrack {

PixelRect intersect(const PixelRect& a, const PixelRect& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right());
  const int y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return {x0, y0, 0, 0};
  return {x0, y0, x1 - x0, y1 - y0};
}

PixelRect clip_to_frame(const PixelRect& r, int width, int height) {
  return intersect(r, PixelRect{0, 0, width, height});
}

RgbImage::RgbImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw std::invalid_argument("RgbImage: negative dimensions");
  data_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

RgbImage::RgbImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 0 || height < 0 || data_.size() != static_cast<std::size_t>(width) * height * 3)
    throw std::invalid_argument("RgbImage: buffer size does not match dimensions");
}

RgbImage RgbImage::crop(const PixelRect& r) const {
  if (r.x < 0 || r.y < 0 || r.right() > width_ || r.bottom() > height_ || r.w < 0 || r.h < 0)
    throw std::out_of_range("RgbImage::crop: rectangle outside image");
  RgbImage out(r.w, r.h);
  for (int y = 0; y < r.h; ++y) {
    const auto src = data_.begin() + static_cast<std::ptrdiff_t>(index(r.x, r.y + y));
    std::copy(src, src + static_cast<std::ptrdiff_t>(r.w) * 3,
              out.data_.begin() + static_cast<std::ptrdiff_t>(out.index(0, y)));
  }
  return out;
}

std::size_t BinaryGrid::count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

void unite(std::vector<int>& parent, int a, int b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b)
    parent[b] = a;
  else
    parent[a] = b;
}

}  // namespace

// Two-pass labeling with union-find over provisional labels.
ComponentLabels label_components_8(const BinaryGrid& grid) {
  ComponentLabels out;
  out.width = grid.width();
  out.height = grid.height();
  out.labels.assign(static_cast<std::size_t>(out.width) * out.height, 0);

  std::vector<int> parent{0};
  auto lab = [&](int x, int y) -> int {
    if (x < 0 || y < 0 || x >= out.width) return 0;
    return out.labels[static_cast<std::size_t>(y) * out.width + x];
  };

  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      if (!grid.get(x, y)) continue;
      const int neighbours[4] = {lab(x - 1, y), lab(x - 1, y - 1), lab(x, y - 1), lab(x + 1, y - 1)};
      int current = 0;
      for (int n : neighbours) {
        if (n == 0) continue;
        if (current == 0)
          current = n;
        else
          unite(parent, current, n);
      }
      if (current == 0) {
        current = static_cast<int>(parent.size());
        parent.push_back(current);
      }
      out.labels[static_cast<std::size_t>(y) * out.width + x] = current;
    }
  }

  // Roots are the minimal provisional label of each set, and provisional labels are
  // allocated in raster order, so ascending roots give raster order of first cells.
  std::vector<int> final_label(parent.size(), 0);
  int next = 0;
  for (std::size_t i = 1; i < parent.size(); ++i) {
    const int root = find_root(parent, static_cast<int>(i));
    if (root == static_cast<int>(i)) final_label[i] = ++next;
  }
  for (std::size_t i = 1; i < parent.size(); ++i) final_label[i] = final_label[find_root(parent, static_cast<int>(i))];

  out.count = next;
  out.areas.assign(static_cast<std::size_t>(next), 0);
  for (int& l : out.labels) {
    if (l == 0) continue;
    l = final_label[l];
    ++out.areas[static_cast<std::size_t>(l - 1)];
  }
  return out;
}

}  // namespace mbtrack
