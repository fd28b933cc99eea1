#include "mbtrack/intra_codec.hpp"

#include <algorithm>

namespace mbtrack {

namespace {

std::uint8_t clamp_pixel(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

// Rounded mean of the causal neighbours (row above, column to the left) that exist
// in the frame. `sample(x, y)` supplies the reference value for one neighbour pixel.
template <typename Sample>
int dc_predictor(int bx, int by, Sample&& sample) {
  const int x0 = bx * kIntraBlock;
  const int y0 = by * kIntraBlock;
  int sum = 0;
  int n = 0;
  if (y0 > 0) {
    for (int i = 0; i < kIntraBlock; ++i) sum += sample(x0 + i, y0 - 1);
    n += kIntraBlock;
  }
  if (x0 > 0) {
    for (int i = 0; i < kIntraBlock; ++i) sum += sample(x0 - 1, y0 + i);
    n += kIntraBlock;
  }
  if (n == 0) return 128;
  return (sum + n / 2) / n;
}

void check_rgb_dims(const RgbImage& image) {
  if (image.width() <= 0 || image.height() <= 0 || image.width() % kIntraBlock != 0 ||
      image.height() % kIntraBlock != 0)
    throw CodecError("intra codec: image dimensions must be positive multiples of 4");
}

}  // namespace

void validate_payload(const IntraPayload& payload) {
  if (payload.width <= 0 || payload.height <= 0 || payload.width % kIntraBlock != 0 ||
      payload.height % kIntraBlock != 0)
    throw CodecError("intra payload: dimensions must be positive multiples of 4");
  for (const auto& plane : payload.planes) {
    if (plane.size() != payload.block_count()) throw CodecError("intra payload: block count mismatch");
    for (const auto& block : plane) {
      if (block.mode != IntraMode::Constant128 && block.mode != IntraMode::NeighbourDc)
        throw CodecError("intra payload: unknown prediction mode");
    }
    if (!plane.empty() && plane.front().mode == IntraMode::NeighbourDc)
      throw CodecError("intra payload: top-left block has no causal neighbours");
  }
}

IntraPayload encode_iframe(const RgbImage& image) {
  check_rgb_dims(image);
  IntraPayload out;
  out.width = image.width();
  out.height = image.height();
  const int bw = out.blocks_x();
  const int bh = out.blocks_y();
  for (int c = 0; c < 3; ++c) {
    auto& plane = out.planes[static_cast<std::size_t>(c)];
    plane.resize(out.block_count());
    auto source = [&](int x, int y) { return static_cast<int>(image.channel(x, y, c)); };
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        IntraBlock& block = plane[static_cast<std::size_t>(by) * bw + bx];
        const bool top_left = bx == 0 && by == 0;
        block.mode = top_left ? IntraMode::Constant128 : IntraMode::NeighbourDc;
        // Lossless coding: the decoder reconstructs source pixels exactly, so the
        // encoder may predict from source neighbours.
        const int pred = top_left ? 128 : dc_predictor(bx, by, source);
        for (int j = 0; j < kIntraBlock; ++j)
          for (int i = 0; i < kIntraBlock; ++i)
            block.residuals[static_cast<std::size_t>(j * kIntraBlock + i)] =
                static_cast<std::int16_t>(source(bx * kIntraBlock + i, by * kIntraBlock + j) - pred);
      }
    }
  }
  return out;
}

RgbImage decode_full(const IntraPayload& payload) {
  validate_payload(payload);
  RgbImage out(payload.width, payload.height);
  const int bw = payload.blocks_x();
  const int bh = payload.blocks_y();
  for (int c = 0; c < 3; ++c) {
    const auto& plane = payload.planes[static_cast<std::size_t>(c)];
    auto recon = [&](int x, int y) { return static_cast<int>(out.channel(x, y, c)); };
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        const IntraBlock& block = plane[static_cast<std::size_t>(by) * bw + bx];
        const int pred = block.mode == IntraMode::Constant128 ? 128 : dc_predictor(bx, by, recon);
        for (int j = 0; j < kIntraBlock; ++j) {
          for (int i = 0; i < kIntraBlock; ++i) {
            const int x = bx * kIntraBlock + i;
            const int y = by * kIntraBlock + j;
            Rgb px = out.at(x, y);
            const std::uint8_t v =
                clamp_pixel(pred + block.residuals[static_cast<std::size_t>(j * kIntraBlock + i)]);
            (c == 0 ? px.r : c == 1 ? px.g : px.b) = v;
            out.set(x, y, px);
          }
        }
      }
    }
  }
  return out;
}

std::size_t blocks_intersecting(const PixelRect& rect) {
  if (rect.empty()) return 0;
  const int bx0 = rect.x / kIntraBlock;
  const int by0 = rect.y / kIntraBlock;
  const int bx1 = (rect.right() - 1) / kIntraBlock;
  const int by1 = (rect.bottom() - 1) / kIntraBlock;
  return static_cast<std::size_t>(bx1 - bx0 + 1) * static_cast<std::size_t>(by1 - by0 + 1);
}

PixelTile decode_region_partial(const IntraPayload& payload, const PixelRect& rect, const RgbImage& background,
                                DecodeStats* stats) {
  validate_payload(payload);
  if (background.width() != payload.width || background.height() != payload.height)
    throw CodecError("partial decode: background dimensions do not match payload");
  if (rect.x < 0 || rect.y < 0 || rect.w < 0 || rect.h < 0 || rect.right() > payload.width ||
      rect.bottom() > payload.height)
    throw CodecError("partial decode: rectangle out of bounds");

  PixelTile tile{rect, RgbImage(rect.w, rect.h)};
  if (stats) {
    stats->blocks_total = payload.block_count();
    stats->blocks_decoded = blocks_intersecting(rect);
  }
  if (rect.empty()) return tile;

  const int bw = payload.blocks_x();
  const int bx0 = rect.x / kIntraBlock;
  const int by0 = rect.y / kIntraBlock;
  const int bx1 = (rect.right() - 1) / kIntraBlock;
  const int by1 = (rect.bottom() - 1) / kIntraBlock;

  // Working area is the block-aligned hull of rect; anything outside it was never
  // decoded by this call and is taken from the background.
  const PixelRect hull{bx0 * kIntraBlock, by0 * kIntraBlock, (bx1 - bx0 + 1) * kIntraBlock,
                       (by1 - by0 + 1) * kIntraBlock};
  RgbImage work(hull.w, hull.h);

  for (int c = 0; c < 3; ++c) {
    const auto& plane = payload.planes[static_cast<std::size_t>(c)];
    // Blocks are visited in raster order, so any hull pixel above or to the left of
    // the current block is already reconstructed.
    auto reference = [&](int x, int y) -> int {
      if (hull.contains(x, y)) return work.channel(x - hull.x, y - hull.y, c);
      return background.channel(x, y, c);
    };
    for (int by = by0; by <= by1; ++by) {
      for (int bx = bx0; bx <= bx1; ++bx) {
        const IntraBlock& block = plane[static_cast<std::size_t>(by) * bw + bx];
        const int pred = block.mode == IntraMode::Constant128 ? 128 : dc_predictor(bx, by, reference);
        for (int j = 0; j < kIntraBlock; ++j) {
          for (int i = 0; i < kIntraBlock; ++i) {
            const int lx = (bx - bx0) * kIntraBlock + i;
            const int ly = (by - by0) * kIntraBlock + j;
            Rgb px = work.at(lx, ly);
            const std::uint8_t v =
                clamp_pixel(pred + block.residuals[static_cast<std::size_t>(j * kIntraBlock + i)]);
            (c == 0 ? px.r : c == 1 ? px.g : px.b) = v;
            work.set(lx, ly, px);
          }
        }
      }
    }
  }

  tile.pixels = work.crop({rect.x - hull.x, rect.y - hull.y, rect.w, rect.h});
  return tile;
}

}  // namespace mbtrack
