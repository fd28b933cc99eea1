#include "mbtrack/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace mbtrack {

PixelRect BlobFeature::to_rect() const {
  const int x0 = static_cast<int>(std::floor(cx - w / 2.0 + 1e-9));
  const int y0 = static_cast<int>(std::floor(cy - h / 2.0 + 1e-9));
  const int x1 = static_cast<int>(std::ceil(cx + w / 2.0 - 1e-9));
  const int y1 = static_cast<int>(std::ceil(cy + h / 2.0 - 1e-9));
  return {x0, y0, x1 - x0, y1 - y0};
}

BlobFeature BlobFeature::from_rect(const PixelRect& r) {
  return {r.x + r.w / 2.0, r.y + r.h / 2.0, static_cast<double>(r.h), static_cast<double>(r.w)};
}

void RefineConfig::validate() const {
  if (epsilon < 1 || epsilon > 254) throw std::invalid_argument("epsilon must lie in [1, 254]");
  if (min_component_area < 1) throw std::invalid_argument("min component area must be at least 1");
  if (morph_radius < 0) throw std::invalid_argument("morphology radius must be non-negative");
  if (decode_margin < 0) throw std::invalid_argument("decode margin must be non-negative");
}

BlobFeature predict_blob(std::span<const BlobFeature> gop_blobs) {
  if (gop_blobs.empty()) throw std::invalid_argument("predict_blob: no P-frame blobs in the previous GOP");
  BlobFeature out = gop_blobs.back();
  for (const auto& b : gop_blobs) {
    out.h = std::max(out.h, b.h);
    out.w = std::max(out.w, b.w);
  }
  return out;
}

namespace {

// Separable square min/max filter. Pixels outside the grid read as `outside`.
BinaryGrid square_filter(const BinaryGrid& in, int radius, bool want_all, bool outside) {
  if (radius <= 0) return in;
  const int w = in.width(), h = in.height();
  auto pass = [&](const BinaryGrid& src, bool horizontal) {
    BinaryGrid dst(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        bool acc = want_all;
        for (int d = -radius; d <= radius; ++d) {
          const int sx = horizontal ? x + d : x;
          const int sy = horizontal ? y : y + d;
          const bool v = (sx < 0 || sy < 0 || sx >= w || sy >= h) ? outside : src.get(sx, sy);
          if (want_all ? !v : v) {
            acc = !want_all;
            break;
          }
        }
        dst.set(x, y, acc);
      }
    }
    return dst;
  };
  return pass(pass(in, true), false);
}

}  // namespace

// Erosion reads outside pixels as set and dilation reads them as clear, so shapes
// touching the tile border survive an opening unchanged.
BinaryGrid erode(const BinaryGrid& in, int radius) { return square_filter(in, radius, true, true); }
BinaryGrid dilate(const BinaryGrid& in, int radius) { return square_filter(in, radius, false, false); }
BinaryGrid morph_open(const BinaryGrid& in, int radius) { return dilate(erode(in, radius), radius); }
BinaryGrid morph_close(const BinaryGrid& in, int radius) { return erode(dilate(in, radius), radius); }

BinaryGrid remove_small_components(const BinaryGrid& in, int min_area) {
  const ComponentLabels labels = label_components_8(in);
  BinaryGrid out(in.width(), in.height());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      const int l = labels.at(x, y);
      if (l != 0 && labels.areas[static_cast<std::size_t>(l - 1)] >= static_cast<std::size_t>(min_area))
        out.set(x, y, true);
    }
  }
  return out;
}

Segmentation background_subtract(const PixelTile& tile, const RgbImage& background, const RefineConfig& config) {
  const PixelRect& r = tile.rect;
  if (tile.pixels.width() != r.w || tile.pixels.height() != r.h)
    throw std::invalid_argument("background_subtract: tile pixels do not match its rectangle");
  if (r.x < 0 || r.y < 0 || r.right() > background.width() || r.bottom() > background.height())
    throw std::invalid_argument("background_subtract: tile lies outside the background image");

  Segmentation seg;
  seg.raw_mask = BinaryGrid(r.w, r.h);
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      int diff = 0;
      for (int c = 0; c < 3; ++c)
        diff = std::max(diff, std::abs(static_cast<int>(tile.pixels.channel(x, y, c)) -
                                       static_cast<int>(background.channel(r.x + x, r.y + y, c))));
      seg.raw_mask.set(x, y, diff > config.epsilon);
    }
  }

  seg.mask = morph_close(morph_open(seg.raw_mask, config.morph_radius), config.morph_radius);
  seg.mask = remove_small_components(seg.mask, config.min_component_area);

  int x0 = r.w, y0 = r.h, x1 = -1, y1 = -1;
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      if (!seg.mask.get(x, y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 >= 0) seg.blob = BlobFeature::from_rect({r.x + x0, r.y + y0, x1 - x0 + 1, y1 - y0 + 1});
  return seg;
}

BlobFeature interpolate_blobs(const BlobFeature& at_i, const BlobFeature& at_i_minus_n, int n, int k) {
  if (n <= 0) throw std::invalid_argument("interpolate_blobs: GOP length must be positive");
  const double t = static_cast<double>(k) / n;
  return {at_i.cx + t * (at_i_minus_n.cx - at_i.cx), at_i.cy + t * (at_i_minus_n.cy - at_i.cy),
          at_i.h + t * (at_i_minus_n.h - at_i.h), at_i.w + t * (at_i_minus_n.w - at_i.w)};
}

std::vector<ObjectRefinement> refine_gop(std::span<const ObjectGop> objects, const IFrameContext& ctx,
                                         const RefineConfig& config, DecodeStats* total, StageTimes* times) {
  using Clock = std::chrono::steady_clock;
  if (!ctx.payload || !ctx.background) throw std::invalid_argument("refine_gop: missing I-frame payload or background");
  const IntraPayload& payload = *ctx.payload;
  const RgbImage& background = *ctx.background;

  std::optional<RgbImage> full;
  if (ctx.mode == DecodeMode::Full) {
    const auto t0 = Clock::now();
    full = decode_full(payload);
    if (times) times->decode += Clock::now() - t0;
    if (total) {
      total->blocks_decoded += payload.block_count();
    }
  }
  if (total) total->blocks_total += payload.block_count();

  std::vector<ObjectRefinement> out;
  out.reserve(objects.size());
  for (const ObjectGop& obj : objects) {
    ObjectRefinement res;
    res.key = obj.key;
    if (obj.pframe_blobs.empty()) {
      out.push_back(std::move(res));
      continue;
    }
    std::vector<BlobFeature> blobs;
    blobs.reserve(obj.pframe_blobs.size());
    for (const auto& [f, b] : obj.pframe_blobs) blobs.push_back(b);
    res.predicted = predict_blob(blobs);

    PixelRect rect = res.predicted->to_rect();
    rect = {rect.x - config.decode_margin, rect.y - config.decode_margin, rect.w + 2 * config.decode_margin,
            rect.h + 2 * config.decode_margin};
    res.decode_rect = clip_to_frame(rect, payload.width, payload.height);

    auto t0 = Clock::now();
    PixelTile tile;
    if (full) {
      tile = {res.decode_rect, full->crop(res.decode_rect)};
      res.stats = {blocks_intersecting(res.decode_rect), payload.block_count()};
    } else {
      tile = decode_region_partial(payload, res.decode_rect, background, &res.stats);
      if (total) total->blocks_decoded += res.stats.blocks_decoded;
    }
    auto t1 = Clock::now();
    const Segmentation seg = background_subtract(tile, background, config);
    if (seg.blob) res.hue = hue_histogram(tile.pixels, seg.mask);
    auto t2 = Clock::now();
    if (times) {
      times->decode += t1 - t0;
      times->subtract += t2 - t1;
    }

    res.iframe_blob = seg.blob;
    if (seg.blob && obj.anchor && ctx.frame_index >= static_cast<std::uint32_t>(ctx.gop_len) &&
        obj.anchor->first == ctx.frame_index - static_cast<std::uint32_t>(ctx.gop_len)) {
      res.anchored = true;
      for (const auto& [f, b] : obj.pframe_blobs) {
        const int k = static_cast<int>(ctx.frame_index - f);
        res.rewritten.emplace_back(f, interpolate_blobs(*seg.blob, obj.anchor->second, ctx.gop_len, k));
      }
    }
    if (times) times->interpolate += Clock::now() - t2;
    out.push_back(std::move(res));
  }
  return out;
}

}  // namespace mbtrack
