#pragma once

// Refinement phase: I-frame blob prediction, partial decoding plus background
// subtraction, and linear interpolation of the intervening P-frame blobs.

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mbtrack/image.hpp"
#include "mbtrack/intra_codec.hpp"
#include "mbtrack/occlusion.hpp"

namespace mbtrack {

/// Blob feature vector: center (cx, cy) plus height and width, in pixels.
struct BlobFeature {
  double cx = 0.0;
  double cy = 0.0;
  double h = 0.0;
  double w = 0.0;

  /// Corner form; edges rounded outward to whole pixels.
  PixelRect to_rect() const;
  static BlobFeature from_rect(const PixelRect& r);

  friend bool operator==(const BlobFeature&, const BlobFeature&) = default;
};

struct RefineConfig {
  int epsilon = 25;             // background-subtraction threshold, 8-bit units
  int min_component_area = 16;  // pixels
  int morph_radius = 1;         // square structuring element of side 2r+1
  int decode_margin = 4;        // predicted rectangle grows by this many pixels per side

  void validate() const;
};

/// Location of the last P-frame blob with the maximum height and width over the
/// previous GOP's P-frames. `gop_blobs` is in frame order and must be non-empty.
BlobFeature predict_blob(std::span<const BlobFeature> gop_blobs);

BinaryGrid erode(const BinaryGrid& in, int radius);
BinaryGrid dilate(const BinaryGrid& in, int radius);
BinaryGrid morph_open(const BinaryGrid& in, int radius);
BinaryGrid morph_close(const BinaryGrid& in, int radius);
/// Clears 8-connected components smaller than `min_area`.
BinaryGrid remove_small_components(const BinaryGrid& in, int min_area);

struct Segmentation {
  BinaryGrid raw_mask;  // thresholded difference before cleanup
  BinaryGrid mask;      // after morphology and component filtering
  std::optional<BlobFeature> blob;  // tightest rectangle around `mask`, frame coordinates
};

/// Thresholds the max-channel absolute difference between the tile and the
/// co-located background pixels, cleans the mask, and fits a rectangle to it.
Segmentation background_subtract(const PixelTile& tile, const RgbImage& background, const RefineConfig& config);

/// Feature vector at frame i-k, linear between frame i (`at_i`) and frame i-n (`at_i_minus_n`).
BlobFeature interpolate_blobs(const BlobFeature& at_i, const BlobFeature& at_i_minus_n, int n, int k);

enum class DecodeMode { Partial, Full };

struct StageTimes {
  std::chrono::nanoseconds decode{0};
  std::chrono::nanoseconds subtract{0};
  std::chrono::nanoseconds interpolate{0};
};

/// One object's inputs for refining the GOP that ends at an I-frame.
struct ObjectGop {
  std::uint32_t key = 0;
  std::vector<std::pair<std::uint32_t, BlobFeature>> pframe_blobs;   // P-frames of the previous GOP, frame order
  std::optional<std::pair<std::uint32_t, BlobFeature>> anchor;      // last refined I-frame blob
};

struct ObjectRefinement {
  std::uint32_t key = 0;
  std::optional<BlobFeature> predicted;
  PixelRect decode_rect;
  std::optional<BlobFeature> iframe_blob;  // absent when nothing survived subtraction
  bool anchored = false;                   // previous refined I-frame is exactly one GOP back
  std::vector<std::pair<std::uint32_t, BlobFeature>> rewritten;  // interpolated P-frame blobs
  std::optional<HueHistogram> hue;
  DecodeStats stats;
};

struct IFrameContext {
  std::uint32_t frame_index = 0;
  int gop_len = 8;
  const IntraPayload* payload = nullptr;
  const RgbImage* background = nullptr;
  DecodeMode mode = DecodeMode::Partial;
};

/// Refines every object against one I-frame. In Full mode the whole frame is
/// decoded once and tiles are cropped from it.
std::vector<ObjectRefinement> refine_gop(std::span<const ObjectGop> objects, const IFrameContext& ctx,
                                         const RefineConfig& config, DecodeStats* total = nullptr,
                                         StageTimes* times = nullptr);

}  // namespace mbtrack
