#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbtrack/image.hpp"

namespace mbtrack {

inline constexpr int kIntraBlock = 4;

enum class IntraMode : std::uint8_t {
  Constant128 = 0,
  NeighbourDc = 1,
};

struct IntraBlock {
  IntraMode mode = IntraMode::Constant128;
  std::array<std::int16_t, 16> residuals{};

  friend bool operator==(const IntraBlock&, const IntraBlock&) = default;
};

/// Losslessly coded I-frame: three independent planes (R, G, B), each a raster of
/// 4x4 blocks carrying a prediction mode and source-minus-predictor residuals.
struct IntraPayload {
  int width = 0;
  int height = 0;
  std::array<std::vector<IntraBlock>, 3> planes;

  int blocks_x() const { return width / kIntraBlock; }
  int blocks_y() const { return height / kIntraBlock; }
  std::size_t block_count() const { return static_cast<std::size_t>(blocks_x()) * blocks_y(); }

  friend bool operator==(const IntraPayload&, const IntraPayload&) = default;
};

/// Decoded pixels for a rectangle of the frame.
struct PixelTile {
  PixelRect rect;
  RgbImage pixels;
};

struct DecodeStats {
  std::size_t blocks_decoded = 0;
  std::size_t blocks_total = 0;

  double ratio() const { return blocks_total == 0 ? 0.0 : static_cast<double>(blocks_decoded) / blocks_total; }
};

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws CodecError when the payload geometry or modes are inconsistent.
void validate_payload(const IntraPayload& payload);

IntraPayload encode_iframe(const RgbImage& image);

RgbImage decode_full(const IntraPayload& payload);

/// Decodes only the 4x4 blocks intersecting `rect`, in raster order. A causal
/// neighbour pixel comes from a block already decoded by this call when one is
/// available, otherwise from `background`.
PixelTile decode_region_partial(const IntraPayload& payload, const PixelRect& rect, const RgbImage& background,
                                DecodeStats* stats = nullptr);

/// Number of 4x4 blocks a partial decode of `rect` touches. Depends only on geometry.
std::size_t blocks_intersecting(const PixelRect& rect);

}  // namespace mbtrack
