#pragma once

// MacroBlock Feature Stream (MBFS): a little-endian container carrying the
// per-macroblock features of P-frames and the intra payloads of I-frames.
//
//   [magic "MBFS"][version u16][width u16][height u16][fps u8][gop_len u8]
//   [frame_count u32][flags u16]
//   flags bit0: ['B'][width*height*3 RGB bytes]
//   per frame: ['P' | 'I'][frame_index u32]
//     'P': per macroblock, raster order: [flags u8, bit0 skip]
//          non-skip: [coeff_mask u16][mv_x i16][mv_y i16]
//     'I': planes R, G, B; per 4x4 block, raster order: [mode u8][16 x residual i16]

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbtrack/image.hpp"
#include "mbtrack/intra_codec.hpp"

namespace mbtrack {

inline constexpr int kMacroblock = 16;
inline constexpr std::uint16_t kMbfsVersion = 1;
inline constexpr std::uint16_t kFlagBackground = 0x0001;

struct StreamHeader {
  std::uint16_t version = kMbfsVersion;
  std::uint16_t width_px = 0;
  std::uint16_t height_px = 0;
  std::uint8_t fps = 30;
  std::uint8_t gop_len = 8;
  std::uint32_t frame_count = 0;
  std::uint16_t flags = 0;

  int mb_cols() const { return width_px / kMacroblock; }
  int mb_rows() const { return height_px / kMacroblock; }
  std::size_t mb_count() const { return static_cast<std::size_t>(mb_cols()) * mb_rows(); }
  bool has_background() const { return (flags & kFlagBackground) != 0; }
  bool is_iframe(std::uint32_t frame_index) const { return frame_index % gop_len == 0; }

  friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

struct MotionVector {
  std::int16_t x = 0;
  std::int16_t y = 0;

  friend bool operator==(const MotionVector&, const MotionVector&) = default;
};

struct MacroblockRecord {
  bool skip = true;
  std::uint16_t coeff_mask = 0;  // bit k set iff 4x4 subblock k (raster order) has nonzero coefficients
  MotionVector mv_qpel;

  friend bool operator==(const MacroblockRecord&, const MacroblockRecord&) = default;
};

enum class FrameKind : std::uint8_t { I = 'I', P = 'P' };

struct FrameFeatures {
  std::uint32_t frame_index = 0;
  FrameKind kind = FrameKind::P;
  std::vector<MacroblockRecord> mb_grid;      // present iff kind == P
  std::optional<IntraPayload> intra_payload;  // present iff kind == I

  friend bool operator==(const FrameFeatures&, const FrameFeatures&) = default;
};

enum class StreamErrorKind {
  BadMagic,
  UnsupportedVersion,
  Truncated,
  InvalidHeader,
  DimensionMismatch,
  KindGopMismatch,
  FrameOrder,
  InvariantViolation,
};

std::string to_string(StreamErrorKind kind);

class StreamError : public std::runtime_error {
 public:
  StreamError(StreamErrorKind kind, const std::string& message, std::optional<std::uint32_t> frame = std::nullopt);

  StreamErrorKind kind() const { return kind_; }
  std::optional<std::uint32_t> frame() const { return frame_; }

 private:
  StreamErrorKind kind_;
  std::optional<std::uint32_t> frame_;
};

/// Throws StreamError(InvalidHeader) unless dimensions, GOP length and frame count are valid.
void validate_header(const StreamHeader& header);

/// Writes a complete stream. The background flag is derived from `background`.
/// Returns the number of bytes written.
std::size_t write_stream(const StreamHeader& header, const RgbImage* background, std::span<const FrameFeatures> frames,
                         std::ostream& sink);

std::vector<std::uint8_t> encode_stream(const StreamHeader& header, const RgbImage* background,
                                        std::span<const FrameFeatures> frames);

/// Lazy reader over an in-memory stream. The header (and background, when present)
/// is parsed on construction; frames are parsed and validated one at a time.
class StreamReader {
 public:
  explicit StreamReader(std::span<const std::uint8_t> bytes);

  const StreamHeader& header() const { return header_; }
  const std::optional<RgbImage>& background() const { return background_; }

  /// Next frame, or nullopt after `frame_count` frames.
  std::optional<FrameFeatures> next();

  std::uint32_t frames_read() const { return frames_read_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  StreamHeader header_;
  std::optional<RgbImage> background_;
  std::uint32_t frames_read_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

}  // namespace mbtrack
