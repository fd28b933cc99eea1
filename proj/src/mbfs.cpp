#include "mbtrack/mbfs.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <ostream>

namespace mbtrack {

std::string to_string(StreamErrorKind kind) {
  switch (kind) {
    case StreamErrorKind::BadMagic: return "bad magic";
    case StreamErrorKind::UnsupportedVersion: return "unsupported version";
    case StreamErrorKind::Truncated: return "truncated";
    case StreamErrorKind::InvalidHeader: return "invalid header";
    case StreamErrorKind::DimensionMismatch: return "dimension mismatch";
    case StreamErrorKind::KindGopMismatch: return "kind/GOP mismatch";
    case StreamErrorKind::FrameOrder: return "frame order";
    case StreamErrorKind::InvariantViolation: return "invariant violation";
  }
  return "unknown";
}

namespace {

std::string compose_message(StreamErrorKind kind, const std::string& message, std::optional<std::uint32_t> frame) {
  std::string out = "MBFS " + to_string(kind);
  if (frame) out += " at frame " + std::to_string(*frame);
  out += ": " + message;
  return out;
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) buf_.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
  }
  void raw(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteCursor {
 public:
  ByteCursor(std::span<const std::uint8_t> bytes, std::size_t& pos) : bytes_(bytes), pos_(pos) {}

  void need(std::size_t n, std::optional<std::uint32_t> frame, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw StreamError(StreamErrorKind::Truncated, std::string("unexpected end of data reading ") + what, frame);
  }
  std::uint8_t u8() { return bytes_[pos_++]; }
  std::uint16_t u16() {
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t& pos_;
};

constexpr std::size_t kIntraBlockBytes = 1 + 16 * 2;
constexpr std::size_t kNonSkipBytes = 2 + 2 + 2;

void check_macroblock(const MacroblockRecord& mb, std::uint32_t frame) {
  if (mb.skip && (mb.coeff_mask != 0 || mb.mv_qpel != MotionVector{}))
    throw StreamError(StreamErrorKind::InvariantViolation, "skip macroblock carries coefficients or motion", frame);
}

void validate_frame(const StreamHeader& header, const FrameFeatures& frame, std::uint32_t expected_index) {
  if (frame.frame_index != expected_index)
    throw StreamError(StreamErrorKind::FrameOrder,
                      "expected frame index " + std::to_string(expected_index) + ", got " +
                          std::to_string(frame.frame_index),
                      frame.frame_index);
  const bool want_i = header.is_iframe(frame.frame_index);
  if (want_i != (frame.kind == FrameKind::I)) {
    if (frame.frame_index == 0)
      throw StreamError(StreamErrorKind::KindGopMismatch, "frame 0 must be an I-frame", 0);
    throw StreamError(StreamErrorKind::KindGopMismatch,
                      std::string("frame declared ") + (frame.kind == FrameKind::I ? "I" : "P") + " but GOP length " +
                          std::to_string(header.gop_len) + " requires " + (want_i ? "I" : "P"),
                      frame.frame_index);
  }
  if (frame.kind == FrameKind::P) {
    if (frame.intra_payload)
      throw StreamError(StreamErrorKind::InvariantViolation, "P-frame carries an intra payload", frame.frame_index);
    if (frame.mb_grid.size() != header.mb_count())
      throw StreamError(StreamErrorKind::DimensionMismatch,
                        "macroblock grid has " + std::to_string(frame.mb_grid.size()) + " records, expected " +
                            std::to_string(header.mb_count()),
                        frame.frame_index);
    for (const auto& mb : frame.mb_grid) check_macroblock(mb, frame.frame_index);
  } else {
    if (!frame.intra_payload || !frame.mb_grid.empty())
      throw StreamError(StreamErrorKind::InvariantViolation, "I-frame must carry exactly an intra payload",
                        frame.frame_index);
    const auto& p = *frame.intra_payload;
    if (p.width != header.width_px || p.height != header.height_px)
      throw StreamError(StreamErrorKind::DimensionMismatch, "intra payload dimensions differ from header",
                        frame.frame_index);
    try {
      validate_payload(p);
    } catch (const CodecError& e) {
      throw StreamError(StreamErrorKind::InvariantViolation, e.what(), frame.frame_index);
    }
  }
}

}  // namespace

StreamError::StreamError(StreamErrorKind kind, const std::string& message, std::optional<std::uint32_t> frame)
    : std::runtime_error(compose_message(kind, message, frame)), kind_(kind), frame_(frame) {}

void validate_header(const StreamHeader& header) {
  if (header.width_px == 0 || header.height_px == 0 || header.width_px % kMacroblock != 0 ||
      header.height_px % kMacroblock != 0)
    throw StreamError(StreamErrorKind::InvalidHeader, "width and height must be positive multiples of 16");
  if (header.gop_len < 2 || header.gop_len > 10)
    throw StreamError(StreamErrorKind::InvalidHeader, "gop_len must lie in [2, 10]");
  if (header.frame_count < 1) throw StreamError(StreamErrorKind::InvalidHeader, "frame_count must be at least 1");
}

std::vector<std::uint8_t> encode_stream(const StreamHeader& header_in, const RgbImage* background,
                                        std::span<const FrameFeatures> frames) {
  StreamHeader header = header_in;
  header.flags = static_cast<std::uint16_t>(background ? (header.flags | kFlagBackground)
                                                       : (header.flags & ~kFlagBackground));
  validate_header(header);
  if (frames.size() != header.frame_count)
    throw StreamError(StreamErrorKind::DimensionMismatch, "frame_count is " + std::to_string(header.frame_count) +
                                                              " but " + std::to_string(frames.size()) +
                                                              " frames were supplied");
  if (background && (background->width() != header.width_px || background->height() != header.height_px))
    throw StreamError(StreamErrorKind::DimensionMismatch, "background dimensions differ from header");

  ByteWriter w;
  w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("MBFS"), 4));
  w.u16(header.version);
  w.u16(header.width_px);
  w.u16(header.height_px);
  w.u8(header.fps);
  w.u8(header.gop_len);
  w.u32(header.frame_count);
  w.u16(header.flags);
  if (background) {
    w.u8('B');
    w.raw(background->bytes());
  }

  for (std::uint32_t i = 0; i < frames.size(); ++i) {
    const FrameFeatures& f = frames[i];
    validate_frame(header, f, i);
    w.u8(static_cast<std::uint8_t>(f.kind));
    w.u32(f.frame_index);
    if (f.kind == FrameKind::P) {
      for (const auto& mb : f.mb_grid) {
        w.u8(mb.skip ? 1 : 0);
        if (!mb.skip) {
          w.u16(mb.coeff_mask);
          w.i16(mb.mv_qpel.x);
          w.i16(mb.mv_qpel.y);
        }
      }
    } else {
      for (const auto& plane : f.intra_payload->planes) {
        for (const auto& block : plane) {
          w.u8(static_cast<std::uint8_t>(block.mode));
          for (std::int16_t r : block.residuals) w.i16(r);
        }
      }
    }
  }
  return w.take();
}

std::size_t write_stream(const StreamHeader& header, const RgbImage* background, std::span<const FrameFeatures> frames,
                         std::ostream& sink) {
  const auto bytes = encode_stream(header, background, frames);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw std::runtime_error("write_stream: sink write failed");
  return bytes.size();
}

StreamReader::StreamReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  ByteCursor in(bytes_, pos_);
  in.need(4, std::nullopt, "magic");
  const auto magic = in.take(4);
  if (std::memcmp(magic.data(), "MBFS", 4) != 0) throw StreamError(StreamErrorKind::BadMagic, "missing MBFS magic");
  in.need(16, std::nullopt, "header");
  header_.version = in.u16();
  header_.width_px = in.u16();
  header_.height_px = in.u16();
  header_.fps = in.u8();
  header_.gop_len = in.u8();
  header_.frame_count = in.u32();
  header_.flags = in.u16();
  if (header_.version != kMbfsVersion)
    throw StreamError(StreamErrorKind::UnsupportedVersion, "version " + std::to_string(header_.version));
  validate_header(header_);

  if (header_.has_background()) {
    in.need(1, std::nullopt, "background tag");
    if (in.u8() != 'B') throw StreamError(StreamErrorKind::InvariantViolation, "expected background tag 'B'");
    const std::size_t n = static_cast<std::size_t>(header_.width_px) * header_.height_px * 3;
    in.need(n, std::nullopt, "background image");
    const auto px = in.take(n);
    background_.emplace(header_.width_px, header_.height_px, std::vector<std::uint8_t>(px.begin(), px.end()));
  }
}

std::optional<FrameFeatures> StreamReader::next() {
  if (frames_read_ >= header_.frame_count) return std::nullopt;
  const std::uint32_t expected = frames_read_;
  ByteCursor in(bytes_, pos_);

  in.need(5, expected, "frame header");
  const std::uint8_t tag = in.u8();
  if (tag != 'I' && tag != 'P')
    throw StreamError(StreamErrorKind::InvariantViolation, "unknown frame tag " + std::to_string(tag), expected);
  FrameFeatures f;
  f.kind = static_cast<FrameKind>(tag);
  f.frame_index = in.u32();
  const std::uint32_t at = f.frame_index;

  if (f.kind == FrameKind::P) {
    f.mb_grid.resize(header_.mb_count());
    for (auto& mb : f.mb_grid) {
      in.need(1, at, "macroblock flags");
      const std::uint8_t flags = in.u8();
      if (flags & ~1u) throw StreamError(StreamErrorKind::InvariantViolation, "reserved macroblock flag bits set", at);
      mb.skip = (flags & 1u) != 0;
      if (!mb.skip) {
        in.need(kNonSkipBytes, at, "macroblock features");
        mb.coeff_mask = in.u16();
        mb.mv_qpel.x = in.i16();
        mb.mv_qpel.y = in.i16();
      }
    }
  } else {
    IntraPayload p;
    p.width = header_.width_px;
    p.height = header_.height_px;
    const std::size_t blocks = p.block_count();
    for (auto& plane : p.planes) {
      in.need(blocks * kIntraBlockBytes, at, "intra payload");
      plane.resize(blocks);
      for (auto& block : plane) {
        const std::uint8_t mode = in.u8();
        if (mode > 1) throw StreamError(StreamErrorKind::InvariantViolation, "unknown intra mode", at);
        block.mode = static_cast<IntraMode>(mode);
        for (auto& r : block.residuals) r = in.i16();
      }
    }
    f.intra_payload = std::move(p);
  }

  validate_frame(header_, f, expected);
  ++frames_read_;
  return f;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace mbtrack
