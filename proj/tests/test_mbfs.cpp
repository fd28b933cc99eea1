#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "mbtrack/mbfs.hpp"

using namespace mbtrack;

namespace {

StreamHeader make_header(int w, int h, int gop, std::uint32_t frames) {
  StreamHeader hd;
  hd.width_px = static_cast<std::uint16_t>(w);
  hd.height_px = static_cast<std::uint16_t>(h);
  hd.fps = 30;
  hd.gop_len = static_cast<std::uint8_t>(gop);
  hd.frame_count = frames;
  return hd;
}

IntraPayload flat_payload(int w, int h, int value) {
  IntraPayload p;
  p.width = w;
  p.height = h;
  for (auto& plane : p.planes) {
    plane.resize(p.block_count());
    for (std::size_t i = 0; i < plane.size(); ++i) {
      plane[i].mode = i == 0 ? IntraMode::Constant128 : IntraMode::NeighbourDc;
      if (i == 0) plane[i].residuals.fill(static_cast<std::int16_t>(value - 128));
    }
  }
  return p;
}

FrameFeatures iframe(std::uint32_t idx, int w, int h) {
  FrameFeatures f;
  f.frame_index = idx;
  f.kind = FrameKind::I;
  f.intra_payload = flat_payload(w, h, 90);
  return f;
}

FrameFeatures pframe(std::uint32_t idx, int w, int h, std::mt19937& rng) {
  FrameFeatures f;
  f.frame_index = idx;
  f.kind = FrameKind::P;
  f.mb_grid.resize(static_cast<std::size_t>(w / 16) * (h / 16));
  for (auto& mb : f.mb_grid) {
    mb.skip = rng() % 3 == 0;
    if (!mb.skip) {
      mb.coeff_mask = static_cast<std::uint16_t>(rng());
      mb.mv_qpel = {static_cast<std::int16_t>(static_cast<int>(rng() % 200) - 100),
                    static_cast<std::int16_t>(static_cast<int>(rng() % 200) - 100)};
    }
  }
  return f;
}

std::vector<FrameFeatures> gop_frames(int w, int h, int gop, std::uint32_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::vector<FrameFeatures> frames;
  for (std::uint32_t i = 0; i < n; ++i)
    frames.push_back(i % static_cast<std::uint32_t>(gop) == 0 ? iframe(i, w, h) : pframe(i, w, h, rng));
  return frames;
}

template <typename F>
StreamErrorKind error_kind(F&& fn) {
  try {
    fn();
  } catch (const StreamError& e) {
    return e.kind();
  }
  FAIL("expected a StreamError");
  return StreamErrorKind::BadMagic;
}

std::vector<FrameFeatures> read_all(std::span<const std::uint8_t> bytes) {
  StreamReader r(bytes);
  std::vector<FrameFeatures> out;
  while (auto f = r.next()) out.push_back(std::move(*f));
  return out;
}

}  // namespace

TEST_CASE("single-frame stream round-trips") {
  const auto hd = make_header(16, 16, 8, 1);
  std::vector<FrameFeatures> frames{iframe(0, 16, 16)};
  const auto bytes = encode_stream(hd, nullptr, frames);
  StreamReader r(bytes);
  CHECK(r.header() == hd);
  CHECK_FALSE(r.background().has_value());
  auto f = r.next();
  REQUIRE(f);
  CHECK(*f == frames[0]);
  CHECK_FALSE(r.next());
}

TEST_CASE("byte layout matches a hand-assembled little-endian oracle") {
  // 32x16 frame, gop 2: one I-frame then one P-frame with MB0 skip and MB1 coded.
  auto hd = make_header(32, 16, 2, 2);
  std::vector<FrameFeatures> frames{iframe(0, 32, 16)};
  FrameFeatures p;
  p.frame_index = 1;
  p.kind = FrameKind::P;
  p.mb_grid.resize(2);
  p.mb_grid[1] = {false, 0xA55A, {-3, 258}};
  frames.push_back(p);
  RgbImage bg(32, 16, Rgb{1, 2, 3});

  std::vector<std::uint8_t> want = {'M', 'B', 'F', 'S', 1, 0, 32, 0, 16, 0, 30, 2, 2, 0, 0, 0, 1, 0, 'B'};
  for (int i = 0; i < 32 * 16; ++i) want.insert(want.end(), {1, 2, 3});
  want.insert(want.end(), {'I', 0, 0, 0, 0});
  const std::int16_t first = 90 - 128;  // 0xFFDA
  for (int plane = 0; plane < 3; ++plane) {
    for (int b = 0; b < 8 * 4; ++b) {
      want.push_back(b == 0 ? 0 : 1);
      for (int k = 0; k < 16; ++k) {
        const std::uint16_t v = static_cast<std::uint16_t>(b == 0 ? first : 0);
        want.push_back(static_cast<std::uint8_t>(v & 0xff));
        want.push_back(static_cast<std::uint8_t>(v >> 8));
      }
    }
  }
  want.insert(want.end(), {'P', 1, 0, 0, 0, 1, 0, 0x5A, 0xA5, 0xFD, 0xFF, 0x02, 0x01});

  const auto got = encode_stream(hd, &bg, frames);
  CHECK(got == want);

  std::ostringstream sink;
  CHECK(write_stream(hd, &bg, frames, sink) == want.size());
  CHECK(sink.str().size() == want.size());
}

TEST_CASE("full-size stream: 320x240, gop 8, 240 frames") {
  const auto hd = make_header(320, 240, 8, 240);
  const auto frames = gop_frames(320, 240, 8, 240, 7);
  const auto bytes = encode_stream(hd, nullptr, frames);
  StreamReader r(bytes);
  std::size_t i_count = 0, p_count = 0;
  std::uint32_t idx = 0;
  while (auto f = r.next()) {
    CHECK(f->frame_index == idx);
    CHECK((f->kind == FrameKind::I) == (idx % 8 == 0));
    if (f->kind == FrameKind::I) ++i_count;
    else {
      ++p_count;
      CHECK(f->mb_grid.size() == 20u * 15u);
    }
    CHECK(*f == frames[idx]);
    ++idx;
  }
  CHECK(i_count == 30);
  CHECK(p_count == 210);
}

TEST_CASE("randomized round-trip with background") {
  for (unsigned seed = 0; seed < 10; ++seed) {
    std::mt19937 rng(seed);
    const int w = 16 * static_cast<int>(1 + rng() % 4);
    const int h = 16 * static_cast<int>(1 + rng() % 3);
    const int gop = static_cast<int>(2 + rng() % 9);
    const std::uint32_t n = 1 + rng() % 25;
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);
    for (auto& v : px) v = static_cast<std::uint8_t>(rng());
    RgbImage bg(w, h, px);
    const auto hd = make_header(w, h, gop, n);
    const auto frames = gop_frames(w, h, gop, n, seed);
    const auto bytes = encode_stream(hd, &bg, frames);
    StreamReader r(bytes);
    CHECK(r.header().has_background());
    REQUIRE(r.background());
    CHECK(*r.background() == bg);
    std::vector<FrameFeatures> got;
    while (auto f = r.next()) got.push_back(std::move(*f));
    CHECK(got == frames);
    CHECK(encode_stream(r.header(), &*r.background(), got) == bytes);
  }
}

TEST_CASE("writer rejects frames inconsistent with the GOP structure") {
  auto hd = make_header(16, 16, 8, 4);
  auto frames = gop_frames(16, 16, 8, 4, 1);
  frames[3] = iframe(3, 16, 16);
  // Oracle: frame i must be I iff i mod gop_len == 0.
  CHECK(3 % 8 != 0);
  CHECK(error_kind([&] { encode_stream(hd, nullptr, frames); }) == StreamErrorKind::KindGopMismatch);

  std::mt19937 rng(3);
  auto bad0 = gop_frames(16, 16, 8, 2, 1);
  bad0[0] = pframe(0, 16, 16, rng);
  CHECK(error_kind([&] { encode_stream(hd = make_header(16, 16, 8, 2), nullptr, bad0); }) ==
        StreamErrorKind::KindGopMismatch);

  auto short_grid = gop_frames(32, 16, 2, 2, 1);
  short_grid[1].mb_grid.pop_back();
  CHECK(error_kind([&] { encode_stream(make_header(32, 16, 2, 2), nullptr, short_grid); }) ==
        StreamErrorKind::DimensionMismatch);
  CHECK(error_kind([&] { encode_stream(make_header(32, 16, 2, 3), nullptr, gop_frames(32, 16, 2, 2, 1)); }) ==
        StreamErrorKind::DimensionMismatch);
}

TEST_CASE("header validation") {
  CHECK_NOTHROW(validate_header(make_header(16, 16, 2, 1)));
  CHECK_NOTHROW(validate_header(make_header(320, 240, 10, 1)));
  CHECK(error_kind([] { validate_header(make_header(20, 16, 8, 1)); }) == StreamErrorKind::InvalidHeader);
  CHECK(error_kind([] { validate_header(make_header(0, 16, 8, 1)); }) == StreamErrorKind::InvalidHeader);
  CHECK(error_kind([] { validate_header(make_header(16, 16, 1, 1)); }) == StreamErrorKind::InvalidHeader);
  CHECK(error_kind([] { validate_header(make_header(16, 16, 11, 1)); }) == StreamErrorKind::InvalidHeader);
  CHECK(error_kind([] { validate_header(make_header(16, 16, 8, 0)); }) == StreamErrorKind::InvalidHeader);
}

TEST_CASE("reader reports typed errors") {
  const auto hd = make_header(32, 32, 4, 6);
  const auto frames = gop_frames(32, 32, 4, 6, 5);
  const auto bytes = encode_stream(hd, nullptr, frames);

  SUBCASE("bad magic") {
    auto b = bytes;
    b[0] = 'X';
    CHECK(error_kind([&] { StreamReader r(b); }) == StreamErrorKind::BadMagic);
  }
  SUBCASE("unsupported version") {
    auto b = bytes;
    b[4] = 2;
    CHECK(error_kind([&] { StreamReader r(b); }) == StreamErrorKind::UnsupportedVersion);
  }
  SUBCASE("truncated header") {
    std::vector<std::uint8_t> b(bytes.begin(), bytes.begin() + 10);
    CHECK(error_kind([&] { StreamReader r(b); }) == StreamErrorKind::Truncated);
  }
  SUBCASE("truncated mid-frame names the frame") {
    // Oracle: locate the start of frame 5 by re-encoding the first five frames.
    auto hd5 = hd;
    hd5.frame_count = 5;
    const std::size_t frame5_start =
        encode_stream(hd5, nullptr, std::span<const FrameFeatures>(frames).first(5)).size();
    std::vector<std::uint8_t> b(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(frame5_start + 7));
    StreamReader r(b);
    for (int i = 0; i < 5; ++i) REQUIRE(r.next());
    try {
      r.next();
      FAIL("expected truncation");
    } catch (const StreamError& e) {
      CHECK(e.kind() == StreamErrorKind::Truncated);
      REQUIRE(e.frame());
      CHECK(*e.frame() == 5);
      CHECK(std::string(e.what()).find("at frame 5") != std::string::npos);
    }
  }
  SUBCASE("skip macroblock carrying a coefficient mask") {
    auto small = gop_frames(16, 16, 2, 2, 9);
    small[1].mb_grid[0] = {true, 0x0001, {}};
    CHECK(error_kind([&] { encode_stream(make_header(16, 16, 2, 2), nullptr, small); }) ==
          StreamErrorKind::InvariantViolation);

    // On the wire a skip macroblock has no room for a mask, so a corrupted flags
    // byte with reserved bits is the reader-side equivalent.
    small[1].mb_grid[0] = {false, 0x0001, {}};
    auto b = encode_stream(make_header(16, 16, 2, 2), nullptr, small);
    const std::size_t flags_at = b.size() - 7;  // [flags][mask u16][mv i16 x2] closes the stream
    REQUIRE(b[flags_at] == 0);
    b[flags_at] = 0x03;
    StreamReader r(b);
    REQUIRE(r.next());
    CHECK(error_kind([&] { r.next(); }) == StreamErrorKind::InvariantViolation);
  }
  SUBCASE("frame index out of order") {
    auto b = bytes;
    auto hd1 = hd;
    hd1.frame_count = 1;
    const std::size_t frame1_start = encode_stream(hd1, nullptr, std::span<const FrameFeatures>(frames).first(1)).size();
    b[frame1_start + 1] = 7;
    StreamReader r(b);
    REQUIRE(r.next());
    CHECK(error_kind([&] { r.next(); }) == StreamErrorKind::FrameOrder);
  }
  SUBCASE("unknown frame tag") {
    auto b = bytes;
    auto hd1 = hd;
    hd1.frame_count = 1;
    const std::size_t frame1_start = encode_stream(hd1, nullptr, std::span<const FrameFeatures>(frames).first(1)).size();
    b[frame1_start] = 'Q';
    StreamReader r(b);
    REQUIRE(r.next());
    CHECK(error_kind([&] { r.next(); }) == StreamErrorKind::InvariantViolation);
  }
}

TEST_CASE("every full read yields exactly frame_count frames") {
  const auto hd = make_header(48, 32, 3, 10);
  const auto frames = gop_frames(48, 32, 3, 10, 11);
  const auto bytes = encode_stream(hd, nullptr, frames);
  CHECK(read_all(bytes).size() == 10);
}
