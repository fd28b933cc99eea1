#pragma once

// Synthetic scenes: renders scripted rectangles over a static background and
// simulates an encoder that emits MBFS streams plus ground truth.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mbtrack/image.hpp"
#include "mbtrack/mbfs.hpp"

namespace mbtrack {

struct Waypoint {
  std::uint32_t frame = 0;
  double cx = 0.0;
  double cy = 0.0;
  std::optional<double> h;
  std::optional<double> w;
};

enum class FillKind { Solid, Checker };

struct ObjectFill {
  FillKind kind = FillKind::Solid;
  Rgb primary;
  Rgb secondary;  // Checker only
  int cell = 4;   // Checker cell size in pixels, anchored at the object's top-left corner
};

/// Axis-aligned rectangle moving linearly between waypoints; visible from the
/// first waypoint frame through the last.
struct SceneObject {
  std::uint32_t id = 0;
  double h = 0.0;
  double w = 0.0;
  ObjectFill fill;
  std::vector<Waypoint> path;
};

struct BackgroundSpec {
  Rgb color{96, 112, 104};
  std::optional<Rgb> texture_color;  // tiled checker texture when set
  int tile = 8;
};

struct NoiseSpec {
  double p_isolated = 0.0;  // per background macroblock per P-frame: non-skip, zero coefficients
  double p_cluster = 0.0;   // per P-frame: spawn one 2-3 macroblock coefficient-bearing cluster
  std::uint64_t rng_seed = 0;
};

struct SceneScript {
  int width = 320;
  int height = 240;
  int fps = 30;
  int gop_len = 8;
  std::uint32_t frame_count = 1;
  BackgroundSpec background;
  std::vector<SceneObject> objects;
  NoiseSpec noise;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

struct GroundTruthRecord {
  std::uint32_t frame_index = 0;
  std::uint32_t object_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double h = 0.0;
  double w = 0.0;
  bool occluded = false;

  friend bool operator==(const GroundTruthRecord&, const GroundTruthRecord&) = default;
};

/// Rendered rectangle of `object` at `frame`, or nullopt when not visible.
std::optional<PixelRect> object_rect(const SceneObject& object, std::uint32_t frame);

RgbImage render_background(const SceneScript& script);
RgbImage render_frame(const SceneScript& script, std::uint32_t frame_index);

/// Zero-motion encoder model. A macroblock is skipped iff all its pixels equal the
/// previous frame; a 4x4 subblock carries coefficients iff some channel differs by
/// more than `deadzone`.
std::vector<MacroblockRecord> encode_p_frame(const RgbImage& current, const RgbImage& previous, int deadzone = 2);

std::vector<GroundTruthRecord> ground_truth_for_frame(const SceneScript& script, std::uint32_t frame_index);

struct NoiseStats {
  std::uint64_t isolated_injected = 0;
  std::uint64_t clusters_spawned = 0;
};

/// Deterministic noise injector; one instance per stream.
class NoiseInjector {
 public:
  explicit NoiseInjector(const NoiseSpec& spec, int mb_cols, int mb_rows);

  void apply(std::vector<MacroblockRecord>& grid);
  const NoiseStats& stats() const { return stats_; }

 private:
  struct Cluster {
    std::vector<std::size_t> cells;
    std::uint16_t coeff_mask = 0;
    int frames_left = 0;
  };

  double uniform();
  std::uint64_t below(std::uint64_t n);

  NoiseSpec spec_;
  int cols_;
  int rows_;
  std::mt19937_64 rng_;
  std::vector<Cluster> clusters_;
  NoiseStats stats_;
};

struct SynthResult {
  StreamHeader header;
  std::vector<std::uint8_t> stream;
  std::vector<GroundTruthRecord> ground_truth;
  NoiseStats noise;
};

SynthResult synthesize(const SceneScript& script);

/// Scene scripts are YAML documents; see scenes/ for the schema by example.
SceneScript parse_scene_script(const std::string& text);
SceneScript load_scene_script(const std::string& path);

}  // namespace mbtrack
