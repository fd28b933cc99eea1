#pragma once

// End-to-end pipeline: PSMF on every P-frame, GOP-periodic refinement on every
// I-frame, identity recovery after disocclusion, evaluation and overlays.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mbtrack/mbfs.hpp"
#include "mbtrack/psmf.hpp"
#include "mbtrack/refinement.hpp"
#include "mbtrack/synth.hpp"
#include "mbtrack/types.hpp"

namespace mbtrack {

struct TrackerConfig {
  PsmfConfig psmf;
  RefineConfig refine;
  DecodeMode decode_mode = DecodeMode::Partial;
  bool live = false;  // emit provisional records as frames arrive instead of GOP-delayed output

  void validate() const {
    psmf.validate();
    refine.validate();
  }
};

struct TrackOutputRecord {
  std::uint32_t frame_index = 0;
  ObjectId object_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double h = 0.0;
  double w = 0.0;
  Label state = Label::Real;
  bool refined = false;

  BlobFeature blob() const { return {cx, cy, h, w}; }
  friend bool operator==(const TrackOutputRecord&, const TrackOutputRecord&) = default;
};

struct StageTimings {
  double parse_ms = 0.0;
  double psmf_ms = 0.0;
  double decode_ms = 0.0;
  double subtract_ms = 0.0;
  double interpolate_ms = 0.0;
  double occlusion_ms = 0.0;
};

struct ObjectMetrics {
  std::uint32_t object_id = 0;  // ground-truth id
  std::size_t visible_frames = 0;
  std::size_t matched_frames = 0;
  double mean_center_error = 0.0;
  double max_center_error = 0.0;
  double mean_iou = 0.0;
  std::size_t id_switches = 0;
  std::optional<std::uint32_t> detection_latency_frames;
  std::optional<std::uint32_t> detection_latency_pframes;
};

struct EvaluationMetrics {
  std::vector<ObjectMetrics> objects;
  double mean_center_error = 0.0;
  double max_center_error = 0.0;
  double mean_iou = 0.0;
  std::size_t matched_pairs = 0;
  std::size_t id_switch_count = 0;
  std::vector<ObjectId> false_track_ids;  // tracked ids never matched to any ground-truth object
};

struct RunMetrics {
  std::uint32_t frame_count = 0;
  StageTimings timings;
  double total_seconds = 0.0;
  double frames_per_second = 0.0;
  std::size_t blocks_decoded = 0;
  std::size_t blocks_total = 0;
  double blocks_decoded_ratio = 0.0;
  std::size_t real_classifications = 0;
  std::optional<EvaluationMetrics> evaluation;
};

struct TrackResult {
  StreamHeader header;
  std::vector<TrackOutputRecord> trajectories;
  std::vector<TrackEvent> events;
  RunMetrics metrics;
};

/// Runs the full pipeline over an in-memory MBFS stream. Stream errors propagate
/// as StreamError with the failing frame index.
TrackResult run_tracker(std::span<const std::uint8_t> stream, const TrackerConfig& config);

/// Intersection over union of two blobs in continuous pixel coordinates.
double blob_iou(const BlobFeature& a, const BlobFeature& b);

/// Greedy per-frame matching of Real records to non-occluded ground truth by
/// center distance, gated at max(gt.w, gt.h).
EvaluationMetrics evaluate(std::span<const TrackOutputRecord> trajectories, std::span<const GroundTruthRecord> truth,
                           int gop_len);

/// Writes one PPM per frame into `out_dir`; returns the number of files written.
std::size_t render_overlays(std::span<const std::uint8_t> stream, std::span<const TrackOutputRecord> trajectories,
                            const std::filesystem::path& out_dir);

nlohmann::json to_json(const TrackOutputRecord& r);
TrackOutputRecord track_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GroundTruthRecord& r);
GroundTruthRecord ground_truth_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunMetrics& m);

/// One JSON document per line.
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace mbtrack
