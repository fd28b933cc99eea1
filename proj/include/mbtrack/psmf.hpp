#pragma once

// Extraction phase: macroblock clustering, spatial filtering, and per-entity
// temporal filtering with the occurrence-probability criterion.

#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mbtrack/image.hpp"
#include "mbtrack/mbfs.hpp"
#include "mbtrack/occlusion.hpp"
#include "mbtrack/types.hpp"

namespace mbtrack {

struct GridPos {
  int mx = 0;
  int my = 0;

  friend bool operator==(const GridPos&, const GridPos&) = default;
  friend std::strong_ordering operator<=>(const GridPos& a, const GridPos& b) {
    if (auto c = a.my <=> b.my; c != 0) return c;
    return a.mx <=> b.mx;
  }
};

/// Set of macroblock positions kept sorted in raster order without duplicates.
using Region = std::vector<GridPos>;

Region make_region(std::vector<GridPos> cells);
Region region_union(const Region& a, const Region& b);
std::size_t intersection_size(const Region& a, const Region& b);
bool intersects(const Region& a, const Region& b);
/// Pixel rectangle covering every macroblock of the region.
PixelRect region_bounds_px(const Region& region);

struct BlockGroup {
  std::uint32_t frame_index = 0;
  Region members;
  bool has_nonzero_coeff = false;
  bool is_virtual = false;
};

struct PsmfConfig {
  int psi = 8;                           // observation period, P-frames
  double omega = 8 * std::log(2.0);      // occurrence threshold
  bool enable_spatial_filter = true;
  int stale_limit = 0;                   // retire real objects after this many virtual-only P-frames; 0 disables

  static PsmfConfig with_psi(int psi) {
    PsmfConfig c;
    c.psi = psi;
    c.omega = psi * std::log(2.0);
    return c;
  }
  void validate() const;
};

/// Maximal 8-connected components of non-skip macroblocks, in raster order of
/// their first member.
std::vector<BlockGroup> cluster_blocks(const FrameFeatures& frame, int mb_cols, int mb_rows);

/// Drops single-macroblock groups and groups without nonzero coefficients.
std::vector<BlockGroup> spatial_filter(std::vector<BlockGroup> groups, bool enabled = true);

/// Union of the members of every group sharing at least one macroblock with `previous_hat`.
Region compute_succeeding_region(const Region& previous_hat, std::span<const BlockGroup> active_groups);

/// One per-P-frame region record of an entity. `hat` is the succeeding region
/// united with the virtual group (a frozen copy of the previous hat when the
/// succeeding region is empty).
struct RegionRecord {
  std::uint32_t frame_index = 0;
  Region succeeding;
  Region hat;

  bool is_virtual() const { return succeeding.empty(); }
};

struct Entity {
  EntityId id = 0;
  ObjectId object_id = 0;  // public identity; may be reassigned after disocclusion
  Label label = Label::Candidate;
  std::uint32_t seed_frame = 0;

  std::vector<RegionRecord> train;  // observation window, at most psi records
  RegionRecord current;
  double neglog_sum = 0.0;
  std::uint32_t detections = 0;

  std::optional<EntityId> merged_into;
  bool retired = false;
  std::optional<std::uint32_t> classified_frame;
  int virtual_run = 0;

  std::optional<HueHistogram> latest_hue;  // from the most recent refined I-frame
  std::optional<HueHistogram> prior_hue;   // captured when entering occlusion

  bool is_occlusion = false;
  bool dormant = false;  // occlusion region with a pending split
  std::vector<EntityId> occlusion_members;
  std::optional<EntityId> split_parent;

  bool trackable() const {
    return !retired && !dormant && label != Label::Background && (label != Label::Occluded || is_occlusion);
  }
  /// Real object or occlusion group whose blob is reported.
  bool reported() const { return !retired && (label == Label::Real || is_occlusion) && !split_parent; }
};

/// Occurrence term of the i-th observed P-frame (1-based). `succeeding` is G^i,
/// `previous_hat` is the hat of frame i-1 and `detections` counts frames 1..i with
/// a non-empty succeeding region.
double occurrence_term(const Region& succeeding, const Region& previous_hat, std::uint32_t detections,
                       std::size_t ordinal);

/// Term of the i-th record of an entity's stored train.
double occurrence_term(const Entity& entity, std::size_t ordinal);

Label classify_entity(const Entity& entity, const PsmfConfig& config);

/// Disocclusion awaiting identity recovery at the next refined I-frame.
struct PendingIdentity {
  std::uint32_t confirmed_frame = 0;
  EntityId occlusion_id = 0;
  ObjectId occlusion_object = 0;
  std::vector<EntityId> members;
  std::vector<EntityId> fragments;
};

/// Per-stream entity state machine. Not thread-safe.
class EntityTracker {
 public:
  explicit EntityTracker(PsmfConfig config);

  /// Advances all entities by one P-frame given its active groups.
  std::vector<TrackEvent> step(std::span<const BlockGroup> active_groups, std::uint32_t frame_index);

  const PsmfConfig& config() const { return config_; }
  const std::vector<Entity>& entities() const { return entities_; }
  Entity& entity(EntityId id);
  const Entity& entity(EntityId id) const;

  std::vector<PendingIdentity>& pending_identities() { return pending_; }

  /// Transfers member identities onto disoccluded fragments.
  std::vector<TrackEvent> apply_identity_match(const PendingIdentity& pending, const IdentityMatch& match,
                                               std::uint32_t frame_index);

 private:
  EntityId new_entity(Label label, std::uint32_t frame, const Region& region);
  void retire_into(Entity& e, EntityId target);
  void accumulate(Entity& e, std::vector<TrackEvent>& events);
  void resolve_splits(std::uint32_t frame, std::vector<TrackEvent>& events);

  PsmfConfig config_;
  std::vector<Entity> entities_;  // entities_[id - 1]
  ObjectId next_object_ = 1;
  std::vector<PendingIdentity> pending_;
};

}  // namespace mbtrack
