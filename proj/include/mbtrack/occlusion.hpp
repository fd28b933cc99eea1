#pragma once

// Occlusion and disocclusion handling: region collision and region split decisions,
// hue histograms, and identity recovery by histogram distance.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mbtrack/image.hpp"
#include "mbtrack/types.hpp"

namespace mbtrack {

inline constexpr int kHueBins = 64;

struct HueHistogram {
  std::array<double, kHueBins> bins{};
  std::size_t valid_pixel_count = 0;

  bool empty() const { return valid_pixel_count == 0; }
};

/// Hue bin of one pixel, or nullopt for achromatic pixels (max == min channel).
std::optional<int> hue_bin(Rgb px);

/// Normalized hue histogram over the masked pixels of `tile`. The mask has the
/// tile's dimensions.
HueHistogram hue_histogram(const RgbImage& tile, const BinaryGrid& mask);

double histogram_distance(const HueHistogram& a, const HueHistogram& b);

struct IdentityAssignment {
  ObjectId prior_id = 0;
  EntityId fragment_id = 0;
  double distance = 0.0;
  bool by_exclusion = false;
};

struct IdentityMatch {
  std::vector<IdentityAssignment> assignments;
  std::vector<EntityId> unmatched_fragments;
  std::vector<ObjectId> unmatched_priors;
};

struct PriorHue {
  ObjectId object_id = 0;
  std::optional<HueHistogram> hue;  // nullopt when capture failed
};

struct PosteriorHue {
  EntityId fragment_id = 0;
  HueHistogram hue;
};

/// Greedy one-to-one assignment by ascending Euclidean histogram distance. Ties are
/// broken by lower fragment id, then lower prior id. Priors without a captured
/// histogram take left-over fragments afterwards (matching by exclusion).
IdentityMatch match_identities(std::span<const PriorHue> priors, std::span<const PosteriorHue> posteriors);

/// One entity taking part in a region collision.
struct CollisionParty {
  EntityId id = 0;
  Label label = Label::Candidate;
  bool is_occlusion = false;  // entity tracks an occlusion group
  std::uint32_t seed_frame = 0;
  std::optional<EntityId> split_parent;  // fragment of a pending split
};

enum class CollisionKind {
  Track,            // single entity: ordinary succeeding region
  Absorb,           // exactly one real object; candidates merge into it
  MergeCandidates,  // candidates only; all merge into the oldest
  Occlusion,        // two or more real objects collide
  CancelSplit,      // fragments of one pending split re-merge
};

struct CollisionDecision {
  CollisionKind kind = CollisionKind::Track;
  std::optional<EntityId> survivor;      // entity that takes the colliding region (not set for Occlusion)
  std::vector<EntityId> merged;          // entities retired into the survivor / occlusion entity
  std::vector<EntityId> real_members;    // real objects entering occlusion (Occlusion only)
  std::optional<EntityId> split_parent;  // CancelSplit only
};

/// Decides how one colliding region is attributed. `parties` must be non-empty.
CollisionDecision detect_collision(std::span<const CollisionParty> parties);

enum class SplitState {
  Pending,    // some fragment still under observation
  Confirmed,  // at least two fragments became real objects: disocclusion
  Inherited,  // exactly one fragment survived; it inherits the occlusion identity set
  Lost,       // no fragment survived; the occlusion region stays frozen
};

struct SplitFragment {
  EntityId id = 0;
  Label label = Label::Candidate;
  bool retired = false;
};

struct SplitResolution {
  SplitState state = SplitState::Pending;
  std::vector<EntityId> real_fragments;
};

/// True when an occlusion region is overlapped by at least two active groups.
bool detect_split(std::size_t overlapping_groups);

SplitResolution resolve_split(std::span<const SplitFragment> fragments);

}  // namespace mbtrack
