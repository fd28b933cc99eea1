#include "mbtrack/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace mbtrack {

std::optional<int> hue_bin(Rgb px) {
  const int r = px.r, g = px.g, b = px.b;
  const int mx = std::max({r, g, b});
  const int mn = std::min({r, g, b});
  if (mx == mn) return std::nullopt;
  const double delta = mx - mn;
  double hue;
  if (mx == r)
    hue = 60.0 * std::fmod((g - b) / delta + 6.0, 6.0);
  else if (mx == g)
    hue = 60.0 * ((b - r) / delta + 2.0);
  else
    hue = 60.0 * ((r - g) / delta + 4.0);
  if (hue >= 360.0) hue -= 360.0;
  const int bin = static_cast<int>(std::floor(hue / 360.0 * kHueBins));
  return std::clamp(bin, 0, kHueBins - 1);
}

HueHistogram hue_histogram(const RgbImage& tile, const BinaryGrid& mask) {
  if (mask.width() != tile.width() || mask.height() != tile.height())
    throw std::invalid_argument("hue_histogram: mask and tile dimensions differ");
  HueHistogram h;
  for (int y = 0; y < tile.height(); ++y) {
    for (int x = 0; x < tile.width(); ++x) {
      if (!mask.get(x, y)) continue;
      if (const auto bin = hue_bin(tile.at(x, y))) {
        h.bins[static_cast<std::size_t>(*bin)] += 1.0;
        ++h.valid_pixel_count;
      }
    }
  }
  if (h.valid_pixel_count > 0)
    for (double& v : h.bins) v /= static_cast<double>(h.valid_pixel_count);
  return h;
}

double histogram_distance(const HueHistogram& a, const HueHistogram& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.bins.size(); ++i) {
    const double d = a.bins[i] - b.bins[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

IdentityMatch match_identities(std::span<const PriorHue> priors, std::span<const PosteriorHue> posteriors) {
  struct Pair {
    double distance;
    EntityId fragment;
    ObjectId prior;
    std::size_t prior_index;
    std::size_t fragment_index;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < priors.size(); ++p) {
    if (!priors[p].hue) continue;
    for (std::size_t f = 0; f < posteriors.size(); ++f)
      pairs.push_back({histogram_distance(*priors[p].hue, posteriors[f].hue), posteriors[f].fragment_id,
                       priors[p].object_id, p, f});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(a.distance, a.fragment, a.prior) < std::tie(b.distance, b.fragment, b.prior);
  });

  std::vector<bool> prior_used(priors.size(), false);
  std::vector<bool> fragment_used(posteriors.size(), false);
  IdentityMatch out;
  for (const Pair& pr : pairs) {
    if (prior_used[pr.prior_index] || fragment_used[pr.fragment_index]) continue;
    prior_used[pr.prior_index] = true;
    fragment_used[pr.fragment_index] = true;
    out.assignments.push_back({pr.prior, pr.fragment, pr.distance, false});
  }

  // Members whose prior histogram could not be captured match by exclusion.
  std::vector<std::size_t> free_fragments;
  for (std::size_t f = 0; f < posteriors.size(); ++f)
    if (!fragment_used[f]) free_fragments.push_back(f);
  std::sort(free_fragments.begin(), free_fragments.end(),
            [&](std::size_t a, std::size_t b) { return posteriors[a].fragment_id < posteriors[b].fragment_id; });
  std::size_t next_free = 0;
  for (std::size_t p = 0; p < priors.size(); ++p) {
    if (prior_used[p] || priors[p].hue) continue;
    if (next_free >= free_fragments.size()) break;
    const std::size_t f = free_fragments[next_free++];
    prior_used[p] = true;
    fragment_used[f] = true;
    out.assignments.push_back({priors[p].object_id, posteriors[f].fragment_id, 0.0, true});
  }

  for (std::size_t f = 0; f < posteriors.size(); ++f)
    if (!fragment_used[f]) out.unmatched_fragments.push_back(posteriors[f].fragment_id);
  for (std::size_t p = 0; p < priors.size(); ++p)
    if (!prior_used[p]) out.unmatched_priors.push_back(priors[p].object_id);
  return out;
}

CollisionDecision detect_collision(std::span<const CollisionParty> parties) {
  if (parties.empty()) throw std::invalid_argument("detect_collision: no parties");
  CollisionDecision d;
  if (parties.size() == 1) {
    d.kind = CollisionKind::Track;
    d.survivor = parties.front().id;
    return d;
  }

  const auto& first = parties.front();
  const bool same_split = first.split_parent.has_value() &&
                          std::all_of(parties.begin(), parties.end(),
                                      [&](const CollisionParty& p) { return p.split_parent == first.split_parent; });
  if (same_split) {
    d.kind = CollisionKind::CancelSplit;
    d.split_parent = first.split_parent;
    for (const auto& p : parties) d.merged.push_back(p.id);
    return d;
  }

  std::vector<const CollisionParty*> reals;
  std::vector<const CollisionParty*> others;
  for (const auto& p : parties) {
    const bool real = (p.label == Label::Real || p.is_occlusion) && !p.split_parent;
    (real ? reals : others).push_back(&p);
  }

  if (reals.size() >= 2) {
    d.kind = CollisionKind::Occlusion;
    for (const auto* p : reals) d.real_members.push_back(p->id);
    for (const auto* p : others) d.merged.push_back(p->id);
    return d;
  }
  if (reals.size() == 1) {
    d.kind = CollisionKind::Absorb;
    d.survivor = reals.front()->id;
    for (const auto* p : others) d.merged.push_back(p->id);
    return d;
  }

  // Candidates only: the oldest survives; a fragment already judged real outranks age.
  const auto* keep = *std::min_element(others.begin(), others.end(), [](const auto* a, const auto* b) {
    const int ra = a->label == Label::Real ? 0 : 1;
    const int rb = b->label == Label::Real ? 0 : 1;
    return std::tie(ra, a->seed_frame, a->id) < std::tie(rb, b->seed_frame, b->id);
  });
  d.kind = CollisionKind::MergeCandidates;
  d.survivor = keep->id;
  for (const auto* p : others)
    if (p != keep) d.merged.push_back(p->id);
  return d;
}

bool detect_split(std::size_t overlapping_groups) { return overlapping_groups >= 2; }

SplitResolution resolve_split(std::span<const SplitFragment> fragments) {
  SplitResolution r;
  for (const auto& f : fragments) {
    if (f.retired) continue;
    if (f.label == Label::Candidate) {
      r.state = SplitState::Pending;
      r.real_fragments.clear();
      return r;
    }
    if (f.label == Label::Real) r.real_fragments.push_back(f.id);
  }
  if (r.real_fragments.size() >= 2)
    r.state = SplitState::Confirmed;
  else if (r.real_fragments.size() == 1)
    r.state = SplitState::Inherited;
  else
    r.state = SplitState::Lost;
  return r;
}

}  // namespace mbtrack
