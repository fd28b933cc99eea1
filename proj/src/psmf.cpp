#include "mbtrack/psmf.hpp"

#include <algorithm>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace mbtrack {

Region make_region(std::vector<GridPos> cells) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

Region region_union(const Region& a, const Region& b) {
  Region out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::size_t intersection_size(const Region& a, const Region& b) {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib)
      ++ia;
    else if (*ib < *ia)
      ++ib;
    else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

bool intersects(const Region& a, const Region& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib)
      ++ia;
    else if (*ib < *ia)
      ++ib;
    else
      return true;
  }
  return false;
}

PixelRect region_bounds_px(const Region& region) {
  if (region.empty()) return {};
  int x0 = region.front().mx, x1 = x0;
  const int y0 = region.front().my;
  const int y1 = region.back().my;
  for (const auto& p : region) {
    x0 = std::min(x0, p.mx);
    x1 = std::max(x1, p.mx);
  }
  return {x0 * kMacroblock, y0 * kMacroblock, (x1 - x0 + 1) * kMacroblock, (y1 - y0 + 1) * kMacroblock};
}

void PsmfConfig::validate() const {
  if (psi < 1) throw std::invalid_argument("psi must be at least 1");
  if (!(omega > 0.0)) throw std::invalid_argument("omega must be positive");
  if (stale_limit < 0) throw std::invalid_argument("stale limit must be non-negative");
}

std::vector<BlockGroup> cluster_blocks(const FrameFeatures& frame, int mb_cols, int mb_rows) {
  if (frame.kind != FrameKind::P) throw std::invalid_argument("cluster_blocks: not a P-frame");
  if (frame.mb_grid.size() != static_cast<std::size_t>(mb_cols) * mb_rows)
    throw std::invalid_argument("cluster_blocks: grid size mismatch");

  BinaryGrid nonskip(mb_cols, mb_rows);
  for (int my = 0; my < mb_rows; ++my)
    for (int mx = 0; mx < mb_cols; ++mx)
      nonskip.set(mx, my, !frame.mb_grid[static_cast<std::size_t>(my) * mb_cols + mx].skip);

  const ComponentLabels labels = label_components_8(nonskip);
  std::vector<BlockGroup> groups(static_cast<std::size_t>(labels.count));
  for (auto& g : groups) g.frame_index = frame.frame_index;
  for (int my = 0; my < mb_rows; ++my) {
    for (int mx = 0; mx < mb_cols; ++mx) {
      const int l = labels.at(mx, my);
      if (l == 0) continue;
      BlockGroup& g = groups[static_cast<std::size_t>(l - 1)];
      g.members.push_back({mx, my});  // raster scan keeps members sorted
      if (frame.mb_grid[static_cast<std::size_t>(my) * mb_cols + mx].coeff_mask != 0) g.has_nonzero_coeff = true;
    }
  }
  return groups;
}

std::vector<BlockGroup> spatial_filter(std::vector<BlockGroup> groups, bool enabled) {
  if (!enabled) return groups;
  std::erase_if(groups, [](const BlockGroup& g) { return g.members.size() <= 1 || !g.has_nonzero_coeff; });
  return groups;
}

Region compute_succeeding_region(const Region& previous_hat, std::span<const BlockGroup> active_groups) {
  Region out;
  for (const auto& g : active_groups)
    if (intersects(g.members, previous_hat)) out = region_union(out, g.members);
  return out;
}

double occurrence_term(const Region& succeeding, const Region& previous_hat, std::uint32_t detections,
                       std::size_t ordinal) {
  if (ordinal <= 1) return 0.0;
  if (!succeeding.empty()) {
    const double p = static_cast<double>(intersection_size(succeeding, previous_hat)) /
                     static_cast<double>(previous_hat.size());
    return -std::log(p);
  }
  return -std::log(static_cast<double>(detections) / static_cast<double>(ordinal));
}

double occurrence_term(const Entity& entity, std::size_t ordinal) {
  if (ordinal < 1 || ordinal > entity.train.size()) throw std::out_of_range("occurrence_term: ordinal outside train");
  if (ordinal == 1) return 0.0;
  std::uint32_t detections = 0;
  for (std::size_t k = 0; k < ordinal; ++k)
    if (!entity.train[k].succeeding.empty()) ++detections;
  return occurrence_term(entity.train[ordinal - 1].succeeding, entity.train[ordinal - 2].hat, detections, ordinal);
}

Label classify_entity(const Entity& entity, const PsmfConfig& config) {
  return entity.neglog_sum < config.omega ? Label::Real : Label::Background;
}

EntityTracker::EntityTracker(PsmfConfig config) : config_(config) { config_.validate(); }

Entity& EntityTracker::entity(EntityId id) {
  if (id == 0 || id > entities_.size()) throw std::out_of_range("unknown entity id");
  return entities_[id - 1];
}

const Entity& EntityTracker::entity(EntityId id) const {
  if (id == 0 || id > entities_.size()) throw std::out_of_range("unknown entity id");
  return entities_[id - 1];
}

EntityId EntityTracker::new_entity(Label label, std::uint32_t frame, const Region& region) {
  Entity e;
  e.id = static_cast<EntityId>(entities_.size() + 1);
  e.label = label;
  e.seed_frame = frame;
  e.current = {frame, region, region};
  entities_.push_back(std::move(e));
  return entities_.back().id;
}

void EntityTracker::retire_into(Entity& e, EntityId target) {
  e.retired = true;
  e.merged_into = target;
}

namespace {

nlohmann::json ids_json(const std::vector<EntityId>& ids) { return nlohmann::json(ids); }

}  // namespace

std::vector<TrackEvent> EntityTracker::step(std::span<const BlockGroup> active_groups, std::uint32_t frame_index) {
  std::vector<TrackEvent> events;
  const std::size_t existing = entities_.size();

  // Bipartite overlap graph between active groups and trackable entities; its
  // connected components are resolved independently.
  std::vector<EntityId> live;
  for (const auto& e : entities_)
    if (e.trackable()) live.push_back(e.id);

  const std::size_t ng = active_groups.size();
  std::vector<std::size_t> parent(ng + live.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::vector<std::size_t>> overlaps_of_entity(live.size());
  for (std::size_t gi = 0; gi < ng; ++gi) {
    for (std::size_t li = 0; li < live.size(); ++li) {
      if (!intersects(active_groups[gi].members, entity(live[li]).current.hat)) continue;
      overlaps_of_entity[li].push_back(gi);
      const std::size_t a = find(gi), b = find(ng + li);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }

  struct Component {
    std::vector<std::size_t> groups;
    std::vector<EntityId> ents;
  };
  std::map<std::size_t, Component> components;  // keyed by root; groups come first so roots follow group order
  for (std::size_t gi = 0; gi < ng; ++gi) components[find(gi)].groups.push_back(gi);
  for (std::size_t li = 0; li < live.size(); ++li)
    if (!overlaps_of_entity[li].empty()) components[find(ng + li)].ents.push_back(live[li]);

  std::set<EntityId> assigned;
  std::vector<EntityId> fresh;
  std::vector<EntityId> cancelled_parents;

  auto union_of = [&](const std::vector<std::size_t>& gs) {
    Region r;
    for (std::size_t gi : gs) r = region_union(r, active_groups[gi].members);
    return r;
  };
  auto set_region = [&](Entity& e, Region r) {
    e.current = {frame_index, r, r};
    assigned.insert(e.id);
  };

  for (auto& [root, comp] : components) {
    if (comp.ents.empty()) {
      for (std::size_t gi : comp.groups) {
        const EntityId id = new_entity(Label::Candidate, frame_index, active_groups[gi].members);
        fresh.push_back(id);
      }
      continue;
    }

    std::vector<CollisionParty> parties;
    for (EntityId id : comp.ents) {
      const Entity& e = entity(id);
      parties.push_back({id, e.label, e.is_occlusion, e.seed_frame, e.split_parent});
    }
    const CollisionDecision d = detect_collision(parties);
    const Region merged_region = union_of(comp.groups);

    switch (d.kind) {
      case CollisionKind::Track: {
        const EntityId eid = *d.survivor;
        if (entity(eid).is_occlusion && detect_split(comp.groups.size())) {
          entity(eid).dormant = true;
          std::vector<EntityId> frags;
          for (std::size_t gi : comp.groups) {
            const EntityId id = new_entity(Label::Candidate, frame_index, active_groups[gi].members);
            entity(id).split_parent = eid;
            fresh.push_back(id);
            frags.push_back(id);
          }
          events.push_back({frame_index, "split_begin",
                            {{"occlusion", entity(eid).object_id}, {"entity", eid}, {"fragments", ids_json(frags)}}});
        } else {
          set_region(entity(eid), merged_region);
        }
        break;
      }
      case CollisionKind::Absorb:
      case CollisionKind::MergeCandidates: {
        Entity& survivor = entity(*d.survivor);
        set_region(survivor, merged_region);
        for (EntityId id : d.merged) retire_into(entity(id), survivor.id);
        events.push_back({frame_index, "merge",
                          {{"into", survivor.id}, {"merged", ids_json(d.merged)},
                           {"absorbed_by_real", d.kind == CollisionKind::Absorb}}});
        break;
      }
      case CollisionKind::CancelSplit: {
        Entity& p = entity(*d.split_parent);
        p.dormant = false;
        set_region(p, merged_region);
        p.virtual_run = 0;
        for (EntityId id : d.merged) retire_into(entity(id), p.id);
        cancelled_parents.push_back(p.id);
        events.push_back({frame_index, "split_cancelled", {{"occlusion", p.object_id}, {"entity", p.id}}});
        break;
      }
      case CollisionKind::Occlusion: {
        const EntityId oid = new_entity(Label::Occluded, frame_index, merged_region);
        {
          Entity& occ = entity(oid);
          occ.is_occlusion = true;
          occ.object_id = next_object_++;
          occ.classified_frame = frame_index;
        }
        assigned.insert(oid);
        nlohmann::json captures = nlohmann::json::array();
        std::vector<EntityId> members;
        for (EntityId rid : d.real_members) {
          Entity& r = entity(rid);
          if (r.is_occlusion) {
            members.insert(members.end(), r.occlusion_members.begin(), r.occlusion_members.end());
            retire_into(r, oid);
            continue;
          }
          r.label = Label::Occluded;
          r.prior_hue = r.latest_hue;
          captures.push_back({{"object", r.object_id}, {"prior_captured", r.prior_hue.has_value()}});
          members.push_back(rid);
        }
        for (EntityId id : d.merged) retire_into(entity(id), oid);
        entity(oid).occlusion_members = members;
        std::vector<ObjectId> member_objects;
        for (EntityId m : members) member_objects.push_back(entity(m).object_id);
        events.push_back({frame_index, "occlusion_begin",
                          {{"occlusion", entity(oid).object_id}, {"entity", oid},
                           {"members", member_objects}, {"captures", captures},
                           {"merged_candidates", ids_json(d.merged)}}});
        break;
      }
    }
  }

  // Fragments of a cancelled split that were matched elsewhere this frame fold back too.
  for (EntityId pid : cancelled_parents)
    for (auto& e : entities_)
      if (!e.retired && e.split_parent == pid) retire_into(e, pid);

  // Entities without a succeeding region keep a frozen virtual copy of their hat.
  for (std::size_t i = 0; i < existing; ++i) {
    Entity& e = entities_[i];
    if (e.retired || e.label == Label::Background) continue;
    if (e.label == Label::Occluded && !e.is_occlusion) continue;  // frozen member
    if (assigned.count(e.id)) {
      e.virtual_run = 0;
    } else {
      e.current = {frame_index, {}, e.current.hat};
      if (!e.dormant) ++e.virtual_run;
    }
  }

  for (std::size_t i = 0; i < existing; ++i) {
    Entity& e = entities_[i];
    if (!e.retired && e.label == Label::Candidate) accumulate(e, events);
  }
  for (EntityId id : fresh) {
    Entity& e = entity(id);
    e.train.push_back(e.current);
    e.detections = 1;
    if (static_cast<int>(e.train.size()) >= config_.psi) accumulate(e, events);
  }

  resolve_splits(frame_index, events);

  if (config_.stale_limit > 0) {
    for (auto& e : entities_) {
      if (e.trackable() && e.reported() && e.virtual_run > config_.stale_limit) {
        e.retired = true;
        events.push_back({frame_index, "stale_retired", {{"object", e.object_id}, {"entity", e.id}}});
      }
    }
  }
  return events;
}

void EntityTracker::accumulate(Entity& e, std::vector<TrackEvent>& events) {
  const int psi = config_.psi;
  if (static_cast<int>(e.train.size()) < psi) {
    const Region previous_hat = e.train.back().hat;
    e.train.push_back(e.current);
    if (!e.current.succeeding.empty()) ++e.detections;
    e.neglog_sum += occurrence_term(e.current.succeeding, previous_hat, e.detections, e.train.size());
  }
  if (static_cast<int>(e.train.size()) < psi) return;

  e.label = classify_entity(e, config_);
  const std::uint32_t frame = e.current.frame_index;
  if (e.label == Label::Real) {
    e.object_id = next_object_++;
    e.classified_frame = frame;
  } else {
    e.retired = true;
  }
  events.push_back({frame, "classified",
                    {{"entity", e.id}, {"label", std::string(to_string(e.label))}, {"object", e.object_id},
                     {"neglog_sum", e.neglog_sum}, {"detections", e.detections},
                     {"fragment_of", e.split_parent ? nlohmann::json(*e.split_parent) : nlohmann::json()}}});
}

void EntityTracker::resolve_splits(std::uint32_t frame, std::vector<TrackEvent>& events) {
  for (auto& p : entities_) {
    if (p.retired || !p.dormant) continue;
    std::vector<SplitFragment> frags;
    for (const auto& e : entities_)
      if (e.split_parent == p.id) frags.push_back({e.id, e.label, e.retired});
    const SplitResolution r = resolve_split(frags);
    switch (r.state) {
      case SplitState::Pending: break;
      case SplitState::Confirmed: {
        PendingIdentity pending{frame, p.id, p.object_id, p.occlusion_members, r.real_fragments};
        for (EntityId f : r.real_fragments) entity(f).split_parent.reset();
        p.retired = true;
        p.dormant = false;
        std::vector<ObjectId> fragment_objects;
        for (EntityId f : r.real_fragments) fragment_objects.push_back(entity(f).object_id);
        events.push_back({frame, "disocclusion", {{"occlusion", p.object_id}, {"entity", p.id},
                                                  {"fragment_objects", fragment_objects}}});
        pending_.push_back(std::move(pending));
        break;
      }
      case SplitState::Inherited: {
        Entity& f = entity(r.real_fragments.front());
        p.dormant = false;
        p.current = {frame, f.current.succeeding, f.current.hat};
        p.virtual_run = 0;
        retire_into(f, p.id);
        events.push_back({frame, "split_inherited",
                          {{"occlusion", p.object_id}, {"entity", p.id}, {"fragment", f.id}, {"extension", true}}});
        break;
      }
      case SplitState::Lost:
        p.dormant = false;
        events.push_back({frame, "split_lost", {{"occlusion", p.object_id}, {"entity", p.id}}});
        break;
    }
  }
}

std::vector<TrackEvent> EntityTracker::apply_identity_match(const PendingIdentity& pending, const IdentityMatch& match,
                                                            std::uint32_t frame_index) {
  std::vector<TrackEvent> events;
  std::map<ObjectId, EntityId> member_by_object;
  for (EntityId m : pending.members) member_by_object[entity(m).object_id] = m;

  nlohmann::json assignments = nlohmann::json::array();
  for (const auto& a : match.assignments) {
    Entity& fragment = entity(a.fragment_id);
    Entity& member = entity(member_by_object.at(a.prior_id));
    assignments.push_back({{"object", member.object_id}, {"fragment_entity", fragment.id},
                           {"fragment_object", fragment.object_id}, {"distance", a.distance},
                           {"by_exclusion", a.by_exclusion}});
    fragment.object_id = member.object_id;
    fragment.prior_hue = member.prior_hue;
    member.retired = true;
    member.merged_into = fragment.id;
  }
  nlohmann::json new_objects = nlohmann::json::array();
  for (EntityId f : match.unmatched_fragments) new_objects.push_back(entity(f).object_id);
  events.push_back({frame_index, "identity_assignment",
                    {{"occlusion", pending.occlusion_object}, {"assignments", assignments},
                     {"new_objects", new_objects}, {"missing_objects", match.unmatched_priors},
                     {"extension", !match.unmatched_fragments.empty() || !match.unmatched_priors.empty()}}});
  return events;
}

}  // namespace mbtrack
