#include "mbtrack/tracker.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mbtrack/occlusion.hpp"

namespace mbtrack {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double ms(std::chrono::nanoseconds d) { return std::chrono::duration<double, std::milli>(d).count(); }

BlobFeature region_blob(const Region& region) { return BlobFeature::from_rect(region_bounds_px(region)); }

struct BufferedRecord {
  std::uint32_t frame = 0;
  EntityId entity = 0;
  BlobFeature blob;
  Label state = Label::Real;
  bool refined = false;
};

class Pipeline {
 public:
  Pipeline(std::span<const std::uint8_t> stream, const TrackerConfig& config)
      : reader_(stream), config_(config), psmf_(config.psmf) {
    result_.header = reader_.header();
  }

  TrackResult run() {
    const auto start = Clock::now();
    const StreamHeader& h = reader_.header();
    while (true) {
      auto t0 = Clock::now();
      std::optional<FrameFeatures> frame = reader_.next();
      timings_.parse_ms += ms_since(t0);
      if (!frame) break;
      if (frame->kind == FrameKind::P)
        on_pframe(*frame, h);
      else
        on_iframe(*frame, h);
    }
    flush_all();
    for (const auto& p : psmf_.pending_identities())
      emit({h.frame_count ? h.frame_count - 1 : 0, "identity_unresolved",
            {{"occlusion", p.occlusion_object}, {"reason", "end of stream before refinement"}}});

    RunMetrics& m = result_.metrics;
    m.frame_count = h.frame_count;
    m.timings = timings_;
    m.timings.decode_ms += ms(stage_.decode);
    m.timings.subtract_ms = ms(stage_.subtract);
    m.timings.interpolate_ms = ms(stage_.interpolate);
    m.total_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    m.frames_per_second = m.total_seconds > 0 ? h.frame_count / m.total_seconds : 0.0;
    m.blocks_decoded = decode_.blocks_decoded;
    m.blocks_total = decode_.blocks_total;
    m.blocks_decoded_ratio = decode_.ratio();
    for (const auto& e : result_.events)
      if (e.type == "classified" && e.data.value("label", "") == "Real") ++m.real_classifications;
    return std::move(result_);
  }

 private:
  void emit(TrackEvent e) { result_.events.push_back(std::move(e)); }

  void on_pframe(const FrameFeatures& frame, const StreamHeader& h) {
    auto t0 = Clock::now();
    auto groups = spatial_filter(cluster_blocks(frame, h.mb_cols(), h.mb_rows()), config_.psmf.enable_spatial_filter);
    for (auto& e : psmf_.step(groups, frame.frame_index)) emit(std::move(e));
    timings_.psmf_ms += ms_since(t0);

    for (const Entity& e : psmf_.entities()) {
      if (e.retired || !(e.trackable() || e.dormant)) continue;
      const BlobFeature blob = region_blob(e.current.hat);
      gop_blobs_[e.id].emplace_back(frame.frame_index, blob);
      if (e.reported()) push_record({frame.frame_index, e.id, blob, state_of(e), false});
    }
  }

  void on_iframe(const FrameFeatures& frame, const StreamHeader& h) {
    const IntraPayload& payload = *frame.intra_payload;
    if (!background_) {
      if (reader_.background()) {
        background_ = *reader_.background();
      } else {
        auto t0 = Clock::now();
        background_ = decode_full(payload);
        timings_.decode_ms += ms_since(t0);
      }
    }
    const std::uint32_t i = frame.frame_index;
    if (i == 0) return;

    std::vector<ObjectGop> objects;
    std::vector<BufferedRecord> iframe_records;
    for (auto& [id, blobs] : gop_blobs_) {
      const Entity& e = psmf_.entity(id);
      if (!e.reported() || blobs.empty()) continue;
      if (e.dormant) {
        // Frozen occlusion region awaiting a split decision: nothing to refine.
        anchors_.erase(id);
        iframe_records.push_back({i, id, region_blob(e.current.hat), state_of(e), false});
        continue;
      }
      ObjectGop g;
      g.key = id;
      g.pframe_blobs = blobs;
      if (auto it = anchors_.find(id); it != anchors_.end()) g.anchor = it->second;
      objects.push_back(std::move(g));
    }
    const IFrameContext ctx{i, h.gop_len, &payload, &*background_, config_.decode_mode};
    const auto refined = refine_gop(objects, ctx, config_.refine, &decode_, &stage_);

    for (const ObjectRefinement& r : refined) {
      Entity& e = psmf_.entity(r.key);
      nlohmann::json info = {{"entity", e.id}, {"object", e.object_id},
                             {"blocks_decoded", r.stats.blocks_decoded}};
      if (!r.iframe_blob) {
        anchors_.erase(e.id);
        emit({i, "refine_empty", info});
        if (r.predicted) iframe_records.push_back({i, e.id, *r.predicted, state_of(e), false});
        continue;
      }
      anchors_[e.id] = {i, *r.iframe_blob};
      if (r.hue && !e.is_occlusion) e.latest_hue = r.hue;
      if (r.hue) fragment_hues_[e.id] = *r.hue;
      iframe_records.push_back({i, e.id, *r.iframe_blob, state_of(e), true});
      if (r.anchored) {
        rewrite(e.id, r.rewritten);
      } else {
        emit({i, "refine_unanchored", info});
      }
    }

    auto t0 = Clock::now();
    resolve_identities(i);
    timings_.occlusion_ms += ms_since(t0);

    gop_blobs_.clear();
    fragment_hues_.clear();
    flush_before(i);
    for (auto& r : iframe_records) push_record(r);
  }

  void resolve_identities(std::uint32_t frame) {
    auto& pending = psmf_.pending_identities();
    for (const PendingIdentity& p : pending) {
      std::vector<PriorHue> priors;
      for (EntityId m : p.members) priors.push_back({psmf_.entity(m).object_id, psmf_.entity(m).prior_hue});
      std::vector<PosteriorHue> posteriors;
      std::vector<EntityId> missing;
      for (EntityId f : p.fragments) {
        if (auto it = fragment_hues_.find(f); it != fragment_hues_.end() && !it->second.empty())
          posteriors.push_back({f, it->second});
        else
          missing.push_back(f);
      }
      IdentityMatch match;
      if (!priors.empty() && !posteriors.empty()) match = match_identities(priors, posteriors);
      else
        for (const auto& pr : priors) match.unmatched_priors.push_back(pr.object_id);
      for (EntityId f : missing) match.unmatched_fragments.push_back(f);
      for (auto& e : psmf_.apply_identity_match(p, match, frame)) emit(std::move(e));
    }
    pending.clear();
  }

  static Label state_of(const Entity& e) { return e.is_occlusion ? Label::Occluded : Label::Real; }

  void push_record(const BufferedRecord& r) {
    if (config_.live) {
      result_.trajectories.push_back(finalize(r));
      return;
    }
    buffer_.push_back(r);
  }

  void rewrite(EntityId id, const std::vector<std::pair<std::uint32_t, BlobFeature>>& blobs) {
    if (config_.live) return;
    for (const auto& [f, b] : blobs) {
      for (auto& r : buffer_) {
        if (r.entity == id && r.frame == f) {
          r.blob = b;
          r.refined = true;
        }
      }
    }
  }

  TrackOutputRecord finalize(const BufferedRecord& r) const {
    const Entity& e = psmf_.entity(r.entity);
    return {r.frame, e.object_id, r.blob.cx, r.blob.cy, r.blob.h, r.blob.w, r.state, r.refined};
  }

  void flush_before(std::uint32_t frame) {
    std::vector<TrackOutputRecord> out;
    std::vector<BufferedRecord> keep;
    for (const auto& r : buffer_) {
      if (r.frame < frame)
        out.push_back(finalize(r));
      else
        keep.push_back(r);
    }
    buffer_ = std::move(keep);
    std::stable_sort(out.begin(), out.end(), [](const TrackOutputRecord& a, const TrackOutputRecord& b) {
      return std::tie(a.frame_index, a.object_id) < std::tie(b.frame_index, b.object_id);
    });
    result_.trajectories.insert(result_.trajectories.end(), out.begin(), out.end());
  }

  void flush_all() { flush_before(UINT32_MAX); }

  StreamReader reader_;
  TrackerConfig config_;
  EntityTracker psmf_;
  std::optional<RgbImage> background_;
  std::map<EntityId, std::vector<std::pair<std::uint32_t, BlobFeature>>> gop_blobs_;
  std::map<EntityId, std::pair<std::uint32_t, BlobFeature>> anchors_;
  std::map<EntityId, HueHistogram> fragment_hues_;
  std::vector<BufferedRecord> buffer_;
  DecodeStats decode_;
  StageTimes stage_;
  StageTimings timings_;
  TrackResult result_;
};

}  // namespace

TrackResult run_tracker(std::span<const std::uint8_t> stream, const TrackerConfig& config) {
  config.validate();
  return Pipeline(stream, config).run();
}

double blob_iou(const BlobFeature& a, const BlobFeature& b) {
  const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

EvaluationMetrics evaluate(std::span<const TrackOutputRecord> trajectories, std::span<const GroundTruthRecord> truth,
                           int gop_len) {
  std::map<std::uint32_t, std::vector<const TrackOutputRecord*>> tracks_by_frame;
  for (const auto& r : trajectories)
    if (r.state == Label::Real) tracks_by_frame[r.frame_index].push_back(&r);
  std::map<std::uint32_t, std::vector<const GroundTruthRecord*>> truth_by_frame;
  for (const auto& g : truth) truth_by_frame[g.frame_index].push_back(&g);

  struct Accum {
    ObjectMetrics m;
    std::uint32_t first_visible = UINT32_MAX;
    std::optional<std::uint32_t> first_matched;
    std::optional<ObjectId> last_track;
    double err_sum = 0.0;
    double iou_sum = 0.0;
  };
  std::map<std::uint32_t, Accum> acc;
  std::set<ObjectId> tracked_ids, matched_ids;
  for (const auto& r : trajectories)
    if (r.state == Label::Real) tracked_ids.insert(r.object_id);
  for (const auto& g : truth) {
    Accum& a = acc[g.object_id];
    a.m.object_id = g.object_id;
    ++a.m.visible_frames;
    a.first_visible = std::min(a.first_visible, g.frame_index);
  }

  EvaluationMetrics out;
  double err_total = 0.0, iou_total = 0.0;
  for (const auto& [frame, gts] : truth_by_frame) {
    auto it = tracks_by_frame.find(frame);
    if (it == tracks_by_frame.end()) continue;
    const auto& trs = it->second;
    struct Pair {
      double dist;
      std::size_t g, t;
    };
    std::vector<Pair> pairs;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi]->occluded) continue;
      const double gate = std::max(gts[gi]->w, gts[gi]->h);
      for (std::size_t ti = 0; ti < trs.size(); ++ti) {
        const double d = std::hypot(trs[ti]->cx - gts[gi]->cx, trs[ti]->cy - gts[gi]->cy);
        if (d <= gate) pairs.push_back({d, gi, ti});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
      return std::tie(a.dist, gts[a.g]->object_id, trs[a.t]->object_id) <
             std::tie(b.dist, gts[b.g]->object_id, trs[b.t]->object_id);
    });
    std::vector<bool> g_used(gts.size()), t_used(trs.size());
    for (const Pair& p : pairs) {
      if (g_used[p.g] || t_used[p.t]) continue;
      g_used[p.g] = t_used[p.t] = true;
      const GroundTruthRecord& g = *gts[p.g];
      const TrackOutputRecord& t = *trs[p.t];
      Accum& a = acc[g.object_id];
      const double iou = blob_iou(t.blob(), {g.cx, g.cy, g.h, g.w});
      ++a.m.matched_frames;
      a.err_sum += p.dist;
      a.iou_sum += iou;
      a.m.max_center_error = std::max(a.m.max_center_error, p.dist);
      if (!a.first_matched) a.first_matched = frame;
      if (a.last_track && *a.last_track != t.object_id) ++a.m.id_switches;
      a.last_track = t.object_id;
      matched_ids.insert(t.object_id);
      err_total += p.dist;
      iou_total += iou;
      ++out.matched_pairs;
      out.max_center_error = std::max(out.max_center_error, p.dist);
    }
  }

  for (auto& [id, a] : acc) {
    if (a.m.matched_frames > 0) {
      a.m.mean_center_error = a.err_sum / static_cast<double>(a.m.matched_frames);
      a.m.mean_iou = a.iou_sum / static_cast<double>(a.m.matched_frames);
    }
    if (a.first_matched) {
      a.m.detection_latency_frames = *a.first_matched - a.first_visible;
      std::uint32_t pframes = 0;
      for (std::uint32_t f = a.first_visible + 1; f <= *a.first_matched; ++f)
        if (gop_len <= 0 || f % static_cast<std::uint32_t>(gop_len) != 0) ++pframes;
      a.m.detection_latency_pframes = pframes;
    }
    out.id_switch_count += a.m.id_switches;
    out.objects.push_back(a.m);
  }
  if (out.matched_pairs > 0) {
    out.mean_center_error = err_total / static_cast<double>(out.matched_pairs);
    out.mean_iou = iou_total / static_cast<double>(out.matched_pairs);
  }
  for (ObjectId id : tracked_ids)
    if (!matched_ids.count(id)) out.false_track_ids.push_back(id);
  return out;
}

namespace {

// 3x5 bitmap digits, one row per entry, bit 2 = leftmost column.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits = {{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

Rgb palette(ObjectId id) {
  static constexpr std::array<Rgb, 6> colours = {
      Rgb{255, 255, 0}, Rgb{0, 255, 255}, Rgb{255, 0, 255}, Rgb{255, 128, 0}, Rgb{255, 255, 255}, Rgb{0, 128, 255}};
  return colours[id % colours.size()];
}

void put(RgbImage& img, int x, int y, Rgb c) {
  if (x >= 0 && y >= 0 && x < img.width() && y < img.height()) img.set(x, y, c);
}

void draw_record(RgbImage& img, const TrackOutputRecord& r) {
  const PixelRect rect = clip_to_frame(r.blob().to_rect(), img.width(), img.height());
  if (rect.empty()) return;
  const Rgb c = palette(r.object_id);
  for (int x = rect.x; x < rect.right(); ++x) {
    put(img, x, rect.y, c);
    put(img, x, rect.bottom() - 1, c);
  }
  for (int y = rect.y; y < rect.bottom(); ++y) {
    put(img, rect.x, y, c);
    put(img, rect.right() - 1, y, c);
  }
  const std::string label = std::to_string(r.object_id);
  int pen = rect.x + 2;
  for (char ch : label) {
    const auto& glyph = kDigits[static_cast<std::size_t>(ch - '0')];
    for (int row = 0; row < 5; ++row)
      for (int col = 0; col < 3; ++col)
        if (glyph[static_cast<std::size_t>(row)] & (4 >> col)) put(img, pen + col, rect.y + 2 + row, c);
    pen += 4;
  }
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  const auto bytes = img.bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

std::size_t render_overlays(std::span<const std::uint8_t> stream, std::span<const TrackOutputRecord> trajectories,
                            const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::map<std::uint32_t, std::vector<const TrackOutputRecord*>> by_frame;
  for (const auto& r : trajectories) by_frame[r.frame_index].push_back(&r);

  StreamReader reader(stream);
  std::optional<RgbImage> background = reader.background();
  std::size_t written = 0;
  while (auto frame = reader.next()) {
    RgbImage img;
    if (frame->kind == FrameKind::I) {
      img = decode_full(*frame->intra_payload);
      if (!background) background = img;
    } else {
      img = *background;
    }
    if (auto it = by_frame.find(frame->frame_index); it != by_frame.end())
      for (const auto* r : it->second) draw_record(img, *r);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05u.ppm", frame->frame_index);
    write_ppm(out_dir / name, img);
    ++written;
  }
  return written;
}

nlohmann::json to_json(const TrackOutputRecord& r) {
  return {{"frame_index", r.frame_index}, {"object_id", r.object_id}, {"cx", r.cx}, {"cy", r.cy},
          {"h", r.h}, {"w", r.w}, {"state", std::string(to_string(r.state))}, {"refined", r.refined}};
}

TrackOutputRecord track_record_from_json(const nlohmann::json& j) {
  TrackOutputRecord r;
  r.frame_index = j.at("frame_index").get<std::uint32_t>();
  r.object_id = j.at("object_id").get<ObjectId>();
  r.cx = j.at("cx").get<double>();
  r.cy = j.at("cy").get<double>();
  r.h = j.at("h").get<double>();
  r.w = j.at("w").get<double>();
  r.state = label_from_string(j.at("state").get<std::string>());
  r.refined = j.at("refined").get<bool>();
  return r;
}

nlohmann::json to_json(const GroundTruthRecord& r) {
  return {{"frame_index", r.frame_index}, {"object_id", r.object_id}, {"cx", r.cx}, {"cy", r.cy},
          {"h", r.h}, {"w", r.w}, {"occluded", r.occluded}};
}

GroundTruthRecord ground_truth_from_json(const nlohmann::json& j) {
  GroundTruthRecord r;
  r.frame_index = j.at("frame_index").get<std::uint32_t>();
  r.object_id = j.at("object_id").get<std::uint32_t>();
  r.cx = j.at("cx").get<double>();
  r.cy = j.at("cy").get<double>();
  r.h = j.at("h").get<double>();
  r.w = j.at("w").get<double>();
  r.occluded = j.at("occluded").get<bool>();
  return r;
}

nlohmann::json to_json(const RunMetrics& m) {
  nlohmann::json j = {
      {"frame_count", m.frame_count},
      {"stage_ms",
       {{"parse", m.timings.parse_ms}, {"psmf", m.timings.psmf_ms}, {"partial_decode", m.timings.decode_ms},
        {"subtract", m.timings.subtract_ms}, {"interpolate", m.timings.interpolate_ms},
        {"occlusion", m.timings.occlusion_ms}}},
      {"total_seconds", m.total_seconds},
      {"frames_per_second", m.frames_per_second},
      {"blocks_decoded", m.blocks_decoded},
      {"blocks_total", m.blocks_total},
      {"blocks_decoded_ratio", m.blocks_decoded_ratio},
      {"real_classifications", m.real_classifications},
  };
  if (m.evaluation) {
    const EvaluationMetrics& e = *m.evaluation;
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& o : e.objects) {
      objects.push_back({{"object_id", o.object_id}, {"visible_frames", o.visible_frames},
                         {"matched_frames", o.matched_frames}, {"mean_center_error", o.mean_center_error},
                         {"max_center_error", o.max_center_error}, {"mean_iou", o.mean_iou},
                         {"id_switches", o.id_switches},
                         {"detection_latency_frames",
                          o.detection_latency_frames ? nlohmann::json(*o.detection_latency_frames) : nlohmann::json()},
                         {"detection_latency_pframes", o.detection_latency_pframes
                                                           ? nlohmann::json(*o.detection_latency_pframes)
                                                           : nlohmann::json()}});
    }
    j["evaluation"] = {{"objects", objects},           {"mean_center_error", e.mean_center_error},
                       {"max_center_error", e.max_center_error}, {"mean_iou", e.mean_iou},
                       {"matched_pairs", e.matched_pairs}, {"id_switch_count", e.id_switch_count},
                       {"false_track_ids", e.false_track_ids}};
  }
  return j;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace mbtrack
