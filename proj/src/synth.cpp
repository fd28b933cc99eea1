#include "mbtrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <yaml-cpp/yaml.h>

#include "mbtrack/intra_codec.hpp"

namespace mbtrack {

namespace {

struct Geometry {
  double cx, cy, h, w;
};

std::optional<Geometry> object_geometry(const SceneObject& o, std::uint32_t frame) {
  if (o.path.empty() || frame < o.path.front().frame || frame > o.path.back().frame) return std::nullopt;
  auto size_at = [&](std::size_t k) {
    return std::pair{o.path[k].h.value_or(o.h), o.path[k].w.value_or(o.w)};
  };
  std::size_t k = 0;
  while (k + 1 < o.path.size() && o.path[k + 1].frame <= frame) ++k;
  const auto& a = o.path[k];
  const auto [ha, wa] = size_at(k);
  if (k + 1 == o.path.size() || a.frame == frame) return Geometry{a.cx, a.cy, ha, wa};
  const auto& b = o.path[k + 1];
  const auto [hb, wb] = size_at(k + 1);
  const double t = static_cast<double>(frame - a.frame) / static_cast<double>(b.frame - a.frame);
  return Geometry{a.cx + t * (b.cx - a.cx), a.cy + t * (b.cy - a.cy), ha + t * (hb - ha), wa + t * (wb - wa)};
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

}  // namespace

std::optional<PixelRect> object_rect(const SceneObject& object, std::uint32_t frame) {
  const auto g = object_geometry(object, frame);
  if (!g) return std::nullopt;
  const int w = round_half_up(g->w);
  const int h = round_half_up(g->h);
  return PixelRect{round_half_up(g->cx - w / 2.0), round_half_up(g->cy - h / 2.0), w, h};
}

void SceneScript::validate() const {
  if (width <= 0 || height <= 0 || width % kMacroblock != 0 || height % kMacroblock != 0)
    throw std::invalid_argument("canvas must be a positive multiple of 16 in both dimensions");
  if (width > 65535 || height > 65535) throw std::invalid_argument("canvas too large");
  if (gop_len < 2 || gop_len > 10) throw std::invalid_argument("gop_len must lie in [2, 10]");
  if (fps < 1 || fps > 255) throw std::invalid_argument("fps must lie in [1, 255]");
  if (frame_count < 1) throw std::invalid_argument("frame_count must be at least 1");
  if (background.tile < 1) throw std::invalid_argument("background tile must be positive");
  if (noise.p_isolated < 0 || noise.p_isolated > 1 || noise.p_cluster < 0 || noise.p_cluster > 1)
    throw std::invalid_argument("noise probabilities must lie in [0, 1]");
  const PixelRect canvas{0, 0, width, height};
  for (const auto& o : objects) {
    const std::string who = "object " + std::to_string(o.id);
    if (o.path.empty()) throw std::invalid_argument(who + ": empty path");
    for (std::size_t k = 1; k < o.path.size(); ++k)
      if (o.path[k].frame <= o.path[k - 1].frame)
        throw std::invalid_argument(who + ": waypoint frames must be strictly increasing");
    if (o.fill.kind == FillKind::Checker && o.fill.cell < 1) throw std::invalid_argument(who + ": checker cell < 1");
    const std::uint32_t last = std::min(o.path.back().frame, frame_count - 1);
    for (std::uint32_t f = o.path.front().frame; f <= last; ++f) {
      const PixelRect r = *object_rect(o, f);
      if (intersect(r, canvas) != r) throw std::invalid_argument(who + ": leaves the canvas at frame " + std::to_string(f));
      if (r.area() < 3LL * kMacroblock * kMacroblock)
        throw std::invalid_argument(who + ": smaller than three macroblocks at frame " + std::to_string(f));
    }
  }
}

RgbImage render_background(const SceneScript& script) {
  RgbImage img(script.width, script.height, script.background.color);
  if (script.background.texture_color) {
    const int t = script.background.tile;
    for (int y = 0; y < script.height; ++y)
      for (int x = 0; x < script.width; ++x)
        if (((x / t) + (y / t)) % 2 == 1) img.set(x, y, *script.background.texture_color);
  }
  return img;
}

RgbImage render_frame(const SceneScript& script, std::uint32_t frame_index) {
  if (frame_index >= script.frame_count) throw std::out_of_range("render_frame: frame index beyond frame_count");
  RgbImage img = render_background(script);
  const PixelRect canvas{0, 0, script.width, script.height};
  for (const auto& o : script.objects) {
    const auto r = object_rect(o, frame_index);
    if (!r) continue;
    const PixelRect c = intersect(*r, canvas);
    for (int y = c.y; y < c.bottom(); ++y) {
      for (int x = c.x; x < c.right(); ++x) {
        Rgb px = o.fill.primary;
        if (o.fill.kind == FillKind::Checker) {
          const int cx = (x - r->x) / o.fill.cell;
          const int cy = (y - r->y) / o.fill.cell;
          if ((cx + cy) % 2 == 1) px = o.fill.secondary;
        }
        img.set(x, y, px);
      }
    }
  }
  return img;
}

std::vector<MacroblockRecord> encode_p_frame(const RgbImage& current, const RgbImage& previous, int deadzone) {
  if (current.width() != previous.width() || current.height() != previous.height())
    throw std::invalid_argument("encode_p_frame: frame dimensions differ");
  const int cols = current.width() / kMacroblock;
  const int rows = current.height() / kMacroblock;
  std::vector<MacroblockRecord> grid(static_cast<std::size_t>(cols) * rows);
  for (int my = 0; my < rows; ++my) {
    for (int mx = 0; mx < cols; ++mx) {
      MacroblockRecord& mb = grid[static_cast<std::size_t>(my) * cols + mx];
      bool changed = false;
      std::uint16_t mask = 0;
      for (int sub = 0; sub < 16; ++sub) {
        const int x0 = mx * kMacroblock + (sub % 4) * 4;
        const int y0 = my * kMacroblock + (sub / 4) * 4;
        for (int y = y0; y < y0 + 4; ++y) {
          for (int x = x0; x < x0 + 4; ++x) {
            for (int c = 0; c < 3; ++c) {
              const int d = std::abs(static_cast<int>(current.channel(x, y, c)) - previous.channel(x, y, c));
              if (d != 0) changed = true;
              if (d > deadzone) mask = static_cast<std::uint16_t>(mask | (1u << sub));
            }
          }
        }
      }
      mb.skip = !changed;
      mb.coeff_mask = mask;
    }
  }
  return grid;
}

std::vector<GroundTruthRecord> ground_truth_for_frame(const SceneScript& script, std::uint32_t frame_index) {
  std::vector<std::pair<std::uint32_t, PixelRect>> visible;
  for (const auto& o : script.objects)
    if (auto r = object_rect(o, frame_index)) visible.emplace_back(o.id, *r);
  std::vector<GroundTruthRecord> out;
  for (std::size_t i = 0; i < visible.size(); ++i) {
    const auto& [id, r] = visible[i];
    bool occluded = false;
    for (std::size_t j = 0; j < visible.size(); ++j)
      if (j != i && !intersect(r, visible[j].second).empty()) occluded = true;
    out.push_back({frame_index, id, r.x + r.w / 2.0, r.y + r.h / 2.0, static_cast<double>(r.h),
                   static_cast<double>(r.w), occluded});
  }
  return out;
}

NoiseInjector::NoiseInjector(const NoiseSpec& spec, int mb_cols, int mb_rows)
    : spec_(spec), cols_(mb_cols), rows_(mb_rows), rng_(spec.rng_seed) {}

double NoiseInjector::uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

std::uint64_t NoiseInjector::below(std::uint64_t n) { return rng_() % n; }

void NoiseInjector::apply(std::vector<MacroblockRecord>& grid) {
  // Background macroblocks are the ones the clean encoder skipped.
  std::vector<bool> background(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) background[i] = grid[i].skip;

  if (spec_.p_cluster > 0 && uniform() < spec_.p_cluster) {
    Cluster c;
    const int size = 2 + static_cast<int>(below(2));
    const bool horizontal = below(2) == 0;
    int mx = static_cast<int>(below(static_cast<std::uint64_t>(cols_)));
    int my = static_cast<int>(below(static_cast<std::uint64_t>(rows_)));
    if (horizontal) mx = std::min(mx, cols_ - size);
    else my = std::min(my, rows_ - size);
    for (int k = 0; k < size; ++k)
      c.cells.push_back(static_cast<std::size_t>(horizontal ? my : my + k) * cols_ + (horizontal ? mx + k : mx));
    c.coeff_mask = static_cast<std::uint16_t>(below(0xffff) + 1);
    c.frames_left = 1 + static_cast<int>(below(2));
    clusters_.push_back(std::move(c));
    ++stats_.clusters_spawned;
  }
  for (auto& c : clusters_) {
    for (std::size_t cell : c.cells) {
      grid[cell].skip = false;
      grid[cell].coeff_mask = static_cast<std::uint16_t>(grid[cell].coeff_mask | c.coeff_mask);
    }
    --c.frames_left;
  }
  std::erase_if(clusters_, [](const Cluster& c) { return c.frames_left <= 0; });

  if (spec_.p_isolated > 0) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!background[i]) continue;
      if (uniform() < spec_.p_isolated && grid[i].skip) {
        grid[i].skip = false;
        grid[i].coeff_mask = 0;
        ++stats_.isolated_injected;
      }
    }
  }
}

SynthResult synthesize(const SceneScript& script) {
  script.validate();
  SynthResult out;
  out.header.width_px = static_cast<std::uint16_t>(script.width);
  out.header.height_px = static_cast<std::uint16_t>(script.height);
  out.header.fps = static_cast<std::uint8_t>(script.fps);
  out.header.gop_len = static_cast<std::uint8_t>(script.gop_len);
  out.header.frame_count = script.frame_count;

  const RgbImage background = render_background(script);
  NoiseInjector noise(script.noise, script.width / kMacroblock, script.height / kMacroblock);

  std::vector<FrameFeatures> frames;
  frames.reserve(script.frame_count);
  RgbImage previous;
  for (std::uint32_t f = 0; f < script.frame_count; ++f) {
    RgbImage current = render_frame(script, f);
    FrameFeatures ff;
    ff.frame_index = f;
    if (out.header.is_iframe(f)) {
      ff.kind = FrameKind::I;
      ff.intra_payload = encode_iframe(current);
    } else {
      ff.kind = FrameKind::P;
      ff.mb_grid = encode_p_frame(current, previous);
      noise.apply(ff.mb_grid);
    }
    frames.push_back(std::move(ff));
    auto gt = ground_truth_for_frame(script, f);
    out.ground_truth.insert(out.ground_truth.end(), gt.begin(), gt.end());
    previous = std::move(current);
  }
  out.stream = encode_stream(out.header, &background, frames);
  out.header.flags = kFlagBackground;
  out.noise = noise.stats();
  return out;
}

namespace {

Rgb parse_rgb(const YAML::Node& n) {
  if (!n.IsSequence() || n.size() != 3) throw std::invalid_argument("colour must be a list of three integers");
  auto ch = [&](std::size_t i) {
    const int v = n[i].as<int>();
    if (v < 0 || v > 255) throw std::invalid_argument("colour channel outside [0, 255]");
    return static_cast<std::uint8_t>(v);
  };
  return {ch(0), ch(1), ch(2)};
}

}  // namespace

SceneScript parse_scene_script(const std::string& text) {
  SceneScript s;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("scene script: ") + e.what());
  }
  try {
    if (const auto canvas = root["canvas"]) {
      s.width = canvas["width"].as<int>(s.width);
      s.height = canvas["height"].as<int>(s.height);
      s.fps = canvas["fps"].as<int>(s.fps);
      s.gop_len = canvas["gop_len"].as<int>(s.gop_len);
      s.frame_count = canvas["frame_count"].as<std::uint32_t>(s.frame_count);
    }
    if (const auto bg = root["background"]) {
      if (bg["color"]) s.background.color = parse_rgb(bg["color"]);
      if (const auto tex = bg["texture"]) {
        s.background.texture_color = parse_rgb(tex["color"]);
        s.background.tile = tex["tile"].as<int>(s.background.tile);
      }
    }
    if (const auto objs = root["objects"]) {
      for (const auto& on : objs) {
        SceneObject o;
        o.id = on["id"].as<std::uint32_t>();
        if (const auto size = on["size"]) {
          o.h = size["h"].as<double>();
          o.w = size["w"].as<double>();
        }
        const auto fill = on["fill"];
        if (!fill) throw std::invalid_argument("object " + std::to_string(o.id) + ": missing fill");
        if (fill["solid"]) {
          o.fill.kind = FillKind::Solid;
          o.fill.primary = parse_rgb(fill["solid"]);
        } else if (const auto chk = fill["checker"]) {
          o.fill.kind = FillKind::Checker;
          o.fill.primary = parse_rgb(chk["colors"][0]);
          o.fill.secondary = parse_rgb(chk["colors"][1]);
          o.fill.cell = chk["cell"].as<int>(o.fill.cell);
        } else {
          throw std::invalid_argument("object " + std::to_string(o.id) + ": fill must be solid or checker");
        }
        for (const auto& wp : on["path"]) {
          Waypoint w;
          w.frame = wp["frame"].as<std::uint32_t>();
          w.cx = wp["cx"].as<double>();
          w.cy = wp["cy"].as<double>();
          if (wp["h"]) w.h = wp["h"].as<double>();
          if (wp["w"]) w.w = wp["w"].as<double>();
          o.path.push_back(w);
        }
        s.objects.push_back(std::move(o));
      }
    }
    if (const auto nz = root["noise"]) {
      s.noise.p_isolated = nz["p_isolated"].as<double>(0.0);
      s.noise.p_cluster = nz["p_cluster"].as<double>(0.0);
      s.noise.rng_seed = nz["seed"].as<std::uint64_t>(0);
    }
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("scene script: ") + e.what());
  }
  s.validate();
  return s;
}

SceneScript load_scene_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene script " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene_script(ss.str());
}

}  // namespace mbtrack
