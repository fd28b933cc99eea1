#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mbtrack/synth.hpp"
#include "mbtrack/tracker.hpp"

namespace {

int run_synth(const std::string& script_path, const std::string& out, const std::string& gt,
              std::optional<std::uint64_t> seed) {
  mbtrack::SceneScript script = mbtrack::load_scene_script(script_path);
  if (seed) script.noise.rng_seed = *seed;
  const mbtrack::SynthResult res = mbtrack::synthesize(script);

  std::ofstream s(out, std::ios::binary);
  if (!s) throw std::runtime_error("cannot write " + out);
  s.write(reinterpret_cast<const char*>(res.stream.data()), static_cast<std::streamsize>(res.stream.size()));
  if (!s) throw std::runtime_error("failed writing " + out);

  if (!gt.empty()) {
    std::vector<nlohmann::json> rows;
    for (const auto& r : res.ground_truth) rows.push_back(mbtrack::to_json(r));
    mbtrack::write_jsonl(gt, rows);
  }
  std::cerr << "wrote " << res.stream.size() << " bytes, " << script.frame_count << " frames; noise: "
            << res.noise.isolated_injected << " isolated, " << res.noise.clusters_spawned << " clusters\n";
  return 0;
}

struct TrackArgs {
  std::string input, out, events, gt, metrics, overlay;
  std::optional<double> omega;
  int psi = 8;
  int epsilon = 25;
  int min_area = 16;
  int morph_radius = 1;
  int stale_limit = 0;
  bool full_decode = false;
  bool live = false;
  bool no_spatial_filter = false;
};

int run_track(const TrackArgs& a) {
  mbtrack::TrackerConfig cfg;
  cfg.psmf = mbtrack::PsmfConfig::with_psi(a.psi);
  if (a.omega) cfg.psmf.omega = *a.omega;
  cfg.psmf.enable_spatial_filter = !a.no_spatial_filter;
  cfg.psmf.stale_limit = a.stale_limit;
  cfg.refine.epsilon = a.epsilon;
  cfg.refine.min_component_area = a.min_area;
  cfg.refine.morph_radius = a.morph_radius;
  cfg.decode_mode = a.full_decode ? mbtrack::DecodeMode::Full : mbtrack::DecodeMode::Partial;
  cfg.live = a.live;

  const auto bytes = mbtrack::read_file_bytes(a.input);
  mbtrack::TrackResult res = mbtrack::run_tracker(bytes, cfg);

  if (!a.gt.empty()) {
    std::vector<mbtrack::GroundTruthRecord> truth;
    for (const auto& j : mbtrack::read_jsonl(a.gt)) truth.push_back(mbtrack::ground_truth_from_json(j));
    res.metrics.evaluation = mbtrack::evaluate(res.trajectories, truth, res.header.gop_len);
  }

  std::vector<nlohmann::json> rows;
  for (const auto& r : res.trajectories) rows.push_back(mbtrack::to_json(r));
  mbtrack::write_jsonl(a.out, rows);
  if (!a.events.empty()) {
    rows.clear();
    for (const auto& e : res.events) rows.push_back(mbtrack::to_json(e));
    mbtrack::write_jsonl(a.events, rows);
  }
  if (!a.metrics.empty()) {
    std::ofstream m(a.metrics);
    if (!m) throw std::runtime_error("cannot write " + a.metrics);
    m << mbtrack::to_json(res.metrics).dump(2) << '\n';
  }
  if (!a.overlay.empty()) mbtrack::render_overlays(bytes, res.trajectories, a.overlay);

  std::cerr << res.trajectories.size() << " records, " << res.metrics.real_classifications
            << " real classifications, " << res.metrics.frames_per_second << " fps, blocks decoded ratio "
            << res.metrics.blocks_decoded_ratio << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed-domain multi-object tracker over MBFS streams"};
  app.require_subcommand(1);

  std::string script, synth_out, synth_gt;
  std::optional<std::uint64_t> seed;
  auto* synth = app.add_subcommand("synth", "Render a scene script into an MBFS stream and ground truth");
  synth->add_option("--script", script, "Scene script (YAML)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output MBFS stream")->required();
  synth->add_option("--gt", synth_gt, "Output ground truth (JSON lines)");
  synth->add_option("--seed", seed, "Override the script's noise seed");

  TrackArgs t;
  auto* track = app.add_subcommand("track", "Track objects in an MBFS stream");
  track->add_option("--input", t.input, "Input MBFS stream")->required()->check(CLI::ExistingFile);
  track->add_option("--out", t.out, "Trajectory output (JSON lines)")->required();
  track->add_option("--events", t.events, "Event log output (JSON lines)");
  track->add_option("--omega", t.omega, "Occurrence threshold; defaults to psi*ln(2)")->check(CLI::PositiveNumber);
  track->add_option("--psi", t.psi, "Observation period in P-frames")->check(CLI::Range(1, 1000));
  track->add_option("--epsilon", t.epsilon, "Background subtraction threshold")->check(CLI::Range(1, 254));
  track->add_option("--min-area", t.min_area, "Minimum connected component area")->check(CLI::PositiveNumber);
  track->add_option("--morph-radius", t.morph_radius, "Morphology radius")->check(CLI::NonNegativeNumber);
  track->add_option("--stale-limit", t.stale_limit, "Retire objects after this many virtual-only P-frames (0 = never)")
      ->check(CLI::NonNegativeNumber);
  track->add_option("--gt", t.gt, "Ground truth (JSON lines) for evaluation")->check(CLI::ExistingFile);
  track->add_option("--metrics", t.metrics, "Metrics output (JSON)");
  track->add_option("--overlay", t.overlay, "Directory for PPM overlays");
  track->add_flag("--full-decode", t.full_decode, "Decode whole I-frames instead of predicted regions");
  track->add_flag("--live", t.live, "Emit provisional records without GOP-delayed refinement");
  track->add_flag("--no-spatial-filter", t.no_spatial_filter, "Disable the spatial filter");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(script, synth_out, synth_gt, seed);
    return run_track(t);
  } catch (const mbtrack::StreamError& e) {
    std::cerr << "stream error (" << mbtrack::to_string(e.kind()) << "): " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 1;
}
