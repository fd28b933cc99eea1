#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mbtrack/occlusion.hpp"

using namespace mbtrack;

namespace {

HueHistogram solid(int bin) {
  HueHistogram h;
  h.bins[static_cast<std::size_t>(bin)] = 1.0;
  h.valid_pixel_count = 1;
  return h;
}

HueHistogram mix(int a, int b, double wa) {
  HueHistogram h;
  h.bins[static_cast<std::size_t>(a)] += wa;
  h.bins[static_cast<std::size_t>(b)] += 1.0 - wa;
  h.valid_pixel_count = 10;
  return h;
}

}  // namespace

TEST_CASE("hue bins of primary colours") {
  CHECK(hue_bin({255, 0, 0}) == 0);
  CHECK(hue_bin({0, 255, 0}) == 21);
  CHECK(hue_bin({0, 0, 255}) == 42);
  CHECK(hue_bin({255, 0, 1}) == 63);
  CHECK_FALSE(hue_bin({128, 128, 128}));
  CHECK_FALSE(hue_bin({0, 0, 0}));
}

TEST_CASE("histograms normalise over chromatic masked pixels") {
  RgbImage tile(4, 2, Rgb{255, 0, 0});
  tile.set(1, 0, {0, 255, 0});
  tile.set(2, 0, {90, 90, 90});
  tile.set(3, 1, {0, 0, 255});
  BinaryGrid mask(4, 2);
  for (int x = 0; x < 4; ++x) mask.set(x, 0, true);
  const HueHistogram h = hue_histogram(tile, mask);
  CHECK(h.valid_pixel_count == 3);
  CHECK(h.bins[0] == doctest::Approx(2.0 / 3.0));
  CHECK(h.bins[21] == doctest::Approx(1.0 / 3.0));
  CHECK(h.bins[42] == 0.0);
  double sum = 0;
  for (double v : h.bins) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(hue_histogram(tile, BinaryGrid(4, 2)).empty());
  CHECK_THROWS(hue_histogram(tile, BinaryGrid(3, 2)));
}

TEST_CASE("distance is symmetric, zero on identity and scale-invariant through normalisation") {
  std::mt19937 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    RgbImage tile(6, 6);
    BinaryGrid mask(6, 6);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        tile.set(x, y, {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng())});
        mask.set(x, y, true);
      }
    RgbImage doubled(12, 6);
    BinaryGrid mask2(12, 6);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 12; ++x) {
        doubled.set(x, y, tile.at(x % 6, y));
        mask2.set(x, y, true);
      }
    const HueHistogram a = hue_histogram(tile, mask);
    const HueHistogram b = hue_histogram(doubled, mask2);
    CHECK(histogram_distance(a, b) == doctest::Approx(0.0));
    CHECK(histogram_distance(a, a) == 0.0);
    const HueHistogram c = solid(static_cast<int>(rng() % 64));
    CHECK(histogram_distance(a, c) == histogram_distance(c, a));
  }
  CHECK(histogram_distance(solid(0), solid(21)) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("crossed colours recover their identities") {
  const std::vector<PriorHue> priors{{1, solid(0)}, {2, solid(21)}};
  const std::vector<PosteriorHue> posts{{10, mix(21, 22, 0.9)}, {11, mix(0, 1, 0.8)}};
  const IdentityMatch m = match_identities(priors, posts);
  REQUIRE(m.assignments.size() == 2);
  for (const auto& a : m.assignments) {
    CHECK_FALSE(a.by_exclusion);
    if (a.fragment_id == 10) CHECK(a.prior_id == 2);
    if (a.fragment_id == 11) CHECK(a.prior_id == 1);
  }
  CHECK(m.unmatched_fragments.empty());
  CHECK(m.unmatched_priors.empty());
}

TEST_CASE("equal distances break towards the lower fragment then lower prior") {
  const std::vector<PriorHue> priors{{5, solid(3)}, {4, solid(3)}};
  const std::vector<PosteriorHue> posts{{21, solid(3)}, {20, solid(3)}};
  const IdentityMatch m = match_identities(priors, posts);
  REQUIRE(m.assignments.size() == 2);
  CHECK(m.assignments[0].fragment_id == 20);
  CHECK(m.assignments[0].prior_id == 4);
  CHECK(m.assignments[1].fragment_id == 21);
  CHECK(m.assignments[1].prior_id == 5);
}

TEST_CASE("a prior without a histogram takes the left-over fragment") {
  const std::vector<PriorHue> priors{{1, solid(0)}, {2, std::nullopt}};
  const std::vector<PosteriorHue> posts{{7, solid(40)}, {8, mix(0, 1, 0.8)}};
  const IdentityMatch m = match_identities(priors, posts);
  REQUIRE(m.assignments.size() == 2);
  bool saw_exclusion = false;
  for (const auto& a : m.assignments) {
    if (a.prior_id == 1) CHECK(a.fragment_id == 8);
    if (a.prior_id == 2) {
      CHECK(a.fragment_id == 7);
      CHECK(a.by_exclusion);
      saw_exclusion = true;
    }
  }
  CHECK(saw_exclusion);
}

TEST_CASE("surplus fragments and priors are reported unmatched") {
  const std::vector<PriorHue> priors{{1, solid(0)}};
  const std::vector<PosteriorHue> posts{{7, solid(40)}, {8, mix(0, 1, 0.8)}};
  const IdentityMatch m = match_identities(priors, posts);
  REQUIRE(m.assignments.size() == 1);
  CHECK(m.assignments[0].fragment_id == 8);
  CHECK(m.unmatched_fragments == std::vector<EntityId>{7});
  const IdentityMatch n = match_identities(std::vector<PriorHue>{{1, solid(0)}, {2, solid(5)}},
                                           std::vector<PosteriorHue>{{9, solid(5)}});
  CHECK(n.unmatched_priors == std::vector<ObjectId>{1});
}

TEST_CASE("greedy matching equals brute force on two-by-two problems with distinct distances") {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PriorHue> priors{{1, mix(static_cast<int>(rng() % 64), static_cast<int>(rng() % 64), (rng() % 100) / 100.0)},
                                 {2, mix(static_cast<int>(rng() % 64), static_cast<int>(rng() % 64), (rng() % 100) / 100.0)}};
    std::vector<PosteriorHue> posts{{10, mix(static_cast<int>(rng() % 64), static_cast<int>(rng() % 64), (rng() % 100) / 100.0)},
                                    {11, mix(static_cast<int>(rng() % 64), static_cast<int>(rng() % 64), (rng() % 100) / 100.0)}};
    double d[2][2];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) d[i][j] = histogram_distance(*priors[i].hue, posts[j].hue);
    // Greedy picks the global minimum pair first; the rest is forced.
    int bi = 0, bj = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        if (d[i][j] < d[bi][bj]) {
          bi = i;
          bj = j;
        }
    bool unique = true;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        if ((i != bi || j != bj) && d[i][j] == d[bi][bj]) unique = false;
    if (!unique) continue;
    const IdentityMatch m = match_identities(priors, posts);
    REQUIRE(m.assignments.size() == 2);
    for (const auto& a : m.assignments) {
      const int j = a.fragment_id == 10 ? 0 : 1;
      const int want_prior = (j == bj) ? bi : 1 - bi;
      CHECK(a.prior_id == static_cast<ObjectId>(want_prior + 1));
    }
  }
}

TEST_CASE("collision decisions") {
  CHECK(detect_collision(std::vector<CollisionParty>{{3, Label::Candidate}}).kind == CollisionKind::Track);

  const auto occ = detect_collision(std::vector<CollisionParty>{{1, Label::Real}, {2, Label::Real}, {5, Label::Candidate}});
  CHECK(occ.kind == CollisionKind::Occlusion);
  CHECK(occ.real_members == std::vector<EntityId>{1, 2});
  CHECK(occ.merged == std::vector<EntityId>{5});
  CHECK_FALSE(occ.survivor);

  const auto absorb = detect_collision(std::vector<CollisionParty>{{4, Label::Candidate}, {2, Label::Real}});
  CHECK(absorb.kind == CollisionKind::Absorb);
  CHECK(absorb.survivor == EntityId{2});
  CHECK(absorb.merged == std::vector<EntityId>{4});

  const auto cands = detect_collision(
      std::vector<CollisionParty>{{7, Label::Candidate, false, 12}, {6, Label::Candidate, false, 9}});
  CHECK(cands.kind == CollisionKind::MergeCandidates);
  CHECK(cands.survivor == EntityId{6});

  const auto with_occ = detect_collision(std::vector<CollisionParty>{{8, Label::Occluded, true}, {9, Label::Real}});
  CHECK(with_occ.kind == CollisionKind::Occlusion);

  const auto cancel = detect_collision(std::vector<CollisionParty>{
      {10, Label::Candidate, false, 20, EntityId{8}}, {11, Label::Real, false, 20, EntityId{8}}});
  CHECK(cancel.kind == CollisionKind::CancelSplit);
  CHECK(cancel.split_parent == EntityId{8});

  CHECK_THROWS(detect_collision(std::vector<CollisionParty>{}));
}

TEST_CASE("split detection and resolution") {
  CHECK_FALSE(detect_split(0));
  CHECK_FALSE(detect_split(1));
  CHECK(detect_split(2));

  using F = SplitFragment;
  CHECK(resolve_split(std::vector<F>{{1, Label::Candidate}, {2, Label::Real}}).state == SplitState::Pending);
  const auto confirmed = resolve_split(std::vector<F>{{1, Label::Real}, {2, Label::Real}, {3, Label::Background}});
  CHECK(confirmed.state == SplitState::Confirmed);
  CHECK(confirmed.real_fragments == std::vector<EntityId>{1, 2});
  const auto inherited = resolve_split(std::vector<F>{{1, Label::Background}, {2, Label::Real}});
  CHECK(inherited.state == SplitState::Inherited);
  CHECK(inherited.real_fragments == std::vector<EntityId>{2});
  CHECK(resolve_split(std::vector<F>{{1, Label::Background}, {2, Label::Candidate, true}}).state == SplitState::Lost);
}
