#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "cp/error.hpp"
#include "brute_force.hpp"
#include "cp/seed_search.hpp"

using namespace cp;
using namespace cp::testing;

namespace {

GenerationConfig few_tracks(int lo, int hi) {
  GenerationConfig g;
  g.min_tracks = lo;
  g.max_tracks = hi;
  return g;
}

}  // namespace

TEST_CASE("station index sorts by y") {
  CHECK(StationIndex{}.query(-1, 1).empty());
  const std::vector<double> ys{3, 1, 2};
  const StationIndex idx(ys);
  CHECK(idx.order() == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("range queries equal a linear scan") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-50, 50);
  std::vector<double> ys(1000);
  for (auto& y : ys) y = std::round(u(rng) * 4) / 4;  // ties and exact boundaries
  const StationIndex idx(ys);
  for (int q = 0; q < 100; ++q) {
    double lo = std::round(u(rng) * 4) / 4, hi = std::round(u(rng) * 4) / 4;
    if (lo > hi) std::swap(lo, hi);
    auto got = idx.query(lo, hi);
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (ys[i] >= lo && ys[i] <= hi) want.push_back(i);
    }
    std::sort(got.begin(), got.end());
    CHECK(got == want);
  }
}

TEST_CASE("extending onto an empty station gives nothing") {
  const Event ev = generate_event(DetectorConfig{}, few_tracks(3, 3), 1);
  TrackCandidate c;
  c.points = {Point3{}, Point3{1, 1, 30}};
  c.hit_refs = {0};
  CHECK(extend_candidates({c}, ev, {}, StationIndex{}, SearchWindow{}).empty());
}

TEST_CASE("a noiseless single track extends only onto its own hits") {
  DetectorConfig det;
  det.smear_sigma = 0.0;
  det.fake_mode = FakeMode::None;
  SearchWindow w{1.0, 0.5, true};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Event ev = generate_event(det, few_tracks(1, 1), seed);
    if (ev.hits.size() != det.n_stations()) continue;
    const auto cands = run_seed_search(ev, det.n_stations(), w);
    REQUIRE(cands.size() == 1);
    CHECK(cands[0].label == Label::TrueTrack);
    CHECK(cands[0].hit_refs == std::vector<std::size_t>{0, 1, 2, 3, 4});
  }
}

TEST_CASE("seed search equals brute-force enumeration") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> dy(0.2, 1.5), dt(0.03, 0.3);
  for (std::uint64_t e = 0; e < 20; ++e) {
    const Event ev = generate_event(DetectorConfig{}, few_tracks(1, 10), 1000 + e);
    SearchWindow w{dy(rng), dt(rng), e % 2 == 0};
    CHECK(as_set(run_seed_search(ev, 5, w)) == brute_force(ev, 5, w));
  }
}

TEST_CASE("wider windows never remove candidates") {
  for (std::uint64_t e = 0; e < 10; ++e) {
    const Event ev = generate_event(DetectorConfig{}, few_tracks(5, 15), 50 + e);
    const SearchWindow narrow{0.3, 0.05, true};
    const auto base = as_set(run_seed_search(ev, 5, narrow));
    for (const SearchWindow& wide : {SearchWindow{0.6, 0.05, true}, SearchWindow{0.3, 0.1, true},
                                     SearchWindow{0.3, 0.05, false}}) {
      const auto more = as_set(run_seed_search(ev, 5, wide));
      CHECK(std::includes(more.begin(), more.end(), base.begin(), base.end()));
    }
  }
}

TEST_CASE("labels follow hit truth") {
  const auto ev = generate_event(DetectorConfig{}, GenerationConfig{}, 5);
  const auto cands = run_seed_search(ev, 5, SearchWindow{});
  std::size_t trues = 0;
  for (const auto& c : cands) {
    std::set<int> ids;
    bool fake = false;
    for (auto r : c.hit_refs) {
      fake = fake || ev.hits[r].is_fake();
      ids.insert(ev.hits[r].track_id);
    }
    const bool is_true = !fake && ids.size() == 1;
    CHECK((c.label == Label::TrueTrack) == is_true);
    CHECK(c.label != Label::Unlabelled);
    trues += is_true;
  }
  CHECK(trues > 0);
}

TEST_CASE("every track of a noiseless fake-free event is found") {
  DetectorConfig det;
  det.smear_sigma = 0.0;
  det.fake_mode = FakeMode::None;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Event ev = generate_event(det, GenerationConfig{}, seed);
    std::map<int, int> per_track;
    for (const auto& h : ev.hits) per_track[h.track_id]++;
    std::size_t complete = 0;
    for (const auto& [id, n] : per_track) complete += n == 5;
    std::size_t found = 0;
    for (const auto& c : run_seed_search(ev, 5, SearchWindow{})) found += c.label == Label::TrueTrack;
    CHECK(found == complete);
  }
}

TEST_CASE("default windows keep true tracks and give a ghost excess near 8:1") {
  const auto events = simulate_events(DetectorConfig{}, GenerationConfig{}, 21, 100);
  std::size_t complete = 0, found = 0, ghosts = 0;
  for (const auto& ev : events) {
    std::map<int, int> per_track;
    for (const auto& h : ev.hits) {
      if (!h.is_fake()) per_track[h.track_id]++;
    }
    for (const auto& [id, n] : per_track) complete += n == 5;
    for (const auto& c : run_seed_search(ev, 5, SearchWindow{})) (c.label == Label::TrueTrack ? found : ghosts)++;
  }
  CHECK(double(found) / double(complete) >= 0.995);
  const double ratio = double(ghosts) / double(found);
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 30.0);
}

TEST_CASE("empty station 0 and station mismatches") {
  Event ev;
  ev.hits.push_back(Hit{1, 0, 0, 50, 0});
  CHECK(run_seed_search(ev, 5, SearchWindow{}).empty());

  const Event full = generate_event(DetectorConfig{}, few_tracks(3, 3), 2);
  TrackCandidate c;
  c.points = {Point3{}, Point3{1, 1, 30}};
  c.hit_refs = {0};
  std::vector<std::size_t> st2;
  std::vector<Hit> hits;
  for (std::size_t i = 0; i < full.hits.size(); ++i) {
    if (full.hits[i].station == 2) {
      st2.push_back(i);
      hits.push_back(full.hits[i]);
    }
  }
  CHECK_THROWS_AS(extend_candidates({c}, full, st2, build_station_index(hits), SearchWindow{}), Error);
}

TEST_CASE("terminated candidates can be kept") {
  TrackCandidate c;
  c.points = {Point3{}, Point3{1, 1, 30}};
  c.hit_refs = {0};
  Event ev;
  ev.hits = {Hit{0, 1, 1, 30, 0}, Hit{1, 40, 40, 50, 1}};
  const std::vector<std::size_t> st1{1};
  const auto idx = build_station_index(std::vector<Hit>{ev.hits[1]});
  CHECK(extend_candidates({c}, ev, st1, idx, SearchWindow{}).empty());
  const auto kept = extend_candidates({c}, ev, st1, idx, SearchWindow{}, true);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0] == c);
}

TEST_CASE("window validation") {
  CHECK_THROWS_AS((SearchWindow{0.0, 0.1, true}.validate()), Error);
  CHECK_THROWS_AS((SearchWindow{1.0, 4.0, true}.validate()), Error);
}
