#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cp {

enum class FakeMode { StripCrossing, Uniform, None };

std::string to_string(FakeMode mode);
FakeMode fake_mode_from_string(const std::string& name);

// Planar multi-station detector. Stations are perpendicular to z, the
// interaction target sits at the origin.
struct DetectorConfig {
  std::vector<double> station_z{30.0, 50.0, 70.0, 90.0, 110.0};
  std::vector<double> half_extent_x;  // empty -> scaled from station 0
  std::vector<double> half_extent_y;
  double station0_half_x = 32.0;
  double station0_half_y = 20.5;
  double smear_sigma = 0.05;
  FakeMode fake_mode = FakeMode::StripCrossing;
  // Probability that a given strip-crossing fake is emitted.
  double fake_fraction = 0.25;
  // Uniform mode: fakes per station per true hit.
  double uniform_fakes_per_hit = 7.0;

  std::size_t n_stations() const { return station_z.size(); }
  double half_x(std::size_t station) const;
  double half_y(std::size_t station) const;
  // Throws cp::Error when an invariant is violated.
  void validate() const;
};

struct GenerationConfig {
  int min_tracks = 20;
  int max_tracks = 30;
  double kappa_min = 0.0;  // |kappa| range, cm^-1
  double kappa_max = 0.002;
  double phi0_min = -0.6;
  double phi0_max = 0.6;
  double ty_min = -0.5;
  double ty_max = 0.5;
  // Upper bound on the turning angle |kappa| * z_last; keeps every track
  // crossing every plane at most once.
  double max_turn = 1.0;

  void validate() const;
};

struct TrackParams {
  double kappa = 0.0;
  double phi0 = 0.0;
  double ty = 0.0;
  int track_id = 0;

  bool operator==(const TrackParams&) const = default;
};

struct Hit {
  int station = 0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  int track_id = -1;  // -1 marks a fake

  bool is_fake() const { return track_id < 0; }
  bool operator==(const Hit&) const = default;
};

struct Event {
  std::int64_t event_id = 0;
  std::vector<Hit> hits;
  std::vector<TrackParams> tracks;

  bool operator==(const Event&) const = default;
};

struct XY {
  double x = 0.0;
  double y = 0.0;
};

// Intersection of a helix-like toy track with the plane at z: a straight line
// in YoZ and a circle through the origin in XoZ. Returns nullopt when the
// circle never reaches the plane.
std::optional<XY> try_project_track(const TrackParams& track, double z);
// Same, but throws cp::Error("plane unreachable ...").
XY project_track(const TrackParams& track, double z);

Event generate_event(const DetectorConfig& det, const GenerationConfig& gen, std::uint64_t seed,
                     std::int64_t event_id = 0);

// Seed of event i in a run seeded with `seed` (splitmix64 of seed + i).
std::uint64_t event_seed(std::uint64_t seed, std::uint64_t index);
// Events first_id, first_id + 1, ... each generated from event_seed(seed, id).
std::vector<Event> simulate_events(const DetectorConfig& det, const GenerationConfig& gen, std::uint64_t seed,
                                   std::size_t n_events, std::int64_t first_id = 0);

// Per-station hit indices, in hit-list order.
std::vector<std::vector<std::size_t>> hits_by_station(const Event& event, std::size_t n_stations);

}  // namespace cp
