#include "cp/detector.hpp"

#include <cmath>
#include <random>

#include "cp/error.hpp"

namespace cp {

std::string to_string(FakeMode mode) {
  switch (mode) {
    case FakeMode::StripCrossing:
      return "strip-crossing";
    case FakeMode::Uniform:
      return "uniform";
    case FakeMode::None:
      return "none";
  }
  return "none";
}

FakeMode fake_mode_from_string(const std::string& name) {
  if (name == "strip-crossing") return FakeMode::StripCrossing;
  if (name == "uniform") return FakeMode::Uniform;
  if (name == "none") return FakeMode::None;
  throw Error("unknown fake_mode '" + name + "'");
}

double DetectorConfig::half_x(std::size_t station) const {
  if (!half_extent_x.empty()) return half_extent_x.at(station);
  return station0_half_x * station_z.at(station) / station_z.front();
}

double DetectorConfig::half_y(std::size_t station) const {
  if (!half_extent_y.empty()) return half_extent_y.at(station);
  return station0_half_y * station_z.at(station) / station_z.front();
}

void DetectorConfig::validate() const {
  if (station_z.size() < 2) throw Error("detector needs at least 2 stations");
  if (station_z.front() <= 0.0) throw Error("station_z must be positive");
  for (std::size_t i = 1; i < station_z.size(); ++i) {
    if (!(station_z[i] > station_z[i - 1])) throw Error("station_z must be strictly increasing");
  }
  if (!half_extent_x.empty() && half_extent_x.size() != station_z.size()) {
    throw Error("half_extent_x must list one value per station");
  }
  if (!half_extent_y.empty() && half_extent_y.size() != station_z.size()) {
    throw Error("half_extent_y must list one value per station");
  }
  for (std::size_t s = 0; s < n_stations(); ++s) {
    if (!(half_x(s) > 0.0) || !(half_y(s) > 0.0)) throw Error("station half-extents must be positive");
  }
  if (!(smear_sigma >= 0.0)) throw Error("smear_sigma must be non-negative");
  if (!(fake_fraction >= 0.0 && fake_fraction <= 1.0)) throw Error("fake_fraction must be in [0, 1]");
  if (!(uniform_fakes_per_hit >= 0.0)) throw Error("uniform_fakes_per_hit must be non-negative");
}

void GenerationConfig::validate() const {
  if (min_tracks < 0 || max_tracks < min_tracks) throw Error("invalid track count range");
  if (!(kappa_min >= 0.0 && kappa_max >= kappa_min)) throw Error("invalid kappa range");
  if (!(phi0_max >= phi0_min) || phi0_min <= -M_PI / 2 || phi0_max >= M_PI / 2) {
    throw Error("invalid phi0 range (must lie inside (-pi/2, pi/2))");
  }
  if (!(ty_max >= ty_min)) throw Error("invalid ty range");
  if (!(max_turn > 0.0 && max_turn < M_PI / 2)) throw Error("max_turn must be in (0, pi/2)");
}

std::optional<XY> try_project_track(const TrackParams& track, double z) {
  // Arc parametrisation: x(s) = (cos phi0 - cos(phi0 + k s)) / k,
  //                      z(s) = (sin(phi0 + k s) - sin phi0) / k.
  // Solving z(s) = z gives sin(phi0 + k s) = sin phi0 + k z =: u; the first
  // crossing is on the branch where cos(phi0 + k s) = +sqrt(1 - u^2). The
  // difference of cosines is rewritten to stay exact as k -> 0.
  const double sin0 = std::sin(track.phi0);
  const double cos0 = std::cos(track.phi0);
  if (!(cos0 > 0.0)) return std::nullopt;
  const double kz = track.kappa * z;
  const double u = sin0 + kz;
  if (std::abs(u) > 1.0) return std::nullopt;
  const double cos1 = std::sqrt((1.0 - u) * (1.0 + u));
  const double x = z * (2.0 * sin0 + kz) / (cos0 + cos1);
  return XY{x, track.ty * z};
}

XY project_track(const TrackParams& track, double z) {
  auto p = try_project_track(track, z);
  if (!p) {
    throw Error("plane unreachable: z=" + std::to_string(z) + " for kappa=" + std::to_string(track.kappa));
  }
  return *p;
}

namespace {

struct TruePoint {
  double x_true, y_true;  // before smear
};

bool inside(const DetectorConfig& det, std::size_t s, double x, double y) {
  return std::abs(x) <= det.half_x(s) && std::abs(y) <= det.half_y(s);
}

}  // namespace

Event generate_event(const DetectorConfig& det, const GenerationConfig& gen, std::uint64_t seed,
                     std::int64_t event_id) {
  det.validate();
  gen.validate();
  if (gen.kappa_max * det.station_z.back() > gen.max_turn) {
    throw Error("kappa_max turns tracks by more than max_turn over the detector depth");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Event ev;
  ev.event_id = event_id;
  const int n_tracks = std::uniform_int_distribution<int>(gen.min_tracks, gen.max_tracks)(rng);
  for (int t = 0; t < n_tracks; ++t) {
    TrackParams tp;
    const double mag = uniform(gen.kappa_min, gen.kappa_max);
    tp.kappa = unit(rng) < 0.5 ? -mag : mag;
    tp.phi0 = uniform(gen.phi0_min, gen.phi0_max);
    tp.ty = uniform(gen.ty_min, gen.ty_max);
    tp.track_id = t;
    ev.tracks.push_back(tp);
  }

  const std::size_t n_st = det.n_stations();
  for (std::size_t s = 0; s < n_st; ++s) {
    const double z = det.station_z[s];
    std::vector<TruePoint> truth;
    for (const auto& tp : ev.tracks) {
      auto p = try_project_track(tp, z);
      if (!p) continue;
      const double x = p->x + det.smear_sigma * gauss(rng);
      const double y = p->y + det.smear_sigma * gauss(rng);
      if (!inside(det, s, x, y)) continue;
      ev.hits.push_back(Hit{static_cast<int>(s), x, y, z, tp.track_id});
      truth.push_back({p->x, p->y});
    }

    const std::size_t k = truth.size();
    switch (det.fake_mode) {
      case FakeMode::None:
        break;
      case FakeMode::StripCrossing:
        // A fired x-strip of one particle crossing the fired y-strip of another.
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            if (unit(rng) >= det.fake_fraction) continue;
            const double x = truth[i].x_true + det.smear_sigma * gauss(rng);
            const double y = truth[j].y_true + det.smear_sigma * gauss(rng);
            if (!inside(det, s, x, y)) continue;
            ev.hits.push_back(Hit{static_cast<int>(s), x, y, z, -1});
          }
        }
        break;
      case FakeMode::Uniform: {
        const auto n_fake = static_cast<std::size_t>(std::floor(det.uniform_fakes_per_hit * k + 0.5));
        for (std::size_t f = 0; f < n_fake; ++f) {
          const double x = uniform(-det.half_x(s), det.half_x(s));
          const double y = uniform(-det.half_y(s), det.half_y(s));
          ev.hits.push_back(Hit{static_cast<int>(s), x, y, z, -1});
        }
        break;
      }
    }
  }
  return ev;
}

std::vector<std::vector<std::size_t>> hits_by_station(const Event& event, std::size_t n_stations) {
  std::vector<std::vector<std::size_t>> out(n_stations);
  for (std::size_t i = 0; i < event.hits.size(); ++i) {
    const int s = event.hits[i].station;
    if (s < 0 || static_cast<std::size_t>(s) >= n_stations) {
      throw Error("hit " + std::to_string(i) + " has station " + std::to_string(s) + " outside the detector");
    }
    out[static_cast<std::size_t>(s)].push_back(i);
  }
  return out;
}

std::uint64_t event_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + index * 0x9e3779b97f4a7c15ULL + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<Event> simulate_events(const DetectorConfig& det, const GenerationConfig& gen, std::uint64_t seed,
                                   std::size_t n_events, std::int64_t first_id) {
  std::vector<Event> events;
  events.reserve(n_events);
  for (std::size_t i = 0; i < n_events; ++i) {
    const auto id = first_id + static_cast<std::int64_t>(i);
    events.push_back(generate_event(det, gen, event_seed(seed, static_cast<std::uint64_t>(id)), id));
  }
  return events;
}

}  // namespace cp
