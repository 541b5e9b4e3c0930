#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cp/detector.hpp"
#include "cp/loss.hpp"
#include "cp/model.hpp"

namespace cp {

// Closed region: ((x - cx)/R1)^2 + ((y - cy)/R2)^2 <= 1.
bool point_in_ellipse(const XY& p, const Ellipse& e);

struct FollowConfig {
  double prune_threshold = 0.2;
  double accept_threshold = 0.5;
  std::size_t max_branches = std::numeric_limits<std::size_t>::max();
  double ellipse_inflate = 1.0;
  bool allow_early_stop = false;
  // Disables probability pruning below the full length (used by gating checks).
  bool prune = true;
  // Guard against runaway branching, e.g. from an untrained model.
  std::size_t max_candidates = 2'000'000;
  std::size_t batch_size = 512;

  void validate() const;
};

struct ReconTrack {
  std::vector<std::size_t> hit_refs;  // station 0, 1, ...
  double probability = 0.0;
  std::size_t length() const { return hit_refs.size() + 1; }

  bool operator==(const ReconTrack&) const = default;
};

struct GateRecord {
  std::vector<std::size_t> prefix_refs;  // candidate before extension
  std::size_t hit = 0;                   // admitted hit
  Ellipse ellipse;                       // inflated ellipse that admitted it
};

// Optional bookkeeping of one follow_event run.
struct FollowTrace {
  std::vector<std::vector<std::size_t>> extended;  // every candidate produced by ellipse gating
  std::vector<GateRecord> gates;
};

// Grows candidates station by station inside the model's ellipses, prunes on
// the predicted probability, keeps full candidates with prob >= accept and
// resolves shared hits greedily.
std::vector<ReconTrack> follow_event(const Event& event, const CatchProlongNet& net, const FollowConfig& cfg,
                                     FollowTrace* trace = nullptr);

// Greedy by descending probability (ties: lower index first); a track is kept
// only when it shares no hit with a kept one.
std::vector<ReconTrack> resolve_conflicts(const std::vector<ReconTrack>& accepted);

std::size_t count_hits_in_ellipse(const Event& event, int station, const Ellipse& e);

// Hit counts inside the predicted ellipses of true-track prefixes, per target
// station. Only tracks with a hit on every station take part.
struct EllipseDensity {
  std::vector<std::size_t> station_hits;  // all hits per station
  std::vector<std::size_t> ellipses;      // ellipses predicted onto the station
  std::vector<double> mean_hits;          // mean hits inside them
  std::size_t busiest = 0;                // station with most hits among stations 1..
  double busiest_mean_hits() const { return mean_hits.empty() ? 0.0 : mean_hits[busiest]; }
};

EllipseDensity ellipse_density(std::span<const Event> events, const CatchProlongNet& net, double inflate = 1.0);

// Track-level comparison with truth. A true track is reconstructable when it
// left one hit on every station; it is found when some output track holds
// exactly its hits.
struct ReconScore {
  std::size_t reconstructable = 0;
  std::size_t found = 0;
  std::size_t output = 0;
  std::size_t ghosts = 0;  // output tracks matching no true track
  bool disjoint = true;
  double efficiency() const { return reconstructable == 0 ? 0.0 : double(found) / double(reconstructable); }
  double ghost_rate() const { return output == 0 ? 0.0 : double(ghosts) / double(output); }
  void add(const ReconScore& o);
};

ReconScore score_reconstruction(const Event& event, const std::vector<ReconTrack>& tracks, std::size_t n_stations);

}  // namespace cp
