#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cp/detector.hpp"
#include "cp/seed_search.hpp"

namespace cp {

struct TrainingSample {
  std::vector<Point3> points;  // prefix, target first
  int label = 0;
  std::optional<XY> next;      // true continuation on station length-1
  std::size_t event = 0;       // index into the event list the sample came from
  std::size_t candidate = 0;   // index of the source candidate within its split

  std::size_t length() const { return points.size(); }
};

// Samples grouped by prefix length.
using SampleGroups = std::map<std::size_t, std::vector<TrainingSample>>;

// Labelled full-length candidates of one event.
struct EventCandidates {
  std::size_t event = 0;
  std::vector<TrackCandidate> candidates;
};

// Every candidate yields its prefixes of length 2..full. A prefix is true when
// all of its hits belong to one track (so clean prefixes of ghosts count as
// true); true prefixes shorter than the full length carry that track's hit on
// the next station as regression target. Ghost prefixes of length 2 are
// dropped.
std::vector<TrainingSample> expand_candidates(const Event& event, std::span<const TrackCandidate> candidates,
                                              std::size_t n_stations, std::size_t event_index = 0,
                                              std::size_t first_candidate = 0);

SampleGroups group_by_length(std::vector<TrainingSample> samples);
std::size_t total_samples(const SampleGroups& groups);

struct SplitConfig {
  double train_fraction = 0.7;
  // Ghosts kept per true candidate in each split (<= 0 keeps all).
  double train_ghost_ratio = 3.0;
  double test_ghost_ratio = 10.0;
  std::uint64_t seed = 7;

  void validate() const;
};

struct CandidateRef {
  std::size_t event = 0;
  TrackCandidate candidate;
};

struct CandidateSplit {
  std::vector<CandidateRef> train;
  std::vector<CandidateRef> test;
  std::vector<std::size_t> train_events;
  std::vector<std::size_t> test_events;
};

// Splits at event level (so no candidate, and no shared prefix, lands on both
// sides), then subsamples ghosts in each split to the configured ratio.
CandidateSplit split_candidates(std::span<const EventCandidates> per_event, std::size_t n_events,
                                const SplitConfig& cfg);

SampleGroups expand_split(std::span<const Event> events, std::span<const CandidateRef> cands, std::size_t n_stations);

}  // namespace cp
