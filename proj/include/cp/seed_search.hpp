#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cp/detector.hpp"

namespace cp {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const Point3&) const = default;
};

enum class Label { TrueTrack, Ghost, Unlabelled };

const char* to_string(Label label);
Label label_from_string(const std::string& name);

// Ordered point sequence: the target first, then one hit per consecutive
// station starting at station 0. hit_refs[i] is the event hit behind
// points[i + 1].
struct TrackCandidate {
  std::vector<Point3> points;
  std::vector<std::size_t> hit_refs;
  Label label = Label::Unlabelled;

  std::size_t length() const { return points.size(); }
  bool operator==(const TrackCandidate&) const = default;
};

struct SearchWindow {
  double dy = 0.5;          // half-width of the YoZ interval, cm
  double dtheta_max = 0.09; // admissible XoZ rotation between consecutive segments, rad
  // The target->station-0 segment takes part in the rotation test.
  bool rotation_from_target = true;

  void validate() const;
};

// Hits of one station sorted by y. Positions refer to the span the index was
// built from.
class StationIndex {
 public:
  StationIndex() = default;
  explicit StationIndex(std::span<const double> ys);

  const std::vector<std::size_t>& order() const { return order_; }
  // Positions whose y lies in the closed interval [lo, hi], in nondecreasing y.
  std::vector<std::size_t> query(double lo, double hi) const;

 private:
  std::vector<std::size_t> order_;
  std::vector<double> sorted_y_;
};

StationIndex build_station_index(std::span<const Hit> hits);

// Two-point linear extrapolation of y to the plane at z.
double predict_y(const TrackCandidate& cand, double z);
// Direction angle of the XoZ segment a -> b, measured from the z axis.
double segment_angle(const Point3& a, const Point3& b);
// The admissibility predicate shared by the indexed search and its oracle.
bool admissible(const TrackCandidate& cand, const Hit& hit, const SearchWindow& window);

// Extends every candidate by one hit on the next station. `station_hits` are
// event hit indices of that station and `index` must be built over them in
// the same order. Candidates without an admissible hit are dropped, or kept
// unchanged when keep_terminated is set.
std::vector<TrackCandidate> extend_candidates(const std::vector<TrackCandidate>& cands, const Event& event,
                                              std::span<const std::size_t> station_hits,
                                              const StationIndex& index, const SearchWindow& window,
                                              bool keep_terminated = false);

Label truth_label(const Event& event, std::span<const std::size_t> hit_refs);

// All full-length candidates (target + one hit on every station), labelled.
std::vector<TrackCandidate> run_seed_search(const Event& event, std::size_t n_stations,
                                            const SearchWindow& window);

}  // namespace cp
