#include "cp/seed_search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cp/error.hpp"

namespace cp {

const char* to_string(Label label) {
  switch (label) {
    case Label::TrueTrack:
      return "true";
    case Label::Ghost:
      return "ghost";
    case Label::Unlabelled:
      return "unlabelled";
  }
  return "unlabelled";
}

Label label_from_string(const std::string& name) {
  if (name == "true") return Label::TrueTrack;
  if (name == "ghost") return Label::Ghost;
  if (name == "unlabelled") return Label::Unlabelled;
  throw Error("unknown label '" + name + "'");
}

void SearchWindow::validate() const {
  if (!(dy > 0.0)) throw Error("search window dy must be positive");
  if (!(dtheta_max > 0.0 && dtheta_max < M_PI)) throw Error("search window dtheta_max must be in (0, pi)");
}

StationIndex::StationIndex(std::span<const double> ys) : order_(ys.size()) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return ys[a] < ys[b]; });
  sorted_y_.reserve(ys.size());
  for (auto i : order_) sorted_y_.push_back(ys[i]);
}

std::vector<std::size_t> StationIndex::query(double lo, double hi) const {
  auto first = std::lower_bound(sorted_y_.begin(), sorted_y_.end(), lo);
  auto last = std::upper_bound(first, sorted_y_.end(), hi);
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(last - first));
  for (auto it = first; it != last; ++it) out.push_back(order_[static_cast<std::size_t>(it - sorted_y_.begin())]);
  return out;
}

StationIndex build_station_index(std::span<const Hit> hits) {
  std::vector<double> ys;
  ys.reserve(hits.size());
  for (const auto& h : hits) ys.push_back(h.y);
  return StationIndex(ys);
}

double predict_y(const TrackCandidate& cand, double z) {
  const auto& a = cand.points[cand.points.size() - 2];
  const auto& b = cand.points.back();
  return b.y + (b.y - a.y) * (z - b.z) / (b.z - a.z);
}

double segment_angle(const Point3& a, const Point3& b) { return std::atan2(b.x - a.x, b.z - a.z); }

namespace {

bool rotation_ok(const TrackCandidate& cand, const Hit& hit, const SearchWindow& window) {
  const std::size_t n = cand.points.size();
  if (n < 3 && !window.rotation_from_target) return true;
  const auto& a = cand.points[n - 2];
  const auto& b = cand.points[n - 1];
  const double last = segment_angle(a, b);
  const double next = segment_angle(b, Point3{hit.x, hit.y, hit.z});
  return std::abs(next - last) <= window.dtheta_max;
}

}  // namespace

bool admissible(const TrackCandidate& cand, const Hit& hit, const SearchWindow& window) {
  if (cand.points.size() < 2) return false;
  if (static_cast<std::size_t>(hit.station) + 2 != cand.points.size() + 1) return false;
  if (std::abs(hit.y - predict_y(cand, hit.z)) > window.dy) return false;
  return rotation_ok(cand, hit, window);
}

std::vector<TrackCandidate> extend_candidates(const std::vector<TrackCandidate>& cands, const Event& event,
                                              std::span<const std::size_t> station_hits,
                                              const StationIndex& index, const SearchWindow& window,
                                              bool keep_terminated) {
  std::vector<TrackCandidate> out;
  if (cands.empty()) return out;
  const std::size_t len = cands.front().length();
  if (len < 2) throw Error("candidates must hold at least the target and one hit");
  for (const auto& c : cands) {
    if (c.length() != len) throw Error("extend_candidates needs candidates of equal length");
  }
  if (index.order().size() != station_hits.size()) throw Error("station index does not match the station hits");
  for (auto h : station_hits) {
    if (static_cast<std::size_t>(event.hits.at(h).station) != len - 1) {
      throw Error("station ordering mismatch: candidates of length " + std::to_string(len) +
                  " extend onto station " + std::to_string(len - 1) + ", got a hit on station " +
                  std::to_string(event.hits[h].station));
    }
  }
  if (station_hits.empty()) {
    if (keep_terminated) out = cands;
    return out;
  }

  const double z = event.hits[station_hits.front()].z;
  for (const auto& c : cands) {
    const double y_pred = predict_y(c, z);
    bool extended = false;
    for (auto pos : index.query(y_pred - window.dy, y_pred + window.dy)) {
      const std::size_t ref = station_hits[pos];
      const Hit& h = event.hits[ref];
      if (!rotation_ok(c, h, window)) continue;
      TrackCandidate next = c;
      next.points.push_back(Point3{h.x, h.y, h.z});
      next.hit_refs.push_back(ref);
      next.label = Label::Unlabelled;
      out.push_back(std::move(next));
      extended = true;
    }
    if (!extended && keep_terminated) out.push_back(c);
  }
  return out;
}

Label truth_label(const Event& event, std::span<const std::size_t> hit_refs) {
  if (hit_refs.empty()) return Label::Ghost;
  const int id = event.hits.at(hit_refs.front()).track_id;
  if (id < 0) return Label::Ghost;
  for (auto r : hit_refs) {
    if (event.hits.at(r).track_id != id) return Label::Ghost;
  }
  return Label::TrueTrack;
}

std::vector<TrackCandidate> run_seed_search(const Event& event, std::size_t n_stations,
                                            const SearchWindow& window) {
  window.validate();
  const auto by_station = hits_by_station(event, n_stations);

  std::vector<TrackCandidate> cands;
  for (auto ref : by_station[0]) {
    const Hit& h = event.hits[ref];
    TrackCandidate c;
    c.points = {Point3{}, Point3{h.x, h.y, h.z}};
    c.hit_refs = {ref};
    cands.push_back(std::move(c));
  }
  for (std::size_t s = 1; s < n_stations && !cands.empty(); ++s) {
    std::vector<Hit> station;
    station.reserve(by_station[s].size());
    for (auto ref : by_station[s]) station.push_back(event.hits[ref]);
    const auto index = build_station_index(station);
    cands = extend_candidates(cands, event, by_station[s], index, window);
  }
  for (auto& c : cands) c.label = truth_label(event, c.hit_refs);
  return cands;
}

}  // namespace cp
