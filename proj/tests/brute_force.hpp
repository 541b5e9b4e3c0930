#pragma once

#include <set>
#include <vector>

#include "cp/seed_search.hpp"

namespace cp::testing {

using RefSet = std::set<std::vector<std::size_t>>;

// Depth-first enumeration over every hit of every station, no index. The
// predicate only looks at the last two points, so filtering complete
// sequences equals pruning prefixes.
inline void dfs(const Event& ev, std::size_t n_st, const SearchWindow& w, TrackCandidate& cur, RefSet& out) {
  const std::size_t station = cur.points.size() - 1;
  if (station == n_st) {
    out.insert(cur.hit_refs);
    return;
  }
  for (std::size_t i = 0; i < ev.hits.size(); ++i) {
    const Hit& h = ev.hits[i];
    if (h.station != static_cast<int>(station)) continue;
    if (station > 0 && !admissible(cur, h, w)) continue;
    cur.points.push_back(Point3{h.x, h.y, h.z});
    cur.hit_refs.push_back(i);
    dfs(ev, n_st, w, cur, out);
    cur.points.pop_back();
    cur.hit_refs.pop_back();
  }
}

inline RefSet brute_force(const Event& ev, std::size_t n_st, const SearchWindow& w) {
  RefSet out;
  TrackCandidate root;
  root.points.push_back(Point3{});
  dfs(ev, n_st, w, root, out);
  return out;
}

inline RefSet as_set(const std::vector<TrackCandidate>& cands) {
  RefSet s;
  for (const auto& c : cands) s.insert(c.hit_refs);
  return s;
}

}  // namespace cp::testing
