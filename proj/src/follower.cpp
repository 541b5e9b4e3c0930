#include "cp/follower.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <map>
#include <set>

#include "cp/error.hpp"
#include "cp/seed_search.hpp"

namespace cp {

bool point_in_ellipse(const XY& p, const Ellipse& e) {
  const double u = (p.x - e.cx) / e.r1;
  const double v = (p.y - e.cy) / e.r2;
  return u * u + v * v <= 1.0;
}

void FollowConfig::validate() const {
  if (!(prune_threshold > 0.0 && prune_threshold < 1.0)) throw Error("prune_threshold must be in (0, 1)");
  if (!(accept_threshold > 0.0 && accept_threshold < 1.0)) throw Error("accept_threshold must be in (0, 1)");
  if (!(ellipse_inflate >= 1.0)) throw Error("ellipse_inflate must be >= 1");
  if (max_branches == 0) throw Error("max_branches must be positive");
  if (batch_size == 0) throw Error("batch_size must be positive");
}

namespace {

struct Live {
  std::vector<Point3> points;
  std::vector<std::size_t> refs;
};

std::vector<ModelOutput> run_model(const CatchProlongNet& net, const std::vector<Live>& cands, std::size_t batch) {
  std::vector<ModelOutput> out;
  out.reserve(cands.size());
  for (std::size_t start = 0; start < cands.size(); start += batch) {
    const std::size_t stop = std::min(cands.size(), start + batch);
    PrefixBatch prefixes;
    for (std::size_t i = start; i < stop; ++i) prefixes.emplace_back(cands[i].points);
    auto part = net.forward_batch(prefixes);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace

std::vector<ReconTrack> follow_event(const Event& event, const CatchProlongNet& net, const FollowConfig& cfg,
                                     FollowTrace* trace) {
  cfg.validate();
  const std::size_t n_st = net.config().n_stations;
  const auto by_station = hits_by_station(event, n_st);

  std::vector<Live> live;
  for (auto ref : by_station[0]) {
    const Hit& h = event.hits[ref];
    live.push_back(Live{{Point3{}, Point3{h.x, h.y, h.z}}, {ref}});
  }

  std::vector<ReconTrack> accepted;
  for (std::size_t s = 1; s < n_st && !live.empty(); ++s) {
    std::vector<Hit> station;
    for (auto ref : by_station[s]) station.push_back(event.hits[ref]);
    const StationIndex index = build_station_index(station);

    const auto outputs = run_model(net, live, cfg.batch_size);
    std::vector<Live> next;
    for (std::size_t c = 0; c < live.size(); ++c) {
      const ModelOutput& out = outputs[c];
      if (cfg.prune && out.prob && *out.prob < cfg.prune_threshold) continue;
      Ellipse e = *out.ellipse;
      e.r1 *= cfg.ellipse_inflate;
      e.r2 *= cfg.ellipse_inflate;

      std::vector<std::pair<double, std::size_t>> inside;  // (normalised distance^2, position)
      for (auto pos : index.query(e.cy - e.r2, e.cy + e.r2)) {
        const Hit& h = station[pos];
        if (!point_in_ellipse(XY{h.x, h.y}, e)) continue;
        const double u = (h.x - e.cx) / e.r1, v = (h.y - e.cy) / e.r2;
        inside.emplace_back(u * u + v * v, pos);
      }
      if (inside.empty()) {
        if (cfg.allow_early_stop && live[c].points.size() >= 4 && out.prob && *out.prob >= cfg.accept_threshold) {
          accepted.push_back(ReconTrack{live[c].refs, *out.prob});
        }
        continue;
      }
      if (inside.size() > cfg.max_branches) {
        std::stable_sort(inside.begin(), inside.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        inside.resize(cfg.max_branches);
        std::sort(inside.begin(), inside.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
      } else {
        std::sort(inside.begin(), inside.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
      }
      for (const auto& [dist, pos] : inside) {
        const std::size_t ref = by_station[s][pos];
        const Hit& h = event.hits[ref];
        Live ext = live[c];
        ext.points.push_back(Point3{h.x, h.y, h.z});
        ext.refs.push_back(ref);
        if (trace) {
          trace->gates.push_back(GateRecord{live[c].refs, ref, e});
          trace->extended.push_back(ext.refs);
        }
        next.push_back(std::move(ext));
      }
      if (next.size() > cfg.max_candidates) {
        throw Error("follow_event: more than " + std::to_string(cfg.max_candidates) +
                    " live candidates; the model is untrained or incompatible with this detector");
      }
    }
    live = std::move(next);
  }

  if (!live.empty() && live.front().points.size() == n_st + 1) {
    const auto outputs = run_model(net, live, cfg.batch_size);
    for (std::size_t c = 0; c < live.size(); ++c) {
      if (*outputs[c].prob >= cfg.accept_threshold) accepted.push_back(ReconTrack{live[c].refs, *outputs[c].prob});
    }
  }
  return resolve_conflicts(accepted);
}

std::vector<ReconTrack> resolve_conflicts(const std::vector<ReconTrack>& accepted) {
  std::vector<std::size_t> order(accepted.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return accepted[a].probability > accepted[b].probability; });
  std::set<std::size_t> used;
  std::vector<ReconTrack> kept;
  for (auto i : order) {
    const auto& t = accepted[i];
    const bool clash = std::any_of(t.hit_refs.begin(), t.hit_refs.end(), [&](std::size_t r) { return used.count(r) > 0; });
    if (clash) continue;
    used.insert(t.hit_refs.begin(), t.hit_refs.end());
    kept.push_back(t);
  }
  return kept;
}

std::size_t count_hits_in_ellipse(const Event& event, int station, const Ellipse& e) {
  std::size_t n = 0;
  for (const auto& h : event.hits) {
    if (h.station == station && point_in_ellipse(XY{h.x, h.y}, e)) ++n;
  }
  return n;
}

namespace {

// Hit refs of every track with exactly one hit on each station, by track id.
std::map<int, std::vector<std::size_t>> complete_tracks(const Event& event, std::size_t n_stations) {
  std::map<int, std::vector<std::size_t>> by_track;
  std::map<int, std::size_t> seen;
  for (std::size_t i = 0; i < event.hits.size(); ++i) {
    const Hit& h = event.hits[i];
    if (h.is_fake()) continue;
    auto& refs = by_track[h.track_id];
    if (refs.empty()) refs.assign(n_stations, event.hits.size());
    if (refs[static_cast<std::size_t>(h.station)] != event.hits.size()) seen[h.track_id] = n_stations + 1;
    refs[static_cast<std::size_t>(h.station)] = i;
  }
  for (auto it = by_track.begin(); it != by_track.end();) {
    const bool gap = std::find(it->second.begin(), it->second.end(), event.hits.size()) != it->second.end();
    if (gap || seen.count(it->first)) {
      it = by_track.erase(it);
    } else {
      ++it;
    }
  }
  return by_track;
}

}  // namespace

EllipseDensity ellipse_density(std::span<const Event> events, const CatchProlongNet& net, double inflate) {
  const std::size_t n_st = net.config().n_stations;
  EllipseDensity d;
  d.station_hits.assign(n_st, 0);
  d.ellipses.assign(n_st, 0);
  d.mean_hits.assign(n_st, 0.0);
  std::vector<double> sums(n_st, 0.0);
  for (const auto& ev : events) {
    for (const auto& h : ev.hits) ++d.station_hits[static_cast<std::size_t>(h.station)];
    const auto tracks = complete_tracks(ev, n_st);
    // prefix length L ends on station L - 2 and predicts station L - 1
    for (std::size_t len = 2; len <= n_st; ++len) {
      std::vector<std::vector<Point3>> pts;
      for (const auto& [id, refs] : tracks) {
        std::vector<Point3> p{Point3{}};
        for (std::size_t k = 0; k + 1 < len; ++k) {
          const Hit& h = ev.hits[refs[k]];
          p.push_back(Point3{h.x, h.y, h.z});
        }
        pts.push_back(std::move(p));
      }
      PrefixBatch batch(pts.begin(), pts.end());
      if (batch.empty()) continue;
      const auto outs = net.forward_batch(batch);
      for (const auto& o : outs) {
        Ellipse e = *o.ellipse;
        e.r1 *= inflate;
        e.r2 *= inflate;
        sums[len - 1] += static_cast<double>(count_hits_in_ellipse(ev, static_cast<int>(len - 1), e));
        ++d.ellipses[len - 1];
      }
    }
  }
  for (std::size_t s = 0; s < n_st; ++s) {
    if (d.ellipses[s] > 0) d.mean_hits[s] = sums[s] / static_cast<double>(d.ellipses[s]);
  }
  d.busiest = n_st > 1 ? 1 : 0;
  for (std::size_t s = 1; s < n_st; ++s) {
    if (d.station_hits[s] > d.station_hits[d.busiest]) d.busiest = s;
  }
  return d;
}

void ReconScore::add(const ReconScore& o) {
  reconstructable += o.reconstructable;
  found += o.found;
  output += o.output;
  ghosts += o.ghosts;
  disjoint = disjoint && o.disjoint;
}

ReconScore score_reconstruction(const Event& event, const std::vector<ReconTrack>& tracks, std::size_t n_stations) {
  ReconScore sc;
  const auto truth = complete_tracks(event, n_stations);
  std::set<std::vector<std::size_t>> true_sets;
  for (const auto& [id, refs] : truth) true_sets.insert(refs);
  sc.reconstructable = truth.size();
  sc.output = tracks.size();
  std::set<std::size_t> used;
  std::set<std::vector<std::size_t>> matched;
  for (const auto& t : tracks) {
    for (auto r : t.hit_refs) {
      if (!used.insert(r).second) sc.disjoint = false;
    }
    if (true_sets.count(t.hit_refs)) {
      matched.insert(t.hit_refs);
    } else {
      ++sc.ghosts;
    }
  }
  sc.found = matched.size();
  return sc;
}

}  // namespace cp
