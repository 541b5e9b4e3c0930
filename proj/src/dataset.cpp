#include "cp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cp/error.hpp"

namespace cp {

std::vector<TrainingSample> expand_candidates(const Event& event, std::span<const TrackCandidate> candidates,
                                              std::size_t n_stations, std::size_t event_index,
                                              std::size_t first_candidate) {
  // (track_id, station) -> hit
  std::map<std::pair<int, int>, std::size_t> true_hit;
  for (std::size_t i = 0; i < event.hits.size(); ++i) {
    const Hit& h = event.hits[i];
    if (!h.is_fake()) true_hit.emplace(std::make_pair(h.track_id, h.station), i);
  }

  std::vector<TrainingSample> out;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const TrackCandidate& cand = candidates[c];
    if (cand.length() != n_stations + 1 || cand.hit_refs.size() != n_stations) {
      throw Error("expand_candidates needs full-length candidates");
    }
    if (cand.label == Label::Unlabelled) throw Error("expand_candidates needs labelled candidates");
    for (std::size_t len = 2; len <= n_stations + 1; ++len) {
      const auto refs = std::span<const std::size_t>(cand.hit_refs).first(len - 1);
      const bool is_true = truth_label(event, refs) == Label::TrueTrack;
      if (len == 2 && !is_true) continue;

      TrainingSample s;
      s.points.assign(cand.points.begin(), cand.points.begin() + static_cast<long>(len));
      s.label = is_true ? 1 : 0;
      s.event = event_index;
      s.candidate = first_candidate + c;
      if (is_true && len <= n_stations) {
        const int track = event.hits[refs.front()].track_id;
        auto it = true_hit.find({track, static_cast<int>(len - 1)});
        if (it != true_hit.end()) s.next = XY{event.hits[it->second].x, event.hits[it->second].y};
      }
      // A length-2 sample only trains the ellipse head and needs a target.
      if (len == 2 && !s.next) continue;
      out.push_back(std::move(s));
    }
  }
  return out;
}

SampleGroups group_by_length(std::vector<TrainingSample> samples) {
  SampleGroups groups;
  for (auto& s : samples) groups[s.length()].push_back(std::move(s));
  return groups;
}

std::size_t total_samples(const SampleGroups& groups) {
  std::size_t n = 0;
  for (const auto& [len, v] : groups) n += v.size();
  return n;
}

void SplitConfig::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("train_fraction must be in (0, 1)");
}

namespace {

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(k, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Keeps at most `ratio` ghosts per true candidate. With exact_mix, trues are
// thinned as well when ghosts are too scarce for the requested ratio.
std::vector<CandidateRef> balance(std::vector<CandidateRef> trues, std::vector<CandidateRef> ghosts, double ratio,
                                  bool exact_mix, std::mt19937_64& rng) {
  if (ratio > 0.0) {
    const auto want_ghosts = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(trues.size())));
    if (ghosts.size() > want_ghosts) {
      std::vector<CandidateRef> kept;
      for (auto i : sample_indices(ghosts.size(), want_ghosts, rng)) kept.push_back(std::move(ghosts[i]));
      ghosts = std::move(kept);
    } else if (exact_mix && ghosts.size() < want_ghosts) {
      const auto want_trues = static_cast<std::size_t>(std::floor(static_cast<double>(ghosts.size()) / ratio));
      std::vector<CandidateRef> kept;
      for (auto i : sample_indices(trues.size(), want_trues, rng)) kept.push_back(std::move(trues[i]));
      trues = std::move(kept);
      const auto exact = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(trues.size())));
      std::vector<CandidateRef> kept_ghosts;
      for (auto i : sample_indices(ghosts.size(), exact, rng)) kept_ghosts.push_back(std::move(ghosts[i]));
      ghosts = std::move(kept_ghosts);
    }
  }
  std::vector<CandidateRef> out;
  out.reserve(trues.size() + ghosts.size());
  std::merge(std::make_move_iterator(trues.begin()), std::make_move_iterator(trues.end()),
             std::make_move_iterator(ghosts.begin()), std::make_move_iterator(ghosts.end()), std::back_inserter(out),
             [](const CandidateRef& a, const CandidateRef& b) { return a.event < b.event; });
  return out;
}

}  // namespace

CandidateSplit split_candidates(std::span<const EventCandidates> per_event, std::size_t n_events,
                                const SplitConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n_events);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n_events)));

  CandidateSplit split;
  split.train_events.assign(order.begin(), order.begin() + static_cast<long>(n_train));
  split.test_events.assign(order.begin() + static_cast<long>(n_train), order.end());
  std::sort(split.train_events.begin(), split.train_events.end());
  std::sort(split.test_events.begin(), split.test_events.end());

  std::vector<bool> is_train(n_events, false);
  for (auto e : split.train_events) is_train[e] = true;

  std::vector<CandidateRef> train_true, train_ghost, test_true, test_ghost;
  for (const auto& ec : per_event) {
    if (ec.event >= n_events) throw Error("candidate refers to event index " + std::to_string(ec.event) + " out of range");
    for (const auto& c : ec.candidates) {
      const bool t = c.label == Label::TrueTrack;
      auto& dst = is_train[ec.event] ? (t ? train_true : train_ghost) : (t ? test_true : test_ghost);
      dst.push_back(CandidateRef{ec.event, c});
    }
  }
  auto by_event = [](const CandidateRef& a, const CandidateRef& b) { return a.event < b.event; };
  for (auto* v : {&train_true, &train_ghost, &test_true, &test_ghost}) std::stable_sort(v->begin(), v->end(), by_event);
  split.train = balance(std::move(train_true), std::move(train_ghost), cfg.train_ghost_ratio, false, rng);
  split.test = balance(std::move(test_true), std::move(test_ghost), cfg.test_ghost_ratio, true, rng);
  return split;
}

SampleGroups expand_split(std::span<const Event> events, std::span<const CandidateRef> cands, std::size_t n_stations) {
  std::vector<TrainingSample> all;
  std::size_t i = 0;
  while (i < cands.size()) {
    const std::size_t ev = cands[i].event;
    std::vector<TrackCandidate> batch;
    const std::size_t first = i;
    while (i < cands.size() && cands[i].event == ev) batch.push_back(cands[i++].candidate);
    auto samples = expand_candidates(events[ev], batch, n_stations, ev, first);
    std::move(samples.begin(), samples.end(), std::back_inserter(all));
  }
  return group_by_length(std::move(all));
}

}  // namespace cp
