// cpctl: simulate -> seed -> train -> track -> eval -> bench over stage files.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cp/checkpoint.hpp"
#include "cp/dataset.hpp"
#include "cp/error.hpp"
#include "cp/follower.hpp"
#include "cp/io.hpp"
#include "cp/run_config.hpp"
#include "cp/trainer.hpp"

using namespace cp;
namespace fs = std::filesystem;

namespace {

// Failure with a short machine-readable category.
struct CliError : Error {
  std::string kind;
  CliError(std::string k, const std::string& what) : Error(what), kind(std::move(k)) {}
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool out_required = true) {
  app->add_option("--config", c.config_path, "JSON config file");
  app->add_option("--seed", c.seed, "global seed");
  app->add_option("--set", c.sets, "override, section.key=value (repeatable)");
  auto* o = app->add_option("--out", c.out, "output path");
  if (out_required) o->required();
}

RunConfig resolve_config(const Common& c) {
  json j = to_json(RunConfig{});
  if (!c.config_path.empty()) {
    if (!fs::exists(c.config_path)) throw CliError("missing_input", "config file '" + c.config_path + "' not found");
    std::ifstream in(c.config_path);
    json user;
    try {
      user = json::parse(in);
    } catch (const json::exception& e) {
      throw CliError("bad_config", c.config_path + ": " + e.what());
    }
    // unknown keys must still be caught, so validate the file on its own first
    try {
      run_config_from_json(user);
    } catch (const Error& e) {
      throw CliError("bad_config", c.config_path + ": " + e.what());
    }
    j.merge_patch(user);
  }
  try {
    for (const auto& s : c.sets) apply_override(j, s);
    if (c.seed) j["seed"] = *c.seed;
    return run_config_from_json(j);
  } catch (const Error& e) {
    throw CliError("bad_config", e.what());
  }
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw CliError("missing_input", std::string(what) + " path not given");
  if (!fs::exists(path)) throw CliError("missing_input", std::string(what) + " file '" + path + "' not found");
}

json provenance(const char* command, const RunConfig& rc, json inputs = json::object()) {
  return json{{"tool", "cpctl"}, {"command", command}, {"seed", rc.seed}, {"config", to_json(rc)}, {"inputs", inputs}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

// ---- simulate

int cmd_simulate(const Common& c, std::size_t n_events) {
  RunConfig rc = resolve_config(c);
  const auto events = simulate_events(rc.detector, rc.generation, rc.seed, n_events);
  json prov = provenance("simulate", rc);
  prov["n_events"] = n_events;
  write_events(c.out, rc.detector, events, prov);

  const std::size_t n_st = rc.detector.n_stations();
  std::vector<std::size_t> trues(n_st), fakes(n_st);
  for (const auto& ev : events) {
    for (const auto& h : ev.hits) (h.is_fake() ? fakes : trues)[static_cast<std::size_t>(h.station)]++;
  }
  std::printf("station,z,true_hits,fake_hits,fake_per_true\n");
  for (std::size_t s = 0; s < n_st; ++s) {
    const double ratio = trues[s] ? double(fakes[s]) / double(trues[s]) : 0.0;
    std::printf("%zu,%g,%zu,%zu,%.3f\n", s, rc.detector.station_z[s], trues[s], fakes[s], ratio);
  }
  std::printf("wrote %zu events to %s\n", events.size(), c.out.c_str());
  return 0;
}

// ---- seed

int cmd_seed(const Common& c, const std::string& events_path) {
  RunConfig rc = resolve_config(c);
  require_file(events_path, "events");
  const EventFile ef = read_events(events_path);
  const std::size_t n_st = ef.detector.n_stations();
  std::vector<EventCandidates> per_event;
  std::size_t n_true = 0, n_ghost = 0;
  for (std::size_t i = 0; i < ef.events.size(); ++i) {
    per_event.push_back(EventCandidates{i, run_seed_search(ef.events[i], n_st, rc.search)});
    for (const auto& cand : per_event.back().candidates) (cand.label == Label::TrueTrack ? n_true : n_ghost)++;
  }
  json prov = provenance("seed", rc, {{"events", events_path}});
  prov["events_provenance"] = ef.header.value("provenance", json(nullptr));
  write_candidates(c.out, ef.events, per_event, prov);
  std::printf("events %zu candidates %zu true %zu ghost %zu ghost_per_true %.3f\n", ef.events.size(),
              n_true + n_ghost, n_true, n_ghost, n_true ? double(n_ghost) / double(n_true) : 0.0);
  return 0;
}

// ---- train

json metrics_json(const MetricsTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    json row{{"length", r.length}, {"samples", r.samples}};
    if (r.has_classification) {
      row.update({{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}, {"recall", r.recall},
                  {"precision", r.precision}, {"accuracy", r.accuracy}});
    }
    if (r.ellipses > 0) row.update({{"ellipses", r.ellipses}, {"mean_area_cm2", r.mean_area}, {"coverage", r.coverage}});
    rows.push_back(row);
  }
  return rows;
}

struct Prepared {
  EventFile events;
  CandidateFile cands;
  CandidateSplit split;
};

Prepared load_and_split(const std::string& events_path, const std::string& cands_path, const SplitConfig& split) {
  require_file(events_path, "events");
  require_file(cands_path, "candidates");
  Prepared p;
  p.events = read_events(events_path);
  p.cands = read_candidates(cands_path, p.events);
  p.split = split_candidates(p.cands.per_event, p.events.events.size(), split);
  return p;
}

int cmd_train(const Common& c, const std::string& events_path, const std::string& cands_path, std::string history) {
  RunConfig rc = resolve_config(c);
  Prepared p = load_and_split(events_path, cands_path, rc.split);
  rc.detector = p.events.detector;
  const std::size_t n_st = rc.detector.n_stations();
  const auto train_set = expand_split(p.events.events, p.split.train, n_st);
  const auto test_set = expand_split(p.events.events, p.split.test, n_st);
  std::printf("train candidates %zu samples %zu | test candidates %zu samples %zu\n", p.split.train.size(),
              total_samples(train_set), p.split.test.size(), total_samples(test_set));

  const TrainConfig tc = rc.effective_train();
  CatchProlongNet net(rc.effective_model(), tc.init_seed);
  if (history.empty()) history = c.out + ".history.jsonl";
  std::ofstream hist(history, std::ios::binary);
  if (!hist) throw Error("cannot write '" + history + "'");
  json prov = provenance("train", rc, {{"events", events_path}, {"candidates", cands_path}});
  hist << json{{"schema", "cp-history"}, {"version", kFormatVersion}, {"provenance", prov}}.dump() << "\n";

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult res = train(net, train_set, &test_set, tc, [&](const EpochRecord& r) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    hist << json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"test_loss", r.test_loss},
                 {"metrics", metrics_json(r.metrics)}}
                .dump()
         << "\n";
    hist.flush();
    std::printf("epoch %zu train_loss %.6f test_loss %.6f elapsed %.1fs\n", r.epoch, r.train_loss, r.test_loss, secs);
    std::fflush(stdout);
  });

  json training = prov;
  training["train_events"] = p.split.train_events.size();
  training["test_events"] = p.split.test_events.size();
  training["epochs_run"] = res.history.size();
  save_checkpoint(c.out, net, training);
  std::printf("wrote checkpoint %s and history %s\n", c.out.c_str(), history.c_str());
  return 0;
}

// ---- track

CatchProlongNet load_net(const std::string& path, const DetectorConfig* det) {
  require_file(path, "checkpoint");
  const Checkpoint ck = load_checkpoint(path);
  if (det && ck.model.station_z != det->station_z) {
    throw CliError("incompatible", "checkpoint was trained for other station planes than the event file");
  }
  return to_network(ck);
}

int cmd_track(const Common& c, const std::string& events_path, const std::string& ckpt_path) {
  RunConfig rc = resolve_config(c);
  require_file(events_path, "events");
  const EventFile ef = read_events(events_path);
  const CatchProlongNet net = load_net(ckpt_path, &ef.detector);
  std::vector<EventReconstruction> recon;
  ReconScore total;
  for (const auto& ev : ef.events) {
    auto tracks = follow_event(ev, net, rc.follow);
    total.add(score_reconstruction(ev, tracks, net.config().n_stations));
    recon.push_back(EventReconstruction{ev.event_id, std::move(tracks)});
  }
  write_reconstruction(c.out, recon, provenance("track", rc, {{"events", events_path}, {"checkpoint", ckpt_path}}));
  std::printf("events %zu tracks %zu efficiency %.4f ghost_rate %.4f\n", recon.size(), total.output,
              total.efficiency(), total.ghost_rate());
  return 0;
}

// ---- eval

int cmd_eval(const Common& c, const std::string& events_path, const std::string& ckpt_path,
             const std::string& cands_path, const std::string& recon_path, const std::string& which) {
  RunConfig rc = resolve_config(c);
  if (cands_path.empty() == recon_path.empty()) {
    throw CliError("usage", "eval needs exactly one of --candidates or --reconstruction");
  }
  json report{{"provenance", provenance("eval", rc,
                                        {{"events", events_path},
                                         {"checkpoint", ckpt_path},
                                         {"candidates", cands_path},
                                         {"reconstruction", recon_path}})}};

  if (!recon_path.empty()) {
    require_file(events_path, "events");
    require_file(recon_path, "reconstruction");
    const EventFile ef = read_events(events_path);
    const ReconFile rf = read_reconstruction(recon_path);
    std::map<std::int64_t, const Event*> by_id;
    for (const auto& ev : ef.events) by_id[ev.event_id] = &ev;
    ReconScore total;
    for (const auto& er : rf.events) {
      auto it = by_id.find(er.event_id);
      if (it == by_id.end()) throw CliError("bad_input", "event " + std::to_string(er.event_id) + " not in truth file");
      total.add(score_reconstruction(*it->second, er.tracks, ef.detector.n_stations()));
    }
    report["tracks"] = {{"reconstructable", total.reconstructable}, {"found", total.found},
                        {"output", total.output},                   {"ghosts", total.ghosts},
                        {"efficiency", total.efficiency()},         {"ghost_rate", total.ghost_rate()},
                        {"disjoint", total.disjoint}};
    std::ostringstream tidy;
    tidy.precision(17);
    tidy << "metric,value\nreconstructable," << total.reconstructable << "\nfound," << total.found << "\noutput,"
         << total.output << "\nghosts," << total.ghosts << "\nefficiency," << total.efficiency() << "\nghost_rate,"
         << total.ghost_rate() << "\n";
    write_text(c.out + ".tracks.csv", tidy.str());
    write_text(c.out + ".json", report.dump(2) + "\n");
    std::printf("efficiency %.4f ghost_rate %.4f (%zu/%zu found, %zu output)\n", total.efficiency(), total.ghost_rate(),
                total.found, total.reconstructable, total.output);
    return 0;
  }

  const Checkpoint ck = [&] {
    require_file(ckpt_path, "checkpoint");
    return load_checkpoint(ckpt_path);
  }();
  // the held-out split is the one the checkpoint was trained with
  SplitConfig split = rc.split;
  if (ck.training.is_object() && ck.training.contains("config")) {
    split = run_config_from_json(ck.training["config"]).split;
  }
  Prepared p = load_and_split(events_path, cands_path, split);
  const CatchProlongNet net = to_network(ck);
  if (net.config().station_z != p.events.detector.station_z) {
    throw CliError("incompatible", "checkpoint was trained for other station planes than the event file");
  }
  const std::size_t n_st = net.config().n_stations;
  std::vector<CandidateRef> refs;
  std::vector<std::size_t> ev_idx;
  if (which == "test" || which == "all") {
    refs.insert(refs.end(), p.split.test.begin(), p.split.test.end());
    ev_idx.insert(ev_idx.end(), p.split.test_events.begin(), p.split.test_events.end());
  }
  if (which == "train" || which == "all") {
    refs.insert(refs.end(), p.split.train.begin(), p.split.train.end());
    ev_idx.insert(ev_idx.end(), p.split.train_events.begin(), p.split.train_events.end());
  }
  if (which != "test" && which != "train" && which != "all") throw CliError("usage", "--split must be test, train or all");
  std::stable_sort(refs.begin(), refs.end(), [](const auto& a, const auto& b) { return a.event < b.event; });
  std::sort(ev_idx.begin(), ev_idx.end());

  const auto samples = expand_split(p.events.events, refs, n_st);
  const MetricsTable table = evaluate(net, samples, EvalOptions{rc.train.threshold, 512});
  std::vector<Event> evs;
  for (auto i : ev_idx) evs.push_back(p.events.events[i]);
  const EllipseDensity dens = ellipse_density(evs, net);

  std::string tidy = metrics_tidy_csv(table);
  {
    std::ostringstream extra;
    extra.precision(17);
    for (std::size_t s = 0; s < n_st; ++s) {
      if (dens.ellipses[s] == 0) continue;
      extra << "station" << s << ",hits_in_ellipse," << dens.mean_hits[s] << "\n";
    }
    tidy += extra.str();
  }
  write_text(c.out + ".table.csv", metrics_table_csv(table, n_st));
  write_text(c.out + ".tidy.csv", tidy);
  report["split"] = which;
  report["candidates"] = refs.size();
  report["metrics"] = metrics_json(table);
  report["ellipse_density"] = {{"busiest_station", dens.busiest},
                               {"busiest_mean_hits", dens.busiest_mean_hits()},
                               {"mean_hits", dens.mean_hits},
                               {"ellipses", dens.ellipses},
                               {"station_hits", dens.station_hits}};
  write_text(c.out + ".json", report.dump(2) + "\n");
  std::fputs(metrics_table_csv(table, n_st).c_str(), stdout);
  std::printf("hits per ellipse on busiest station %zu: %.3f\n", dens.busiest, dens.busiest_mean_hits());
  return 0;
}

// ---- bench

struct BenchRow {
  std::size_t batch = 0;
  std::size_t workers = 0;
  std::size_t candidates = 0;
  double seconds = 0.0;
  double per_sec() const { return seconds > 0.0 ? double(candidates) / seconds : 0.0; }
};

BenchRow bench_run(const CatchProlongNet& net, const std::vector<std::vector<Point3>>& pts, std::size_t batch,
                   std::size_t workers, std::size_t repeat) {
  BenchRow row{batch, workers, pts.size() * repeat, 0.0};
  if (pts.empty()) return row;
  const std::size_t n_batches = (pts.size() + batch - 1) / batch;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t rep = 0; rep < repeat; ++rep) {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t b; (b = next.fetch_add(1)) < n_batches;) {
        PrefixBatch prefixes;
        for (std::size_t i = b * batch; i < std::min(pts.size(), (b + 1) * batch); ++i) prefixes.emplace_back(pts[i]);
        volatile auto sink = net.forward_batch(prefixes).size();
        (void)sink;
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) return line.substr(line.find(':') + 2);
  }
  return "unknown";
}

int cmd_bench(const Common& c, const std::string& events_path, const std::string& ckpt_path,
              const std::string& cands_path, std::size_t repeat, std::size_t workers, std::size_t limit) {
  RunConfig rc = resolve_config(c);
  require_file(events_path, "events");
  require_file(cands_path, "candidates");
  const EventFile ef = read_events(events_path);
  const CandidateFile cf = read_candidates(cands_path, ef);
  const CatchProlongNet net = load_net(ckpt_path, &ef.detector);
  std::vector<std::vector<Point3>> pts;
  for (const auto& ec : cf.per_event) {
    for (const auto& cand : ec.candidates) {
      if (pts.size() < limit) pts.push_back(cand.points);
    }
  }
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  if (workers == 0) workers = std::max<std::size_t>(2, hw);
  std::vector<BenchRow> rows{bench_run(net, pts, 1, 1, repeat), bench_run(net, pts, 128, 1, repeat),
                             bench_run(net, pts, 128, workers, repeat)};
  json jrows = json::array();
  std::printf("batch,workers,candidates,seconds,candidates_per_sec,us_per_candidate\n");
  for (const auto& r : rows) {
    const double us = r.candidates ? r.seconds * 1e6 / double(r.candidates) : 0.0;
    std::printf("%zu,%zu,%zu,%.4f,%.1f,%.3f\n", r.batch, r.workers, r.candidates, r.seconds, r.per_sec(), us);
    jrows.push_back({{"batch", r.batch}, {"workers", r.workers}, {"candidates", r.candidates},
                     {"seconds", r.seconds}, {"candidates_per_sec", r.per_sec()}, {"us_per_candidate", us}});
  }
  const double speedup = rows[0].per_sec() > 0.0 ? rows[1].per_sec() / rows[0].per_sec() : 0.0;
  std::printf("batch 128 vs batch 1 speedup %.2fx\n", speedup);
  std::printf("hardware: %s, %zu hardware threads\n", cpu_model().c_str(), hw);
  std::printf("reference: 3483608 candidates/s on 2x Tesla V100 (GPU, different model scale and data; not comparable)\n");
  json report{{"provenance", provenance("bench", rc, {{"events", events_path}, {"checkpoint", ckpt_path},
                                                       {"candidates", cands_path}})},
              {"hardware", {{"cpu", cpu_model()}, {"hardware_threads", hw}}},
              {"rows", jrows},
              {"batch128_speedup", speedup},
              {"reference_gpu",
               {{"candidates_per_sec", 3483608}, {"hardware", "2x Tesla V100"}, {"comparable", false}}}};
  if (!c.out.empty()) write_text(c.out, report.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cpctl: toy track finding with a catch-and-prolong recurrent network"};
  app.require_subcommand(1);

  Common c;
  std::size_t n_events = 2000;
  auto* sim = app.add_subcommand("simulate", "generate toy events");
  add_common(sim, c);
  sim->add_option("--n-events", n_events, "number of events");

  std::string events, cands, ckpt, recon, history, which = "test";
  auto* seed = app.add_subcommand("seed", "run the combinatorial seed search");
  add_common(seed, c);
  seed->add_option("--events", events)->required();

  auto* tr = app.add_subcommand("train", "train the network on a candidate file");
  add_common(tr, c);
  tr->add_option("--events", events)->required();
  tr->add_option("--candidates", cands)->required();
  tr->add_option("--history", history, "per-epoch history (default <out>.history.jsonl)");

  auto* tk = app.add_subcommand("track", "follow tracks with a trained checkpoint");
  add_common(tk, c);
  tk->add_option("--events", events)->required();
  tk->add_option("--checkpoint", ckpt)->required();

  auto* ev = app.add_subcommand("eval", "metrics table from candidates, or track scores from a reconstruction");
  add_common(ev, c);
  ev->add_option("--events", events)->required();
  ev->add_option("--checkpoint", ckpt);
  ev->add_option("--candidates", cands);
  ev->add_option("--reconstruction", recon);
  ev->add_option("--split", which, "test | train | all");

  std::size_t repeat = 1, workers = 0, limit = 200000;
  auto* bn = app.add_subcommand("bench", "inference throughput");
  add_common(bn, c, false);
  bn->add_option("--events", events)->required();
  bn->add_option("--checkpoint", ckpt)->required();
  bn->add_option("--candidates", cands)->required();
  bn->add_option("--repeat", repeat);
  bn->add_option("--workers", workers, "0 = max(2, hardware threads)");
  bn->add_option("--limit", limit, "candidates taken from the file");

  std::string command = "cpctl";
  try {
    app.parse(argc, argv);
    if (*sim) return (command = "simulate", cmd_simulate(c, n_events));
    if (*seed) return (command = "seed", cmd_seed(c, events));
    if (*tr) return (command = "train", cmd_train(c, events, cands, history));
    if (*tk) return (command = "track", cmd_track(c, events, ckpt));
    if (*ev) return (command = "eval", cmd_eval(c, events, ckpt, cands, recon, which));
    if (*bn) return (command = "bench", cmd_bench(c, events, ckpt, cands, repeat, workers, limit));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"status", "error"}, {"command", command}, {"kind", "usage"}, {"message", e.what()}}.dump()
              << "\n";
    return 2;
  } catch (const CliError& e) {
    std::cerr << json{{"status", "error"}, {"command", command}, {"kind", e.kind}, {"message", e.what()}}.dump()
              << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << json{{"status", "error"}, {"command", command}, {"kind", "parse"}, {"message", e.what()}}.dump()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"status", "error"}, {"command", command}, {"kind", "failure"}, {"message", e.what()}}.dump()
              << "\n";
    return 1;
  }
  return 1;
}
