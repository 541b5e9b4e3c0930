#include "cp/io.hpp"

#include <fstream>
#include <map>

#include "cp/error.hpp"
#include "cp/run_config.hpp"

namespace cp {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

json parse_line(const std::string& text, std::size_t line) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ParseError("record is not an object", line);
    return j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what(), line);
  }
}

template <typename T>
T field(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("missing field '") + key + "'", line);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field '") + key + "' has the wrong type", line);
  }
}

const json& array_field(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array()) throw ParseError(std::string("missing array '") + key + "'", line);
  return *it;
}

json make_header(const char* schema, const json& provenance) {
  json h{{"schema", schema}, {"version", kFormatVersion}};
  if (!provenance.is_null()) h["provenance"] = provenance;
  return h;
}

}  // namespace

json read_header(std::istream& in, const std::string& schema) {
  std::string text;
  if (!std::getline(in, text)) throw ParseError("missing header", 1);
  json h = parse_line(text, 1);
  if (!h.contains("schema") || h["schema"] != schema) {
    throw ParseError("expected schema '" + schema + "', found " + (h.contains("schema") ? h["schema"].dump() : "none"), 1);
  }
  if (!h.contains("version") || !h["version"].is_number_integer() || h["version"].get<int>() != kFormatVersion) {
    throw ParseError("unsupported " + schema + " version " + (h.contains("version") ? h["version"].dump() : "none"), 1);
  }
  return h;
}

void write_events(std::ostream& out, const DetectorConfig& det, std::span<const Event> events,
                  const json& provenance) {
  json header = make_header(kEventSchema, provenance);
  header["detector"] = to_json(det);
  out << header.dump() << "\n";
  for (const auto& ev : events) {
    json tracks = json::array();
    for (const auto& t : ev.tracks) {
      tracks.push_back({{"track_id", t.track_id}, {"kappa", t.kappa}, {"phi0", t.phi0}, {"ty", t.ty}});
    }
    json hits = json::array();
    for (const auto& h : ev.hits) {
      hits.push_back({{"station", h.station}, {"x", h.x}, {"y", h.y}, {"z", h.z}, {"track_id", h.track_id}});
    }
    out << json{{"event_id", ev.event_id}, {"tracks", tracks}, {"hits", hits}}.dump() << "\n";
  }
  if (!out) throw Error("event write failed");
}

void write_events(const std::string& path, const DetectorConfig& det, std::span<const Event> events,
                  const json& provenance) {
  auto out = open_out(path);
  write_events(out, det, events, provenance);
}

EventFile read_events(std::istream& in) {
  EventFile file;
  file.header = read_header(in, kEventSchema);
  if (!file.header.contains("detector")) throw ParseError("header lacks the detector description", 1);
  try {
    file.detector = detector_from_json(file.header["detector"]);
  } catch (const Error& e) {
    throw ParseError(e.what(), 1);
  }
  const auto n_st = static_cast<int>(file.detector.n_stations());
  std::string text;
  std::size_t line = 1;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    const json rec = parse_line(text, line);
    Event ev;
    ev.event_id = field<std::int64_t>(rec, "event_id", line);
    for (const auto& t : array_field(rec, "tracks", line)) {
      ev.tracks.push_back(TrackParams{field<double>(t, "kappa", line), field<double>(t, "phi0", line),
                                      field<double>(t, "ty", line), field<int>(t, "track_id", line)});
    }
    for (const auto& h : array_field(rec, "hits", line)) {
      Hit hit{field<int>(h, "station", line), field<double>(h, "x", line), field<double>(h, "y", line),
              field<double>(h, "z", line), field<int>(h, "track_id", line)};
      if (hit.station < 0 || hit.station >= n_st) throw ParseError("hit station out of range", line);
      ev.hits.push_back(hit);
    }
    file.events.push_back(std::move(ev));
  }
  return file;
}

EventFile read_events(const std::string& path) {
  auto in = open_in(path);
  return read_events(in);
}

void write_candidates(std::ostream& out, std::span<const Event> events, std::span<const EventCandidates> per_event,
                      const json& provenance) {
  out << make_header(kCandidateSchema, provenance).dump() << "\n";
  for (const auto& ec : per_event) {
    const auto event_id = events[ec.event].event_id;
    for (const auto& c : ec.candidates) {
      out << json{{"event_id", event_id}, {"hit_refs", c.hit_refs}, {"label", to_string(c.label)}}.dump() << "\n";
    }
  }
  if (!out) throw Error("candidate write failed");
}

void write_candidates(const std::string& path, std::span<const Event> events,
                      std::span<const EventCandidates> per_event, const json& provenance) {
  auto out = open_out(path);
  write_candidates(out, events, per_event, provenance);
}

CandidateFile read_candidates(std::istream& in, const EventFile& events) {
  CandidateFile file;
  file.header = read_header(in, kCandidateSchema);
  std::map<std::int64_t, std::size_t> by_id;
  for (std::size_t i = 0; i < events.events.size(); ++i) by_id.emplace(events.events[i].event_id, i);

  std::map<std::size_t, std::vector<TrackCandidate>> grouped;
  std::string text;
  std::size_t line = 1;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    const json rec = parse_line(text, line);
    const auto event_id = field<std::int64_t>(rec, "event_id", line);
    auto it = by_id.find(event_id);
    if (it == by_id.end()) throw ParseError("event_id " + std::to_string(event_id) + " not in the event file", line);
    const Event& ev = events.events[it->second];
    TrackCandidate c;
    c.hit_refs = field<std::vector<std::size_t>>(rec, "hit_refs", line);
    if (!rec.contains("label")) throw ParseError("missing field 'label'", line);
    try {
      c.label = label_from_string(field<std::string>(rec, "label", line));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(e.what(), line);
    }
    c.points.push_back(Point3{});
    for (std::size_t k = 0; k < c.hit_refs.size(); ++k) {
      const auto ref = c.hit_refs[k];
      if (ref >= ev.hits.size()) throw ParseError("hit_ref " + std::to_string(ref) + " out of range", line);
      const Hit& h = ev.hits[ref];
      if (h.station != static_cast<int>(k)) throw ParseError("hit_refs are not station-consecutive", line);
      c.points.push_back(Point3{h.x, h.y, h.z});
    }
    grouped[it->second].push_back(std::move(c));
  }
  for (auto& [ev, cands] : grouped) file.per_event.push_back(EventCandidates{ev, std::move(cands)});
  return file;
}

CandidateFile read_candidates(const std::string& path, const EventFile& events) {
  auto in = open_in(path);
  return read_candidates(in, events);
}

void write_reconstruction(const std::string& path, std::span<const EventReconstruction> recon,
                          const json& provenance) {
  auto out = open_out(path);
  out << make_header(kReconSchema, provenance).dump() << "\n";
  for (const auto& er : recon) {
    json tracks = json::array();
    for (const auto& t : er.tracks) tracks.push_back({{"hit_refs", t.hit_refs}, {"probability", t.probability}});
    out << json{{"event_id", er.event_id}, {"tracks", tracks}}.dump() << "\n";
  }
  if (!out) throw Error("reconstruction write failed");
}

ReconFile read_reconstruction(const std::string& path) {
  auto in = open_in(path);
  ReconFile file;
  file.header = read_header(in, kReconSchema);
  std::string text;
  std::size_t line = 1;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    const json rec = parse_line(text, line);
    EventReconstruction er;
    er.event_id = field<std::int64_t>(rec, "event_id", line);
    for (const auto& t : array_field(rec, "tracks", line)) {
      er.tracks.push_back(ReconTrack{field<std::vector<std::size_t>>(t, "hit_refs", line),
                                     field<double>(t, "probability", line)});
    }
    file.events.push_back(std::move(er));
  }
  return file;
}

}  // namespace cp
