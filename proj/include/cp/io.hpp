#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cp/dataset.hpp"
#include "cp/detector.hpp"
#include "cp/follower.hpp"

namespace cp {

// Line-oriented stage files: a JSON header object on the first line, then
// one JSON record per line. Doubles are written in shortest round-trip form,
// so reading restores every value bit for bit.
inline constexpr int kFormatVersion = 1;
inline constexpr const char* kEventSchema = "cp-events";
inline constexpr const char* kCandidateSchema = "cp-candidates";
inline constexpr const char* kReconSchema = "cp-reconstruction";

struct EventFile {
  DetectorConfig detector;
  std::vector<Event> events;
  nlohmann::json header;
};

// `provenance` (effective config, seeds) is embedded in the header when non-null.
void write_events(std::ostream& out, const DetectorConfig& det, std::span<const Event> events,
                  const nlohmann::json& provenance = nullptr);
void write_events(const std::string& path, const DetectorConfig& det, std::span<const Event> events,
                  const nlohmann::json& provenance = nullptr);
EventFile read_events(std::istream& in);
EventFile read_events(const std::string& path);

struct CandidateFile {
  std::vector<EventCandidates> per_event;  // event indices refer to the joined EventFile
  nlohmann::json header;
};

void write_candidates(std::ostream& out, std::span<const Event> events, std::span<const EventCandidates> per_event,
                      const nlohmann::json& provenance = nullptr);
void write_candidates(const std::string& path, std::span<const Event> events,
                      std::span<const EventCandidates> per_event, const nlohmann::json& provenance = nullptr);
// Rebuilds candidate points by joining hit_refs against the events.
CandidateFile read_candidates(std::istream& in, const EventFile& events);
CandidateFile read_candidates(const std::string& path, const EventFile& events);

struct EventReconstruction {
  std::int64_t event_id = 0;
  std::vector<ReconTrack> tracks;
};

struct ReconFile {
  std::vector<EventReconstruction> events;
  nlohmann::json header;
};

void write_reconstruction(const std::string& path, std::span<const EventReconstruction> recon,
                          const nlohmann::json& provenance = nullptr);
ReconFile read_reconstruction(const std::string& path);

// Reads the header line and checks schema and version.
nlohmann::json read_header(std::istream& in, const std::string& schema);

}  // namespace cp
