// Waypoint tracks: built-ins, random generation and the text file format.
#pragma once

#include "maven/dynamics.hpp"
#include "maven/rng.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace maven {

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 sample(Rng& rng) const {
    return {rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()), rng.uniform(lo.z(), hi.z())};
  }
};

struct Track {
  std::vector<Vec3> waypoints;
  std::size_t cursor = 0;  // index of the next waypoint to pass
  double accept_radius = 1.0;  // [m]

  std::size_t remaining() const { return waypoints.size() - cursor; }
  bool finished() const { return cursor >= waypoints.size(); }

  // k-th upcoming waypoint; past the end the final waypoint is repeated.
  const Vec3& upcoming(std::size_t k) const {
    const std::size_t idx = std::min(cursor + k, waypoints.size() - 1);
    return waypoints[idx];
  }
};

// A named evaluation course. The first waypoint is the start position; the
// remaining ones are the targets.
struct NamedTrack {
  std::string name;
  std::vector<Vec3> waypoints;
  double accept_radius = 1.0;
};

NamedTrack switchback_track();

/// `count` waypoints uniform in `box`, consecutive ones at least
/// `min_spacing` apart. The first is the start position.
NamedTrack random_track(const Box& box, std::size_t count, double min_spacing, Rng& rng,
                        std::string name = "random");

/// Built-in lookup; returns false for unknown names.
bool builtin_track(const std::string& name, NamedTrack& out);

/// Track files are YAML:
///   name: figure
///   accept_radius: 1.0     # optional
///   waypoints:
///     - [0, 0, 1]
///     - [2, 1, 1.2]
/// Throws std::runtime_error with the offending line on malformed input.
NamedTrack load_track(const std::filesystem::path& path);
void save_track(const NamedTrack& track, const std::filesystem::path& path);

}  // namespace maven
