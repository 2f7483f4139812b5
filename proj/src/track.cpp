#include "maven/track.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <stdexcept>

namespace maven {

NamedTrack switchback_track() {
  return {"switchback", {Vec3(0.0, 0.0, 1.0), Vec3(-3.0, -3.0, 1.0), Vec3(3.0, 3.0, 1.0)}, 1.0};
}

NamedTrack random_track(const Box& box, std::size_t count, double min_spacing, Rng& rng,
                        std::string name) {
  NamedTrack track;
  track.name = std::move(name);
  track.waypoints.reserve(count);
  while (track.waypoints.size() < count) {
    Vec3 candidate = box.sample(rng);
    if (!track.waypoints.empty() && (candidate - track.waypoints.back()).norm() < min_spacing) {
      continue;
    }
    track.waypoints.push_back(candidate);
  }
  return track;
}

bool builtin_track(const std::string& name, NamedTrack& out) {
  if (name == "switchback") {
    out = switchback_track();
    return true;
  }
  return false;
}

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const YAML::Mark& mark, const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(mark.line + 1) + ": " + what);
}

}  // namespace

NamedTrack load_track(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    fail(path, e.mark, e.msg);
  }
  NamedTrack track;
  track.name = root["name"] ? root["name"].as<std::string>() : path.stem().string();
  if (root["accept_radius"]) {
    track.accept_radius = root["accept_radius"].as<double>();
    if (!(track.accept_radius > 0.0)) fail(path, root["accept_radius"].Mark(), "accept_radius must be > 0");
  }
  const YAML::Node wps = root["waypoints"];
  if (!wps || !wps.IsSequence()) fail(path, root.Mark(), "missing 'waypoints' sequence");
  for (const auto& wp : wps) {
    if (!wp.IsSequence() || wp.size() != 3) fail(path, wp.Mark(), "waypoint must be [x, y, z]");
    try {
      track.waypoints.emplace_back(wp[0].as<double>(), wp[1].as<double>(), wp[2].as<double>());
    } catch (const YAML::Exception&) {
      fail(path, wp.Mark(), "waypoint coordinates must be numbers");
    }
  }
  if (track.waypoints.size() < 2) fail(path, wps.Mark(), "a track needs a start and at least one target");
  return track;
}

void save_track(const NamedTrack& track, const std::filesystem::path& path) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << track.name;
  out << YAML::Key << "accept_radius" << YAML::Value << track.accept_radius;
  out << YAML::Key << "waypoints" << YAML::Value << YAML::BeginSeq;
  for (const auto& wp : track.waypoints) {
    out << YAML::Flow << YAML::BeginSeq << wp.x() << wp.y() << wp.z() << YAML::EndSeq;
  }
  out << YAML::EndSeq << YAML::EndMap;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << out.c_str() << "\n";
}

}  // namespace maven
