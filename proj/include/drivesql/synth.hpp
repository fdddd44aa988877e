#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivesql/geometry.hpp"
#include "drivesql/scene_db.hpp"
#include "drivesql/task_sql.hpp"

namespace drivesql {

struct Waypoint {
    double t = 0.0;
    Vec3 position;
    double heading = 0.0;  // radians about +z
    double speed = 0.0;
    /// Lane from this waypoint on; unset keeps the previous lane.
    std::optional<std::string> lane;
};

/// One scripted instance track. kind is nullopt for benign tracks.
struct ScenarioScript {
    std::string name;
    std::optional<RiskKind> kind;
    std::vector<Waypoint> waypoints;
    std::string category = "car";
    std::string lane = "lane_2";
    std::string road = "main";
};

/// Risk kinds a script's track is labelled with: its own kind, plus Approaching
/// for OnComing, whose predicate implies Approaching's.
std::set<RiskKind> expected_labels(const ScenarioScript& script);

struct SynthOptions {
    std::string scene_id;  // empty: derived from the seed
    double dt = 0.5;
    double ego_speed = 5.0;
    double ego_heading = 0.0;
    Vec3 ego_start;
    std::string ego_lane = "lane_1";
    std::string road = "main";
};

/// One scene: the ego drives straight at constant speed, every script becomes
/// an instance track present while its waypoints cover the frame time.
CanonicalAnnotations synth_scene(const std::vector<ScenarioScript>& scripts, std::size_t n_frames, std::uint64_t seed,
                                 const SynthOptions& options = {});

/// Appends `part` to `into`; a repeated scene, frame or row id is a ValidationError.
void merge_annotations(CanonicalAnnotations& into, CanonicalAnnotations part);

struct RandomSceneOptions {
    std::size_t min_frames = 3;
    std::size_t max_frames = 8;
    std::size_t max_instances = 12;
    double extent = 25.0;  // instances start within +-extent meters of the ego
};

/// Random scripts and ego motion drawn from `seed`. Tracks may start late, end
/// early and leave the important radius.
CanonicalAnnotations random_scene(const std::string& scene_id, std::uint64_t seed,
                                  const RandomSceneOptions& options = {});

/// A curated risk scenario; the designated window is (start, start+1, start+2).
struct CuratedScenario {
    std::string scene_id;
    std::size_t n_frames = 3;
    std::size_t window_start = 0;
    SynthOptions options;
    std::vector<ScenarioScript> scripts;
};

/// Two scenarios per risk kind plus two benign ones.
std::vector<CuratedScenario> curated_scenarios();
CanonicalAnnotations synth_curated(const CuratedScenario& scenario, std::uint64_t seed = 0);

ScenarioScript script_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioScript& script);

/// Script document:
///   {"scenes": [{"scene_id", "n_frames", "seed", "dt", "ego_speed",
///                "ego_heading_deg", "ego_lane", "scripts": [...]}],
///    "curated": true,
///    "random": {"scenes", "seed", "min_frames", "max_frames", "max_instances"}}
/// Every key is optional.
CanonicalAnnotations synth_from_document(const nlohmann::json& doc);

}  // namespace drivesql
