#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drivesql/geometry.hpp"
#include "drivesql/scene_db.hpp"

namespace drivesql {

enum class SubtaskKind {
    Distance,
    Closest,
    InstanceNumber,
    Speeds,
    Status,
    SameRoad,
    MotionEgo,
    MotionOthers,
    StatusEgo,
    StatusOthers,
    Overtaking,
    OnComing,
    Approaching,
    Crossing,
    Braking,
    LaneChanging,
    PlanningWithReasoning,
};

inline constexpr std::size_t kSubtaskCount = 17;
extern const std::array<SubtaskKind, kSubtaskCount> kAllSubtasks;

enum class TaskFamily { Perception, Prediction, Risk, Planning };

enum class RiskKind { Overtaking, OnComing, Approaching, Crossing, Braking, LaneChanging };
inline constexpr std::array<RiskKind, 6> kAllRisks = {RiskKind::Overtaking, RiskKind::OnComing,
                                                      RiskKind::Approaching, RiskKind::Crossing,
                                                      RiskKind::Braking,    RiskKind::LaneChanging};

std::string_view subtask_key(SubtaskKind s);
std::optional<SubtaskKind> parse_subtask(std::string_view key);
TaskFamily family_of(SubtaskKind s);
std::string_view family_key(TaskFamily f);
std::string_view risk_key(RiskKind r);
std::optional<RiskKind> parse_risk(std::string_view key);
SubtaskKind subtask_of(RiskKind r);
std::optional<RiskKind> risk_of(SubtaskKind s);

/// Thresholds of the risk predicates: distances in meters, speed in m/s.
struct RiskThresholds {
    double dis = 20.0;
    double dis_x = 3.0;
    double dis_y = 3.0;
    double s = 0.5;

    bool valid() const { return dis > 0 && dis_x > 0 && dis_y > 0 && s > 0; }
    friend bool operator==(const RiskThresholds&, const RiskThresholds&) = default;
};

/// Corrected reads the overtaking/oncoming clauses as a longitudinal sign flip
/// and applies absolute values to lateral bounds. Literal evaluates the
/// published conditions verbatim (Overtaking never fires).
enum class PredicateMode { Corrected, Literal };

struct DistanceResult {
    double x = 0.0;
    double y = 0.0;
    double l = 0.0;
};

struct EgoStatus {
    double speed_delta = 0.0;
    Vec3 motion;
};

struct OthersStatus {
    std::map<std::string, double> speed_delta;
    std::map<std::string, Vec3> motion;
};

using RiskInstances = std::vector<InstanceInfo>;

struct RiskScan {
    RiskInstances detected;
    /// Instances of frame_i missing from a frame their predicate needs.
    std::size_t skipped = 0;
};

struct PlanningResult {
    std::map<RiskKind, RiskInstances> risks;
    double ego_speed_delta = 0.0;
    Vec3 ego_motion;
};

DistanceResult distance(const SceneDatabase& db, const std::string& instance_info_id);

/// Closest visible instance per view (All = every instance); ties go to the
/// smaller info_id. Views without a visible instance are absent.
std::map<View, InstanceInfo> closest(const SceneDatabase& db, const std::string& frame_id);

/// view -> category -> count. Missing categories mean zero.
using InstanceCounts = std::map<View, std::map<std::string, int>>;
InstanceCounts instance_number(const SceneDatabase& db, const std::string& frame_id);
int count_of(const InstanceCounts& counts, View view, const std::string& category);

double speeds(const SceneDatabase& db, const std::string& instance_info_id);
std::string status(const SceneDatabase& db, const std::string& instance_info_id);
bool same_road(const SceneDatabase& db, const std::string& instance_info_id, const std::string& frame_id);

Vec3 motion_ego(const SceneDatabase& db, const std::string& frame_i, const std::string& frame_next);

/// info_id (in frame_i) -> displacement to the same physical instance in
/// frame_next, expressed in the instance's own frame at frame_i.
std::map<std::string, Vec3> motion_others(const SceneDatabase& db, const std::string& frame_i,
                                          const std::string& frame_next);

EgoStatus status_ego(const SceneDatabase& db, const std::string& frame_i, const std::string& frame_next);
OthersStatus status_others(const SceneDatabase& db, const std::string& frame_i, const std::string& frame_next);

/// Throws ArgumentError unless the three frames are consecutive in one scene.
void require_consecutive(const SceneDatabase& db, const std::string& frame_prev, const std::string& frame_i,
                         const std::string& frame_next);

/// Everything a risk predicate reads for one instance.
struct RiskInputs {
    Vec3 motion_prev;  ///< frame_i -> frame_prev
    Vec3 motion_next;  ///< frame_i -> frame_next
    double l_i = 0.0;
    double l_prev = 0.0;
    double v_i = 0.0;
    double v_prev = 0.0;
    bool same_road_i = false;
    bool same_road_prev = false;
};

bool risk_predicate(RiskKind kind, const RiskInputs& in, const RiskThresholds& th,
                    PredicateMode mode = PredicateMode::Corrected);

/// True when the predicate of `kind` reads motion toward frame_next.
bool needs_next_frame(RiskKind kind);

RiskScan scan_risk(const SceneDatabase& db, RiskKind kind, const std::string& frame_prev,
                   const std::string& frame_i, const std::string& frame_next, const RiskThresholds& th,
                   PredicateMode mode = PredicateMode::Corrected);

RiskInstances detect_risk(const SceneDatabase& db, RiskKind kind, const std::string& frame_prev,
                          const std::string& frame_i, const std::string& frame_next, const RiskThresholds& th,
                          PredicateMode mode = PredicateMode::Corrected);

PlanningResult planning_with_reasoning(const SceneDatabase& db, const std::string& frame_prev,
                                       const std::string& frame_i, const std::string& frame_next,
                                       const RiskThresholds& th, PredicateMode mode = PredicateMode::Corrected);

}  // namespace drivesql
