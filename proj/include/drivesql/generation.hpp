#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "drivesql/hashing.hpp"
#include "drivesql/scene_db.hpp"
#include "drivesql/task_sql.hpp"

namespace drivesql {

// ---------------------------------------------------------------------------
// Ground truth carried by every pair. The variant follows the metric family:
// Numeric -> MAE, Label -> accuracy, Detection -> MAP, FreeText -> BLEU.

struct NumericTruth {
    std::vector<double> values;
    friend bool operator==(const NumericTruth&, const NumericTruth&) = default;
};

struct LabelTruth {
    std::string label;
    friend bool operator==(const LabelTruth&, const LabelTruth&) = default;
};

struct DetectionRef {
    View view = View::Front;
    BBox2D bbox;
    std::string instance_id;
    friend bool operator==(const DetectionRef&, const DetectionRef&) = default;
};

struct DetectionTruth {
    std::vector<DetectionRef> detections;
    friend bool operator==(const DetectionTruth&, const DetectionTruth&) = default;
};

struct FreeTextTruth {
    std::string text;
    friend bool operator==(const FreeTextTruth&, const FreeTextTruth&) = default;
};

using GroundTruth = std::variant<NumericTruth, LabelTruth, DetectionTruth, FreeTextTruth>;

enum class MetricFamily { Mae, Accuracy, Map, Bleu };
MetricFamily metric_family(SubtaskKind s);

struct InstructionResponsePair {
    std::string pair_id;
    std::string scene_id;
    std::vector<std::string> frame_ids;  ///< prev, current, next
    std::string task;
    SubtaskKind subtask = SubtaskKind::Distance;
    std::set<View> views_used;
    std::string instruction;
    std::string response;
    GroundTruth ground_truth;
    std::optional<RiskThresholds> thresholds_used;
    std::optional<std::string> revised_response;
    bool unverified = false;

    friend bool operator==(const InstructionResponsePair&, const InstructionResponsePair&) = default;
};

nlohmann::json to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const nlohmann::json& j);
nlohmann::json to_json(const InstructionResponsePair& pair);
InstructionResponsePair pair_from_json(const nlohmann::json& j);

/// One pair per line, keys sorted.
void write_jsonl(std::ostream& os, const std::vector<InstructionResponsePair>& pairs);
/// Errors carry the 1-based line number.
std::vector<InstructionResponsePair> read_jsonl(std::istream& is);

nlohmann::json to_json(const RiskThresholds& th);
RiskThresholds thresholds_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Templates

/// An instance as seen in one camera: rendered "<view, x1, y1, x2, y2>".
struct InstanceRef {
    View view = View::Front;
    BBox2D bbox;
};

/// The camera with the largest box area (ties: view order), or nullopt when
/// the instance is in no camera.
std::optional<InstanceRef> grounding_of(const InstanceInfo& info);

std::string render_instance(const InstanceRef& ref);
/// Fixed one-decimal rendering; never prints "-0.0".
std::string format_decimal(double v);

struct InstructionContext {
    std::optional<InstanceRef> instance;
    std::optional<View> view;
    std::optional<std::string> category;
};

/// Throws TemplateError when a field the subtask's template needs is absent.
std::string render_instruction(SubtaskKind subtask, const InstructionContext& ctx);

struct ClosestAnswer {
    View view = View::All;
    std::string category;
};
struct CountAnswer {
    View view = View::All;
    std::string category;
    int count = 0;
};
struct ScalarAnswer {
    double value = 0.0;
};
struct LabelAnswer {
    std::string label;
};
struct SameRoadAnswer {
    bool same = false;
};
struct MotionAnswer {
    Vec3 motion;
};
struct StatusAnswer {
    bool ego = true;
    double speed_delta = 0.0;
    Vec3 motion;
};
struct RiskAnswer {
    std::vector<DetectionRef> detections;
};
struct PlanningAnswer {
    /// Per risk kind, the categories of the detected instances in order.
    std::map<RiskKind, std::vector<std::string>> risk_categories;
    double speed_delta = 0.0;
    Vec3 motion;
};

using TaskResult = std::variant<DistanceResult, ClosestAnswer, CountAnswer, ScalarAnswer, LabelAnswer, SameRoadAnswer,
                                MotionAnswer, StatusAnswer, RiskAnswer, PlanningAnswer>;

struct RenderedResponse {
    std::string text;
    GroundTruth ground_truth;
};

/// Throws TemplateError when `result` is not the shape `subtask` produces.
RenderedResponse render_response(SubtaskKind subtask, const TaskResult& result);

/// Speed-trend label for a speed change: accelerating / decelerating / steady.
std::string speed_trend(double speed_delta);
inline constexpr double kSteadySpeedBand = 0.1;

/// Label vocabularies for accuracy-scored subtasks (defaults, before dataset
/// labels are merged in).
std::set<std::string> default_labels(SubtaskKind subtask);

// ---------------------------------------------------------------------------
// Dataset generation

struct OfflineRules {};
struct ExternalClient {
    std::string endpoint;
    double timeout_seconds = 10.0;
    int retries = 2;
};
using VerifierConfig = std::variant<OfflineRules, ExternalClient>;

struct GenerationConfig {
    std::uint64_t master_seed = 0;
    std::size_t windows_per_scene = 2;
    std::size_t max_instances_per_subtask = 5;
    RiskThresholds thresholds;
    std::set<SubtaskKind> enabled_subtasks{kAllSubtasks.begin(), kAllSubtasks.end()};
    VerifierConfig verifier = OfflineRules{};
    PredicateMode predicate_mode = PredicateMode::Corrected;
    /// Worker threads over scenes; 0 = OpenMP default.
    int jobs = 0;
};

struct KeyframeWindow {
    std::string prev;
    std::string current;
    std::string next;
    std::size_t start = 0;  ///< index of `prev` in the scene
};

/// Uniform random start index; throws ValidationError for scenes under three frames.
KeyframeWindow sample_window(const SceneRecord& scene, DeterministicRng& rng);

/// Up to `count` distinct windows in draw order.
std::vector<KeyframeWindow> sample_windows(const SceneRecord& scene, std::size_t count, DeterministicRng& rng);

/// Per-scene generator seed, independent of scheduling.
std::uint64_t scene_seed(std::uint64_t master_seed, const std::string& scene_id);

std::string make_pair_id(const std::string& scene_id, std::size_t window_start, SubtaskKind subtask,
                         const std::string& target);

struct GenerationDiagnostics {
    std::size_t ineligible_scenes = 0;
    std::size_t windows = 0;
    std::size_t skipped_instances = 0;
    std::size_t failed_pairs = 0;
    std::vector<std::string> failures;
};

struct GeneratedDataset {
    std::vector<InstructionResponsePair> pairs;
    GenerationDiagnostics diagnostics;
};

/// Instances of a frame that can be grounded in a camera, nearest first
/// (ties by info_id).
std::vector<const InstanceInfo*> important_instances(const SceneDatabase& db, const std::string& frame_id);

/// All pairs of one window, in subtask order.
std::vector<InstructionResponsePair> generate_window(const SceneDatabase& db, const std::string& scene_id,
                                                     const KeyframeWindow& window, const GenerationConfig& config,
                                                     GenerationDiagnostics& diag);

GeneratedDataset generate_dataset(const SceneDatabase& db, const GenerationConfig& config);

}  // namespace drivesql
