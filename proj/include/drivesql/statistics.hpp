#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivesql/generation.hpp"

namespace drivesql {

struct DatasetStats {
    std::map<SubtaskKind, std::size_t> pairs_per_subtask;
    std::map<std::string, double> task_proportions;
    std::map<View, std::size_t> responses_per_view;
    std::map<std::string, std::map<View, double>> view_percent_per_task;
    std::size_t instances_total = 0;        ///< distinct physical instances
    std::size_t instance_appearances = 0;   ///< instance rows over the keyframes
    std::size_t keyframes = 0;              ///< distinct keyframes referenced by pairs
    double avg_instances_per_keyframe = 0.0;
};

double avg_instances_per_keyframe(std::size_t appearances, std::size_t keyframes);

/// Throws LookupError when a pair references a frame missing from `db`.
DatasetStats compute_stats(const std::vector<InstructionResponsePair>& pairs, const SceneDatabase& db);

nlohmann::json to_json(const DatasetStats& stats);

/// task x view percentage matrix, header row first.
std::string view_percent_csv(const DatasetStats& stats);

}  // namespace drivesql
