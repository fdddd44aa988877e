#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "drivesql/generation.hpp"

namespace drivesql {

struct ScoredDetection {
    View view = View::Front;
    BBox2D bbox;
    double score = 0.0;
};

/// A model answer for one pair. Detections are present exactly for risk subtasks.
struct Prediction {
    std::string pair_id;
    std::string response_text;
    std::optional<std::vector<ScoredDetection>> detections;
};

nlohmann::json to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);
void write_predictions(std::ostream& os, const std::vector<Prediction>& preds);
std::vector<Prediction> read_predictions(std::istream& is);

/// Predictions that repeat each pair's own response (risk detections from the
/// ground truth at score 1). Evaluating them must score perfectly.
std::vector<Prediction> ground_truth_predictions(const std::vector<InstructionResponsePair>& pairs);

// ---- MAE ------------------------------------------------------------------

/// Every maximal [-+]?\d+(\.\d+)? in order of appearance.
std::vector<double> extract_numbers(std::string_view text);

struct MaeResult {
    double mae = 0.0;
    std::size_t scored = 0;
    std::size_t failed = 0;  ///< fewer extracted numbers than reference values
};

/// The first k extracted numbers are aligned to the k reference values.
/// Throws UndefinedScoreError when no pair is scorable.
MaeResult mae(const std::vector<std::string>& responses, const std::vector<std::vector<double>>& references);

// ---- Accuracy -------------------------------------------------------------

/// Lowercased alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Labels from `label_set` that occur in `text` as whole token sequences.
std::set<std::string> label_mentions(std::string_view text, const std::set<std::string>& label_set);

/// Correct iff exactly one label is mentioned and it equals the reference.
bool label_correct(std::string_view text, const std::string& reference, const std::set<std::string>& label_set);

double accuracy(const std::vector<std::string>& responses, const std::vector<std::string>& references,
                const std::set<std::string>& label_set);

// ---- MAP ------------------------------------------------------------------

inline constexpr double kDefaultIouThreshold = 0.5;

double iou(const BBox2D& a, const BBox2D& b);

/// References and scored detections of one pair.
struct DetectionSample {
    std::string pair_id;
    std::vector<DetectionRef> references;
    std::vector<ScoredDetection> detections;
};

/// All-point interpolated AP over a corpus; nullopt when it has no references.
std::optional<double> average_precision(const std::vector<DetectionSample>& corpus,
                                        double iou_threshold = kDefaultIouThreshold);

/// Mean AP over the corpora (one per risk subtask) that have references.
std::optional<double> map_score(const std::vector<std::vector<DetectionSample>>& corpora,
                                double iou_threshold = kDefaultIouThreshold);

// ---- BLEU -----------------------------------------------------------------

struct BleuStats {
    std::array<std::uint64_t, 4> matched{};
    std::array<std::uint64_t, 4> total{};
    std::uint64_t candidate_length = 0;
    std::uint64_t reference_length = 0;
};

BleuStats bleu_stats(const std::vector<std::string>& candidates, const std::vector<std::string>& references);

/// Corpus BLEU-4 with clipping and brevity penalty. Throws UndefinedScoreError
/// on an empty corpus.
double bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
            bool add_one_smoothing = false);

// ---- Split ----------------------------------------------------------------

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

/// Floor + largest-remainder sizes; remainder ties go train, then val, then test.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios);

/// Seeded shuffle of the sorted ids; partition by split_sizes.
DatasetSplit split_dataset(std::vector<std::string> scene_ids, const std::array<double, 3>& ratios = {7.5, 1.5, 1.5},
                           std::uint64_t seed = 0);

// ---- Report ---------------------------------------------------------------

struct MetricGroups {
    std::optional<double> perception_mae;
    std::optional<double> perception_acc;
    std::optional<double> prediction_mae;
    std::optional<double> prediction_acc;
    std::optional<double> risk_map;
    std::optional<double> reasoning_bleu;

    bool all_defined() const {
        return perception_mae && perception_acc && prediction_mae && prediction_acc && risk_map && reasoning_bleu;
    }
};

struct MetricReport {
    std::map<SubtaskKind, double> per_subtask;
    MetricGroups groups;
    double extraction_failure_rate = 0.0;
};

struct EvaluationOptions {
    double iou_threshold = kDefaultIouThreshold;
    bool bleu_smoothing = false;
};

/// Routes every subtask to its metric family. Pairs without a prediction score
/// as worst case. Duplicate or unknown prediction ids throw ValidationError.
MetricReport evaluate(const std::vector<InstructionResponsePair>& pairs, const std::vector<Prediction>& predictions,
                      const EvaluationOptions& options = {});

nlohmann::json to_json(const MetricReport& report);

}  // namespace drivesql
