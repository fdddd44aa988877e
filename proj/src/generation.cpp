#include "drivesql/generation.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "drivesql/errors.hpp"

namespace drivesql {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Serialization

json to_json(const RiskThresholds& th) {
    return json{{"dis", th.dis}, {"dis_x", th.dis_x}, {"dis_y", th.dis_y}, {"s", th.s}};
}

RiskThresholds thresholds_from_json(const json& j) {
    RiskThresholds th;
    th.dis = j.at("dis").get<double>();
    th.dis_x = j.at("dis_x").get<double>();
    th.dis_y = j.at("dis_y").get<double>();
    th.s = j.at("s").get<double>();
    return th;
}

json to_json(const GroundTruth& gt) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, NumericTruth>) {
                return {{"type", "numeric"}, {"values", v.values}};
            } else if constexpr (std::is_same_v<T, LabelTruth>) {
                return {{"type", "label"}, {"label", v.label}};
            } else if constexpr (std::is_same_v<T, DetectionTruth>) {
                json dets = json::array();
                for (const auto& d : v.detections) {
                    dets.push_back({{"view", std::string(view_key(d.view))},
                                    {"bbox", to_json(d.bbox)},
                                    {"instance_id", d.instance_id}});
                }
                return {{"type", "detection"}, {"detections", dets}};
            } else {
                return {{"type", "free_text"}, {"text", v.text}};
            }
        },
        gt);
}

namespace {

BBox2D bbox_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw ValidationError("bbox must be [x1, y1, x2, y2]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

View view_from_json(const json& j) {
    auto v = parse_view(j.get<std::string>());
    if (!v) throw ValidationError("unknown view '" + j.get<std::string>() + "'");
    return *v;
}

}  // namespace

GroundTruth ground_truth_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "numeric") return NumericTruth{j.at("values").get<std::vector<double>>()};
    if (type == "label") return LabelTruth{j.at("label").get<std::string>()};
    if (type == "free_text") return FreeTextTruth{j.at("text").get<std::string>()};
    if (type == "detection") {
        DetectionTruth d;
        for (const auto& e : j.at("detections")) {
            d.detections.push_back(
                {view_from_json(e.at("view")), bbox_from_json(e.at("bbox")), e.at("instance_id").get<std::string>()});
        }
        return d;
    }
    throw ValidationError("unknown ground_truth type '" + type + "'");
}

json to_json(const InstructionResponsePair& p) {
    json views = json::array();
    for (View v : p.views_used) views.push_back(std::string(view_key(v)));
    json j{{"pair_id", p.pair_id},
           {"scene_id", p.scene_id},
           {"frame_ids", p.frame_ids},
           {"task", p.task},
           {"subtask", std::string(subtask_key(p.subtask))},
           {"views_used", views},
           {"instruction", p.instruction},
           {"response", p.response},
           {"ground_truth", to_json(p.ground_truth)}};
    if (p.thresholds_used) j["thresholds_used"] = to_json(*p.thresholds_used);
    if (p.revised_response) j["revised_response"] = *p.revised_response;
    if (p.unverified) j["unverified"] = true;
    return j;
}

InstructionResponsePair pair_from_json(const json& j) {
    InstructionResponsePair p;
    try {
        p.pair_id = j.at("pair_id").get<std::string>();
        p.scene_id = j.at("scene_id").get<std::string>();
        p.frame_ids = j.at("frame_ids").get<std::vector<std::string>>();
        p.task = j.at("task").get<std::string>();
        const std::string sub = j.at("subtask").get<std::string>();
        auto kind = parse_subtask(sub);
        if (!kind) throw ValidationError("unknown subtask '" + sub + "'");
        p.subtask = *kind;
        for (const auto& v : j.at("views_used")) p.views_used.insert(view_from_json(v));
        p.instruction = j.at("instruction").get<std::string>();
        p.response = j.at("response").get<std::string>();
        p.ground_truth = ground_truth_from_json(j.at("ground_truth"));
        if (j.contains("thresholds_used")) p.thresholds_used = thresholds_from_json(j.at("thresholds_used"));
        if (j.contains("revised_response")) p.revised_response = j.at("revised_response").get<std::string>();
        p.unverified = j.value("unverified", false);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed pair: ") + e.what());
    }
    if (p.frame_ids.size() != 3) throw ValidationError("pair '" + p.pair_id + "': field 'frame_ids' needs 3 ids");
    return p;
}

void write_jsonl(std::ostream& os, const std::vector<InstructionResponsePair>& pairs) {
    for (const auto& p : pairs) os << to_json(p).dump() << '\n';
}

std::vector<InstructionResponsePair> read_jsonl(std::istream& is) {
    std::vector<InstructionResponsePair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            pairs.push_back(pair_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Sampling

KeyframeWindow sample_window(const SceneRecord& scene, DeterministicRng& rng) {
    const auto& f = scene.frame_ids;
    if (f.size() < 3) {
        throw ValidationError("scene '" + scene.scene_id + "' has " + std::to_string(f.size()) +
                              " keyframes; a window needs 3");
    }
    const std::size_t start = rng.uniform_index(f.size() - 2);
    return {f[start], f[start + 1], f[start + 2], start};
}

std::vector<KeyframeWindow> sample_windows(const SceneRecord& scene, std::size_t count, DeterministicRng& rng) {
    const auto& f = scene.frame_ids;
    if (f.size() < 3) {
        throw ValidationError("scene '" + scene.scene_id + "' has " + std::to_string(f.size()) +
                              " keyframes; a window needs 3");
    }
    std::vector<std::size_t> starts(f.size() - 2);
    std::iota(starts.begin(), starts.end(), std::size_t{0});
    const std::size_t take = std::min(count, starts.size());
    std::vector<KeyframeWindow> out;
    for (std::size_t i = 0; i < take; ++i) {
        std::swap(starts[i], starts[i + rng.uniform_index(starts.size() - i)]);
        const std::size_t s = starts[i];
        out.push_back({f[s], f[s + 1], f[s + 2], s});
    }
    return out;
}

std::uint64_t scene_seed(std::uint64_t master_seed, const std::string& scene_id) {
    return sha256_u64(std::to_string(master_seed) + ":" + scene_id);
}

std::string make_pair_id(const std::string& scene_id, std::size_t window_start, SubtaskKind subtask,
                         const std::string& target) {
    return sha256_hex(scene_id + "|" + std::to_string(window_start) + "|" + std::string(subtask_key(subtask)) + "|" +
                      target)
        .substr(0, 16);
}

// ---------------------------------------------------------------------------
// Generation

std::vector<const InstanceInfo*> important_instances(const SceneDatabase& db, const std::string& frame_id) {
    std::vector<const InstanceInfo*> out;
    for (const auto& id : db.frame(frame_id).instance_info_ids) {
        const auto& in = db.instance(id);
        if (!in.camera_pos.empty()) out.push_back(&in);
    }
    std::sort(out.begin(), out.end(), [](const InstanceInfo* a, const InstanceInfo* b) {
        const double da = planar_norm(a->local_t);
        const double db_ = planar_norm(b->local_t);
        return da != db_ ? da < db_ : a->info_id < b->info_id;
    });
    return out;
}

namespace {

std::set<View> all_camera_views() { return {kCameraViews.begin(), kCameraViews.end()}; }

class WindowBuilder {
public:
    WindowBuilder(const SceneDatabase& db, const std::string& scene_id, const KeyframeWindow& w,
                  const GenerationConfig& cfg, GenerationDiagnostics& diag)
        : db_(db), scene_id_(scene_id), w_(w), cfg_(cfg), diag_(diag) {}

    std::vector<InstructionResponsePair> build() {
        for (SubtaskKind s : kAllSubtasks) {
            if (!cfg_.enabled_subtasks.count(s)) continue;
            try {
                run(s);
            } catch (const std::exception& e) {
                ++diag_.failed_pairs;
                diag_.failures.push_back(scene_id_ + "/" + w_.current + "/" + std::string(subtask_key(s)) + ": " +
                                         e.what());
            }
        }
        return std::move(out_);
    }

private:
    void emit(SubtaskKind s, const std::string& target, const InstructionContext& ctx, const TaskResult& result,
              std::set<View> views) {
        InstructionResponsePair p;
        p.pair_id = make_pair_id(scene_id_, w_.start, s, target);
        p.scene_id = scene_id_;
        p.frame_ids = {w_.prev, w_.current, w_.next};
        p.task = std::string(family_key(family_of(s)));
        p.subtask = s;
        if (views.empty()) views.insert(View::Front);
        p.views_used = std::move(views);
        p.instruction = render_instruction(s, ctx);
        auto rendered = render_response(s, result);
        p.response = std::move(rendered.text);
        p.ground_truth = std::move(rendered.ground_truth);
        p.thresholds_used = cfg_.thresholds;
        out_.push_back(std::move(p));
    }

    std::vector<const InstanceInfo*> capped(std::vector<const InstanceInfo*> list) const {
        if (list.size() > cfg_.max_instances_per_subtask) list.resize(cfg_.max_instances_per_subtask);
        return list;
    }

    void per_instance(SubtaskKind s) {
        for (const InstanceInfo* in : capped(important_instances(db_, w_.current))) {
            const InstanceRef ref = *grounding_of(*in);
            TaskResult result;
            switch (s) {
                case SubtaskKind::Distance: result = distance(db_, in->info_id); break;
                case SubtaskKind::Speeds: result = ScalarAnswer{speeds(db_, in->info_id)}; break;
                case SubtaskKind::Status: result = LabelAnswer{status(db_, in->info_id)}; break;
                default: result = SameRoadAnswer{same_road(db_, in->info_id, w_.current)}; break;
            }
            emit(s, in->info_id, {ref, std::nullopt, std::nullopt}, result, {ref.view});
        }
    }

    void per_moving_instance(SubtaskKind s) {
        const OthersStatus st = status_others(db_, w_.current, w_.next);
        std::vector<const InstanceInfo*> shared;
        for (const InstanceInfo* in : important_instances(db_, w_.current)) {
            if (st.motion.count(in->info_id)) shared.push_back(in);
        }
        for (const InstanceInfo* in : capped(shared)) {
            const InstanceRef ref = *grounding_of(*in);
            const Vec3& m = st.motion.at(in->info_id);
            TaskResult result = s == SubtaskKind::MotionOthers
                                    ? TaskResult{MotionAnswer{m}}
                                    : TaskResult{StatusAnswer{false, st.speed_delta.at(in->info_id), m}};
            emit(s, in->info_id, {ref, std::nullopt, std::nullopt}, result, {ref.view});
        }
    }

    std::vector<DetectionRef> grounded(const RiskInstances& found, std::set<View>& views) {
        std::vector<DetectionRef> refs;
        for (const auto& in : found) {
            auto g = grounding_of(in);
            if (!g) {
                ++diag_.skipped_instances;
                continue;
            }
            views.insert(g->view);
            refs.push_back({g->view, g->bbox, in.instance_id});
        }
        return refs;
    }

    void run(SubtaskKind s) {
        switch (s) {
            case SubtaskKind::Distance:
            case SubtaskKind::Speeds:
            case SubtaskKind::Status:
            case SubtaskKind::SameRoad: per_instance(s); return;
            case SubtaskKind::Closest:
                for (const auto& [view, in] : closest(db_, w_.current)) {
                    std::set<View> views = view == View::All ? all_camera_views() : std::set<View>{view};
                    emit(s, std::string(view_key(view)), {std::nullopt, view, std::nullopt},
                         ClosestAnswer{view, in.category}, views);
                }
                return;
            case SubtaskKind::InstanceNumber: {
                const InstanceCounts counts = instance_number(db_, w_.current);
                auto all = counts.find(View::All);
                if (all == counts.end()) return;
                for (View view : kQueryViews) {
                    for (const auto& [category, total] : all->second) {
                        std::set<View> views = view == View::All ? all_camera_views() : std::set<View>{view};
                        emit(s, std::string(view_key(view)) + "/" + category, {std::nullopt, view, category},
                             CountAnswer{view, category, count_of(counts, view, category)}, views);
                    }
                }
                return;
            }
            case SubtaskKind::MotionEgo:
                emit(s, "ego", {}, MotionAnswer{motion_ego(db_, w_.current, w_.next)}, {});
                return;
            case SubtaskKind::StatusEgo: {
                const EgoStatus st = status_ego(db_, w_.current, w_.next);
                emit(s, "ego", {}, StatusAnswer{true, st.speed_delta, st.motion}, {});
                return;
            }
            case SubtaskKind::MotionOthers:
            case SubtaskKind::StatusOthers: per_moving_instance(s); return;
            case SubtaskKind::PlanningWithReasoning: {
                const PlanningResult plan =
                    planning_with_reasoning(db_, w_.prev, w_.current, w_.next, cfg_.thresholds, cfg_.predicate_mode);
                PlanningAnswer answer{{}, plan.ego_speed_delta, plan.ego_motion};
                std::set<View> views;
                for (const auto& [kind, found] : plan.risks) {
                    auto& cats = answer.risk_categories[kind];
                    for (const auto& in : found) {
                        cats.push_back(in.category);
                        if (auto g = grounding_of(in)) views.insert(g->view);
                    }
                }
                emit(s, "plan", {}, answer, views);
                return;
            }
            default: {
                const RiskKind kind = *risk_of(s);
                RiskScan scan =
                    scan_risk(db_, kind, w_.prev, w_.current, w_.next, cfg_.thresholds, cfg_.predicate_mode);
                diag_.skipped_instances += scan.skipped;
                std::set<View> views;
                RiskAnswer answer{grounded(scan.detected, views)};
                emit(s, "risk", {}, answer, views);
                return;
            }
        }
    }

    const SceneDatabase& db_;
    const std::string& scene_id_;
    const KeyframeWindow& w_;
    const GenerationConfig& cfg_;
    GenerationDiagnostics& diag_;
    std::vector<InstructionResponsePair> out_;
};

void merge(GenerationDiagnostics& into, GenerationDiagnostics&& from) {
    into.ineligible_scenes += from.ineligible_scenes;
    into.windows += from.windows;
    into.skipped_instances += from.skipped_instances;
    into.failed_pairs += from.failed_pairs;
    for (auto& f : from.failures) into.failures.push_back(std::move(f));
}

}  // namespace

std::vector<InstructionResponsePair> generate_window(const SceneDatabase& db, const std::string& scene_id,
                                                     const KeyframeWindow& window, const GenerationConfig& config,
                                                     GenerationDiagnostics& diag) {
    return WindowBuilder(db, scene_id, window, config, diag).build();
}

GeneratedDataset generate_dataset(const SceneDatabase& db, const GenerationConfig& config) {
    if (config.windows_per_scene < 1) throw ValidationError("windows_per_scene must be >= 1");
    if (!config.thresholds.valid()) throw ValidationError("risk thresholds must all be > 0");

    const auto& order = db.scene_order();
    const auto n = static_cast<long>(order.size());
    std::vector<std::vector<InstructionResponsePair>> per_scene(order.size());
    std::vector<GenerationDiagnostics> per_diag(order.size());

#ifdef _OPENMP
    const int threads = config.jobs > 0 ? config.jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
#endif
    for (long i = 0; i < n; ++i) {
        const SceneRecord& scene = db.scene(order[i]);
        GenerationDiagnostics& diag = per_diag[i];
        if (scene.frame_ids.size() < 3) {
            ++diag.ineligible_scenes;
            continue;
        }
        DeterministicRng rng(scene_seed(config.master_seed, scene.scene_id));
        for (const auto& w : sample_windows(scene, config.windows_per_scene, rng)) {
            ++diag.windows;
            auto pairs = generate_window(db, scene.scene_id, w, config, diag);
            per_scene[i].insert(per_scene[i].end(), std::make_move_iterator(pairs.begin()),
                                std::make_move_iterator(pairs.end()));
        }
    }

    GeneratedDataset out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.pairs.insert(out.pairs.end(), std::make_move_iterator(per_scene[i].begin()),
                         std::make_move_iterator(per_scene[i].end()));
        merge(out.diagnostics, std::move(per_diag[i]));
    }
    return out;
}

}  // namespace drivesql
