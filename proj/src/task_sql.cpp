#include "drivesql/task_sql.hpp"

#include <cmath>
#include <tuple>

#include "drivesql/errors.hpp"

namespace drivesql {

const std::array<SubtaskKind, kSubtaskCount> kAllSubtasks = {
    SubtaskKind::Distance,     SubtaskKind::Closest,      SubtaskKind::InstanceNumber,
    SubtaskKind::Speeds,       SubtaskKind::Status,       SubtaskKind::SameRoad,
    SubtaskKind::MotionEgo,    SubtaskKind::MotionOthers, SubtaskKind::StatusEgo,
    SubtaskKind::StatusOthers, SubtaskKind::Overtaking,   SubtaskKind::OnComing,
    SubtaskKind::Approaching,  SubtaskKind::Crossing,     SubtaskKind::Braking,
    SubtaskKind::LaneChanging, SubtaskKind::PlanningWithReasoning,
};

std::string_view subtask_key(SubtaskKind s) {
    switch (s) {
        case SubtaskKind::Distance: return "distance";
        case SubtaskKind::Closest: return "closest";
        case SubtaskKind::InstanceNumber: return "instance_number";
        case SubtaskKind::Speeds: return "speeds";
        case SubtaskKind::Status: return "status";
        case SubtaskKind::SameRoad: return "same_road";
        case SubtaskKind::MotionEgo: return "motion_ego";
        case SubtaskKind::MotionOthers: return "motion_others";
        case SubtaskKind::StatusEgo: return "status_ego";
        case SubtaskKind::StatusOthers: return "status_others";
        case SubtaskKind::Overtaking: return "overtaking";
        case SubtaskKind::OnComing: return "oncoming";
        case SubtaskKind::Approaching: return "approaching";
        case SubtaskKind::Crossing: return "crossing";
        case SubtaskKind::Braking: return "braking";
        case SubtaskKind::LaneChanging: return "lane_changing";
        case SubtaskKind::PlanningWithReasoning: return "planning_with_reasoning";
    }
    return "?";
}

std::optional<SubtaskKind> parse_subtask(std::string_view key) {
    for (SubtaskKind s : kAllSubtasks) {
        if (subtask_key(s) == key) return s;
    }
    return std::nullopt;
}

TaskFamily family_of(SubtaskKind s) {
    switch (s) {
        case SubtaskKind::Distance:
        case SubtaskKind::Closest:
        case SubtaskKind::InstanceNumber:
        case SubtaskKind::Speeds:
        case SubtaskKind::Status:
        case SubtaskKind::SameRoad: return TaskFamily::Perception;
        case SubtaskKind::MotionEgo:
        case SubtaskKind::MotionOthers:
        case SubtaskKind::StatusEgo:
        case SubtaskKind::StatusOthers: return TaskFamily::Prediction;
        case SubtaskKind::PlanningWithReasoning: return TaskFamily::Planning;
        default: return TaskFamily::Risk;
    }
}

std::string_view family_key(TaskFamily f) {
    switch (f) {
        case TaskFamily::Perception: return "perception";
        case TaskFamily::Prediction: return "prediction";
        case TaskFamily::Risk: return "risk";
        case TaskFamily::Planning: return "planning_with_reasoning";
    }
    return "?";
}

std::string_view risk_key(RiskKind r) { return subtask_key(subtask_of(r)); }

std::optional<RiskKind> parse_risk(std::string_view key) {
    for (RiskKind r : kAllRisks) {
        if (risk_key(r) == key) return r;
    }
    return std::nullopt;
}

SubtaskKind subtask_of(RiskKind r) {
    switch (r) {
        case RiskKind::Overtaking: return SubtaskKind::Overtaking;
        case RiskKind::OnComing: return SubtaskKind::OnComing;
        case RiskKind::Approaching: return SubtaskKind::Approaching;
        case RiskKind::Crossing: return SubtaskKind::Crossing;
        case RiskKind::Braking: return SubtaskKind::Braking;
        case RiskKind::LaneChanging: return SubtaskKind::LaneChanging;
    }
    return SubtaskKind::Overtaking;
}

std::optional<RiskKind> risk_of(SubtaskKind s) {
    for (RiskKind r : kAllRisks) {
        if (subtask_of(r) == s) return r;
    }
    return std::nullopt;
}

DistanceResult distance(const SceneDatabase& db, const std::string& instance_info_id) {
    const auto& t = db.instance(instance_info_id).local_t;
    return {t.x, t.y, planar_norm(t)};
}

std::map<View, InstanceInfo> closest(const SceneDatabase& db, const std::string& frame_id) {
    const auto& frame = db.frame(frame_id);
    std::map<View, InstanceInfo> best;
    std::map<View, double> best_d;
    for (View v : kQueryViews) {
        for (const auto& id : frame.instance_info_ids) {
            const auto& in = db.instance(id);
            if (v != View::All && !in.camera_pos.count(v)) continue;
            const double d = planar_norm(in.local_t);
            auto it = best.find(v);
            if (it == best.end() || std::tie(d, id) < std::tie(best_d[v], it->second.info_id)) {
                best[v] = in;
                best_d[v] = d;
            }
        }
    }
    return best;
}

InstanceCounts instance_number(const SceneDatabase& db, const std::string& frame_id) {
    const auto& frame = db.frame(frame_id);
    InstanceCounts counts;
    for (const auto& id : frame.instance_info_ids) {
        const auto& in = db.instance(id);
        ++counts[View::All][in.category];
        for (const auto& [view, box] : in.camera_pos) ++counts[view][in.category];
    }
    return counts;
}

int count_of(const InstanceCounts& counts, View view, const std::string& category) {
    auto v = counts.find(view);
    if (v == counts.end()) return 0;
    auto c = v->second.find(category);
    return c == v->second.end() ? 0 : c->second;
}

double speeds(const SceneDatabase& db, const std::string& instance_info_id) {
    return db.instance(instance_info_id).velocity;
}

std::string status(const SceneDatabase& db, const std::string& instance_info_id) {
    return db.instance(instance_info_id).attribute;
}

bool same_road(const SceneDatabase& db, const std::string& instance_info_id, const std::string& frame_id) {
    return db.instance(instance_info_id).road_info == db.ego_of_frame(frame_id).road_info;
}

Vec3 motion_ego(const SceneDatabase& db, const std::string& frame_i, const std::string& frame_next) {
    const auto& now = db.ego_of_frame(frame_i);
    const auto& next = db.ego_of_frame(frame_next);
    return relative_motion(now.pose, now.rotation, next.pose);
}

std::map<std::string, Vec3> motion_others(const SceneDatabase& db, const std::string& frame_i,
                                          const std::string& frame_next) {
    db.frame(frame_next);
    std::map<std::string, Vec3> motion;
    for (const auto& id : db.frame(frame_i).instance_info_ids) {
        const auto& now = db.instance(id);
        const InstanceInfo* then = db.instance_at_frame(now.instance_id, frame_next);
        if (!then) continue;
        motion.emplace(id, relative_motion(now.global_t, now.global_r, then->global_t));
    }
    return motion;
}

EgoStatus status_ego(const SceneDatabase& db, const std::string& frame_i, const std::string& frame_next) {
    return {db.ego_of_frame(frame_next).velocity - db.ego_of_frame(frame_i).velocity,
            motion_ego(db, frame_i, frame_next)};
}

OthersStatus status_others(const SceneDatabase& db, const std::string& frame_i, const std::string& frame_next) {
    OthersStatus out;
    out.motion = motion_others(db, frame_i, frame_next);
    for (const auto& [id, m] : out.motion) {
        const auto& now = db.instance(id);
        const InstanceInfo* then = db.instance_at_frame(now.instance_id, frame_next);
        out.speed_delta.emplace(id, then->velocity - now.velocity);
    }
    return out;
}

void require_consecutive(const SceneDatabase& db, const std::string& frame_prev, const std::string& frame_i,
                         const std::string& frame_next) {
    const auto [scene_p, pos_p] = db.locate_frame(frame_prev);
    const auto [scene_i, pos_i] = db.locate_frame(frame_i);
    const auto [scene_n, pos_n] = db.locate_frame(frame_next);
    if (scene_p != scene_i || scene_i != scene_n || pos_i != pos_p + 1 || pos_n != pos_i + 1) {
        throw ArgumentError("frames '" + frame_prev + "', '" + frame_i + "', '" + frame_next +
                            "' are not consecutive keyframes of one scene");
    }
}

bool needs_next_frame(RiskKind kind) { return kind != RiskKind::LaneChanging; }

bool risk_predicate(RiskKind kind, const RiskInputs& in, const RiskThresholds& th, PredicateMode mode) {
    const Vec3& mp = in.motion_prev;
    const Vec3& mn = in.motion_next;
    const bool literal = mode == PredicateMode::Literal;
    // Lateral bound: |m| < b, or the bare m < b in literal mode.
    auto lat = [literal](double m, double bound) { return literal ? m < bound : std::abs(m) < bound; };
    const bool moving = in.v_i > 0.0 && in.v_prev > 0.0;

    switch (kind) {
        case RiskKind::Overtaking:
            if (literal) {
                return mp.x < 0 && mp.x > 0 && mp.y < th.dis && mp.y < th.dis && moving;
            }
            return mp.x < 0 && mn.x > 0 && lat(mp.y, th.dis) && lat(mn.y, th.dis) && moving;
        case RiskKind::OnComing: {
            const bool ahead = literal ? mp.x > 0 : (mp.x > 0 && mn.x > 0);
            return ahead && mn.x < mp.x && lat(mp.y, th.dis) && lat(mn.y, th.dis) &&
                   std::abs(mn.y - mp.y) < th.dis && moving;
        }
        case RiskKind::Approaching:
            return mn.x < mp.x && lat(mp.y, th.dis) && lat(mn.y, th.dis) && std::abs(mn.y - mp.y) < th.dis &&
                   moving;
        case RiskKind::Crossing:
            return in.l_i < th.dis && in.l_prev < th.dis && std::abs(mn.x - mp.x) < th.dis_x &&
                   std::abs(mn.y - mp.y) > th.dis_y && moving;
        case RiskKind::Braking:
            return in.l_i < in.l_prev && in.l_prev < th.dis && std::abs(mn.x - mp.x) > th.dis_x &&
                   lat(mn.y, th.dis_y) && lat(mp.y, th.dis_y) && in.v_prev > th.s && in.v_i < th.s;
        case RiskKind::LaneChanging:
            return in.l_i < in.l_prev && in.l_prev < th.dis && in.same_road_i && !in.same_road_prev &&
                   in.v_prev > th.s && in.v_i > th.s;
    }
    return false;
}

RiskScan scan_risk(const SceneDatabase& db, RiskKind kind, const std::string& frame_prev,
                   const std::string& frame_i, const std::string& frame_next, const RiskThresholds& th,
                   PredicateMode mode) {
    require_consecutive(db, frame_prev, frame_i, frame_next);
    RiskScan scan;
    for (const auto& id : db.frame(frame_i).instance_info_ids) {
        const auto& now = db.instance(id);
        const InstanceInfo* prev = db.instance_at_frame(now.instance_id, frame_prev);
        const InstanceInfo* next = db.instance_at_frame(now.instance_id, frame_next);
        if (!prev || (needs_next_frame(kind) && !next)) {
            ++scan.skipped;
            continue;
        }
        RiskInputs in;
        in.motion_prev = relative_motion(now.global_t, now.global_r, prev->global_t);
        if (next) in.motion_next = relative_motion(now.global_t, now.global_r, next->global_t);
        in.l_i = planar_norm(now.local_t);
        in.l_prev = planar_norm(prev->local_t);
        in.v_i = now.velocity;
        in.v_prev = prev->velocity;
        in.same_road_i = same_road(db, id, frame_i);
        in.same_road_prev = same_road(db, prev->info_id, frame_prev);
        if (risk_predicate(kind, in, th, mode)) scan.detected.push_back(now);
    }
    return scan;
}

RiskInstances detect_risk(const SceneDatabase& db, RiskKind kind, const std::string& frame_prev,
                          const std::string& frame_i, const std::string& frame_next, const RiskThresholds& th,
                          PredicateMode mode) {
    return scan_risk(db, kind, frame_prev, frame_i, frame_next, th, mode).detected;
}

PlanningResult planning_with_reasoning(const SceneDatabase& db, const std::string& frame_prev,
                                       const std::string& frame_i, const std::string& frame_next,
                                       const RiskThresholds& th, PredicateMode mode) {
    PlanningResult out;
    for (RiskKind r : kAllRisks) out.risks[r] = detect_risk(db, r, frame_prev, frame_i, frame_next, th, mode);
    const EgoStatus ego = status_ego(db, frame_i, frame_next);
    out.ego_speed_delta = ego.speed_delta;
    out.ego_motion = ego.motion;
    return out;
}

}  // namespace drivesql
