#include <cmath>
#include <numbers>
#include <cstdio>

#include "drivesql/errors.hpp"
#include "drivesql/generation.hpp"

namespace drivesql {

MetricFamily metric_family(SubtaskKind s) {
    switch (s) {
        case SubtaskKind::Distance:
        case SubtaskKind::Speeds:
        case SubtaskKind::InstanceNumber:
        case SubtaskKind::MotionEgo:
        case SubtaskKind::MotionOthers: return MetricFamily::Mae;
        case SubtaskKind::Closest:
        case SubtaskKind::Status:
        case SubtaskKind::SameRoad:
        case SubtaskKind::StatusEgo:
        case SubtaskKind::StatusOthers: return MetricFamily::Accuracy;
        case SubtaskKind::PlanningWithReasoning: return MetricFamily::Bleu;
        default: return MetricFamily::Map;
    }
}

std::optional<InstanceRef> grounding_of(const InstanceInfo& info) {
    std::optional<InstanceRef> best;
    for (View v : kCameraViews) {
        auto it = info.camera_pos.find(v);
        if (it == info.camera_pos.end()) continue;
        if (!best || it->second.area() > best->bbox.area()) best = InstanceRef{v, it->second};
    }
    return best;
}

std::string format_decimal(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    std::string s(buf);
    if (s == "-0.0") s = "0.0";
    return s;
}

std::string render_instance(const InstanceRef& ref) {
    return "<" + std::string(view_name(ref.view)) + ", " + format_decimal(ref.bbox.x1) + ", " +
           format_decimal(ref.bbox.y1) + ", " + format_decimal(ref.bbox.x2) + ", " + format_decimal(ref.bbox.y2) +
           ">";
}

namespace {

constexpr const char* kXyFormat =
    "Please use the format as (x,y) where x and y are the forward and leftward offsets in meters.";
constexpr const char* kMotionFormat =
    "Please use the format as (x,y) where x and y are the forward and leftward displacements in meters.";

std::string need_instance(SubtaskKind s, const InstructionContext& ctx) {
    if (!ctx.instance) {
        throw TemplateError("template '" + std::string(subtask_key(s)) + "' needs an instance reference");
    }
    return render_instance(*ctx.instance);
}

View need_view(SubtaskKind s, const InstructionContext& ctx) {
    if (!ctx.view) throw TemplateError("template '" + std::string(subtask_key(s)) + "' needs a view");
    return *ctx.view;
}

std::string in_view(View v) {
    return v == View::All ? "in all views" : "in the " + std::string(view_name(v)) + " view";
}

std::string with_article(const std::string& noun) {
    const bool vowel = !noun.empty() && std::string("aeiou").find(noun[0]) != std::string::npos;
    return (vowel ? "an " : "a ") + noun;
}

std::string xy(const Vec3& v) { return "(" + format_decimal(v.x) + ", " + format_decimal(v.y) + ")"; }

std::string join_clauses(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
        out += items[i];
    }
    return out;
}

std::string_view risk_phrase(RiskKind r) {
    switch (r) {
        case RiskKind::Overtaking: return "overtaking";
        case RiskKind::OnComing: return "oncoming to";
        case RiskKind::Approaching: return "approaching";
        case RiskKind::Crossing: return "crossing";
        case RiskKind::Braking: return "braking ahead of";
        case RiskKind::LaneChanging: return "changing to the lane of";
    }
    return "";
}

std::string speed_phrase(double dv) {
    const std::string trend = speed_trend(dv);
    return trend == "steady" ? "keeping a steady speed" : trend;
}

std::string direction_phrase(const Vec3& m) {
    if (planar_norm(m) < 0.1) return "its current position";
    static constexpr const char* kSectors[] = {"the front",      "the front left", "the left",  "the back left",
                                               "the back",       "the back right", "the right", "the front right"};
    const double deg = std::atan2(m.y, m.x) * 180.0 / std::numbers::pi;  // (-180, 180], left positive
    const double shifted = std::fmod(deg + 360.0 + 22.5, 360.0);
    return kSectors[static_cast<int>(shifted / 45.0) % 8];
}

template <typename T>
const T& expect(SubtaskKind s, const TaskResult& r) {
    if (const T* p = std::get_if<T>(&r)) return *p;
    throw TemplateError("result shape does not match subtask '" + std::string(subtask_key(s)) + "'");
}

}  // namespace

std::string speed_trend(double dv) {
    if (dv > kSteadySpeedBand) return "accelerating";
    if (dv < -kSteadySpeedBand) return "decelerating";
    return "steady";
}

std::set<std::string> default_labels(SubtaskKind subtask) {
    switch (subtask) {
        case SubtaskKind::SameRoad: return {"yes", "no"};
        case SubtaskKind::StatusEgo:
        case SubtaskKind::StatusOthers: return {"accelerating", "decelerating", "steady"};
        case SubtaskKind::Status: return {"moving", "stopped", "parked", "standing", "sitting"};
        case SubtaskKind::Closest:
            return {"car",        "truck",      "bus",         "trailer",      "construction vehicle",
                    "pedestrian", "motorcycle", "bicycle",     "traffic cone", "barrier",
                    "debris",     "ambulance",  "police car"};
        default: return {};
    }
}

std::string render_instruction(SubtaskKind s, const InstructionContext& ctx) {
    switch (s) {
        case SubtaskKind::Distance:
            return "What is the distance between " + need_instance(s, ctx) + " and the ego car? " + kXyFormat;
        case SubtaskKind::Closest:
            return "What are the closest objects " + in_view(need_view(s, ctx)) + " of the ego car?";
        case SubtaskKind::InstanceNumber: {
            if (!ctx.category) throw TemplateError("template 'instance_number' needs a category");
            return "How many " + *ctx.category + " objects are " + in_view(need_view(s, ctx)) + " of the ego car?";
        }
        case SubtaskKind::Speeds:
            return "What is the speed of " + need_instance(s, ctx) + "? Please answer in meters per second.";
        case SubtaskKind::Status: return "What is the status of " + need_instance(s, ctx) + "?";
        case SubtaskKind::SameRoad:
            return "Is " + need_instance(s, ctx) + " in the same road with the ego car? Please answer yes or no.";
        case SubtaskKind::MotionEgo: return std::string("What is the next motion for the ego car? ") + kMotionFormat;
        case SubtaskKind::MotionOthers:
            return "What is the next motion for " + need_instance(s, ctx) + "? " + kMotionFormat;
        case SubtaskKind::StatusEgo: return "What's the next status for the ego car?";
        case SubtaskKind::StatusOthers: return "What's the next status for " + need_instance(s, ctx) + "?";
        case SubtaskKind::Overtaking: return "Do any objects overtake the ego car?";
        case SubtaskKind::OnComing: return "Do any objects go on coming to the ego car?";
        case SubtaskKind::Approaching: return "Do any objects approach the ego car?";
        case SubtaskKind::Crossing: return "Do any objects cross the head of the ego car?";
        case SubtaskKind::Braking: return "Do any objects brake ahead of the ego car?";
        case SubtaskKind::LaneChanging: return "Do any objects change to the same lane of the ego car?";
        case SubtaskKind::PlanningWithReasoning: return "Please give the next plan for the ego car with reasons.";
    }
    throw TemplateError("unknown subtask");
}

RenderedResponse render_response(SubtaskKind s, const TaskResult& result) {
    switch (s) {
        case SubtaskKind::Distance: {
            const auto& d = expect<DistanceResult>(s, result);
            return {xy({d.x, d.y, 0.0}), NumericTruth{{d.x, d.y}}};
        }
        case SubtaskKind::Closest: {
            const auto& c = expect<ClosestAnswer>(s, result);
            return {"The closest object " + in_view(c.view) + " is " + with_article(c.category) + ".",
                    LabelTruth{c.category}};
        }
        case SubtaskKind::InstanceNumber: {
            const auto& c = expect<CountAnswer>(s, result);
            return {"There are " + std::to_string(c.count) + " " + c.category + " objects " + in_view(c.view) + ".",
                    NumericTruth{{static_cast<double>(c.count)}}};
        }
        case SubtaskKind::Speeds: {
            const auto& v = expect<ScalarAnswer>(s, result);
            return {"The speed is " + format_decimal(v.value) + " m/s.", NumericTruth{{v.value}}};
        }
        case SubtaskKind::Status: {
            const auto& l = expect<LabelAnswer>(s, result);
            return {"The status is " + l.label + ".", LabelTruth{l.label}};
        }
        case SubtaskKind::SameRoad: {
            const bool same = expect<SameRoadAnswer>(s, result).same;
            return {same ? "Yes" : "No", LabelTruth{same ? "yes" : "no"}};
        }
        case SubtaskKind::MotionEgo:
        case SubtaskKind::MotionOthers: {
            const auto& m = expect<MotionAnswer>(s, result);
            return {xy(m.motion), NumericTruth{{m.motion.x, m.motion.y}}};
        }
        case SubtaskKind::StatusEgo:
        case SubtaskKind::StatusOthers: {
            const auto& st = expect<StatusAnswer>(s, result);
            const std::string trend = speed_trend(st.speed_delta);
            return {std::string(st.ego ? "The ego car" : "The object") + " will be " + speed_phrase(st.speed_delta) +
                        ", changing speed by " + format_decimal(st.speed_delta) + " m/s and moving to " +
                        xy(st.motion) + ".",
                    LabelTruth{trend}};
        }
        case SubtaskKind::PlanningWithReasoning: {
            const auto& p = expect<PlanningAnswer>(s, result);
            std::vector<std::string> clauses;
            for (const auto& [kind, categories] : p.risk_categories) {
                for (const auto& cat : categories) {
                    clauses.push_back(with_article(cat) + " " + std::string(risk_phrase(kind)));
                }
            }
            std::string text = clauses.empty() ? "There are no risky objects around the ego car."
                                               : "There are " + join_clauses(clauses) + " the ego car.";
            text += " Hence the ego car should be " + speed_phrase(p.speed_delta) + " and move to " +
                    direction_phrase(p.motion) + ".";
            return {text, FreeTextTruth{text}};
        }
        default: {
            const auto& r = expect<RiskAnswer>(s, result);
            if (r.detections.empty()) return {"No.", DetectionTruth{}};
            std::vector<std::string> refs;
            for (const auto& d : r.detections) refs.push_back(render_instance({d.view, d.bbox}));
            return {"Yes, " + join_clauses(refs) + ".", DetectionTruth{r.detections}};
        }
    }
}

}  // namespace drivesql
