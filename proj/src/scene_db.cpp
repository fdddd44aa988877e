#include "drivesql/scene_db.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "drivesql/errors.hpp"

namespace drivesql {

using nlohmann::json;

std::string_view view_key(View v) {
    switch (v) {
        case View::FrontLeft: return "front_left";
        case View::Front: return "front";
        case View::FrontRight: return "front_right";
        case View::BackLeft: return "back_left";
        case View::Back: return "back";
        case View::BackRight: return "back_right";
        case View::All: return "all";
    }
    return "all";
}

std::string_view view_name(View v) {
    switch (v) {
        case View::FrontLeft: return "front left";
        case View::Front: return "front";
        case View::FrontRight: return "front right";
        case View::BackLeft: return "back left";
        case View::Back: return "back";
        case View::BackRight: return "back right";
        case View::All: return "all";
    }
    return "all";
}

std::optional<View> parse_view(std::string_view key) {
    for (View v : kQueryViews) {
        if (key == view_key(v) || key == view_name(v)) return v;
    }
    return std::nullopt;
}

std::string_view table_name(TableKind t) {
    switch (t) {
        case TableKind::Scene: return "scene";
        case TableKind::Frame: return "frame";
        case TableKind::Ego: return "ego";
        case TableKind::Instance: return "instance";
    }
    return "?";
}

namespace {

// Reads typed fields out of one JSON record; every failure names the record
// context (which includes the owning frame when known) and the field.
class FieldReader {
public:
    FieldReader(const json& obj, std::string context) : obj_(obj), ctx_(std::move(context)) {
        if (!obj_.is_object()) fail("<record>", "must be an object");
    }

    [[noreturn]] void fail(std::string_view field, std::string_view what) const {
        throw ValidationError(ctx_ + ": field '" + std::string(field) + "' " + std::string(what));
    }

    const json& at(const char* field) const {
        auto it = obj_.find(field);
        if (it == obj_.end()) fail(field, "is missing");
        return *it;
    }

    std::string text(const char* field) const {
        const json& v = at(field);
        if (!v.is_string()) fail(field, "must be a string");
        return v.get<std::string>();
    }

    double number(const char* field) const {
        const json& v = at(field);
        if (!v.is_number()) fail(field, "must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(field, "must be finite");
        return d;
    }

    std::vector<double> numbers(const char* field, std::size_t n) const {
        const json& v = at(field);
        if (!v.is_array() || v.size() != n) fail(field, "must be an array of " + std::to_string(n) + " numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(field, "must contain only numbers");
            out.push_back(e.get<double>());
            if (!std::isfinite(out.back())) fail(field, "must contain finite numbers");
        }
        return out;
    }

    Vec3 vec3(const char* field) const {
        auto v = numbers(field, 3);
        return {v[0], v[1], v[2]};
    }

    Quaternion quat(const char* field) const {
        auto v = numbers(field, 4);
        return {v[0], v[1], v[2], v[3]};
    }

    std::vector<std::string> texts(const char* field) const {
        const json& v = at(field);
        if (!v.is_array()) fail(field, "must be an array of strings");
        std::vector<std::string> out;
        for (const auto& e : v) {
            if (!e.is_string()) fail(field, "must contain only strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }

    TextMap text_map(const char* field) const {
        const json& v = at(field);
        if (!v.is_object()) fail(field, "must be an object of strings");
        TextMap out;
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (!it.value().is_string()) fail(field, "value for key '" + it.key() + "' must be a string");
            out.emplace(it.key(), it.value().get<std::string>());
        }
        return out;
    }

private:
    const json& obj_;
    std::string ctx_;
};

const json& table_array(const json& doc, const char* name) {
    auto it = doc.find(name);
    if (it == doc.end() || !it->is_array()) {
        throw ValidationError(std::string("annotations: top-level field '") + name + "' must be an array");
    }
    return *it;
}

std::string record_id(const json& rec, const char* id_field) {
    if (rec.is_object()) {
        auto it = rec.find(id_field);
        if (it != rec.end() && it->is_string()) return it->get<std::string>();
    }
    return "?";
}

std::string owner_suffix(const std::unordered_map<std::string, std::string>& owner, const std::string& id) {
    auto it = owner.find(id);
    return it == owner.end() ? std::string() : " (frame '" + it->second + "')";
}

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
json quat_json(const Quaternion& q) { return json::array({q.w, q.x, q.y, q.z}); }

}  // namespace

json to_json(const BBox2D& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

json to_json(const InstanceInfo& in) {
    json cams = json::object();
    for (const auto& [view, box] : in.camera_pos) cams[std::string(view_key(view))] = to_json(box);
    return json{{"info_id", in.info_id},       {"instance_id", in.instance_id}, {"category", in.category},
                {"attribute", in.attribute},   {"global_t", vec_json(in.global_t)},
                {"global_r", quat_json(in.global_r)}, {"local_t", vec_json(in.local_t)},
                {"local_r", quat_json(in.local_r)},   {"velocity", in.velocity},
                {"road_info", in.road_info},   {"camera_pos", cams}};
}

json to_json(const CanonicalAnnotations& ann) {
    json scenes = json::array();
    for (const auto& s : ann.scenes) scenes.push_back({{"scene_id", s.scene_id}, {"frame_ids", s.frame_ids}});
    json frames = json::array();
    for (const auto& f : ann.frames) {
        frames.push_back({{"frame_id", f.frame_id},
                          {"ego_info_id", f.ego_info_id},
                          {"instance_info_ids", f.instance_info_ids},
                          {"timestamp", f.timestamp}});
    }
    json ego = json::array();
    for (const auto& e : ann.ego) {
        ego.push_back({{"info_id", e.info_id},
                       {"pose", vec_json(e.pose)},
                       {"rotation", quat_json(e.rotation)},
                       {"velocity", e.velocity},
                       {"road_info", e.road_info},
                       {"camera_info", e.camera_info}});
    }
    json instances = json::array();
    for (const auto& in : ann.instances) instances.push_back(to_json(in));
    return json{{"scenes", scenes}, {"frames", frames}, {"ego", ego}, {"instances", instances}};
}

CanonicalAnnotations annotations_from_json(const json& doc) {
    if (!doc.is_object()) throw ValidationError("annotations: top level must be an object");
    CanonicalAnnotations ann;

    for (const auto& rec : table_array(doc, "scenes")) {
        FieldReader r(rec, "scene '" + record_id(rec, "scene_id") + "'");
        ann.scenes.push_back({r.text("scene_id"), r.texts("frame_ids")});
    }

    // Owning frame of every ego/instance row, so later errors can name it.
    std::unordered_map<std::string, std::string> owner;
    for (const auto& rec : table_array(doc, "frames")) {
        const std::string fid = record_id(rec, "frame_id");
        FieldReader r(rec, "frame '" + fid + "'");
        FrameRecord f;
        f.frame_id = r.text("frame_id");
        const json& ego_ref = r.at("ego_info_id");
        if (ego_ref.is_string()) {
            f.ego_info_id = ego_ref.get<std::string>();
        } else if (ego_ref.is_array()) {
            if (ego_ref.size() != 1 || !ego_ref[0].is_string()) {
                r.fail("ego_info_id", "must reference exactly one ego record");
            }
            f.ego_info_id = ego_ref[0].get<std::string>();
        } else {
            r.fail("ego_info_id", "must be a string");
        }
        f.instance_info_ids = r.texts("instance_info_ids");
        f.timestamp = r.number("timestamp");
        owner.emplace(f.ego_info_id, f.frame_id);
        for (const auto& id : f.instance_info_ids) owner.emplace(id, f.frame_id);
        ann.frames.push_back(std::move(f));
    }

    for (const auto& rec : table_array(doc, "ego")) {
        const std::string id = record_id(rec, "info_id");
        FieldReader r(rec, "ego info '" + id + "'" + owner_suffix(owner, id));
        EgoInfo e;
        e.info_id = r.text("info_id");
        e.pose = r.vec3("pose");
        e.rotation = r.quat("rotation");
        e.velocity = r.number("velocity");
        e.road_info = r.text_map("road_info");
        e.camera_info = r.text_map("camera_info");
        ann.ego.push_back(std::move(e));
    }

    for (const auto& rec : table_array(doc, "instances")) {
        const std::string id = record_id(rec, "info_id");
        FieldReader r(rec, "instance info '" + id + "'" + owner_suffix(owner, id));
        InstanceInfo in;
        in.info_id = r.text("info_id");
        in.instance_id = r.text("instance_id");
        in.category = r.text("category");
        in.attribute = r.text("attribute");
        in.global_t = r.vec3("global_t");
        in.global_r = r.quat("global_r");
        in.local_t = r.vec3("local_t");
        in.local_r = r.quat("local_r");
        in.velocity = r.number("velocity");
        in.road_info = r.text_map("road_info");
        const json& cams = r.at("camera_pos");
        if (!cams.is_object()) r.fail("camera_pos", "must be an object");
        for (auto it = cams.begin(); it != cams.end(); ++it) {
            auto view = parse_view(it.key());
            if (!view || *view == View::All) r.fail("camera_pos", "has invalid view '" + it.key() + "'");
            const json& b = it.value();
            if (!b.is_array() || b.size() != 4 || !std::all_of(b.begin(), b.end(), [](const json& e) {
                    return e.is_number();
                })) {
                r.fail("camera_pos", "entry '" + it.key() + "' must be [x1, y1, x2, y2]");
            }
            in.camera_pos[*view] = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
        }
        ann.instances.push_back(std::move(in));
    }
    return ann;
}

namespace {

Quaternion checked_rotation(const Quaternion& q, const std::string& ctx, const char* field) {
    const double n = q.norm();
    if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-3) {
        throw ValidationError(ctx + ": field '" + field + "' is not a unit quaternion (norm " + std::to_string(n) +
                              ")");
    }
    if (std::abs(n - 1.0) > 1e-6) return q.normalized();
    return q;
}

}  // namespace

SceneDatabase build_database(CanonicalAnnotations ann, double important_radius) {
    if (!(important_radius > 0.0) || !std::isfinite(important_radius)) {
        throw ValidationError("important_radius must be a positive finite number");
    }
    SceneDatabase db;
    db.important_radius_ = important_radius;

    std::unordered_map<std::string, std::string> frame_owner;  // frame -> scene
    for (auto& s : ann.scenes) {
        const std::string ctx = "scene '" + s.scene_id + "'";
        if (s.frame_ids.empty()) throw ValidationError(ctx + ": field 'frame_ids' must be non-empty");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < s.frame_ids.size(); ++i) {
            const auto& fid = s.frame_ids[i];
            if (!seen.insert(fid).second) {
                throw ValidationError(ctx + ": field 'frame_ids' repeats frame '" + fid + "'");
            }
            if (!frame_owner.emplace(fid, s.scene_id).second) {
                throw ValidationError(ctx + ": frame '" + fid + "' already belongs to scene '" + frame_owner[fid] +
                                      "'");
            }
            db.frame_location_[fid] = {s.scene_id, i};
        }
        if (db.scenes_.count(s.scene_id)) throw ValidationError(ctx + ": duplicate scene id");
        db.scene_order_.push_back(s.scene_id);
        db.scenes_.emplace(s.scene_id, std::move(s));
    }

    for (auto& e : ann.ego) {
        const std::string ctx = "ego info '" + e.info_id + "'";
        e.rotation = checked_rotation(e.rotation, ctx, "rotation");
        if (!(e.velocity >= 0.0)) throw ValidationError(ctx + ": field 'velocity' must be >= 0");
        if (!e.pose.finite()) throw ValidationError(ctx + ": field 'pose' must be finite");
        if (db.ego_.count(e.info_id)) throw ValidationError(ctx + ": duplicate ego info id");
        db.ego_.emplace(e.info_id, std::move(e));
    }

    std::map<std::string, InstanceInfo> all_instances;
    for (auto& in : ann.instances) {
        const std::string ctx = "instance info '" + in.info_id + "'";
        in.global_r = checked_rotation(in.global_r, ctx, "global_r");
        in.local_r = checked_rotation(in.local_r, ctx, "local_r");
        if (!(in.velocity >= 0.0)) throw ValidationError(ctx + ": field 'velocity' must be >= 0");
        if (!in.global_t.finite() || !in.local_t.finite()) {
            throw ValidationError(ctx + ": translations must be finite");
        }
        for (const auto& [view, box] : in.camera_pos) {
            if (view == View::All) throw ValidationError(ctx + ": field 'camera_pos' may not use view 'all'");
            if (!box.valid()) {
                throw ValidationError(ctx + ": field 'camera_pos' box for '" + std::string(view_key(view)) +
                                      "' must satisfy x1<x2 and y1<y2");
            }
        }
        if (all_instances.count(in.info_id)) throw ValidationError(ctx + ": duplicate instance info id");
        all_instances.emplace(in.info_id, std::move(in));
    }

    std::set<std::string> used_ego;
    std::set<std::string> used_instances;
    for (auto& f : ann.frames) {
        const std::string ctx = "frame '" + f.frame_id + "'";
        if (!frame_owner.count(f.frame_id)) throw ValidationError(ctx + ": not listed by any scene");
        if (db.frames_.count(f.frame_id)) throw ValidationError(ctx + ": duplicate frame id");
        if (!db.ego_.count(f.ego_info_id)) {
            throw ValidationError(ctx + ": field 'ego_info_id' references unknown ego info '" + f.ego_info_id + "'");
        }
        if (!used_ego.insert(f.ego_info_id).second) {
            throw ValidationError(ctx + ": ego info '" + f.ego_info_id + "' is shared with another frame");
        }
        std::vector<std::string> kept;
        std::set<std::string> physical;
        for (const auto& id : f.instance_info_ids) {
            auto it = all_instances.find(id);
            if (it == all_instances.end()) {
                throw ValidationError(ctx + ": field 'instance_info_ids' references unknown instance info '" + id +
                                      "'");
            }
            if (!used_instances.insert(id).second) {
                throw ValidationError(ctx + ": field 'instance_info_ids' reuses instance info '" + id + "'");
            }
            if (!physical.insert(it->second.instance_id).second) {
                throw ValidationError(ctx + ": instance '" + it->second.instance_id + "' appears twice");
            }
            if (planar_norm(it->second.local_t) > important_radius) continue;
            db.instance_frame_index_[{it->second.instance_id, f.frame_id}] = id;
            db.instances_.emplace(id, std::move(it->second));
            kept.push_back(id);
        }
        f.instance_info_ids = std::move(kept);
        db.frames_.emplace(f.frame_id, std::move(f));
    }

    for (const auto& [fid, scene] : frame_owner) {
        if (!db.frames_.count(fid)) {
            throw ValidationError("scene '" + scene + "': field 'frame_ids' references unknown frame '" + fid + "'");
        }
    }
    for (const auto& [id, e] : db.ego_) {
        if (!used_ego.count(id)) throw ValidationError("ego info '" + id + "': not referenced by any frame");
    }
    for (const auto& [id, in] : all_instances) {
        if (!used_instances.count(id)) {
            throw ValidationError("instance info '" + id + "': not referenced by any frame");
        }
    }
    return db;
}

const SceneRecord& SceneDatabase::scene(const std::string& id) const {
    auto it = scenes_.find(id);
    if (it == scenes_.end()) throw LookupError("scene", id);
    return it->second;
}

const FrameRecord& SceneDatabase::frame(const std::string& id) const {
    auto it = frames_.find(id);
    if (it == frames_.end()) throw LookupError("frame", id);
    return it->second;
}

const EgoInfo& SceneDatabase::ego(const std::string& id) const {
    auto it = ego_.find(id);
    if (it == ego_.end()) throw LookupError("ego", id);
    return it->second;
}

const InstanceInfo& SceneDatabase::instance(const std::string& id) const {
    auto it = instances_.find(id);
    if (it == instances_.end()) throw LookupError("instance", id);
    return it->second;
}

SceneDatabase::Record SceneDatabase::query(TableKind table, const std::string& id) const {
    switch (table) {
        case TableKind::Scene: return &scene(id);
        case TableKind::Frame: return &frame(id);
        case TableKind::Ego: return &ego(id);
        case TableKind::Instance: return &instance(id);
    }
    throw LookupError(std::string(table_name(table)), id);
}

const EgoInfo& SceneDatabase::ego_of_frame(const std::string& frame_id) const {
    return ego(frame(frame_id).ego_info_id);
}

const InstanceInfo* SceneDatabase::instance_at_frame(const std::string& instance_id,
                                                     const std::string& frame_id) const {
    if (!frames_.count(frame_id)) throw LookupError("frame", frame_id);
    auto it = instance_frame_index_.find({instance_id, frame_id});
    if (it == instance_frame_index_.end()) return nullptr;
    return &instances_.at(it->second);
}

std::pair<const SceneRecord*, std::size_t> SceneDatabase::locate_frame(const std::string& frame_id) const {
    auto it = frame_location_.find(frame_id);
    if (it == frame_location_.end()) throw LookupError("frame", frame_id);
    return {&scenes_.at(it->second.first), it->second.second};
}

json SceneDatabase::to_json() const {
    CanonicalAnnotations ann;
    for (const auto& sid : scene_order_) {
        const auto& s = scenes_.at(sid);
        ann.scenes.push_back(s);
        for (const auto& fid : s.frame_ids) ann.frames.push_back(frames_.at(fid));
    }
    for (const auto& [id, e] : ego_) ann.ego.push_back(e);
    for (const auto& [id, in] : instances_) ann.instances.push_back(in);
    json doc = drivesql::to_json(ann);
    doc["important_radius"] = important_radius_;
    return doc;
}

SceneDatabase SceneDatabase::from_json(const json& doc) {
    auto it = doc.find("important_radius");
    if (it == doc.end() || !it->is_number()) {
        throw ValidationError("database: top-level field 'important_radius' must be a number");
    }
    return build_database(annotations_from_json(doc), it->get<double>());
}

}  // namespace drivesql
