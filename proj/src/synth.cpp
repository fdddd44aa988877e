#include "drivesql/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "drivesql/errors.hpp"
#include "drivesql/hashing.hpp"

namespace drivesql {

namespace {

using nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kTimeEps = 1e-9;

struct ViewSector {
    View view;
    double center_deg;
};

// Camera sectors, 60 degrees apart with a 40 degree half-width so neighbours overlap.
constexpr ViewSector kSectors[] = {
    {View::FrontLeft, 60.0}, {View::Front, 0.0},   {View::FrontRight, -60.0},
    {View::BackLeft, 120.0}, {View::Back, 180.0}, {View::BackRight, -120.0},
};
constexpr double kHalfWidthDeg = 40.0;

double wrap_deg(double d) {
    d = std::fmod(d + 180.0, 360.0);
    if (d < 0) d += 360.0;
    return d - 180.0;
}

double wrap_rad(double a) { return wrap_deg(a / kDeg) * kDeg; }

bool is_pedestrian(const std::string& category) { return category == "pedestrian"; }

std::string attribute_for(const std::string& category, double speed, bool ego_lane) {
    if (speed > 0.1) return "moving";
    if (is_pedestrian(category)) return "standing";
    return ego_lane ? "stopped" : "parked";
}

std::map<View, BBox2D> camera_boxes(const Vec3& local) {
    std::map<View, BBox2D> boxes;
    const double bearing = std::atan2(local.y, local.x) / kDeg;
    const double size = std::clamp(2000.0 / (planar_norm(local) + 1.0), 20.0, 180.0);
    for (const auto& s : kSectors) {
        const double off = wrap_deg(bearing - s.center_deg);
        if (std::abs(off) > kHalfWidthDeg) continue;
        // Positive bearing offsets lie left of the optical axis.
        const double cx = 800.0 - off / kHalfWidthDeg * 700.0;
        boxes[s.view] = {cx - size / 2, 450.0 - size * 0.375, cx + size / 2, 450.0 + size * 0.375};
    }
    return boxes;
}

struct TrackState {
    Vec3 position;
    double heading = 0.0;
    double speed = 0.0;
    std::string lane;
};

std::optional<TrackState> sample_track(const ScenarioScript& s, double t) {
    const auto& w = s.waypoints;
    if (t < w.front().t - kTimeEps || t > w.back().t + kTimeEps) return std::nullopt;
    std::size_t k = 0;
    while (k + 1 < w.size() && w[k + 1].t <= t + kTimeEps) ++k;
    TrackState st;
    st.lane = s.lane;
    for (std::size_t j = 0; j <= k; ++j) {
        if (w[j].lane) st.lane = *w[j].lane;
    }
    if (k + 1 == w.size() || std::abs(t - w[k].t) <= kTimeEps) {
        st.position = w[k].position;
        st.heading = w[k].heading;
        st.speed = w[k].speed;
        return st;
    }
    const double a = (t - w[k].t) / (w[k + 1].t - w[k].t);
    st.position = w[k].position + a * (w[k + 1].position - w[k].position);
    st.heading = w[k].heading + a * wrap_rad(w[k + 1].heading - w[k].heading);
    st.speed = w[k].speed + a * (w[k + 1].speed - w[k].speed);
    return st;
}

void validate_script(const ScenarioScript& s) {
    if (s.name.empty()) throw ValidationError("script: empty name");
    if (s.waypoints.empty()) throw ValidationError("script '" + s.name + "': no waypoints");
    for (std::size_t i = 0; i < s.waypoints.size(); ++i) {
        const auto& w = s.waypoints[i];
        if (!std::isfinite(w.t) || !w.position.finite() || !std::isfinite(w.heading) || !std::isfinite(w.speed)) {
            throw ValidationError("script '" + s.name + "': waypoint " + std::to_string(i) + " is not finite");
        }
        if (w.speed < 0) throw ValidationError("script '" + s.name + "': waypoint " + std::to_string(i) + " speed < 0");
        if (i > 0 && !(w.t > s.waypoints[i - 1].t)) {
            throw ValidationError("script '" + s.name + "': waypoint times must be strictly increasing");
        }
    }
}

std::string seed_scene_id(std::uint64_t seed) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth-%016llx", static_cast<unsigned long long>(seed));
    return buf;
}

std::string frame_id_of(const std::string& scene, std::size_t f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "-f%03zu", f);
    return scene + buf;
}

}  // namespace

std::set<RiskKind> expected_labels(const ScenarioScript& script) {
    if (!script.kind) return {};
    if (*script.kind == RiskKind::OnComing) return {RiskKind::OnComing, RiskKind::Approaching};
    return {*script.kind};
}

CanonicalAnnotations synth_scene(const std::vector<ScenarioScript>& scripts, std::size_t n_frames, std::uint64_t seed,
                                 const SynthOptions& options) {
    if (n_frames < 3) throw ArgumentError("synth_scene: n_frames must be >= 3");
    if (!(options.dt > 0) || !(options.ego_speed >= 0)) throw ArgumentError("synth_scene: dt must be > 0, ego_speed >= 0");
    std::set<std::string> names;
    for (const auto& s : scripts) {
        validate_script(s);
        if (!names.insert(s.name).second) throw ValidationError("synth_scene: duplicate script name '" + s.name + "'");
    }

    const std::string scene_id = options.scene_id.empty() ? seed_scene_id(seed) : options.scene_id;
    const Quaternion ego_r = Quaternion::from_yaw(options.ego_heading);
    const Vec3 ego_dir{std::cos(options.ego_heading), std::sin(options.ego_heading), 0.0};

    CanonicalAnnotations out;
    SceneRecord scene{scene_id, {}};
    for (std::size_t f = 0; f < n_frames; ++f) {
        const double t = static_cast<double>(f) * options.dt;
        const std::string fid = frame_id_of(scene_id, f);
        scene.frame_ids.push_back(fid);

        EgoInfo ego;
        ego.info_id = fid + "-ego";
        ego.pose = options.ego_start + (t * options.ego_speed) * ego_dir;
        ego.rotation = ego_r;
        ego.velocity = options.ego_speed;
        ego.road_info = {{"road", options.road}, {"lane", options.ego_lane}};
        ego.camera_info = {{"rig", "synthetic-6cam"}};

        FrameRecord frame{fid, ego.info_id, {}, t};
        for (const auto& s : scripts) {
            const auto st = sample_track(s, t);
            if (!st) continue;
            InstanceInfo in;
            in.instance_id = scene_id + "-" + s.name;
            in.info_id = in.instance_id + frame_id_of("", f);
            in.category = s.category;
            in.global_t = st->position;
            in.global_r = Quaternion::from_yaw(st->heading);
            in.local_t = rotate_inverse(ego_r, st->position - ego.pose);
            in.local_r = ego_r.conjugate() * in.global_r;
            in.velocity = st->speed;
            in.road_info = {{"road", s.road}, {"lane", st->lane}};
            in.attribute = attribute_for(s.category, st->speed, in.road_info == ego.road_info);
            in.camera_pos = camera_boxes(in.local_t);
            frame.instance_info_ids.push_back(in.info_id);
            out.instances.push_back(std::move(in));
        }
        out.frames.push_back(std::move(frame));
        out.ego.push_back(std::move(ego));
    }
    out.scenes.push_back(std::move(scene));
    return out;
}

void merge_annotations(CanonicalAnnotations& into, CanonicalAnnotations part) {
    std::set<std::string> ids;
    for (const auto& s : into.scenes) ids.insert("scene:" + s.scene_id);
    for (const auto& f : into.frames) ids.insert("frame:" + f.frame_id);
    for (const auto& e : into.ego) ids.insert("ego:" + e.info_id);
    for (const auto& i : into.instances) ids.insert("instance:" + i.info_id);
    auto claim = [&ids](const std::string& key) {
        if (!ids.insert(key).second) throw ValidationError("conflicting synthetic id '" + key + "'");
    };
    for (const auto& s : part.scenes) claim("scene:" + s.scene_id);
    for (const auto& f : part.frames) claim("frame:" + f.frame_id);
    for (const auto& e : part.ego) claim("ego:" + e.info_id);
    for (const auto& i : part.instances) claim("instance:" + i.info_id);
    auto append = [](auto& dst, auto& src) { std::move(src.begin(), src.end(), std::back_inserter(dst)); };
    append(into.scenes, part.scenes);
    append(into.frames, part.frames);
    append(into.ego, part.ego);
    append(into.instances, part.instances);
}

CanonicalAnnotations random_scene(const std::string& scene_id, std::uint64_t seed, const RandomSceneOptions& o) {
    if (o.min_frames < 3 || o.max_frames < o.min_frames) throw ArgumentError("random_scene: bad frame range");
    static const char* const kCategories[] = {"car", "truck", "bus", "pedestrian", "bicycle", "motorcycle"};
    DeterministicRng rng(seed);
    auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * rng.uniform_real(); };
    auto lane = [&rng] { return "lane_" + std::to_string(rng.uniform_index(3)); };

    SynthOptions opt;
    opt.scene_id = scene_id;
    opt.ego_speed = rng.uniform_index(5) == 0 ? 0.0 : uniform(0.0, 12.0);
    opt.ego_heading = uniform(-std::numbers::pi, std::numbers::pi);
    opt.ego_start = {uniform(-50, 50), uniform(-50, 50), 0.0};
    opt.ego_lane = lane();
    const std::size_t n_frames = o.min_frames + rng.uniform_index(o.max_frames - o.min_frames + 1);
    const std::size_t n_inst = o.max_instances == 0 ? 0 : 1 + rng.uniform_index(o.max_instances);

    std::vector<ScenarioScript> scripts;
    for (std::size_t k = 0; k < n_inst; ++k) {
        ScenarioScript s;
        s.name = "obj" + std::to_string(k);
        s.category = kCategories[rng.uniform_index(std::size(kCategories))];
        // Sharing the ego lane makes same_road and lane changes reachable.
        s.lane = rng.uniform_index(3) == 0 ? opt.ego_lane : lane();
        std::size_t first = 0;
        std::size_t last = n_frames - 1;
        if (rng.uniform_index(4) == 0) first = rng.uniform_index(n_frames);
        if (rng.uniform_index(4) == 0) last = first + rng.uniform_index(n_frames - first);
        const double ego_t = static_cast<double>(first) * opt.dt * opt.ego_speed;
        Vec3 pos = opt.ego_start + Vec3{ego_t * std::cos(opt.ego_heading), ego_t * std::sin(opt.ego_heading), 0.0} +
                   Vec3{uniform(-o.extent, o.extent), uniform(-o.extent, o.extent), uniform(-1.0, 1.0)};
        double heading = uniform(-std::numbers::pi, std::numbers::pi);
        const bool parked = rng.uniform_index(5) == 0;
        for (std::size_t f = first; f <= last; ++f) {
            Waypoint w;
            w.t = static_cast<double>(f) * opt.dt;
            w.position = pos;
            w.heading = heading;
            w.speed = parked ? 0.0 : uniform(0.0, 10.0);
            if (f > first && rng.uniform_index(5) == 0) w.lane = lane();
            s.waypoints.push_back(w);
            if (!parked) {
                const double step = w.speed * opt.dt;
                pos = pos + Vec3{step * std::cos(heading), step * std::sin(heading), 0.0} +
                      Vec3{uniform(-1.5, 1.5), uniform(-1.5, 1.5), 0.0};
                heading = wrap_rad(heading + uniform(-0.4, 0.4));
            }
        }
        scripts.push_back(std::move(s));
    }
    return synth_scene(scripts, n_frames, seed, opt);
}

namespace {

// Waypoints at t = 0, dt, 2 dt from positions given relative to the track's own
// heading at the middle frame: prev = p + R(h) m_prev, next = p + R(h) m_next.
std::vector<Waypoint> three_point(Vec3 p, double heading_deg, Vec3 m_prev, Vec3 m_next, double v_prev, double v_i,
                                  double v_next, double dt = 0.5) {
    const Quaternion r = Quaternion::from_yaw(heading_deg * kDeg);
    const double h = heading_deg * kDeg;
    return {
        {0.0, p + rotate(r, m_prev), h, v_prev, std::nullopt},
        {dt, p, h, v_i, std::nullopt},
        {2 * dt, p + rotate(r, m_next), h, v_next, std::nullopt},
    };
}

ScenarioScript make_script(std::string name, std::optional<RiskKind> kind, std::string category,
                           std::vector<Waypoint> w, std::string lane = "lane_2") {
    ScenarioScript s;
    s.name = std::move(name);
    s.kind = kind;
    s.category = std::move(category);
    s.waypoints = std::move(w);
    s.lane = std::move(lane);
    return s;
}

CuratedScenario scenario(std::string id, ScenarioScript script, double ego_speed = 5.0) {
    CuratedScenario c;
    c.scene_id = std::move(id);
    c.options.scene_id = c.scene_id;
    c.options.ego_speed = ego_speed;
    c.scripts.push_back(std::move(script));
    return c;
}

}  // namespace

std::vector<CuratedScenario> curated_scenarios() {
    std::vector<CuratedScenario> out;
    // The ego starts at the origin heading +x; at 5 m/s it sits at x = 0, 2.5, 5.
    out.push_back(scenario("curated-overtaking-a",
                           make_script("car", RiskKind::Overtaking, "car",
                                       three_point({1, 2, 0}, 0, {-4, 0, 0}, {4, 0, 0}, 8, 8, 8))));
    out.push_back(scenario("curated-overtaking-b",
                           make_script("truck", RiskKind::Overtaking, "truck",
                                       three_point({8, -4, 0}, 30, {-3, 0, 0}, {3, 0, 0}, 6, 6, 6))));
    out.push_back(scenario("curated-oncoming-a",
                           make_script("car", RiskKind::OnComing, "car",
                                       three_point({15, 1, 0}, 180, {2, 0, 0}, {1, 0, 0}, 3, 3, 3))));
    out.push_back(scenario("curated-oncoming-b",
                           make_script("bus", RiskKind::OnComing, "bus",
                                       three_point({6, -8, 0}, 90, {3, 0.5, 0}, {1, -0.5, 0}, 2, 2, 2))));
    out.push_back(scenario("curated-approaching-a",
                           make_script("car", RiskKind::Approaching, "car",
                                       three_point({10, 3, 0}, 0, {2, 0, 0}, {-2, 0, 0}, 4, 4, 4))));
    out.push_back(scenario("curated-approaching-b",
                           make_script("motorcycle", RiskKind::Approaching, "motorcycle",
                                       three_point({9, -5, 0}, 45, {1.5, 0.5, 0}, {-2, -0.5, 0}, 3, 3, 3))));
    out.push_back(scenario("curated-crossing-a",
                           make_script("pedestrian", RiskKind::Crossing, "pedestrian",
                                       three_point({8, 0, 0}, 0, {0, -2.5, 0}, {0, 2.5, 0}, 5, 5, 5))));
    out.push_back(scenario("curated-crossing-b",
                           make_script("bicycle", RiskKind::Crossing, "bicycle",
                                       three_point({-6, 4, 0}, 0, {1, -2, 0}, {1, 2, 0}, 1.5, 1.5, 1.5))));
    // Braking needs the distance to shrink while the object covers > dis_x.
    out.push_back(scenario("curated-braking-a",
                           make_script("car", RiskKind::Braking, "car",
                                       three_point({14, 0.5, 0}, 0, {-4, 0, 0}, {0, 0, 0}, 5, 0.2, 0)),
                           10.0));
    out.push_back(scenario("curated-braking-b",
                           make_script("car", RiskKind::Braking, "car",
                                       three_point({-8, -1, 0}, 0, {-4, 0, 0}, {0, 0, 0}, 4, 0.1, 0))));
    {
        auto w = three_point({12, 1, 0}, 0, {0, 1, 0}, {0, -1, 0}, 2, 2, 2);
        w[0].lane = "lane_2";
        w[1].lane = "lane_1";
        out.push_back(scenario("curated-lane-changing-a", make_script("car", RiskKind::LaneChanging, "car", w)));
    }
    {
        auto w = three_point({18, -2, 0}, 0, {0, -1, 0}, {0, 0, 0}, 1.5, 1.5, 1.5);
        w[0].lane = "lane_0";
        w[1].lane = "lane_1";
        out.push_back(scenario("curated-lane-changing-b", make_script("van", RiskKind::LaneChanging, "car", w)));
    }
    out.push_back(scenario("curated-benign-a",
                           make_script("parked", std::nullopt, "car",
                                       three_point({5, 0, 0}, 0, {0, 0, 0}, {0, 0, 0}, 0, 0, 0), "lane_1")));
    out.push_back(scenario("curated-benign-b",
                           make_script("walker", std::nullopt, "pedestrian",
                                       three_point({-4, 6, 0}, 90, {0, 0, 0}, {0, 0, 0}, 0, 0, 0))));
    return out;
}

CanonicalAnnotations synth_curated(const CuratedScenario& c, std::uint64_t seed) {
    return synth_scene(c.scripts, c.n_frames, seed, c.options);
}

namespace {

Vec3 vec_from(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() < 2 || j.size() > 3) throw ValidationError(what + ": expected [x, y] or [x, y, z]");
    return {j[0].get<double>(), j[1].get<double>(), j.size() == 3 ? j[2].get<double>() : 0.0};
}

template <typename T>
T value_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

ScenarioScript script_from_json(const json& j) {
    try {
        ScenarioScript s;
        s.name = j.at("name").get<std::string>();
        const std::string kind = value_or<std::string>(j, "kind", "benign");
        if (kind != "benign") {
            s.kind = parse_risk(kind);
            if (!s.kind) throw ValidationError("script '" + s.name + "': unknown kind '" + kind + "'");
        }
        s.category = value_or<std::string>(j, "category", s.category);
        s.lane = value_or<std::string>(j, "lane", s.lane);
        s.road = value_or<std::string>(j, "road", s.road);
        for (const auto& w : j.at("waypoints")) {
            Waypoint p;
            p.t = w.at("t").get<double>();
            p.position = vec_from(w.at("position"), "script '" + s.name + "' waypoint position");
            p.heading = value_or<double>(w, "heading_deg", 0.0) * kDeg;
            p.speed = value_or<double>(w, "speed", 0.0);
            if (w.contains("lane")) p.lane = w.at("lane").get<std::string>();
            s.waypoints.push_back(p);
        }
        validate_script(s);
        return s;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("script: ") + e.what());
    }
}

json to_json(const ScenarioScript& s) {
    json wps = json::array();
    for (const auto& w : s.waypoints) {
        json p = {{"t", w.t},
                  {"position", {w.position.x, w.position.y, w.position.z}},
                  {"heading_deg", w.heading / kDeg},
                  {"speed", w.speed}};
        if (w.lane) p["lane"] = *w.lane;
        wps.push_back(std::move(p));
    }
    return {{"name", s.name},
            {"kind", s.kind ? std::string(risk_key(*s.kind)) : std::string("benign")},
            {"category", s.category},
            {"lane", s.lane},
            {"road", s.road},
            {"waypoints", std::move(wps)}};
}

CanonicalAnnotations synth_from_document(const json& doc) {
    if (!doc.is_object()) throw ValidationError("script document must be a JSON object");
    CanonicalAnnotations out;
    try {
        if (value_or<bool>(doc, "curated", false)) {
            for (const auto& c : curated_scenarios()) merge_annotations(out, synth_curated(c));
        }
        if (doc.contains("scenes")) {
            std::size_t idx = 0;
            for (const auto& sc : doc.at("scenes")) {
                SynthOptions opt;
                const auto seed = value_or<std::uint64_t>(sc, "seed", idx);
                opt.scene_id = value_or<std::string>(sc, "scene_id", "");
                opt.dt = value_or<double>(sc, "dt", opt.dt);
                opt.ego_speed = value_or<double>(sc, "ego_speed", opt.ego_speed);
                opt.ego_heading = value_or<double>(sc, "ego_heading_deg", 0.0) * kDeg;
                opt.ego_lane = value_or<std::string>(sc, "ego_lane", opt.ego_lane);
                if (sc.contains("ego_start")) opt.ego_start = vec_from(sc.at("ego_start"), "ego_start");
                std::vector<ScenarioScript> scripts;
                for (const auto& s : sc.at("scripts")) scripts.push_back(script_from_json(s));
                merge_annotations(out, synth_scene(scripts, value_or<std::size_t>(sc, "n_frames", 3), seed, opt));
                ++idx;
            }
        }
        if (doc.contains("random")) {
            const auto& r = doc.at("random");
            RandomSceneOptions o;
            o.min_frames = value_or<std::size_t>(r, "min_frames", o.min_frames);
            o.max_frames = value_or<std::size_t>(r, "max_frames", o.max_frames);
            o.max_instances = value_or<std::size_t>(r, "max_instances", o.max_instances);
            const auto seed = value_or<std::uint64_t>(r, "seed", 0);
            const auto n = value_or<std::size_t>(r, "scenes", 1);
            for (std::size_t k = 0; k < n; ++k) {
                const std::string id = "random-" + std::to_string(seed) + "-" + std::to_string(k);
                merge_annotations(out, random_scene(id, sha256_u64(std::to_string(seed) + ":" + id), o));
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("script document: ") + e.what());
    }
    return out;
}

}  // namespace drivesql
