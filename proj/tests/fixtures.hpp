#pragma once

#include <string>

#include "drivesql/scene_db.hpp"

namespace fixtures {

using namespace drivesql;

/// Hand-built scene: frames "<scene>-f<k>", ego at the origin with identity
/// heading unless moved, ego road {road: main, lane: l1}.
struct SceneBuilder {
    CanonicalAnnotations ann;
    std::string scene;

    SceneBuilder(std::string id, std::size_t n_frames) : scene(std::move(id)) {
        SceneRecord s{scene, {}};
        for (std::size_t f = 0; f < n_frames; ++f) {
            const std::string fid = frame_id(f);
            s.frame_ids.push_back(fid);
            EgoInfo e;
            e.info_id = fid + "-ego";
            e.road_info = {{"road", "main"}, {"lane", "l1"}};
            ann.ego.push_back(e);
            ann.frames.push_back({fid, e.info_id, {}, 0.5 * static_cast<double>(f)});
        }
        ann.scenes.push_back(s);
    }

    std::string frame_id(std::size_t f) const { return scene + "-f" + std::to_string(f); }

    EgoInfo& ego(std::size_t f) { return ann.ego[f]; }

    /// Adds instance `name` at frame f. With the ego at the origin and identity
    /// heading, global and local positions coincide.
    InstanceInfo& add(std::size_t f, const std::string& name, Vec3 pos, double velocity = 0.0,
                      std::map<View, BBox2D> boxes = {{View::Front, {100, 100, 200, 200}}}) {
        InstanceInfo in;
        in.instance_id = scene + "-" + name;
        in.info_id = in.instance_id + "@" + std::to_string(f);
        in.category = "car";
        in.attribute = velocity > 0 ? "moving" : "parked";
        in.global_t = pos;
        in.local_t = pos;
        in.velocity = velocity;
        in.road_info = {{"road", "main"}, {"lane", "l2"}};
        in.camera_pos = std::move(boxes);
        ann.frames[f].instance_info_ids.push_back(in.info_id);
        ann.instances.push_back(in);
        return ann.instances.back();
    }
};

}  // namespace fixtures
