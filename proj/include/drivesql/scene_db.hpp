#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "drivesql/geometry.hpp"

namespace drivesql {

/// Camera views. All is a query wildcard and is never stored in camera_pos.
enum class View { FrontLeft, Front, FrontRight, BackLeft, Back, BackRight, All };

inline constexpr std::array<View, 6> kCameraViews = {View::FrontLeft, View::Front,  View::FrontRight,
                                                     View::BackLeft,  View::Back,   View::BackRight};
inline constexpr std::array<View, 7> kQueryViews = {View::FrontLeft, View::Front,     View::FrontRight,
                                                    View::BackLeft,  View::Back,      View::BackRight,
                                                    View::All};

/// snake_case key used in JSON ("front_left").
std::string_view view_key(View v);
/// Human name used in rendered text ("front left").
std::string_view view_name(View v);
std::optional<View> parse_view(std::string_view key);

struct BBox2D {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double area() const { return (x2 - x1) * (y2 - y1); }
    bool valid() const { return x1 < x2 && y1 < y2; }
    friend bool operator==(const BBox2D&, const BBox2D&) = default;
};

using TextMap = std::map<std::string, std::string>;

struct SceneRecord {
    std::string scene_id;
    std::vector<std::string> frame_ids;
    friend bool operator==(const SceneRecord&, const SceneRecord&) = default;
};

struct FrameRecord {
    std::string frame_id;
    std::string ego_info_id;
    std::vector<std::string> instance_info_ids;
    double timestamp = 0.0;
    friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct EgoInfo {
    std::string info_id;
    Vec3 pose;
    Quaternion rotation;
    double velocity = 0.0;
    TextMap road_info;
    TextMap camera_info;
    friend bool operator==(const EgoInfo&, const EgoInfo&) = default;
};

struct InstanceInfo {
    std::string info_id;
    std::string instance_id;
    std::string category;
    std::string attribute;
    Vec3 global_t;
    Quaternion global_r;
    Vec3 local_t;
    Quaternion local_r;
    double velocity = 0.0;
    TextMap road_info;
    std::map<View, BBox2D> camera_pos;
    friend bool operator==(const InstanceInfo&, const InstanceInfo&) = default;
};

/// Raw canonical annotation document, before filtering and integrity checks.
struct CanonicalAnnotations {
    std::vector<SceneRecord> scenes;
    std::vector<FrameRecord> frames;
    std::vector<EgoInfo> ego;
    std::vector<InstanceInfo> instances;
};

/// Parses the canonical JSON schema. Field errors name the frame (where one
/// references the record) and the field.
CanonicalAnnotations annotations_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CanonicalAnnotations& ann);

nlohmann::json to_json(const InstanceInfo& info);
nlohmann::json to_json(const BBox2D& box);

enum class TableKind { Scene, Frame, Ego, Instance };
std::string_view table_name(TableKind t);

inline constexpr double kDefaultImportantRadius = 20.0;

class SceneDatabase;

/// Validates `annotations`, drops instances farther than `important_radius`
/// (planar distance of local_t), and indexes the four tables.
SceneDatabase build_database(CanonicalAnnotations annotations,
                             double important_radius = kDefaultImportantRadius);

/// Four-table scene store. Immutable once built; safe for concurrent readers.
class SceneDatabase {
public:
    using Record = std::variant<const SceneRecord*, const FrameRecord*, const EgoInfo*, const InstanceInfo*>;

    const SceneRecord& scene(const std::string& id) const;
    const FrameRecord& frame(const std::string& id) const;
    const EgoInfo& ego(const std::string& id) const;
    const InstanceInfo& instance(const std::string& id) const;
    Record query(TableKind table, const std::string& id) const;

    const EgoInfo& ego_of_frame(const std::string& frame_id) const;

    /// The record of physical instance `instance_id` in `frame_id`, or nullptr
    /// when it does not appear there. Unknown frame ids throw LookupError.
    const InstanceInfo* instance_at_frame(const std::string& instance_id, const std::string& frame_id) const;

    /// Scene containing the frame and the frame's position in it.
    std::pair<const SceneRecord*, std::size_t> locate_frame(const std::string& frame_id) const;

    /// Scene ids in annotation order.
    const std::vector<std::string>& scene_order() const { return scene_order_; }
    const std::map<std::string, SceneRecord>& scenes() const { return scenes_; }
    const std::map<std::string, FrameRecord>& frames() const { return frames_; }
    const std::map<std::string, EgoInfo>& ego_table() const { return ego_; }
    const std::map<std::string, InstanceInfo>& instances() const { return instances_; }
    const std::map<std::pair<std::string, std::string>, std::string>& instance_frame_index() const {
        return instance_frame_index_;
    }
    double important_radius() const { return important_radius_; }

    /// Persistence document: annotation schema plus "important_radius".
    nlohmann::json to_json() const;
    static SceneDatabase from_json(const nlohmann::json& doc);

    friend bool operator==(const SceneDatabase& a, const SceneDatabase& b) {
        return a.scene_order_ == b.scene_order_ && a.scenes_ == b.scenes_ && a.frames_ == b.frames_ &&
               a.ego_ == b.ego_ && a.instances_ == b.instances_ &&
               a.instance_frame_index_ == b.instance_frame_index_ && a.important_radius_ == b.important_radius_;
    }

private:
    friend SceneDatabase build_database(CanonicalAnnotations, double);
    SceneDatabase() = default;

    std::vector<std::string> scene_order_;
    std::map<std::string, SceneRecord> scenes_;
    std::map<std::string, FrameRecord> frames_;
    std::map<std::string, EgoInfo> ego_;
    std::map<std::string, InstanceInfo> instances_;
    std::map<std::pair<std::string, std::string>, std::string> instance_frame_index_;
    std::map<std::string, std::pair<std::string, std::size_t>> frame_location_;
    double important_radius_ = kDefaultImportantRadius;
};

}  // namespace drivesql
