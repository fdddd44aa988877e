#include "drivesql/statistics.hpp"

#include <set>
#include <sstream>

namespace drivesql {

double avg_instances_per_keyframe(std::size_t appearances, std::size_t keyframes) {
    return keyframes == 0 ? 0.0 : static_cast<double>(appearances) / static_cast<double>(keyframes);
}

DatasetStats compute_stats(const std::vector<InstructionResponsePair>& pairs, const SceneDatabase& db) {
    DatasetStats st;
    std::map<std::string, std::size_t> per_task;
    std::map<std::string, std::map<View, std::size_t>> task_views;
    std::set<std::string> frames;

    for (const auto& p : pairs) {
        ++st.pairs_per_subtask[p.subtask];
        ++per_task[p.task];
        for (View v : p.views_used) {
            if (v == View::All) continue;
            ++st.responses_per_view[v];
            ++task_views[p.task][v];
        }
        for (const auto& f : p.frame_ids) {
            db.frame(f);
            frames.insert(f);
        }
    }

    for (const auto& [task, n] : per_task) {
        st.task_proportions[task] = static_cast<double>(n) / static_cast<double>(pairs.size());
    }
    for (const auto& [task, views] : task_views) {
        std::size_t total = 0;
        for (const auto& [v, n] : views) total += n;
        for (const auto& [v, n] : views) {
            st.view_percent_per_task[task][v] = static_cast<double>(n) / static_cast<double>(total);
        }
    }

    std::set<std::string> physical;
    for (const auto& f : frames) {
        for (const auto& id : db.frame(f).instance_info_ids) {
            physical.insert(db.instance(id).instance_id);
            ++st.instance_appearances;
        }
    }
    st.instances_total = physical.size();
    st.keyframes = frames.size();
    st.avg_instances_per_keyframe = avg_instances_per_keyframe(st.instance_appearances, st.keyframes);
    return st;
}

nlohmann::json to_json(const DatasetStats& st) {
    nlohmann::json per_subtask = nlohmann::json::object();
    for (const auto& [k, n] : st.pairs_per_subtask) per_subtask[std::string(subtask_key(k))] = n;
    nlohmann::json per_view = nlohmann::json::object();
    for (const auto& [v, n] : st.responses_per_view) per_view[std::string(view_key(v))] = n;
    nlohmann::json view_pct = nlohmann::json::object();
    for (const auto& [task, views] : st.view_percent_per_task) {
        for (const auto& [v, f] : views) view_pct[task][std::string(view_key(v))] = f;
    }
    return {{"pairs_per_subtask", per_subtask},
            {"task_proportions", st.task_proportions},
            {"responses_per_view", per_view},
            {"view_percent_per_task", view_pct},
            {"instances_total", st.instances_total},
            {"instance_appearances", st.instance_appearances},
            {"keyframes", st.keyframes},
            {"avg_instances_per_keyframe", st.avg_instances_per_keyframe}};
}

std::string view_percent_csv(const DatasetStats& st) {
    std::ostringstream os;
    os << "task";
    for (View v : kCameraViews) os << ',' << view_key(v);
    os << '\n';
    for (const auto& [task, views] : st.view_percent_per_task) {
        os << task;
        for (View v : kCameraViews) {
            auto it = views.find(v);
            os << ',' << (it == views.end() ? 0.0 : it->second);
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace drivesql
