#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "drivesql/errors.hpp"
#include "drivesql/statistics.hpp"
#include "drivesql/synth.hpp"
#include "fixtures.hpp"

using namespace drivesql;

namespace {

SceneDatabase small_db() {
    fixtures::SceneBuilder b("st", 4);
    b.add(0, "a", {5, 0, 0});
    b.add(1, "a", {5, 0, 0});
    b.add(1, "b", {0, 8, 0});
    b.add(2, "a", {5, 0, 0});
    b.add(2, "b", {0, 8, 0});
    b.add(2, "c", {-4, 1, 0});
    b.add(3, "c", {-4, 1, 0});
    return build_database(b.ann);
}

InstructionResponsePair pair_on(std::vector<std::string> frames, std::string task, SubtaskKind s, std::set<View> views) {
    InstructionResponsePair p;
    p.pair_id = "x";
    p.scene_id = "st";
    p.frame_ids = std::move(frames);
    p.task = std::move(task);
    p.subtask = s;
    p.views_used = std::move(views);
    return p;
}

}  // namespace

TEST_CASE("average instances per keyframe") {
    CHECK(std::round(avg_instances_per_keyframe(295828, 11850) * 100) / 100 == 24.96);
    CHECK(avg_instances_per_keyframe(0, 0) == 0.0);
}

TEST_CASE("tallies over referenced keyframes") {
    const auto db = small_db();
    const std::vector<InstructionResponsePair> pairs{
        pair_on({"st-f0", "st-f1", "st-f2"}, "perception", SubtaskKind::Distance, {View::Front}),
        pair_on({"st-f0", "st-f1", "st-f2"}, "perception", SubtaskKind::Speeds, {View::Front}),
        pair_on({"st-f1", "st-f2", "st-f3"}, "prediction", SubtaskKind::MotionEgo, {View::Front, View::Back}),
    };
    const auto st = compute_stats(pairs, db);
    CHECK(st.keyframes == 4);
    CHECK(st.instance_appearances == 7);
    CHECK(st.instances_total == 3);
    CHECK(st.avg_instances_per_keyframe == 7.0 / 4.0);
    CHECK(st.pairs_per_subtask.at(SubtaskKind::Distance) == 1);
    CHECK(st.task_proportions.at("perception") == doctest::Approx(2.0 / 3.0));
    CHECK(st.responses_per_view.at(View::Front) == 3);
    CHECK(st.view_percent_per_task.at("prediction").at(View::Back) == 0.5);

    const auto csv = view_percent_csv(st);
    CHECK(csv.rfind("task,", 0) == 0);
    CHECK(to_json(st)["keyframes"] == 4);
}

TEST_CASE("front-only dataset puts all mass on Front") {
    const auto db = small_db();
    std::vector<InstructionResponsePair> pairs;
    for (int i = 0; i < 5; ++i) pairs.push_back(pair_on({"st-f0", "st-f1", "st-f2"}, "perception", SubtaskKind::Distance, {View::Front}));
    const auto st = compute_stats(pairs, db);
    CHECK(st.responses_per_view.size() == 1);
    CHECK(st.responses_per_view.at(View::Front) == 5);
    CHECK(st.view_percent_per_task.at("perception").at(View::Front) == 1.0);
}

TEST_CASE("balanced view generator is uniform within 3 sigma") {
    const auto db = small_db();
    std::mt19937_64 g(99);
    const std::size_t n = 6000;
    std::vector<InstructionResponsePair> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        pairs.push_back(pair_on({"st-f0", "st-f1", "st-f2"}, "perception", SubtaskKind::Closest,
                                {kCameraViews[g() % kCameraViews.size()]}));
    }
    const auto st = compute_stats(pairs, db);
    const double p = 1.0 / 6.0;
    const double sigma = std::sqrt(n * p * (1 - p));
    double total = 0;
    for (View v : kCameraViews) {
        const double got = static_cast<double>(st.responses_per_view.at(v));
        CHECK(std::abs(got - n * p) <= 3 * sigma);
        total += st.view_percent_per_task.at("perception").at(v);
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
}

TEST_CASE("order independence and normalization on generated data") {
    CanonicalAnnotations ann;
    for (int k = 0; k < 5; ++k) merge_annotations(ann, random_scene("s" + std::to_string(k), 40 + k));
    const auto db = build_database(ann);
    GenerationConfig cfg;
    cfg.master_seed = 2;
    auto pairs = generate_dataset(db, cfg).pairs;
    const auto a = compute_stats(pairs, db);
    std::reverse(pairs.begin(), pairs.end());
    const auto b = compute_stats(pairs, db);
    CHECK(to_json(a) == to_json(b));

    std::size_t sum = 0;
    for (const auto& [k, n] : a.pairs_per_subtask) sum += n;
    CHECK(sum == pairs.size());
    double tp = 0;
    for (const auto& [k, f] : a.task_proportions) tp += f;
    CHECK(std::abs(tp - 1.0) <= 1e-9);
    for (const auto& [task, views] : a.view_percent_per_task) {
        double s = 0;
        for (const auto& [v, f] : views) s += f;
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
}

TEST_CASE("dangling frame reference is an error") {
    const auto db = small_db();
    const std::vector<InstructionResponsePair> pairs{
        pair_on({"st-f0", "st-f1", "nope"}, "perception", SubtaskKind::Distance, {View::Front})};
    CHECK_THROWS_AS(compute_stats(pairs, db), LookupError);
}
