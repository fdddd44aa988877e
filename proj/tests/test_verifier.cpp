#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "drivesql/errors.hpp"
#include "drivesql/verifier.hpp"
#include "drivesql/synth.hpp"

using namespace drivesql;
using nlohmann::json;

namespace {

struct Corpus {
    SceneDatabase db;
    std::vector<InstructionResponsePair> pairs;
};

Corpus corpus() {
    CanonicalAnnotations ann;
    for (const auto& c : curated_scenarios()) merge_annotations(ann, synth_curated(c));
    Corpus c{build_database(ann), {}};
    GenerationConfig cfg;
    cfg.master_seed = 4;
    c.pairs = generate_dataset(c.db, cfg).pairs;
    return c;
}

const InstructionResponsePair& first_of(const std::vector<InstructionResponsePair>& pairs, MetricFamily f) {
    for (const auto& p : pairs) {
        if (metric_family(p.subtask) == f) return p;
    }
    throw std::runtime_error("no pair of that family");
}

/// Local verifier that answers according to `reply`.
class MockVerifier {
public:
    explicit MockVerifier(std::function<json(const json&)> reply) {
        server_.Post("/verify", [this, reply](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            res.set_content(reply(json::parse(req.body)).dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockVerifier() {
        server_.stop();
        thread_.join();
    }
    ExternalClient client() const { return {"http://127.0.0.1:" + std::to_string(port_) + "/verify", 5.0, 1}; }
    std::atomic<int> hits{0};

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST_CASE("offline rules keep generated pairs") {
    const auto c = corpus();
    REQUIRE(!c.pairs.empty());
    const auto r = verify_pairs(c.pairs, OfflineRules{}, &c.db);
    CHECK(r.rejections.empty());
    CHECK(r.kept.size() == c.pairs.size());
    CHECK(r.unverified == 0);
}

TEST_CASE("offline rules reject broken pairs") {
    const auto c = corpus();
    SUBCASE("numbers lost from a numeric response") {
        auto p = first_of(c.pairs, MetricFamily::Mae);
        p.response = "It is far away.";
        CHECK(offline_check(p, {}, &c.db) == std::optional<std::string>("format contract"));
    }
    SUBCASE("wrong number") {
        auto p = first_of(c.pairs, MetricFamily::Mae);
        auto& num = std::get<NumericTruth>(p.ground_truth);
        num.values[0] += 1.0;
        CHECK(offline_check(p, {}, &c.db) == std::optional<std::string>("format contract"));
    }
    SUBCASE("ambiguous label") {
        auto p = first_of(c.pairs, MetricFamily::Accuracy);
        const auto labels = default_labels(p.subtask);
        std::string all;
        for (const auto& l : labels) all += l + " ";
        p.response = all;
        CHECK(offline_check(p, labels, &c.db) == std::optional<std::string>("format contract"));
    }
    SUBCASE("frame triple") {
        auto p = first_of(c.pairs, MetricFamily::Bleu);
        p.frame_ids.pop_back();
        CHECK(offline_check(p, {}, &c.db) == std::optional<std::string>("frame triple"));
    }
    SUBCASE("box outside the image") {
        auto p = first_of(c.pairs, MetricFamily::Map);
        auto& det = std::get<DetectionTruth>(p.ground_truth);
        if (det.detections.empty()) return;
        det.detections[0].bbox.x2 = 5000;
        CHECK(offline_check(p, {}, &c.db) == std::optional<std::string>("bbox out of bounds"));
    }
    SUBCASE("planning text shape") {
        auto p = first_of(c.pairs, MetricFamily::Bleu);
        p.response = "Just drive.";
        CHECK(offline_check(p, {}, &c.db) == std::optional<std::string>("format contract"));
    }
}

TEST_CASE("verdict wire contract") {
    CHECK(verdict_from_json({{"verdict", "keep"}})->verdict == Verdict::Keep);
    CHECK(verdict_from_json({{"verdict", "revise"}, {"revised_response", "x"}})->revised_response == "x");
    CHECK_FALSE(verdict_from_json({{"verdict", "revise"}}).has_value());
    CHECK_FALSE(verdict_from_json({{"verdict", "keep"}, {"revised_response", "x"}}).has_value());
    CHECK_FALSE(verdict_from_json({{"verdict", "maybe"}}).has_value());
    CHECK_FALSE(verdict_from_json(json::array()).has_value());
}

TEST_CASE("external verifier verdicts") {
    const auto c = corpus();
    std::vector<InstructionResponsePair> pairs(c.pairs.begin(), c.pairs.begin() + 6);

    MockVerifier mock([&](const json& req) {
        const std::string id = req.at("pair_id");
        if (id == pairs[0].pair_id) return json{{"verdict", "drop"}, {"reason", "hallucinated"}};
        if (id == pairs[1].pair_id) return json{{"verdict", "revise"}, {"revised_response", "better"}};
        return json{{"verdict", "keep"}};
    });
    const auto r = verify_pairs(pairs, mock.client(), &c.db);
    CHECK(mock.hits == 6);
    REQUIRE(r.rejections.size() == 1);
    CHECK(r.rejections[0].pair_id == pairs[0].pair_id);
    CHECK(r.rejections[0].reason == "hallucinated");
    CHECK(r.revised == 1);
    REQUIRE(r.kept.size() == 5);
    CHECK(r.kept[0].revised_response == std::optional<std::string>("better"));
    CHECK(r.kept[0].response == pairs[1].response);
    CHECK(r.unverified == 0);
}

TEST_CASE("contract-breaking replies are retried then kept unverified") {
    const auto c = corpus();
    std::vector<InstructionResponsePair> pairs(c.pairs.begin(), c.pairs.begin() + 2);
    MockVerifier mock([](const json&) { return json{{"verdict", "revise"}}; });
    const auto r = verify_pairs(pairs, mock.client(), &c.db);
    CHECK(mock.hits == 4);  // one retry per pair
    CHECK(r.kept.size() == 2);
    CHECK(r.unverified == 2);
    CHECK(r.kept[0].unverified);
}

TEST_CASE("unreachable endpoint keeps pairs unverified") {
    const auto c = corpus();
    std::vector<InstructionResponsePair> pairs(c.pairs.begin(), c.pairs.begin() + 3);
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }  // closed again, nothing listens there now
    const ExternalClient client{"http://127.0.0.1:" + std::to_string(port) + "/verify", 0.5, 0};
    const auto r = verify_pairs(pairs, client, &c.db);
    CHECK(r.kept.size() == 3);
    CHECK(r.unverified == 3);
    CHECK(r.rejections.empty());
    CHECK(r.log.size() == 3);
    CHECK_THROWS_AS(request_verdict({"ftp://nope", 1, 0}, pairs[0]), ValidationError);
}
