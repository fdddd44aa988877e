#include "drivesql/verifier.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <regex>

#include <httplib.h>

#include "drivesql/errors.hpp"
#include "drivesql/evaluation.hpp"

namespace drivesql {

using nlohmann::json;

std::optional<VerifierVerdict> verdict_from_json(const json& j) {
    if (!j.is_object() || !j.contains("verdict") || !j["verdict"].is_string()) return std::nullopt;
    VerifierVerdict v;
    const std::string verdict = j["verdict"].get<std::string>();
    if (verdict == "keep") {
        v.verdict = Verdict::Keep;
    } else if (verdict == "drop") {
        v.verdict = Verdict::Drop;
    } else if (verdict == "revise") {
        v.verdict = Verdict::Revise;
    } else {
        return std::nullopt;
    }
    const bool has_revision = j.contains("revised_response") && !j["revised_response"].is_null();
    if (has_revision != (v.verdict == Verdict::Revise)) return std::nullopt;
    if (has_revision) {
        if (!j["revised_response"].is_string()) return std::nullopt;
        v.revised_response = j["revised_response"].get<std::string>();
    }
    if (j.contains("reason") && j["reason"].is_string()) v.reason = j["reason"].get<std::string>();
    return v;
}

json verifier_request(const InstructionResponsePair& pair) {
    return json{{"pair_id", pair.pair_id},
                {"instruction", pair.instruction},
                {"response", pair.response},
                {"subtask", std::string(subtask_key(pair.subtask))},
                {"ground_truth", to_json(pair.ground_truth)}};
}

std::optional<VerifierVerdict> request_verdict(const ExternalClient& client, const InstructionResponsePair& pair) {
    // endpoint = scheme://host[:port][/path]
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(client.endpoint, m, kUrl)) {
        throw ValidationError("verifier endpoint '" + client.endpoint + "' is not an http(s) URL");
    }
    const std::string base = m[1].str();
    const std::string path = m[2].matched ? m[2].str() : "/";

    httplib::Client http(base);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(client.timeout_seconds));
    http.set_connection_timeout(timeout);
    http.set_read_timeout(timeout);
    http.set_write_timeout(timeout);

    const std::string body = verifier_request(pair).dump();
    for (int attempt = 0; attempt <= client.retries; ++attempt) {
        auto res = http.Post(path, body, "application/json");
        if (!res || res->status != 200) continue;
        try {
            if (auto v = verdict_from_json(json::parse(res->body))) return v;
        } catch (const json::exception&) {
        }
    }
    return std::nullopt;
}

namespace {

bool inside(const BBox2D& b, const ImageBounds& bounds) {
    return b.valid() && b.x1 >= 0.0 && b.y1 >= 0.0 && b.x2 <= bounds.width && b.y2 <= bounds.height;
}

std::optional<std::string> check_instruction_boxes(const std::string& text, const ImageBounds& bounds) {
    static const std::regex kRef(R"(<([a-z ]+), ([-0-9.]+), ([-0-9.]+), ([-0-9.]+), ([-0-9.]+)>)");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), kRef); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        const BBox2D b{std::stod(m[2].str()), std::stod(m[3].str()), std::stod(m[4].str()), std::stod(m[5].str())};
        if (!inside(b, bounds)) return "bbox out of bounds";
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::string> offline_check(const InstructionResponsePair& pair, const std::set<std::string>& labels,
                                         const SceneDatabase* db, const ImageBounds& bounds) {
    if (pair.frame_ids.size() != 3) return "frame triple";
    if (pair.views_used.empty()) return "views_used empty";
    if (db) {
        try {
            require_consecutive(*db, pair.frame_ids[0], pair.frame_ids[1], pair.frame_ids[2]);
        } catch (const ValidationError&) {
            return "frames not consecutive";
        }
    }
    if (auto bad = check_instruction_boxes(pair.instruction, bounds)) return bad;

    const MetricFamily family = metric_family(pair.subtask);
    switch (family) {
        case MetricFamily::Mae: {
            const auto* num = std::get_if<NumericTruth>(&pair.ground_truth);
            if (!num || num->values.empty()) return "ground truth type";
            for (double v : num->values) {
                if (!std::isfinite(v)) return "non-finite value";
            }
            const auto got = extract_numbers(pair.response);
            if (got.size() < num->values.size()) return "format contract";
            for (std::size_t i = 0; i < num->values.size(); ++i) {
                if (std::abs(got[i] - num->values[i]) > 0.05 + 1e-9) return "format contract";
            }
            return std::nullopt;
        }
        case MetricFamily::Accuracy: {
            const auto* lab = std::get_if<LabelTruth>(&pair.ground_truth);
            if (!lab) return "ground truth type";
            if (!label_correct(pair.response, lab->label, labels)) return "format contract";
            return std::nullopt;
        }
        case MetricFamily::Map: {
            const auto* det = std::get_if<DetectionTruth>(&pair.ground_truth);
            if (!det) return "ground truth type";
            if (det->detections.empty()) {
                if (tokenize(pair.response) != std::vector<std::string>{"no"}) return "format contract";
                return std::nullopt;
            }
            for (const auto& d : det->detections) {
                if (d.view == View::All || !inside(d.bbox, bounds)) return "bbox out of bounds";
                if (pair.response.find(render_instance({d.view, d.bbox})) == std::string::npos) {
                    return "format contract";
                }
                if (d.instance_id.empty()) return "unknown instance";
                if (db) {
                    try {
                        if (!db->instance_at_frame(d.instance_id, pair.frame_ids[1])) return "unknown instance";
                    } catch (const LookupError&) {
                        return "unknown instance";
                    }
                }
            }
            return std::nullopt;
        }
        case MetricFamily::Bleu: {
            const auto* txt = std::get_if<FreeTextTruth>(&pair.ground_truth);
            if (!txt || txt->text.empty()) return "ground truth type";
            if (pair.response.rfind("There are ", 0) != 0 ||
                pair.response.find("Hence the ego car should be ") == std::string::npos) {
                return "format contract";
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

VerificationResult verify_pairs(const std::vector<InstructionResponsePair>& pairs, const VerifierConfig& verifier,
                                const SceneDatabase* db, const ImageBounds& bounds) {
    std::map<SubtaskKind, std::set<std::string>> labels;
    for (const auto& p : pairs) {
        auto& set = labels[p.subtask];
        if (set.empty()) set = default_labels(p.subtask);
        if (const auto* lab = std::get_if<LabelTruth>(&p.ground_truth)) set.insert(lab->label);
    }

    VerificationResult out;
    const auto* client = std::get_if<ExternalClient>(&verifier);
    for (const auto& p : pairs) {
        if (auto reason = offline_check(p, labels[p.subtask], db, bounds)) {
            out.rejections.push_back({p.pair_id, *reason});
            continue;
        }
        if (!client) {
            out.kept.push_back(p);
            continue;
        }
        InstructionResponsePair pair = p;
        auto verdict = request_verdict(*client, pair);
        if (!verdict) {
            pair.unverified = true;
            ++out.unverified;
            out.log.push_back("pair '" + p.pair_id + "': verifier unreachable, kept unverified");
            out.kept.push_back(std::move(pair));
            continue;
        }
        switch (verdict->verdict) {
            case Verdict::Keep: out.kept.push_back(std::move(pair)); break;
            case Verdict::Drop:
                out.rejections.push_back({p.pair_id, verdict->reason.empty() ? "verifier drop" : verdict->reason});
                break;
            case Verdict::Revise:
                pair.revised_response = verdict->revised_response;
                ++out.revised;
                out.kept.push_back(std::move(pair));
                break;
        }
    }
    return out;
}

}  // namespace drivesql
