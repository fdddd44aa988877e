#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drivesql/generation.hpp"

namespace drivesql {

/// Camera image size used to bound boxes (1600x900).
struct ImageBounds {
    double width = 1600.0;
    double height = 900.0;
};

enum class Verdict { Keep, Drop, Revise };

struct VerifierVerdict {
    Verdict verdict = Verdict::Keep;
    std::optional<std::string> revised_response;
    std::string reason;
};

/// Parses a verifier reply; nullopt when it breaks the wire contract
/// (unknown verdict, or revised_response present iff verdict is revise).
std::optional<VerifierVerdict> verdict_from_json(const nlohmann::json& j);

/// Request body sent for one pair.
nlohmann::json verifier_request(const InstructionResponsePair& pair);

/// POSTs the pair to the endpoint, retrying on transport or contract failure.
/// nullopt once every attempt has failed.
std::optional<VerifierVerdict> request_verdict(const ExternalClient& client, const InstructionResponsePair& pair);

struct Rejection {
    std::string pair_id;
    std::string reason;
};

struct VerificationResult {
    std::vector<InstructionResponsePair> kept;
    std::vector<Rejection> rejections;
    std::size_t revised = 0;
    std::size_t unverified = 0;
    std::vector<std::string> log;
};

/// Offline contract check of one pair; returns the rejection reason, if any.
/// `labels` is the accuracy vocabulary of the pair's subtask.
std::optional<std::string> offline_check(const InstructionResponsePair& pair, const std::set<std::string>& labels,
                                         const SceneDatabase* db = nullptr, const ImageBounds& bounds = {});

/// Offline rules always run; an ExternalClient verifier then sees each
/// surviving pair. Endpoint failures never drop a pair.
VerificationResult verify_pairs(const std::vector<InstructionResponsePair>& pairs, const VerifierConfig& verifier,
                                const SceneDatabase* db = nullptr, const ImageBounds& bounds = {});

}  // namespace drivesql
