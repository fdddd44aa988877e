#include "drivesql/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <ostream>
#include <regex>
#include <tuple>
#include <unordered_map>

#include "drivesql/errors.hpp"
#include "drivesql/hashing.hpp"

namespace drivesql {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Prediction I/O

json to_json(const Prediction& p) {
    json j{{"pair_id", p.pair_id}, {"response_text", p.response_text}};
    if (p.detections) {
        json dets = json::array();
        for (const auto& d : *p.detections) {
            dets.push_back({{"view", std::string(view_key(d.view))}, {"bbox", to_json(d.bbox)}, {"score", d.score}});
        }
        j["detections"] = dets;
    }
    return j;
}

Prediction prediction_from_json(const json& j) {
    Prediction p;
    try {
        p.pair_id = j.at("pair_id").get<std::string>();
        p.response_text = j.at("response_text").get<std::string>();
        if (j.contains("detections") && !j.at("detections").is_null()) {
            std::vector<ScoredDetection> dets;
            for (const auto& e : j.at("detections")) {
                const std::string key = e.at("view").get<std::string>();
                auto view = parse_view(key);
                if (!view || *view == View::All) throw ValidationError("invalid detection view '" + key + "'");
                const auto& b = e.at("bbox");
                if (!b.is_array() || b.size() != 4) throw ValidationError("detection bbox must be [x1, y1, x2, y2]");
                const double score = e.at("score").get<double>();
                if (!(score >= 0.0 && score <= 1.0)) throw ValidationError("detection score must lie in [0, 1]");
                dets.push_back({*view, {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()},
                                score});
            }
            p.detections = std::move(dets);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed prediction: ") + e.what());
    }
    return p;
}

void write_predictions(std::ostream& os, const std::vector<Prediction>& preds) {
    for (const auto& p : preds) os << to_json(p).dump() << '\n';
}

std::vector<Prediction> read_predictions(std::istream& is) {
    std::vector<Prediction> preds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            preds.push_back(prediction_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return preds;
}

std::vector<Prediction> ground_truth_predictions(const std::vector<InstructionResponsePair>& pairs) {
    std::vector<Prediction> preds;
    for (const auto& p : pairs) {
        Prediction pred{p.pair_id, p.response, std::nullopt};
        if (const auto* det = std::get_if<DetectionTruth>(&p.ground_truth)) {
            std::vector<ScoredDetection> dets;
            for (const auto& d : det->detections) dets.push_back({d.view, d.bbox, 1.0});
            pred.detections = std::move(dets);
        }
        preds.push_back(std::move(pred));
    }
    return preds;
}

// ---------------------------------------------------------------------------
// MAE

std::vector<double> extract_numbers(std::string_view text) {
    static const std::regex kNumber(R"([-+]?\d+(?:\.\d+)?)");
    std::vector<double> out;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), kNumber); it != std::sregex_iterator(); ++it) {
        out.push_back(std::strtod(it->str().c_str(), nullptr));
    }
    return out;
}

MaeResult mae(const std::vector<std::string>& responses, const std::vector<std::vector<double>>& references) {
    if (responses.size() != references.size()) throw ValidationError("mae: responses and references differ in size");
    MaeResult r;
    double total = 0.0;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const auto& ref = references[i];
        const auto got = extract_numbers(responses[i]);
        if (ref.empty() || got.size() < ref.size()) {
            ++r.failed;
            continue;
        }
        double err = 0.0;
        for (std::size_t k = 0; k < ref.size(); ++k) err += std::abs(got[k] - ref[k]);
        total += err / static_cast<double>(ref.size());
        ++r.scored;
    }
    if (r.scored == 0) throw UndefinedScoreError("mae: no scorable pairs");
    r.mae = total / static_cast<double>(r.scored);
    return r;
}

// ---------------------------------------------------------------------------
// Accuracy

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::set<std::string> label_mentions(std::string_view text, const std::set<std::string>& label_set) {
    const auto tokens = tokenize(text);
    std::set<std::string> found;
    for (const auto& label : label_set) {
        const auto needle = tokenize(label);
        if (needle.empty() || needle.size() > tokens.size()) continue;
        if (std::search(tokens.begin(), tokens.end(), needle.begin(), needle.end()) != tokens.end()) {
            found.insert(label);
        }
    }
    return found;
}

bool label_correct(std::string_view text, const std::string& reference, const std::set<std::string>& label_set) {
    const auto found = label_mentions(text, label_set);
    return found.size() == 1 && tokenize(*found.begin()) == tokenize(reference);
}

double accuracy(const std::vector<std::string>& responses, const std::vector<std::string>& references,
                const std::set<std::string>& label_set) {
    if (responses.size() != references.size()) {
        throw ValidationError("accuracy: responses and references differ in size");
    }
    if (responses.empty()) throw UndefinedScoreError("accuracy: no pairs");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        if (label_correct(responses[i], references[i], label_set)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(responses.size());
}

// ---------------------------------------------------------------------------
// MAP

double iou(const BBox2D& a, const BBox2D& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::optional<double> average_precision(const std::vector<DetectionSample>& corpus, double iou_threshold) {
    std::size_t positives = 0;
    for (const auto& s : corpus) positives += s.references.size();
    if (positives == 0) return std::nullopt;

    struct Ranked {
        double score;
        const std::string* pair_id;
        std::size_t sample;
        std::size_t index;
    };
    std::vector<Ranked> ranked;
    for (std::size_t si = 0; si < corpus.size(); ++si) {
        for (std::size_t di = 0; di < corpus[si].detections.size(); ++di) {
            ranked.push_back({corpus[si].detections[di].score, &corpus[si].pair_id, si, di});
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (*a.pair_id != *b.pair_id) return *a.pair_id < *b.pair_id;
        return a.index < b.index;
    });

    std::vector<std::vector<bool>> matched(corpus.size());
    for (std::size_t si = 0; si < corpus.size(); ++si) matched[si].assign(corpus[si].references.size(), false);

    std::vector<double> precision;
    std::vector<double> recall;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        const auto& sample = corpus[ranked[k].sample];
        const auto& det = sample.detections[ranked[k].index];
        double best = -1.0;
        std::size_t best_ref = 0;
        for (std::size_t r = 0; r < sample.references.size(); ++r) {
            if (matched[ranked[k].sample][r] || sample.references[r].view != det.view) continue;
            const double o = iou(det.bbox, sample.references[r].bbox);
            if (o > best) {
                best = o;
                best_ref = r;
            }
        }
        if (best >= iou_threshold) {
            matched[ranked[k].sample][best_ref] = true;
            ++tp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
    }

    // Precision envelope, then area under the step curve.
    std::vector<double> mrec{0.0};
    std::vector<double> mpre{0.0};
    mrec.insert(mrec.end(), recall.begin(), recall.end());
    mpre.insert(mpre.end(), precision.begin(), precision.end());
    mrec.push_back(1.0);
    mpre.push_back(0.0);
    for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
    double ap = 0.0;
    for (std::size_t i = 0; i + 1 < mrec.size(); ++i) ap += (mrec[i + 1] - mrec[i]) * mpre[i + 1];
    return ap;
}

std::optional<double> map_score(const std::vector<std::vector<DetectionSample>>& corpora, double iou_threshold) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : corpora) {
        if (auto ap = average_precision(c, iou_threshold)) {
            sum += *ap;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// BLEU

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::uint64_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
    }
    return counts;
}

}  // namespace

BleuStats bleu_stats(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
    if (candidates.size() != references.size()) {
        throw ValidationError("bleu: candidate and reference corpora differ in size");
    }
    BleuStats st;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto cand = tokenize(candidates[i]);
        const auto ref = tokenize(references[i]);
        st.candidate_length += cand.size();
        st.reference_length += ref.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto ref_counts = ngrams(ref, n);
            for (const auto& [gram, count] : ngrams(cand, n)) {
                st.total[n - 1] += count;
                auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) st.matched[n - 1] += std::min(count, it->second);
            }
        }
    }
    return st;
}

double bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
            bool add_one_smoothing) {
    if (candidates.empty()) throw UndefinedScoreError("bleu: empty candidate corpus");
    const BleuStats st = bleu_stats(candidates, references);
    if (st.candidate_length == 0) return 0.0;

    double log_sum = 0.0;
    int orders = 0;
    for (std::size_t n = 0; n < 4; ++n) {
        if (st.total[n] == 0) continue;  // corpus too short for this order
        double m = static_cast<double>(st.matched[n]);
        double t = static_cast<double>(st.total[n]);
        if (add_one_smoothing && n > 0) {
            m += 1.0;
            t += 1.0;
        }
        if (m == 0.0) return 0.0;
        log_sum += std::log(m / t);
        ++orders;
    }
    const double c = static_cast<double>(st.candidate_length);
    const double r = static_cast<double>(st.reference_length);
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(log_sum / orders);
}

// ---------------------------------------------------------------------------
// Split

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
    // Integer weights (ratios to 1e-3) keep the remainder comparison exact.
    std::array<std::uint64_t, 3> w{};
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        if (!(ratios[i] >= 0.0) || !std::isfinite(ratios[i])) throw ValidationError("split ratios must be >= 0");
        w[i] = static_cast<std::uint64_t>(std::llround(ratios[i] * 1000.0));
        total += w[i];
    }
    if (total == 0) throw ValidationError("split ratios must not all be zero");

    std::array<std::size_t, 3> sizes{};
    std::array<std::uint64_t, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        sizes[i] = static_cast<std::size_t>(n * w[i] / total);
        rem[i] = n * w[i] % total;
        assigned += sizes[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k]];
    return sizes;
}

DatasetSplit split_dataset(std::vector<std::string> ids, const std::array<double, 3>& ratios, std::uint64_t seed) {
    if (ids.empty()) throw ValidationError("split: no scene ids");
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ValidationError("split: duplicate scene ids");
    const auto sizes = split_sizes(ids.size(), ratios);
    DeterministicRng rng(seed);
    rng.shuffle(ids);

    DatasetSplit out;
    auto first = ids.begin();
    for (auto* part : {&out.train, &out.val, &out.test}) {
        const auto k = sizes[part == &out.train ? 0 : part == &out.val ? 1 : 2];
        part->assign(first, first + static_cast<std::ptrdiff_t>(k));
        std::sort(part->begin(), part->end());
        first += static_cast<std::ptrdiff_t>(k);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::optional<double> mean_of(const std::map<SubtaskKind, double>& scores, std::initializer_list<SubtaskKind> kinds) {
    double sum = 0.0;
    std::size_t n = 0;
    for (SubtaskKind k : kinds) {
        auto it = scores.find(k);
        if (it == scores.end()) continue;
        sum += it->second;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

MetricReport evaluate(const std::vector<InstructionResponsePair>& pairs, const std::vector<Prediction>& predictions,
                      const EvaluationOptions& options) {
    std::unordered_map<std::string, const InstructionResponsePair*> by_id;
    for (const auto& p : pairs) {
        if (!by_id.emplace(p.pair_id, &p).second) throw ValidationError("duplicate pair_id '" + p.pair_id + "' in pairs");
    }
    std::unordered_map<std::string, const Prediction*> pred_of;
    for (const auto& pr : predictions) {
        auto it = by_id.find(pr.pair_id);
        if (it == by_id.end()) throw ValidationError("prediction for unknown pair_id '" + pr.pair_id + "'");
        if (!pred_of.emplace(pr.pair_id, &pr).second) {
            throw ValidationError("duplicate pair_id '" + pr.pair_id + "' in predictions");
        }
        const bool risk = metric_family(it->second->subtask) == MetricFamily::Map;
        if (risk && !pr.detections) {
            throw ValidationError("prediction '" + pr.pair_id + "' is for a risk subtask and needs detections");
        }
        if (!risk && pr.detections) {
            throw ValidationError("prediction '" + pr.pair_id + "' may not carry detections");
        }
    }

    std::map<SubtaskKind, std::vector<const InstructionResponsePair*>> by_subtask;
    for (const auto& p : pairs) by_subtask[p.subtask].push_back(&p);

    MetricReport report;
    std::size_t mae_pairs = 0;
    std::size_t mae_failed = 0;
    std::vector<std::vector<DetectionSample>> risk_corpora;

    for (const auto& [subtask, group] : by_subtask) {
        switch (metric_family(subtask)) {
            case MetricFamily::Mae: {
                std::vector<std::string> responses;
                std::vector<std::vector<double>> refs;
                std::size_t missing = 0;
                for (const auto* p : group) {
                    auto it = pred_of.find(p->pair_id);
                    if (it == pred_of.end()) {
                        ++missing;
                        continue;
                    }
                    responses.push_back(it->second->response_text);
                    const auto* num = std::get_if<NumericTruth>(&p->ground_truth);
                    refs.push_back(num ? num->values : std::vector<double>{});
                }
                mae_pairs += group.size();
                mae_failed += missing;
                try {
                    const MaeResult r = mae(responses, refs);
                    report.per_subtask[subtask] = r.mae;
                    mae_failed += r.failed;
                } catch (const UndefinedScoreError&) {
                    mae_failed += responses.size();
                }
                break;
            }
            case MetricFamily::Accuracy: {
                std::set<std::string> labels = default_labels(subtask);
                std::vector<std::string> responses;
                std::vector<std::string> refs;
                for (const auto* p : group) {
                    const auto* lab = std::get_if<LabelTruth>(&p->ground_truth);
                    refs.push_back(lab ? lab->label : std::string());
                    if (lab) labels.insert(lab->label);
                    auto it = pred_of.find(p->pair_id);
                    responses.push_back(it == pred_of.end() ? std::string() : it->second->response_text);
                }
                report.per_subtask[subtask] = accuracy(responses, refs, labels);
                break;
            }
            case MetricFamily::Map: {
                std::vector<DetectionSample> corpus;
                for (const auto* p : group) {
                    DetectionSample s{p->pair_id, {}, {}};
                    if (const auto* det = std::get_if<DetectionTruth>(&p->ground_truth)) s.references = det->detections;
                    auto it = pred_of.find(p->pair_id);
                    if (it != pred_of.end() && it->second->detections) s.detections = *it->second->detections;
                    corpus.push_back(std::move(s));
                }
                if (auto ap = average_precision(corpus, options.iou_threshold)) report.per_subtask[subtask] = *ap;
                risk_corpora.push_back(std::move(corpus));
                break;
            }
            case MetricFamily::Bleu: {
                std::vector<std::string> cands;
                std::vector<std::string> refs;
                for (const auto* p : group) {
                    const auto* txt = std::get_if<FreeTextTruth>(&p->ground_truth);
                    refs.push_back(txt ? txt->text : p->response);
                    auto it = pred_of.find(p->pair_id);
                    cands.push_back(it == pred_of.end() ? std::string() : it->second->response_text);
                }
                report.per_subtask[subtask] = bleu(cands, refs, options.bleu_smoothing);
                break;
            }
        }
    }

    using S = SubtaskKind;
    report.groups.perception_mae = mean_of(report.per_subtask, {S::Distance, S::Speeds, S::InstanceNumber});
    report.groups.perception_acc = mean_of(report.per_subtask, {S::Closest, S::Status, S::SameRoad});
    report.groups.prediction_mae = mean_of(report.per_subtask, {S::MotionEgo, S::MotionOthers});
    report.groups.prediction_acc = mean_of(report.per_subtask, {S::StatusEgo, S::StatusOthers});
    report.groups.risk_map = map_score(risk_corpora, options.iou_threshold);
    report.groups.reasoning_bleu = mean_of(report.per_subtask, {S::PlanningWithReasoning});
    report.extraction_failure_rate =
        mae_pairs == 0 ? 0.0 : static_cast<double>(mae_failed) / static_cast<double>(mae_pairs);
    return report;
}

json to_json(const MetricReport& r) {
    json per = json::object();
    for (const auto& [k, v] : r.per_subtask) per[std::string(subtask_key(k))] = v;
    const auto& g = r.groups;
    return json{{"per_subtask", per},
                {"groups",
                 {{"perception_mae", optional_json(g.perception_mae)},
                  {"perception_acc", optional_json(g.perception_acc)},
                  {"prediction_mae", optional_json(g.prediction_mae)},
                  {"prediction_acc", optional_json(g.prediction_acc)},
                  {"risk_map", optional_json(g.risk_map)},
                  {"reasoning_bleu", optional_json(g.reasoning_bleu)}}},
                {"extraction_failure_rate", r.extraction_failure_rate}};
}

}  // namespace drivesql
