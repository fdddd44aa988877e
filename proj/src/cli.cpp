#include "drivesql/cli.hpp"

#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "drivesql/errors.hpp"
#include "drivesql/evaluation.hpp"
#include "drivesql/generation.hpp"
#include "drivesql/hashing.hpp"
#include "drivesql/scene_db.hpp"
#include "drivesql/statistics.hpp"
#include "drivesql/synth.hpp"
#include "drivesql/verifier.hpp"

namespace drivesql::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error while reading '" + path + "'");
    return ss.str();
}

// Writes next to the target and renames, so readers never see a partial file.
void write_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + target.parent_path().string() + "': " + ec.message());
    }
    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path + "'");
        out << content;
        out.flush();
        if (!out) throw IoError("error while writing '" + path + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move output into place at '" + path + "'");
    }
}

json read_json_file(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

std::vector<InstructionResponsePair> read_pairs(const std::string& path) {
    std::istringstream in(read_file(path));
    try {
        return read_jsonl(in);
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

std::string pairs_text(const std::vector<InstructionResponsePair>& pairs) {
    std::ostringstream out;
    write_jsonl(out, pairs);
    return out.str();
}

SceneDatabase load_db(const std::string& path) {
    const json doc = read_json_file(path);
    try {
        return SceneDatabase::from_json(doc);
    } catch (const json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

/// Audit record written beside each command's outputs.
struct RunManifest {
    std::string command;
    json config = json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    json summary = json::object();
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    void write(const std::string& path) const {
        json in = json::object();
        for (const auto& p : inputs) in[p] = sha256_hex(read_file(p));
        json out = json::object();
        for (const auto& p : outputs) out[p] = sha256_hex(read_file(p));
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        const json doc = {{"command", command},
                          {"config", config},
                          {"config_digest", sha256_hex(config.dump())},
                          {"inputs", in},
                          {"outputs", out},
                          {"summary", summary},
                          {"tool_version", kToolVersion},
                          {"wall_time_seconds", wall}};
        write_atomic(path, doc.dump(2) + "\n");
    }
};

std::string manifest_path_for(const std::string& output) { return output + ".manifest.json"; }

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

std::set<SubtaskKind> parse_subtasks(const std::string& list) {
    std::set<SubtaskKind> out;
    for (const auto& key : split_list(list)) {
        if (key == "all") {
            out.insert(kAllSubtasks.begin(), kAllSubtasks.end());
            continue;
        }
        const auto s = parse_subtask(key);
        if (!s) throw ValidationError("--subtasks: unknown subtask '" + key + "'");
        out.insert(*s);
    }
    if (out.empty()) throw ValidationError("--subtasks: empty list");
    return out;
}

std::array<double, 3> parse_ratios(const std::string& text) {
    const auto parts = split_list(text);
    if (parts.size() != 3) throw ValidationError("--ratios: expected three comma-separated numbers");
    std::array<double, 3> r{};
    for (std::size_t i = 0; i < 3; ++i) {
        try {
            std::size_t used = 0;
            r[i] = std::stod(parts[i], &used);
            if (used != parts[i].size()) throw std::invalid_argument(parts[i]);
        } catch (const std::exception&) {
            throw ValidationError("--ratios: '" + parts[i] + "' is not a number");
        }
    }
    return r;
}

struct VerifierFlags {
    std::string url;
    double timeout = 10.0;
    int retries = 2;

    VerifierConfig config() const {
        if (url.empty()) return OfflineRules{};
        return ExternalClient{url, timeout, retries};
    }
    json to_json() const {
        if (url.empty()) return "offline";
        return {{"url", url}, {"timeout", timeout}, {"retries", retries}};
    }
};

// Every named option can also come from DRIVESQL_<NAME>.
template <typename T>
CLI::Option* opt(CLI::App* app, const std::string& flags, T& target, const std::string& help, const std::string& env) {
    return app->add_option(flags, target, help)->envname("DRIVESQL_" + env);
}

void add_verifier_flags(CLI::App* app, VerifierFlags& v) {
    opt(app, "--verifier", v.url, "External verifier endpoint URL (default: offline rules only)", "VERIFIER");
    opt(app, "--verifier-timeout", v.timeout, "Per-request timeout in seconds", "VERIFIER_TIMEOUT")
        ->check(CLI::PositiveNumber);
    opt(app, "--verifier-retries", v.retries, "Retries per pair after the first attempt", "VERIFIER_RETRIES")
        ->check(CLI::NonNegativeNumber);
}

void log_verification(const VerificationResult& r) {
    std::cerr << "verify: kept " << r.kept.size() << ", rejected " << r.rejections.size() << ", revised "
              << r.revised << ", unverified " << r.unverified << "\n";
    for (const auto& line : r.log) std::cerr << "  " << line << "\n";
}

json verification_summary(const VerificationResult& r) {
    json rej = json::array();
    for (const auto& x : r.rejections) rej.push_back({{"pair_id", x.pair_id}, {"reason", x.reason}});
    return {{"kept", r.kept.size()},
            {"rejected", r.rejections.size()},
            {"revised", r.revised},
            {"unverified", r.unverified},
            {"rejections", rej}};
}

int dispatch(CLI::App& app, int argc, const char* const* argv, const std::function<int()>& body) {
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        return body();
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Scene database, instruction-response generation and evaluation tools", "drivesql"};
    app.set_version_flag("--version", kToolVersion);
    app.set_config("--config", "", "Key-value config file (key = value, [subcommand] sections)");
    app.require_subcommand(1);

    // build-db
    std::string bd_in, bd_out;
    double bd_radius = kDefaultImportantRadius;
    auto* build_db = app.add_subcommand("build-db", "Build the scene database from canonical annotations");
    build_db->add_option("annotations", bd_in, "Canonical annotation JSON")->required();
    opt(build_db, "-o,--output", bd_out, "Database JSON to write", "DB_OUTPUT")->required();
    opt(build_db, "--radius", bd_radius, "Important radius in meters", "RADIUS")->check(CLI::PositiveNumber);

    // generate
    std::string gen_db, gen_out, gen_thresholds, gen_subtasks = "all";
    std::uint64_t gen_seed = 0;
    std::size_t gen_windows = 2, gen_max_inst = 5;
    int gen_jobs = 0;
    bool gen_literal = false;
    VerifierFlags gen_verifier;
    auto* generate = app.add_subcommand("generate", "Generate instruction-response pairs");
    generate->add_option("db", gen_db, "Database JSON")->required();
    opt(generate, "-o,--output", gen_out, "Pairs JSONL to write", "PAIRS_OUTPUT")->required();
    opt(generate, "--seed", gen_seed, "Master seed", "SEED");
    opt(generate, "--windows", gen_windows, "Keyframe windows per scene", "WINDOWS")->check(CLI::PositiveNumber);
    opt(generate, "--max-instances", gen_max_inst, "Instances per per-instance subtask", "MAX_INSTANCES")
        ->check(CLI::PositiveNumber);
    opt(generate, "--thresholds", gen_thresholds, "Risk threshold JSON file", "THRESHOLDS");
    opt(generate, "--subtasks", gen_subtasks, "Comma-separated subtask keys or 'all'", "SUBTASKS");
    opt(generate, "--jobs", gen_jobs, "Worker threads (0: all logical cores)", "JOBS")->check(CLI::NonNegativeNumber);
    generate->add_flag("--literal-predicates", gen_literal, "Evaluate risk predicates in their literal form")
        ->envname("DRIVESQL_LITERAL_PREDICATES");
    add_verifier_flags(generate, gen_verifier);

    // verify
    std::string ver_in, ver_out, ver_db;
    VerifierFlags ver_verifier;
    auto* verify = app.add_subcommand("verify", "Filter pairs through offline rules and an optional verifier");
    verify->add_option("pairs", ver_in, "Pairs JSONL")->required();
    opt(verify, "-o,--output", ver_out, "Kept pairs JSONL", "KEPT_OUTPUT")->required();
    opt(verify, "--db", ver_db, "Database JSON for instance reference checks", "DB");
    add_verifier_flags(verify, ver_verifier);

    // split
    std::string sp_in, sp_dir, sp_ratios = "7.5,1.5,1.5";
    std::uint64_t sp_seed = 0;
    auto* split = app.add_subcommand("split", "Split pairs by scene into train/val/test");
    split->add_option("pairs", sp_in, "Pairs JSONL")->required();
    opt(split, "-o,--output", sp_dir, "Output directory", "SPLIT_OUTPUT")->required();
    opt(split, "--ratios", sp_ratios, "train,val,test weights", "RATIOS");
    opt(split, "--seed", sp_seed, "Shuffle seed", "SPLIT_SEED");

    // stats
    std::string st_pairs, st_db, st_out, st_csv;
    auto* stats = app.add_subcommand("stats", "Dataset statistics");
    stats->add_option("pairs", st_pairs, "Pairs JSONL")->required();
    stats->add_option("db", st_db, "Database JSON")->required();
    opt(stats, "-o,--output", st_out, "Statistics JSON", "STATS_OUTPUT")->required();
    opt(stats, "--csv", st_csv, "Also write the per-task view distribution as CSV", "STATS_CSV");

    // eval
    std::string ev_pairs, ev_preds, ev_out;
    double ev_iou = kDefaultIouThreshold;
    bool ev_smooth = false;
    auto* eval = app.add_subcommand("eval", "Score predictions against pairs");
    eval->add_option("pairs", ev_pairs, "Pairs JSONL")->required();
    eval->add_option("predictions", ev_preds, "Predictions JSONL")->required();
    opt(eval, "-o,--output", ev_out, "Report JSON", "REPORT_OUTPUT")->required();
    opt(eval, "--iou", ev_iou, "IoU threshold for detection matching", "IOU")->check(CLI::Range(0.0, 1.0));
    eval->add_flag("--bleu-smoothing", ev_smooth, "Add-one smoothing for BLEU n >= 2")
        ->envname("DRIVESQL_BLEU_SMOOTHING");

    // export-gt
    std::string gt_pairs, gt_out;
    auto* export_gt = app.add_subcommand("export-gt", "Write each pair's ground-truth response as a prediction");
    export_gt->add_option("pairs", gt_pairs, "Pairs JSONL")->required();
    opt(export_gt, "-o,--output", gt_out, "Predictions JSONL", "PREDICTIONS_OUTPUT")->required();

    // synth
    std::string sy_in, sy_out;
    auto* synth = app.add_subcommand("synth", "Synthesize canonical annotations from scripts");
    synth->add_option("scripts", sy_in, "Script JSON document")->required();
    opt(synth, "-o,--output", sy_out, "Annotation JSON to write", "SYNTH_OUTPUT")->required();

    return dispatch(app, argc, argv, [&]() -> int {
        RunManifest m;
        if (build_db->parsed()) {
            m.command = "build-db";
            m.config = {{"radius", bd_radius}};
            const json doc = read_json_file(bd_in);
            CanonicalAnnotations ann;
            try {
                ann = annotations_from_json(doc);
            } catch (const ValidationError& e) {
                throw ValidationError(bd_in + ": " + e.what());
            }
            const SceneDatabase db = build_database(std::move(ann), bd_radius);
            write_atomic(bd_out, db.to_json().dump() + "\n");
            m.inputs = {bd_in};
            m.outputs = {bd_out};
            m.summary = {{"scenes", db.scenes().size()},
                         {"frames", db.frames().size()},
                         {"instances", db.instances().size()}};
            m.write(manifest_path_for(bd_out));
            std::cerr << "build-db: " << db.scenes().size() << " scenes, " << db.frames().size() << " frames, "
                      << db.instances().size() << " instance rows\n";
            return 0;
        }
        if (generate->parsed()) {
            GenerationConfig cfg;
            cfg.master_seed = gen_seed;
            cfg.windows_per_scene = gen_windows;
            cfg.max_instances_per_subtask = gen_max_inst;
            cfg.enabled_subtasks = parse_subtasks(gen_subtasks);
            cfg.verifier = gen_verifier.config();
            cfg.predicate_mode = gen_literal ? PredicateMode::Literal : PredicateMode::Corrected;
            cfg.jobs = gen_jobs;
            m.inputs = {gen_db};
            if (!gen_thresholds.empty()) {
                try {
                    cfg.thresholds = thresholds_from_json(read_json_file(gen_thresholds));
                } catch (const json::exception& e) {
                    throw ValidationError(gen_thresholds + ": " + e.what());
                }
                m.inputs.push_back(gen_thresholds);
            }
            json subtasks = json::array();
            for (auto s : cfg.enabled_subtasks) subtasks.push_back(subtask_key(s));
            // jobs is left out of the config digest: it never changes the output.
            m.command = "generate";
            m.config = {{"seed", gen_seed},
                        {"windows", gen_windows},
                        {"max_instances", gen_max_inst},
                        {"thresholds", to_json(cfg.thresholds)},
                        {"subtasks", subtasks},
                        {"predicates", gen_literal ? "literal" : "corrected"},
                        {"verifier", gen_verifier.to_json()}};
            const SceneDatabase db = load_db(gen_db);
            GeneratedDataset data = generate_dataset(db, cfg);
            const auto& d = data.diagnostics;
            m.summary = {{"pairs", data.pairs.size()},
                         {"windows", d.windows},
                         {"ineligible_scenes", d.ineligible_scenes},
                         {"skipped_instances", d.skipped_instances},
                         {"failed_pairs", d.failed_pairs}};
            for (const auto& f : d.failures) std::cerr << "generate: " << f << "\n";
            if (std::holds_alternative<ExternalClient>(cfg.verifier)) {
                VerificationResult vr = verify_pairs(data.pairs, cfg.verifier, &db);
                log_verification(vr);
                m.summary["verification"] = verification_summary(vr);
                data.pairs = std::move(vr.kept);
            }
            write_atomic(gen_out, pairs_text(data.pairs));
            m.outputs = {gen_out};
            m.write(manifest_path_for(gen_out));
            std::cerr << "generate: " << data.pairs.size() << " pairs from " << d.windows << " windows\n";
            return 0;
        }
        if (verify->parsed()) {
            m.command = "verify";
            m.config = {{"verifier", ver_verifier.to_json()}, {"db", !ver_db.empty()}};
            const auto pairs = read_pairs(ver_in);
            m.inputs = {ver_in};
            std::optional<SceneDatabase> db;
            if (!ver_db.empty()) {
                db = load_db(ver_db);
                m.inputs.push_back(ver_db);
            }
            const VerificationResult vr = verify_pairs(pairs, ver_verifier.config(), db ? &*db : nullptr);
            log_verification(vr);
            write_atomic(ver_out, pairs_text(vr.kept));
            m.outputs = {ver_out};
            m.summary = verification_summary(vr);
            m.write(manifest_path_for(ver_out));
            return 0;
        }
        if (split->parsed()) {
            m.command = "split";
            const auto ratios = parse_ratios(sp_ratios);
            m.config = {{"ratios", ratios}, {"seed", sp_seed}};
            const auto pairs = read_pairs(sp_in);
            m.inputs = {sp_in};
            std::set<std::string> scenes;
            for (const auto& p : pairs) scenes.insert(p.scene_id);
            const DatasetSplit parts = split_dataset({scenes.begin(), scenes.end()}, ratios, sp_seed);
            const std::pair<const char*, const std::vector<std::string>*> named[] = {
                {"train", &parts.train}, {"val", &parts.val}, {"test", &parts.test}};
            json listing = json::object();
            for (const auto& [name, ids] : named) {
                const std::set<std::string> members(ids->begin(), ids->end());
                std::vector<InstructionResponsePair> subset;
                for (const auto& p : pairs) {
                    if (members.count(p.scene_id)) subset.push_back(p);
                }
                const std::string path = (fs::path(sp_dir) / (std::string(name) + ".jsonl")).string();
                write_atomic(path, pairs_text(subset));
                m.outputs.push_back(path);
                listing[name] = *ids;
                m.summary[name] = {{"scenes", ids->size()}, {"pairs", subset.size()}};
            }
            const std::string list_path = (fs::path(sp_dir) / "split.json").string();
            write_atomic(list_path, listing.dump(2) + "\n");
            m.outputs.push_back(list_path);
            m.write((fs::path(sp_dir) / "manifest.json").string());
            std::cerr << "split: " << parts.train.size() << "/" << parts.val.size() << "/" << parts.test.size()
                      << " scenes\n";
            return 0;
        }
        if (stats->parsed()) {
            m.command = "stats";
            const auto pairs = read_pairs(st_pairs);
            const SceneDatabase db = load_db(st_db);
            m.inputs = {st_pairs, st_db};
            const DatasetStats s = compute_stats(pairs, db);
            write_atomic(st_out, to_json(s).dump(2) + "\n");
            m.outputs = {st_out};
            if (!st_csv.empty()) {
                write_atomic(st_csv, view_percent_csv(s));
                m.outputs.push_back(st_csv);
            }
            m.summary = {{"keyframes", s.keyframes}, {"avg_instances_per_keyframe", s.avg_instances_per_keyframe}};
            m.write(manifest_path_for(st_out));
            return 0;
        }
        if (eval->parsed()) {
            m.command = "eval";
            m.config = {{"iou", ev_iou}, {"bleu_smoothing", ev_smooth}};
            const auto pairs = read_pairs(ev_pairs);
            std::vector<Prediction> preds;
            {
                std::istringstream in(read_file(ev_preds));
                try {
                    preds = read_predictions(in);
                } catch (const ValidationError& e) {
                    throw ValidationError(ev_preds + ": " + e.what());
                }
            }
            m.inputs = {ev_pairs, ev_preds};
            const MetricReport report = evaluate(pairs, preds, {ev_iou, ev_smooth});
            const json doc = to_json(report);
            write_atomic(ev_out, doc.dump(2) + "\n");
            m.outputs = {ev_out};
            m.summary = doc.at("groups");
            m.write(manifest_path_for(ev_out));
            std::cout << doc.at("groups").dump() << "\n";
            if (!report.groups.all_defined()) {
                std::cerr << "eval: some metric groups are undefined (no pairs of that family)\n";
                return 1;
            }
            return 0;
        }
        if (export_gt->parsed()) {
            m.command = "export-gt";
            const auto pairs = read_pairs(gt_pairs);
            std::ostringstream out;
            write_predictions(out, ground_truth_predictions(pairs));
            write_atomic(gt_out, out.str());
            m.inputs = {gt_pairs};
            m.outputs = {gt_out};
            m.write(manifest_path_for(gt_out));
            return 0;
        }
        if (synth->parsed()) {
            m.command = "synth";
            const CanonicalAnnotations ann = synth_from_document(read_json_file(sy_in));
            write_atomic(sy_out, to_json(ann).dump() + "\n");
            m.inputs = {sy_in};
            m.outputs = {sy_out};
            m.summary = {{"scenes", ann.scenes.size()}, {"frames", ann.frames.size()}};
            m.write(manifest_path_for(sy_out));
            std::cerr << "synth: " << ann.scenes.size() << " scenes\n";
            return 0;
        }
        return 1;
    });
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    for (const auto& a : args) argv.push_back(a.c_str());
    argv.push_back(nullptr);
    return run(static_cast<int>(args.size()), argv.data());
}

}  // namespace drivesql::cli
