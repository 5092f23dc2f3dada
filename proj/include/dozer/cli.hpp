#pragma once

// `dozer` command line: ingest, compare, migrate, kb stats.
//
// Exit codes: 0 ok, 1 usage or other failure, 2 unreadable/unparseable input,
// 3 canonical config mismatch, 4 unsupported shell construct, 5 missing,
// empty or corrupt knowledge base, 6 validation backend unavailable.

#include "dozer/comparator.hpp"
#include "dozer/config.hpp"
#include "dozer/container_backend.hpp"
#include "dozer/errors.hpp"
#include "dozer/knowledge_base.hpp"
#include "dozer/shell_frontend.hpp"
#include "dozer/strace_parser.hpp"
#include "dozer/synthesizer.hpp"
#include "dozer/validator.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace dozer::cli {

enum Exit : int {
    kOk = 0,
    kFailure = 1,
    kBadInput = 2,
    kConfigMismatch = 3,
    kUnsupported = 4,
    kNoKnowledgeBase = 5,
    kSandboxUnavailable = 6,
};

namespace detail {

// Thrown internally to leave a subcommand with a specific exit code.
struct ExitWith : std::runtime_error {
    int code;
    ExitWith(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

inline std::string read_file(const std::filesystem::path& p, int code_if_missing) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec)) throw ExitWith(code_if_missing, "file not found: " + p.string());
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ExitWith(code_if_missing, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string fixed(double v, int digits) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

inline kb::KnowledgeBase load_kb(const std::filesystem::path& path, bool must_exist) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        if (must_exist) throw ExitWith(kNoKnowledgeBase, "knowledge base not found: " + path.string());
        return {};
    }
    try {
        return kb::KnowledgeBase::load(path);
    } catch (const CorruptRecord& e) {
        throw ExitWith(kNoKnowledgeBase, path.string() + ":" + std::to_string(e.line()) + ": " + e.what());
    } catch (const FormatVersionMismatch& e) {
        throw ExitWith(kNoKnowledgeBase, path.string() + ": " + e.what());
    }
}

inline strace::Trace load_trace(const std::filesystem::path& path, std::ostream& err) {
    std::string text = read_file(path, kBadInput);
    strace::ParseResult r;
    try {
        r = strace::parse_trace(text, {"", "", path.string()});
    } catch (const TraceFormatError& e) {
        throw ExitWith(kBadInput, path.string() + ": " + e.what());
    }
    if (r.lost_calls() > 0) err << "dozer: warning: " << path.string() << ": " << r.lost_calls() << " call(s) could not be reassembled\n";
    return std::move(r.trace);
}

inline kb::ParamList load_params(const std::filesystem::path& path) {
    std::string text = read_file(path, kBadInput);
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ExitWith(kBadInput, path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ExitWith(kBadInput, path.string() + ": module parameters must be a JSON object");
    kb::ParamList out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        out.emplace_back(it.key(), it.value().is_string() ? it.value().get<std::string>() : it.value().dump());
    }
    return out;
}

// Runs `strace -f -v -s 65536 -o <tmp> -- sh -c <command>` and returns the log path.
inline std::filesystem::path capture_trace(const std::string& command) {
    auto dir = std::filesystem::temp_directory_path();
    std::string tmpl = (dir / "dozer-capture-XXXXXX").string();
    int fd = ::mkstemp(tmpl.data());
    if (fd < 0) throw ExitWith(kFailure, "cannot create a temporary file for the capture");
    ::close(fd);
    if (!validate::detail::executable_on_path("strace")) throw ExitWith(kBadInput, "--capture needs the strace binary on PATH");
    auto r = validate::detail::run_process({"strace", "-f", "-v", "-s", "65536", "-o", tmpl, "--", "sh", "-c", command});
    (void)r;
    return tmpl;
}

inline std::unique_ptr<validate::SandboxBackend> make_backend(const config::ToolConfig& cfg) {
    if (cfg.sandbox.backend == "fixture") {
        return std::make_unique<validate::FixtureBackend>(validate::FixtureBackend::load_directory(cfg.sandbox.fixture_dir));
    }
    validate::ContainerOptions o;
    o.runtime = cfg.sandbox.runtime;
    o.root = cfg.sandbox.root;
    o.runner = cfg.sandbox.runner;
    return std::make_unique<validate::ContainerBackend>(o);
}

inline std::string params_json(const kb::ParamList& params) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : params) j[k] = v;
    return j.dump();
}

}  // namespace detail

struct Options {
    std::string config_path;
    std::string kb_path;
    std::string output;

    // ingest
    std::string module;
    std::string params_file;
    std::string trace_file;
    std::string origin;

    // compare / migrate
    std::string command;
    std::size_t top_k = 0;
    bool capture = false;
    bool run_validation = false;
    std::string output_file;
};

inline config::ToolConfig resolve_config(const Options& o) {
    config::ToolConfig cfg;
    std::string path = o.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("DOZER_CONFIG"); env && *env) path = env;
    }
    if (!path.empty()) {
        if (!std::filesystem::is_regular_file(path)) throw detail::ExitWith(kBadInput, "config file not found: " + path);
        cfg = config::load_config(path);
    }
    if (!o.kb_path.empty()) cfg.kb_path = o.kb_path;
    if (o.output == "text") cfg.output = config::OutputMode::Text;
    if (o.output == "structured") cfg.output = config::OutputMode::Structured;
    if (o.top_k > 0) cfg.top_k = o.top_k;
    cfg.validate();
    return cfg;
}

inline int cmd_ingest(const Options& o, std::ostream& out, std::ostream& err) {
    auto cfg = resolve_config(o);
    auto params = detail::load_params(o.params_file);
    auto trace = detail::load_trace(o.trace_file, err);
    trace.meta.source_label = o.origin;
    auto base = detail::load_kb(cfg.kb_path, false);
    std::string id;
    try {
        id = base.ingest(o.module, std::move(params), trace, cfg.canonical);
    } catch (const ConfigMismatch& e) {
        throw detail::ExitWith(kConfigMismatch, e.what());
    }
    base.save(cfg.kb_path);
    out << id << "\n";
    return kOk;
}

struct Prepared {
    config::ToolConfig cfg;
    kb::KnowledgeBase base;
    compare::SourceCommand source;
};

inline Prepared prepare(const Options& o, std::istream& in, std::ostream& err) {
    Prepared p;
    p.cfg = resolve_config(o);
    std::string command = o.command;
    if (command.empty()) {
        std::ostringstream ss;
        ss << in.rdbuf();
        command = ss.str();
        while (!command.empty() && (command.back() == '\n' || command.back() == '\r')) command.pop_back();
    }
    try {
        p.source.exec = shell::parse_command(command);
    } catch (const UnsupportedConstruct& e) {
        throw detail::ExitWith(kUnsupported, e.what());
    } catch (const ShellParseError& e) {
        throw detail::ExitWith(kBadInput, e.what());
    }
    for (const auto& w : p.source.exec.warnings) err << "dozer: warning: " << w << "\n";

    p.base = detail::load_kb(p.cfg.kb_path, true);
    if (p.base.empty()) throw detail::ExitWith(kNoKnowledgeBase, "knowledge base is empty: " + p.cfg.kb_path.string());

    std::filesystem::path trace_path;
    if (o.capture) {
        trace_path = detail::capture_trace(command);
    } else if (!o.trace_file.empty()) {
        trace_path = o.trace_file;
    } else {
        throw detail::ExitWith(kBadInput, "a trace of the command is required (--trace FILE or --capture)");
    }
    auto trace = detail::load_trace(trace_path, err);
    if (o.capture) std::filesystem::remove(trace_path);
    const auto& canon_cfg = *p.base.config();
    p.source.trace = canon::canonicalize(trace, canon_cfg);
    p.source.params = shell::extract_parameters(p.source.exec, canon_cfg.min_groundable_len);
    return p;
}

inline int cmd_compare(const Options& o, std::istream& in, std::ostream& out, std::ostream& err) {
    auto p = prepare(o, in, err);
    compare::CompareOptions copts;
    copts.alpha = p.cfg.alpha;
    auto results = compare::rank(p.source, p.base, p.cfg.top_k, compare::table_weighting(p.base.frequencies()), copts);
    for (const auto& r : results) {
        out << r.record_id << '\t' << detail::fixed(r.score, 4) << '\t' << compare::to_string(r.mapping) << "\n";
    }
    return kOk;
}

inline int cmd_migrate(const Options& o, std::istream& in, std::ostream& out, std::ostream& err) {
    auto p = prepare(o, in, err);
    compare::CompareOptions copts;
    copts.alpha = p.cfg.alpha;
    auto results = compare::rank(p.source, p.base, p.cfg.top_k, compare::table_weighting(p.base.frequencies()), copts);

    std::vector<synth::CandidateTask> candidates;
    for (const auto& r : results) candidates.push_back(synth::generate(p.source.params, r, *p.base.find(r.record_id)));
    if (candidates.empty()) {
        err << "dozer: error: no candidate produced\n";
        return kFailure;
    }
    const bool structured = p.cfg.output == config::OutputMode::Structured;

    std::string text;
    if (o.run_validation) {
        std::unique_ptr<validate::SandboxBackend> backend;
        try {
            backend = detail::make_backend(p.cfg);
        } catch (const SandboxUnavailable& e) {
            throw detail::ExitWith(kSandboxUnavailable, e.what());
        }
        std::vector<validate::ValidatedCandidate> ranked;
        try {
            ranked = validate::validate(p.source.exec, candidates, *backend, p.cfg.sandbox.base_image);
        } catch (const SandboxUnavailable& e) {
            throw detail::ExitWith(kSandboxUnavailable, e.what());
        } catch (const ExecutionError& e) {
            throw detail::ExitWith(kFailure, std::string("shell command could not be run in the sandbox: ") + e.what());
        }
        for (const auto& v : ranked) {
            err << "dozer: " << v.task.module << " (" << v.task.source_record << ") similarity " << detail::fixed(v.similarity, 4);
            if (!v.executed) err << " failed: " << v.error;
            err << "\n";
        }
        const auto& best = ranked.front();
        if (!best.executed) {
            err << "dozer: error: no candidate executed successfully\n";
            return kFailure;
        }
        if (structured) {
            text = best.task.module + "\t" + detail::params_json(best.task.params) + "\t" + detail::fixed(best.similarity, 4) + "\t" +
                   best.task.source_record + "\n";
        } else {
            text = synth::emit_yaml(best.task);
        }
    } else {
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto& c = candidates[i];
            if (structured) {
                text += std::to_string(i + 1) + "\t" + c.source_record + "\t" + detail::fixed(c.comparison_score, 4) + "\t" + c.module + "\t" +
                        detail::params_json(c.params) + "\n";
            } else {
                if (i > 0) text += "\n";
                text += "# rank " + std::to_string(i + 1) + " record " + c.source_record + " score " + detail::fixed(c.comparison_score, 4) + "\n";
                text += synth::emit_yaml(c);
            }
        }
    }
    out << text;
    if (!o.output_file.empty()) {
        std::ofstream f(o.output_file, std::ios::binary | std::ios::trunc);
        if (!f || !(f << text)) {
            err << "dozer: error: cannot write " << o.output_file << "\n";
            return kFailure;
        }
    }
    return kOk;
}

inline int cmd_kb_stats(const Options& o, std::ostream& out) {
    auto cfg = resolve_config(o);
    auto base = detail::load_kb(cfg.kb_path, true);
    const auto& freq = base.frequencies();
    std::vector<std::pair<std::string, double>> weights;
    for (const auto& [name, _] : freq.counts) weights.emplace_back(name, kb::syscall_weight(name, freq));
    std::stable_sort(weights.begin(), weights.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    const std::size_t n = std::min<std::size_t>(10, weights.size());
    if (cfg.output == config::OutputMode::Structured) {
        out << "records\t" << base.size() << "\n";
        out << "calls\t" << freq.total << "\n";
        out << "distinct\t" << freq.distinct << "\n";
        for (std::size_t i = 0; i < n; ++i) out << "lowest\t" << weights[i].first << '\t' << detail::fixed(weights[i].second, 4) << "\n";
        for (std::size_t i = 0; i < n; ++i) {
            const auto& w = weights[weights.size() - 1 - i];
            out << "highest\t" << w.first << '\t' << detail::fixed(w.second, 4) << "\n";
        }
        return kOk;
    }
    out << "records: " << base.size() << "\n";
    out << "calls: " << freq.total << "\n";
    out << "distinct syscalls: " << freq.distinct << "\n";
    out << "lowest weight:\n";
    for (std::size_t i = 0; i < n; ++i) out << "  " << weights[i].first << ' ' << detail::fixed(weights[i].second, 4) << "\n";
    out << "highest weight:\n";
    for (std::size_t i = 0; i < n; ++i) {
        const auto& w = weights[weights.size() - 1 - i];
        out << "  " << w.first << ' ' << detail::fixed(w.second, 4) << "\n";
    }
    return kOk;
}

// `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Find configuration-module equivalents of shell commands by comparing syscall traces", "dozer"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", o.config_path, "Tool configuration file (default: $DOZER_CONFIG)");
    app.add_option("--kb", o.kb_path, "Knowledge-base file (overrides kb_path)");
    app.add_option("--output", o.output, "Output mode")->check(CLI::IsMember({"text", "structured"}));

    auto* ingest = app.add_subcommand("ingest", "Add a module execution trace to the knowledge base");
    ingest->add_option("--module", o.module, "Module name")->required();
    ingest->add_option("--params", o.params_file, "JSON object of module parameters")->required();
    ingest->add_option("--trace", o.trace_file, "strace log of the module execution")->required();
    ingest->add_option("--origin", o.origin, "Label recorded with the trace");

    auto* cmp = app.add_subcommand("compare", "Score knowledge-base records against a shell command");
    cmp->add_option("--trace", o.trace_file, "strace log of the command");
    cmp->add_flag("--capture", o.capture, "Trace the command with strace instead of reading --trace");
    cmp->add_option("--top-k", o.top_k, "Number of results")->check(CLI::PositiveNumber);
    cmp->add_option("command", o.command, "Shell command (read from stdin when omitted)");

    auto* mig = app.add_subcommand("migrate", "Synthesize module tasks equivalent to a shell command");
    mig->add_option("--trace", o.trace_file, "strace log of the command");
    mig->add_flag("--capture", o.capture, "Trace the command with strace instead of reading --trace");
    mig->add_option("--top-k", o.top_k, "Number of candidates")->check(CLI::PositiveNumber);
    mig->add_flag("--validate", o.run_validation, "Run candidates in the sandbox and print the best one");
    mig->add_option("--output-file", o.output_file, "Also write the result to this file");
    mig->add_option("command", o.command, "Shell command (read from stdin when omitted)");

    auto* kbcmd = app.add_subcommand("kb", "Inspect the knowledge base");
    kbcmd->require_subcommand(1);
    auto* stats = kbcmd->add_subcommand("stats", "Record and syscall-weight summary");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(std::move(rev));
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kOk : kFailure;
    }

    try {
        if (ingest->parsed()) return cmd_ingest(o, out, err);
        if (cmp->parsed()) return cmd_compare(o, in, out, err);
        if (mig->parsed()) return cmd_migrate(o, in, out, err);
        if (stats->parsed()) return cmd_kb_stats(o, out);
    } catch (const detail::ExitWith& e) {
        err << "dozer: error: " << e.what() << "\n";
        return e.code;
    } catch (const ConfigError& e) {
        err << "dozer: error: " << e.what() << "\n";
        return kBadInput;
    } catch (const EmptyKnowledgeBase& e) {
        err << "dozer: error: " << e.what() << "\n";
        return kNoKnowledgeBase;
    } catch (const std::exception& e) {
        err << "dozer: error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

inline int run(int argc, char** argv, std::istream& in, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, in, out, err);
}

}  // namespace dozer::cli
