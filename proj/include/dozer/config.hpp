#pragma once

// Tool configuration file: one `key = value` per line, `#` starts a comment.
//
//   kb_path                      knowledge-base file (default dozer.kb)
//   top_k                        candidates to keep (default 5, >= 1)
//   alpha                        name-only match credit (default 0.25, in [0,1])
//   output                       text | structured
//   canonical.denylist           comma-separated syscall names (replaces the default)
//   canonical.denylist_add       comma-separated names added to the denylist
//   canonical.fold_at_variants   true | false
//   canonical.mask_fds           true | false
//   canonical.mask_addresses     true | false
//   canonical.collapse_retval    true | false
//   canonical.min_groundable_len integer >= 1
//   canonical.baseline           strace log of an empty run, subtracted from every trace
//   sandbox.backend              fixture | container
//   sandbox.base_image           image name recorded in every delta
//   sandbox.runtime              container runtime binary (default docker)
//   sandbox.fixture_dir          directory of *.delta files for the fixture backend
//   sandbox.root                 filesystem root walked inside the sandbox (default /)
//   sandbox.runner               command template for candidates ({module}, {args})
//
// Relative paths are resolved against the directory holding the config file.

#include "dozer/canonicalizer.hpp"
#include "dozer/container_backend.hpp"
#include "dozer/errors.hpp"
#include "dozer/strace_parser.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

namespace dozer::config {

enum class OutputMode { Text, Structured };

struct SandboxConfig {
    std::string backend = "fixture";
    std::string base_image = "dozer-base";
    std::string runtime = "docker";
    std::filesystem::path fixture_dir = "fixtures";
    std::string root = "/";
    std::string runner = validate::ContainerOptions{}.runner;
};

struct ToolConfig {
    std::filesystem::path kb_path = "dozer.kb";
    canon::CanonicalConfig canonical;
    std::size_t top_k = 5;
    double alpha = 0.25;
    SandboxConfig sandbox;
    OutputMode output = OutputMode::Text;

    void validate() const {
        if (top_k < 1) throw ConfigError("top_k must be >= 1");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be within [0, 1]");
        if (sandbox.backend != "fixture" && sandbox.backend != "container") {
            throw ConfigError("sandbox.backend must be 'fixture' or 'container', got '" + sandbox.backend + "'");
        }
        canonical.validate();
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return std::string(s);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long n = 0;
    try {
        n = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || n < 0) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(n);
}

inline double parse_real(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return d;
}

inline std::set<std::string> parse_names(const std::string& v) {
    std::set<std::string> out;
    std::string_view s(v);
    while (!s.empty()) {
        std::size_t comma = s.find(',');
        std::string name = trim(s.substr(0, comma));
        if (!name.empty()) out.insert(name);
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

// Parses config text. `base_dir` anchors relative paths.
inline ToolConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
    ToolConfig c;
    std::optional<std::filesystem::path> baseline;
    auto resolve = [&](const std::string& v) {
        std::filesystem::path p(v);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string line = detail::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++lineno;
        if (line.empty() || line.front() == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = detail::trim(std::string_view(line).substr(0, eq));
        std::string val = detail::trim(std::string_view(line).substr(eq + 1));
        if (key == "kb_path") {
            c.kb_path = resolve(val);
        } else if (key == "top_k") {
            c.top_k = detail::parse_size(key, val);
        } else if (key == "alpha") {
            c.alpha = detail::parse_real(key, val);
        } else if (key == "output") {
            if (val == "text") {
                c.output = OutputMode::Text;
            } else if (val == "structured") {
                c.output = OutputMode::Structured;
            } else {
                throw ConfigError("output must be 'text' or 'structured'");
            }
        } else if (key == "canonical.denylist") {
            c.canonical.denylist = detail::parse_names(val);
        } else if (key == "canonical.denylist_add") {
            for (auto& n : detail::parse_names(val)) c.canonical.denylist.insert(n);
        } else if (key == "canonical.fold_at_variants") {
            c.canonical.fold_at_variants = detail::parse_bool(key, val);
        } else if (key == "canonical.mask_fds") {
            c.canonical.mask_fds = detail::parse_bool(key, val);
        } else if (key == "canonical.mask_addresses") {
            c.canonical.mask_addresses = detail::parse_bool(key, val);
        } else if (key == "canonical.collapse_retval") {
            c.canonical.collapse_retval = detail::parse_bool(key, val);
        } else if (key == "canonical.min_groundable_len") {
            c.canonical.min_groundable_len = detail::parse_size(key, val);
        } else if (key == "canonical.baseline") {
            baseline = resolve(val);
        } else if (key == "sandbox.backend") {
            c.sandbox.backend = val;
        } else if (key == "sandbox.base_image") {
            c.sandbox.base_image = val;
        } else if (key == "sandbox.runtime") {
            c.sandbox.runtime = val;
        } else if (key == "sandbox.fixture_dir") {
            c.sandbox.fixture_dir = resolve(val);
        } else if (key == "sandbox.root") {
            c.sandbox.root = val;
        } else if (key == "sandbox.runner") {
            c.sandbox.runner = val;
        } else {
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    if (baseline) {
        // The baseline itself is canonicalized without a baseline.
        auto parsed = strace::parse_trace(detail::read_file(*baseline), {"", "", baseline->string()});
        c.canonical.baseline = canon::canonicalize(parsed.trace, c.canonical);
    }
    c.validate();
    return c;
}

inline ToolConfig load_config(const std::filesystem::path& path) {
    return parse_config(detail::read_file(path), path.parent_path());
}

}  // namespace dozer::config
