#pragma once

#include "dozer/dozer.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace testing_support {

inline std::filesystem::path data_path(const std::string& rel) { return std::filesystem::path(DOZER_TEST_DATA) / rel; }

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string read_data(const std::string& rel) { return read_file(data_path(rel)); }

inline dozer::strace::Trace parse_data(const std::string& rel) { return dozer::strace::parse_trace(read_data(rel)).trace; }

inline dozer::canon::CanonicalSyscall call(std::string name, std::vector<std::string> args, bool ok = true, std::string err = {}) {
    dozer::canon::CanonicalSyscall c;
    c.name = std::move(name);
    c.rendered_args = std::move(args);
    c.outcome.ok = ok;
    c.outcome.errno_name = std::move(err);
    return c;
}

inline dozer::canon::CanonicalTrace trace_of(std::vector<dozer::canon::CanonicalSyscall> calls) {
    dozer::canon::CanonicalTrace t;
    t.calls = std::move(calls);
    return t;
}

inline dozer::compare::TemplatedCall tcall(const std::string& name, const std::string& key) { return {name, key}; }

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "dozer-test-XXXXXX").string();
        path = mkdtemp(tmpl.data());
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

// Builds the two-record nginx knowledge base used across suites.
inline dozer::kb::KnowledgeBase nginx_kb() {
    dozer::kb::KnowledgeBase base;
    dozer::canon::CanonicalConfig cfg;
    base.ingest("lineinfile",
                {{"dest", "/root/.profile"}, {"regexp", "^.*mesg n.*$"}, {"line", "tty -s && mesg n || true"}, {"state", "present"}},
                parse_data("nginx/lineinfile.strace"), cfg);
    base.ingest("file", {{"path", "/tmp/stale.lock"}, {"state", "absent"}}, parse_data("nginx/file.strace"), cfg);
    return base;
}

inline dozer::compare::SourceCommand source_from(const std::string& command, const dozer::strace::Trace& trace,
                                                 const dozer::canon::CanonicalConfig& cfg = {}) {
    dozer::compare::SourceCommand s;
    s.exec = dozer::shell::parse_command(command);
    s.params = dozer::shell::extract_parameters(s.exec, cfg.min_groundable_len);
    s.trace = dozer::canon::canonicalize(trace, cfg);
    return s;
}

inline const std::string kEchoCommand = "echo 'daemon off;' >> /etc/nginx/nginx.conf";

}  // namespace testing_support
