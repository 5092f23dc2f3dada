#pragma once

// Sandbox validation: run the shell command and every candidate task from the
// same base image, diff the filesystem, and rank candidates by how closely
// their changes match the command's.

#include "dozer/errors.hpp"
#include "dozer/shell_frontend.hpp"
#include "dozer/synthesizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dozer::validate {

enum class ChangeKind { Created, Deleted, Modified };

inline std::string_view to_string(ChangeKind k) {
    switch (k) {
        case ChangeKind::Created: return "created";
        case ChangeKind::Deleted: return "deleted";
        case ChangeKind::Modified: return "modified";
    }
    return "?";
}

inline std::optional<ChangeKind> parse_change_kind(std::string_view s) {
    if (s == "created") return ChangeKind::Created;
    if (s == "deleted") return ChangeKind::Deleted;
    if (s == "modified") return ChangeKind::Modified;
    return std::nullopt;
}

// Post-state of one changed path. Deleted records carry no post_* fields.
struct ChangeRecord {
    std::string path;
    ChangeKind kind = ChangeKind::Modified;
    std::optional<char> post_type;  // find(1) %y letter: f, d, l, ...
    std::optional<unsigned> post_mode;
    std::optional<std::string> post_owner;  // uid:gid
    std::optional<std::string> post_hash;   // sha256 of file bytes

    friend bool operator==(const ChangeRecord&, const ChangeRecord&) = default;
};

struct StateDelta {
    std::map<std::string, ChangeRecord> changes;
    std::string base_image;
    int exit_status = 0;

    void add(ChangeRecord r) {
        std::string key = r.path;
        changes.insert_or_assign(std::move(key), std::move(r));
    }
};

// Path-keyed credit averaged over the union of changed paths: 1 for identical
// records, 0.5 for same kind with different post-state, 0.25 for a different
// kind, 0 for a path only one side touched. Two empty deltas score 1.
inline double delta_similarity(const StateDelta& a, const StateDelta& b) {
    if (a.base_image != b.base_image) {
        throw BaseMismatch("deltas come from different base images: '" + a.base_image + "' vs '" + b.base_image + "'");
    }
    std::set<std::string> paths;
    for (const auto& [p, _] : a.changes) paths.insert(p);
    for (const auto& [p, _] : b.changes) paths.insert(p);
    if (paths.empty()) return 1.0;
    double credit = 0.0;
    for (const auto& p : paths) {
        auto ia = a.changes.find(p);
        auto ib = b.changes.find(p);
        if (ia == a.changes.end() || ib == b.changes.end()) continue;
        if (ia->second == ib->second) {
            credit += 1.0;
        } else if (ia->second.kind == ib->second.kind) {
            credit += 0.5;
        } else {
            credit += 0.25;
        }
    }
    return credit / static_cast<double>(paths.size());
}

// Paths never compared: kernel pseudo-filesystems, scratch space, logs, and
// Ansible's own working directory.
inline const std::vector<std::string>& volatile_paths() {
    static const std::vector<std::string> paths = {"/proc", "/sys", "/dev", "/run", "/tmp", "/var/log", "/root/.ansible"};
    return paths;
}

inline bool is_volatile(std::string_view path) {
    for (const auto& v : volatile_paths()) {
        if (path == v || (path.starts_with(v) && path.size() > v.size() && path[v.size()] == '/')) return true;
    }
    return false;
}

struct FileEntry {
    char type = 'f';
    unsigned mode = 0;
    std::string owner;
    std::optional<std::string> hash;
    friend bool operator==(const FileEntry&, const FileEntry&) = default;
};

using Snapshot = std::map<std::string, FileEntry>;

inline StateDelta capture_delta(const Snapshot& pre, const Snapshot& post, std::string base_image = {}, int exit_status = 0) {
    StateDelta d;
    d.base_image = std::move(base_image);
    d.exit_status = exit_status;
    auto post_record = [](const std::string& path, ChangeKind kind, const FileEntry& e) {
        return ChangeRecord{path, kind, e.type, e.mode, e.owner, e.hash};
    };
    for (const auto& [path, after] : post) {
        if (is_volatile(path)) continue;
        auto it = pre.find(path);
        if (it == pre.end()) {
            d.add(post_record(path, ChangeKind::Created, after));
        } else if (!(it->second == after)) {
            d.add(post_record(path, ChangeKind::Modified, after));
        }
    }
    for (const auto& [path, before] : pre) {
        if (is_volatile(path) || post.contains(path)) continue;
        d.add(ChangeRecord{path, ChangeKind::Deleted, std::nullopt, std::nullopt, std::nullopt, std::nullopt});
    }
    return d;
}

// A unit of work for a sandbox: the original command or a candidate task.
struct ShellTask {
    std::string command;
};
using TaskSpec = std::variant<ShellTask, synth::CandidateTask>;

// Stable single-line identity of a task: `sh <command>` or `<module> <json params>`.
inline std::string task_key(const TaskSpec& task) {
    if (const auto* sh = std::get_if<ShellTask>(&task)) return "sh " + sh->command;
    const auto& c = std::get<synth::CandidateTask>(task);
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [k, v] : c.params) params[k] = v;
    return c.module + " " + params.dump();
}

class SandboxBackend {
public:
    virtual ~SandboxBackend() = default;
    virtual std::string name() const = 0;
    virtual bool available() const = 0;
    // Runs `task` in a fresh sandbox created from `base`. Throws ExecutionError
    // when the sandbox itself could not run the task.
    virtual StateDelta run(const TaskSpec& task, const std::string& base) = 0;
};

// ---- fixture backend ------------------------------------------------------
//
// Delta file format:
//
//   # task: <task key>          (or `# task: <module> *` to match any params)
//   # base: <image>
//   # exit: <status>
//   <kind>\t<path>\t<type|->\t<mode octal|->\t<uid:gid|->\t<sha256|->
//
// Lines starting with `#` other than the three headers are comments.

inline std::string format_change(const ChangeRecord& r) {
    std::ostringstream out;
    out << to_string(r.kind) << '\t' << r.path << '\t';
    out << (r.post_type ? std::string(1, *r.post_type) : "-") << '\t';
    if (r.post_mode) {
        out << std::oct << *r.post_mode << std::dec;
    } else {
        out << '-';
    }
    out << '\t' << r.post_owner.value_or("-") << '\t' << r.post_hash.value_or("-");
    return out.str();
}

inline ChangeRecord parse_change(std::string_view line) {
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (;;) {
        std::size_t tab = line.find('\t', pos);
        f.emplace_back(line.substr(pos, tab == std::string_view::npos ? std::string_view::npos : tab - pos));
        if (tab == std::string_view::npos) break;
        pos = tab + 1;
    }
    if (f.size() != 6) throw Error("delta line needs 6 tab-separated fields: '" + std::string(line) + "'");
    auto kind = parse_change_kind(f[0]);
    if (!kind) throw Error("unknown change kind '" + f[0] + "'");
    if (f[1].empty() || f[1].front() != '/') throw Error("delta path must be absolute: '" + f[1] + "'");
    ChangeRecord r;
    r.path = f[1];
    r.kind = *kind;
    if (f[2] != "-") r.post_type = f[2].empty() ? 'f' : f[2].front();
    if (f[3] != "-") r.post_mode = static_cast<unsigned>(std::stoul(f[3], nullptr, 8));
    if (f[4] != "-") r.post_owner = f[4];
    if (f[5] != "-") r.post_hash = f[5];
    if (r.kind == ChangeKind::Deleted && (r.post_type || r.post_mode || r.post_owner || r.post_hash)) {
        throw Error("deleted record for " + r.path + " must not carry post-state fields");
    }
    return r;
}

struct FixtureEntry {
    std::string key;
    StateDelta delta;
};

inline FixtureEntry parse_fixture(std::string_view text) {
    FixtureEntry e;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line.front() == '#') {
            std::string_view h = line.substr(1);
            while (!h.empty() && h.front() == ' ') h.remove_prefix(1);
            if (h.starts_with("task:")) {
                e.key = std::string(shell::detail::is_blank(h[5]) ? h.substr(6) : h.substr(5));
            } else if (h.starts_with("base:")) {
                std::string_view b = h.substr(5);
                while (!b.empty() && b.front() == ' ') b.remove_prefix(1);
                e.delta.base_image = std::string(b);
            } else if (h.starts_with("exit:")) {
                e.delta.exit_status = std::stoi(std::string(h.substr(5)));
            }
            continue;
        }
        e.delta.add(parse_change(line));
    }
    if (e.key.empty()) throw Error("fixture has no '# task:' header");
    return e;
}

inline std::string format_fixture(const std::string& key, const StateDelta& d) {
    std::string out = "# task: " + key + "\n# base: " + d.base_image + "\n# exit: " + std::to_string(d.exit_status) + "\n";
    for (const auto& [_, r] : d.changes) out += format_change(r) + "\n";
    return out;
}

// Replays stored deltas; fully deterministic.
class FixtureBackend : public SandboxBackend {
public:
    void add(std::string key, StateDelta delta) { entries_.insert_or_assign(std::move(key), std::move(delta)); }

    void add(const TaskSpec& task, StateDelta delta) { add(task_key(task), std::move(delta)); }

    // Loads every `*.delta` file under `dir`.
    static FixtureBackend load_directory(const std::filesystem::path& dir) {
        FixtureBackend b;
        if (!std::filesystem::is_directory(dir)) throw SandboxUnavailable("fixture directory not found: " + dir.string());
        std::vector<std::filesystem::path> files;
        for (const auto& ent : std::filesystem::directory_iterator(dir)) {
            if (ent.is_regular_file() && ent.path().extension() == ".delta") files.push_back(ent.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            std::ifstream in(f, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            try {
                auto e = parse_fixture(ss.str());
                b.add(std::move(e.key), std::move(e.delta));
            } catch (const std::exception& ex) {
                throw Error(f.string() + ": " + ex.what());
            }
        }
        return b;
    }

    std::string name() const override { return "fixture"; }
    bool available() const override { return true; }

    StateDelta run(const TaskSpec& task, const std::string& base) override {
        std::string key = task_key(task);
        auto it = entries_.find(key);
        if (it == entries_.end()) {
            if (const auto* c = std::get_if<synth::CandidateTask>(&task)) it = entries_.find(c->module + " *");
        }
        if (it == entries_.end()) throw ExecutionError("no fixture recorded for task: " + key);
        if (it->second.base_image != base) {
            throw ExecutionError("fixture for '" + key + "' was recorded on '" + it->second.base_image + "', not '" + base + "'");
        }
        return it->second;
    }

    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, StateDelta> entries_;
};

// ---- validation -------------------------------------------------------------

struct ValidatedCandidate {
    synth::CandidateTask task;
    double similarity = 0.0;
    bool executed = false;  // ran and exited 0
    int exit_status = 0;
    std::string error;
};

// Runs the command once and each candidate once, then orders candidates by
// similarity (desc), comparison score (desc), module name. Candidates that
// fail to execute get similarity 0 and sort after every successful one.
inline std::vector<ValidatedCandidate> validate(const shell::ShellExecution& src, const std::vector<synth::CandidateTask>& candidates,
                                                SandboxBackend& backend, const std::string& base) {
    if (candidates.empty()) throw Error("validate needs at least one candidate");
    if (!backend.available()) throw SandboxUnavailable("sandbox backend '" + backend.name() + "' is not available");

    StateDelta reference = backend.run(ShellTask{src.raw}, base);

    std::vector<ValidatedCandidate> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        ValidatedCandidate v;
        v.task = c;
        try {
            StateDelta d = backend.run(c, base);
            v.exit_status = d.exit_status;
            if (d.exit_status == 0) {
                v.executed = true;
                v.similarity = delta_similarity(reference, d);
            } else {
                v.error = "exited with status " + std::to_string(d.exit_status);
            }
        } catch (const SandboxUnavailable&) {
            throw;
        } catch (const std::exception& e) {
            v.error = e.what();
        }
        out.push_back(std::move(v));
    }
    std::stable_sort(out.begin(), out.end(), [](const ValidatedCandidate& a, const ValidatedCandidate& b) {
        if (a.executed != b.executed) return a.executed;
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (a.task.comparison_score != b.task.comparison_score) return a.task.comparison_score > b.task.comparison_score;
        return a.task.module < b.task.module;
    });
    return out;
}

}  // namespace dozer::validate
