#pragma once

// Sandbox backend that runs each task in a throwaway container. The container
// runtime is invoked as `<runtime> run --rm <base> sh -c <script>`; the script
// walks the filesystem before and after the task and prints both listings.

#include "dozer/errors.hpp"
#include "dozer/shell_frontend.hpp"
#include "dozer/validator.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

extern char** environ;

namespace dozer::validate {

struct ContainerOptions {
    std::string runtime = "docker";
    std::string root = "/";
    // {module} and {args} are substituted; args is `k='v' ...` shell-quoted as one word.
    std::string runner = "ansible localhost -i localhost, -c local -m {module} -a {args}";
};

namespace detail {

inline std::string sh_quote(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('\'');
    return out;
}

inline std::string replace_all(std::string s, std::string_view from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
    return s;
}

inline std::string module_args(const kb::ParamList& params) {
    std::string a;
    for (const auto& [k, v] : params) {
        if (!a.empty()) a.push_back(' ');
        a += k + "=" + sh_quote(v);
    }
    return a;
}

inline bool executable_on_path(const std::string& prog) {
    namespace fs = std::filesystem;
    if (prog.find('/') != std::string::npos) return ::access(prog.c_str(), X_OK) == 0;
    const char* path = std::getenv("PATH");
    if (!path) return false;
    std::string_view p(path);
    while (!p.empty()) {
        std::size_t colon = p.find(':');
        std::string dir(p.substr(0, colon));
        if (dir.empty()) dir = ".";
        if (::access((fs::path(dir) / prog).c_str(), X_OK) == 0) return true;
        if (colon == std::string_view::npos) break;
        p.remove_prefix(colon + 1);
    }
    return false;
}

struct ProcessResult {
    int status = -1;
    std::string out;
};

inline ProcessResult run_process(const std::vector<std::string>& argv) {
    int fds[2];
    if (::pipe(fds) != 0) throw ExecutionError(std::string("pipe: ") + std::strerror(errno));
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_addclose(&fa, fds[0]);
    posix_spawn_file_actions_adddup2(&fa, fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&fa, fds[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    pid_t pid = 0;
    int rc = posix_spawnp(&pid, args[0], &fa, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    ::close(fds[1]);
    if (rc != 0) {
        ::close(fds[0]);
        throw SandboxUnavailable("cannot start '" + argv[0] + "': " + std::strerror(rc));
    }
    ProcessResult r;
    char buf[65536];
    for (;;) {
        ssize_t n = ::read(fds[0], buf, sizeof buf);
        if (n > 0) {
            r.out.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0 || errno != EINTR) {
            break;
        }
    }
    ::close(fds[0]);
    int st = 0;
    while (::waitpid(pid, &st, 0) < 0 && errno == EINTR) {
    }
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : 128 + (WIFSIGNALED(st) ? WTERMSIG(st) : 0);
    return r;
}

}  // namespace detail

// One line of the walker listing: path \t type \t mode(octal) \t uid:gid \t sha256|-
inline std::pair<std::string, FileEntry> parse_walk_line(std::string_view line) {
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (;;) {
        std::size_t tab = line.find('\t', pos);
        f.emplace_back(line.substr(pos, tab == std::string_view::npos ? std::string_view::npos : tab - pos));
        if (tab == std::string_view::npos) break;
        pos = tab + 1;
    }
    if (f.size() != 5 || f[0].empty() || f[1].empty()) throw ExecutionError("bad walker line: '" + std::string(line) + "'");
    FileEntry e;
    e.type = f[1].front();
    try {
        e.mode = static_cast<unsigned>(std::stoul(f[2], nullptr, 8));
    } catch (const std::exception&) {
        throw ExecutionError("bad mode in walker line: '" + std::string(line) + "'");
    }
    e.owner = f[3];
    if (f[4] != "-") e.hash = f[4];
    return {f[0], std::move(e)};
}

class ContainerBackend : public SandboxBackend {
public:
    explicit ContainerBackend(ContainerOptions opts = {}) : opts_(std::move(opts)) {}

    std::string name() const override { return "container"; }
    bool available() const override { return detail::executable_on_path(opts_.runtime); }

    std::string command_for(const TaskSpec& task) const {
        if (const auto* sh = std::get_if<ShellTask>(&task)) return sh->command;
        const auto& c = std::get<synth::CandidateTask>(task);
        std::string cmd = detail::replace_all(opts_.runner, "{module}", detail::sh_quote(c.module));
        return detail::replace_all(cmd, "{args}", detail::sh_quote(detail::module_args(c.params)));
    }

    std::string script_for(const TaskSpec& task) const {
        std::string root = opts_.root;
        while (root.size() > 1 && root.back() == '/') root.pop_back();
        if (root == "/") root.clear();
        std::string prune;
        for (const auto& v : volatile_paths()) {
            if (!prune.empty()) prune += " -o ";
            prune += "-path \"$R\"" + detail::sh_quote(v);
        }
        std::string s;
        s += "R=" + detail::sh_quote(root) + "\n";
        s += "T=$(printf '\\t')\n";
        s += "walk() {\n";
        s += "  find \"${R:-/}\" -mindepth 1 \\( " + prune + " \\) -prune -o -printf '%p\\t%y\\t%m\\t%U:%G\\n' |\n";
        s += "  while IFS=\"$T\" read -r p y m o; do\n";
        s += "    if [ \"$y\" = f ]; then h=$(sha256sum \"$p\" | cut -d' ' -f1); else h=-; fi\n";
        s += "    printf '%s\\t%s\\t%s\\t%s\\t%s\\n' \"${p#\"$R\"}\" \"$y\" \"$m\" \"$o\" \"$h\"\n";
        s += "  done\n";
        s += "}\n";
        s += "echo @@PRE\nwalk\n";
        s += "echo @@TASK\n";
        s += "(cd \"${R:-/}\" && sh -c " + detail::sh_quote(command_for(task)) + ") >/dev/null 2>&1\n";
        s += "echo \"@@EXIT $?\"\n";
        s += "echo @@POST\nwalk\necho @@END\n";
        return s;
    }

    StateDelta run(const TaskSpec& task, const std::string& base) override {
        if (!available()) throw SandboxUnavailable("container runtime '" + opts_.runtime + "' not found");
        auto r = detail::run_process({opts_.runtime, "run", "--rm", base, "sh", "-c", script_for(task)});
        return parse_output(r.out, base, r.status);
    }

    static StateDelta parse_output(std::string_view out, const std::string& base, int runtime_status = 0) {
        Snapshot pre, post;
        Snapshot* cur = nullptr;
        std::optional<int> exit_status;
        bool ended = false;
        std::size_t pos = 0;
        while (pos < out.size() && !ended) {
            std::size_t nl = out.find('\n', pos);
            if (nl == std::string_view::npos) nl = out.size();
            std::string_view line = out.substr(pos, nl - pos);
            pos = nl + 1;
            if (line == "@@PRE") {
                cur = &pre;
            } else if (line == "@@TASK") {
                cur = nullptr;
            } else if (line.starts_with("@@EXIT ")) {
                exit_status = std::stoi(std::string(line.substr(7)));
            } else if (line == "@@POST") {
                cur = &post;
            } else if (line == "@@END") {
                ended = true;
            } else if (cur && !line.empty()) {
                auto [path, entry] = parse_walk_line(line);
                cur->insert_or_assign(std::move(path), std::move(entry));
            }
        }
        if (!ended || !exit_status) {
            throw ExecutionError("sandbox output incomplete (runtime exit " + std::to_string(runtime_status) + ")");
        }
        return capture_delta(pre, post, base, *exit_status);
    }

private:
    ContainerOptions opts_;
};

}  // namespace dozer::validate
