#pragma once

// Turns parsed traces into the comparison-ready form: noise syscalls dropped,
// *at() variants folded onto their classic names, fds and pointers masked,
// success values collapsed, and an optional baseline multiset subtracted.

#include "dozer/digest.hpp"
#include "dozer/errors.hpp"
#include "dozer/strace_parser.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dozer::canon {

struct Outcome {
    bool ok = true;
    std::string errno_name;            // set when !ok
    std::optional<std::string> value;  // success value when not collapsed
    friend bool operator==(const Outcome&, const Outcome&) = default;
    friend auto operator<=>(const Outcome&, const Outcome&) = default;
};

struct CanonicalSyscall {
    std::string name;
    std::vector<std::string> rendered_args;
    Outcome outcome;
    friend bool operator==(const CanonicalSyscall&, const CanonicalSyscall&) = default;
};

inline std::string render_outcome(const Outcome& o) {
    if (!o.ok) return "ERR:" + o.errno_name;
    if (o.value) return "OK:" + *o.value;
    return "OK";
}

inline std::optional<Outcome> parse_outcome(std::string_view s) {
    if (s == "OK") return Outcome{};
    if (s.starts_with("OK:")) return Outcome{true, {}, std::string(s.substr(3))};
    if (s.starts_with("ERR:") && s.size() > 4) return Outcome{false, std::string(s.substr(4)), std::nullopt};
    return std::nullopt;
}

namespace detail {
inline void append_escaped(std::string& out, std::string_view arg) {
    for (char c : arg) {
        if (c == '\\' || c == ',' || c == '(' || c == ')') out.push_back('\\');
        out.push_back(c);
    }
}
}  // namespace detail

// Exact-match key `name(arg1,arg2,...)=outcome`. Separators inside arguments
// are backslash-escaped so distinct argument lists never collide.
inline std::string render_key(std::string_view name, const std::vector<std::string>& args, const Outcome& outcome) {
    std::string out(name);
    out.push_back('(');
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) out.push_back(',');
        detail::append_escaped(out, args[i]);
    }
    out += ")=";
    out += render_outcome(outcome);
    return out;
}

inline std::string render_key(const CanonicalSyscall& c) { return render_key(c.name, c.rendered_args, c.outcome); }

// Ordered for display; compared as a multiset.
struct CanonicalTrace {
    std::vector<CanonicalSyscall> calls;
    std::string origin;

    std::map<std::string, std::size_t> key_counts() const {
        std::map<std::string, std::size_t> counts;
        for (const auto& c : calls) ++counts[render_key(c)];
        return counts;
    }

    friend bool operator==(const CanonicalTrace&, const CanonicalTrace&) = default;
};

inline const std::set<std::string>& default_denylist() {
    static const std::set<std::string> names = {
        "mmap",         "munmap",          "mprotect",        "brk",        "futex",      "rt_sigaction",
        "rt_sigprocmask", "rt_sigreturn",  "clock_gettime",   "gettid",     "getpid",     "arch_prctl",
        "set_tid_address", "set_robust_list", "prlimit64",    "getrandom",  "sched_getaffinity", "exit_group",
    };
    return names;
}

struct CanonicalConfig {
    std::set<std::string> denylist = default_denylist();
    bool fold_at_variants = true;
    bool mask_fds = true;
    bool mask_addresses = true;
    bool collapse_retval = true;
    std::size_t min_groundable_len = 3;
    std::optional<CanonicalTrace> baseline;

    void validate() const {
        for (const auto& n : denylist) {
            if (!strace::detail::is_syscall_name(n)) throw ConfigError("denylist entry is not a syscall name: '" + n + "'");
        }
        if (min_groundable_len < 1) throw ConfigError("min_groundable_len must be >= 1");
    }

    friend bool operator==(const CanonicalConfig&, const CanonicalConfig&) = default;
};

// Stable textual description of every field, used for the config digest.
inline std::string describe(const CanonicalConfig& c) {
    std::string out = "denylist=";
    for (const auto& n : c.denylist) out += n + ",";
    out += ";fold=" + std::to_string(c.fold_at_variants);
    out += ";mask_fds=" + std::to_string(c.mask_fds);
    out += ";mask_addresses=" + std::to_string(c.mask_addresses);
    out += ";collapse_retval=" + std::to_string(c.collapse_retval);
    out += ";min_groundable_len=" + std::to_string(c.min_groundable_len);
    out += ";baseline=";
    if (c.baseline) {
        for (const auto& [key, n] : c.baseline->key_counts()) out += key + "#" + std::to_string(n) + "\n";
    } else {
        out += "none";
    }
    return out;
}

inline std::string config_digest(const CanonicalConfig& c) { return sha256_hex(describe(c)).substr(0, 16); }

namespace detail {

using strace::ArgValue;

// Argument positions holding file descriptors, by raw syscall name.
inline const std::map<std::string, std::vector<std::size_t>, std::less<>>& fd_positions() {
    static const std::map<std::string, std::vector<std::size_t>, std::less<>> table = [] {
        std::map<std::string, std::vector<std::size_t>, std::less<>> t;
        for (const char* n : {"read", "write", "pread64", "pwrite64", "readv", "writev", "preadv", "pwritev", "preadv2",
                              "pwritev2", "close", "fstat", "fstat64", "lseek", "_llseek", "fsync", "fdatasync",
                              "ftruncate", "ftruncate64", "fchmod", "fchown", "fcntl", "fcntl64", "ioctl", "getdents",
                              "getdents64", "dup", "flock", "fstatfs", "fstatfs64", "fsetxattr", "fgetxattr",
                              "flistxattr", "fremovexattr", "fadvise64", "fallocate", "fchdir", "connect", "bind",
                              "accept", "accept4", "sendto", "recvfrom", "sendmsg", "recvmsg", "listen", "getsockname",
                              "getpeername", "setsockopt", "getsockopt", "shutdown", "sync_file_range", "syncfs",
                              "readahead", "openat", "openat2", "newfstatat", "fstatat64", "unlinkat", "mkdirat",
                              "fchmodat", "fchownat", "faccessat", "faccessat2", "readlinkat", "mknodat", "utimensat",
                              "futimesat", "statx", "execveat", "inotify_rm_watch", "inotify_add_watch", "epoll_wait",
                              "epoll_pwait", "timerfd_settime", "timerfd_gettime", "close_range", "fchmodat2"}) {
            t[n] = {0};
        }
        t["dup2"] = {0, 1};
        t["dup3"] = {0, 1};
        t["sendfile"] = {0, 1};
        t["sendfile64"] = {0, 1};
        t["copy_file_range"] = {0, 2};
        t["splice"] = {0, 2};
        t["tee"] = {0, 1};
        t["epoll_ctl"] = {0, 2};
        t["renameat"] = {0, 2};
        t["renameat2"] = {0, 2};
        t["linkat"] = {0, 2};
        t["symlinkat"] = {1};
        t["mmap"] = {4};
        return t;
    }();
    return table;
}

// Syscalls whose success value is a new file descriptor.
inline bool returns_fd(std::string_view name) {
    static const std::set<std::string, std::less<>> names = {
        "open", "openat", "openat2", "creat", "dup", "dup2", "dup3", "socket", "accept", "accept4",
        "epoll_create", "epoll_create1", "eventfd", "eventfd2", "inotify_init", "inotify_init1",
        "memfd_create", "timerfd_create", "signalfd", "signalfd4", "pidfd_open", "fanotify_init"};
    return names.contains(name);
}

inline bool is_flag(const ArgValue& v, std::string_view flag) {
    return v.is<strace::FlagSet>() && v.as<strace::FlagSet>().names.size() == 1 &&
           v.as<strace::FlagSet>().names.front() == flag;
}

inline bool is_zero(const ArgValue& v) { return v.is<strace::Number>() && v.as<strace::Number>().value == 0; }

inline bool is_cwd(const std::vector<ArgValue>& args, std::size_t i) { return i < args.size() && is_flag(args[i], "AT_FDCWD"); }

struct Fold {
    std::string name;
    std::vector<std::size_t> drop;  // indices to remove from the argument list
};

// Maps an *at() call whose directory fds are all AT_FDCWD to its classic form.
inline std::optional<Fold> fold_at_variant(std::string_view name, const std::vector<ArgValue>& args) {
    auto flags_at = [&](std::size_t i) -> const ArgValue* { return i < args.size() ? &args[i] : nullptr; };
    auto flags_zero_or_absent = [&](std::size_t i) { return i >= args.size() || is_zero(args[i]); };

    if (name == "openat" && is_cwd(args, 0)) return Fold{"open", {0}};
    if ((name == "newfstatat" || name == "fstatat64") && is_cwd(args, 0)) {
        if (flags_zero_or_absent(3)) return Fold{"stat", {0, 3}};
        if (auto f = flags_at(3); f && is_flag(*f, "AT_SYMLINK_NOFOLLOW")) return Fold{"lstat", {0, 3}};
        return std::nullopt;
    }
    if (name == "unlinkat" && is_cwd(args, 0)) {
        if (flags_zero_or_absent(2)) return Fold{"unlink", {0, 2}};
        if (auto f = flags_at(2); f && is_flag(*f, "AT_REMOVEDIR")) return Fold{"rmdir", {0, 2}};
        return std::nullopt;
    }
    if (name == "mkdirat" && is_cwd(args, 0)) return Fold{"mkdir", {0}};
    if ((name == "fchmodat" || name == "fchmodat2") && is_cwd(args, 0) && flags_zero_or_absent(3)) return Fold{"chmod", {0, 3}};
    if (name == "fchownat" && is_cwd(args, 0)) {
        if (flags_zero_or_absent(4)) return Fold{"chown", {0, 4}};
        if (auto f = flags_at(4); f && is_flag(*f, "AT_SYMLINK_NOFOLLOW")) return Fold{"lchown", {0, 4}};
        return std::nullopt;
    }
    if (name == "faccessat" && is_cwd(args, 0)) return Fold{"access", {0}};
    if (name == "faccessat2" && is_cwd(args, 0) && flags_zero_or_absent(3)) return Fold{"access", {0, 3}};
    if (name == "readlinkat" && is_cwd(args, 0)) return Fold{"readlink", {0}};
    if (name == "mknodat" && is_cwd(args, 0)) return Fold{"mknod", {0}};
    if (name == "futimesat" && is_cwd(args, 0)) return Fold{"utimes", {0}};
    if (name == "renameat" && is_cwd(args, 0) && is_cwd(args, 2)) return Fold{"rename", {0, 2}};
    if (name == "renameat2" && is_cwd(args, 0) && is_cwd(args, 2) && flags_zero_or_absent(4)) return Fold{"rename", {0, 2, 4}};
    if (name == "linkat" && is_cwd(args, 0) && is_cwd(args, 2) && flags_zero_or_absent(4)) return Fold{"link", {0, 2, 4}};
    if (name == "symlinkat" && is_cwd(args, 1)) return Fold{"symlink", {1}};
    return std::nullopt;
}

inline bool valid_utf8_at(std::string_view s, std::size_t i, std::size_t& len) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t n = 0;
    std::uint32_t cp = 0;
    if (c >= 0xc2 && c <= 0xdf) {
        n = 1;
        cp = c & 0x1f;
    } else if (c >= 0xe0 && c <= 0xef) {
        n = 2;
        cp = c & 0x0f;
    } else if (c >= 0xf0 && c <= 0xf4) {
        n = 3;
        cp = c & 0x07;
    } else {
        return false;
    }
    for (std::size_t k = 1; k <= n; ++k) {
        if (i + k >= s.size()) return false;
        auto cc = static_cast<unsigned char>(s[i + k]);
        if ((cc & 0xc0) != 0x80) return false;
        cp = (cp << 6) | (cc & 0x3f);
    }
    if ((n == 2 && cp < 0x800) || (n == 3 && (cp < 0x10000 || cp > 0x10ffff)) || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    len = n + 1;
    return true;
}

// String bytes as canonical text: printable ASCII and valid UTF-8 pass through,
// control bytes and invalid sequences become C escapes. Output is always UTF-8.
inline std::string render_bytes(std::string_view bytes) {
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size());
    for (std::size_t i = 0; i < bytes.size();) {
        auto c = static_cast<unsigned char>(bytes[i]);
        if (c >= 0x20 && c < 0x7f) {
            out.push_back(bytes[i++]);
            continue;
        }
        std::size_t len = 0;
        if (c >= 0x80 && valid_utf8_at(bytes, i, len)) {
            out.append(bytes.substr(i, len));
            i += len;
            continue;
        }
        switch (c) {
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                out += "\\x";
                out.push_back(hex[c >> 4]);
                out.push_back(hex[c & 0xf]);
        }
        ++i;
    }
    return out;
}

inline std::string render_number(const strace::Number& n) {
    switch (n.radix) {
        case strace::Radix::Dec: return std::to_string(n.value);
        case strace::Radix::Oct: {
            std::uint64_t v = n.value < 0 ? static_cast<std::uint64_t>(-n.value) : static_cast<std::uint64_t>(n.value);
            std::string digits;
            do {
                digits.insert(digits.begin(), static_cast<char>('0' + (v & 7)));
                v >>= 3;
            } while (v);
            return (n.value < 0 ? "-0" : "0") + digits;
        }
        case strace::Radix::Hex: {
            static constexpr char hex[] = "0123456789abcdef";
            std::uint64_t v = n.value < 0 ? static_cast<std::uint64_t>(-n.value) : static_cast<std::uint64_t>(n.value);
            std::string digits;
            do {
                digits.insert(digits.begin(), hex[v & 0xf]);
                v >>= 4;
            } while (v);
            return (n.value < 0 ? "-0x" : "0x") + digits;
        }
    }
    return std::to_string(n.value);
}

inline std::string render_arg(const ArgValue& v, const CanonicalConfig& cfg, bool fd_slot);

inline std::string render_list(const std::vector<ArgValue>& items, const CanonicalConfig& cfg, bool fd_items) {
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out.push_back(',');
        out += render_arg(items[i], cfg, fd_items);
    }
    out.push_back(']');
    return out;
}

inline std::string render_arg(const ArgValue& v, const CanonicalConfig& cfg, bool fd_slot) {
    return std::visit(
        [&](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, strace::StringLit>) {
                return render_bytes(x.bytes) + (x.truncated ? "..." : "");
            } else if constexpr (std::is_same_v<T, strace::Number>) {
                if (fd_slot && cfg.mask_fds && x.value >= 0) return "<FD>";
                return render_number(x);
            } else if constexpr (std::is_same_v<T, strace::FlagSet>) {
                std::string out;
                for (std::size_t i = 0; i < x.names.size(); ++i) {
                    if (i) out.push_back('|');
                    out += x.names[i];
                }
                return out;
            } else if constexpr (std::is_same_v<T, strace::Struct>) {
                std::string out = "{";
                bool first = true;
                for (const auto& f : x.fields) {
                    if (!first) out.push_back(',');
                    first = false;
                    out += f.name + "=" + render_arg(f.value, cfg, cfg.mask_fds && f.name == "fd");
                }
                if (x.truncated) out += first ? "..." : ",...";
                out.push_back('}');
                return out;
            } else if constexpr (std::is_same_v<T, strace::Array>) {
                return render_list(x.items, cfg, fd_slot);
            } else if constexpr (std::is_same_v<T, strace::Null>) {
                return "NULL";
            } else if constexpr (std::is_same_v<T, strace::Address>) {
                return cfg.mask_addresses ? "<ADDR>" : x.text;
            } else {
                return x.text;
            }
        },
        v.value);
}

}  // namespace detail

// Drops calls in `trace` matched key-for-key by `baseline`, preserving order.
inline void subtract_baseline(CanonicalTrace& trace, const CanonicalTrace& baseline) {
    auto budget = baseline.key_counts();
    std::vector<CanonicalSyscall> kept;
    kept.reserve(trace.calls.size());
    for (auto& c : trace.calls) {
        auto it = budget.find(render_key(c));
        if (it != budget.end() && it->second > 0) {
            --it->second;
            continue;
        }
        kept.push_back(std::move(c));
    }
    trace.calls = std::move(kept);
}

inline CanonicalSyscall canonicalize_event(const strace::SyscallEvent& ev, const CanonicalConfig& cfg) {
    CanonicalSyscall out;
    std::vector<std::size_t> fd_slots;
    if (auto it = detail::fd_positions().find(ev.name); it != detail::fd_positions().end()) fd_slots = it->second;
    // pipe/pipe2/socketpair write fd pairs into an array argument.
    bool fd_array0 = ev.name == "pipe" || ev.name == "pipe2";
    bool fd_array3 = ev.name == "socketpair";

    std::vector<std::size_t> drop;
    out.name = ev.name;
    if (cfg.fold_at_variants) {
        if (auto f = detail::fold_at_variant(ev.name, ev.args)) {
            out.name = f->name;
            drop = f->drop;
        }
    }
    for (std::size_t i = 0; i < ev.args.size(); ++i) {
        if (std::find(drop.begin(), drop.end(), i) != drop.end()) continue;
        bool fd = std::find(fd_slots.begin(), fd_slots.end(), i) != fd_slots.end() || (fd_array0 && i == 0) ||
                  (fd_array3 && i == 3);
        out.rendered_args.push_back(detail::render_arg(ev.args[i], cfg, fd));
    }

    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, strace::Failure>) {
                out.outcome = Outcome{false, r.errno_name, std::nullopt};
            } else if constexpr (std::is_same_v<T, strace::Success>) {
                out.outcome = Outcome{};
                if (!cfg.collapse_retval) {
                    out.outcome.value = cfg.mask_fds && detail::returns_fd(ev.name) ? "<FD>" : std::to_string(r.value);
                }
            } else {
                out.outcome = Outcome{};
                if (!cfg.collapse_retval) out.outcome.value = "?";
            }
        },
        ev.retval);
    return out;
}

inline CanonicalTrace canonicalize(const strace::Trace& trace, const CanonicalConfig& cfg) {
    CanonicalTrace out;
    out.origin = trace.meta.source_label;
    for (const auto& ev : trace.events) {
        if (cfg.denylist.contains(ev.name)) continue;
        CanonicalSyscall c = canonicalize_event(ev, cfg);
        if (cfg.denylist.contains(c.name)) continue;
        out.calls.push_back(std::move(c));
    }
    if (cfg.baseline) subtract_baseline(out, *cfg.baseline);
    return out;
}

// Rebuilds a raw Trace whose events carry the canonical strings verbatim.
// Canonicalizing it again under the same config reproduces the same keys.
inline strace::Trace reinterpret_as_trace(const CanonicalTrace& ct) {
    strace::Trace t;
    t.meta.source_label = ct.origin;
    for (const auto& c : ct.calls) {
        strace::SyscallEvent ev;
        ev.name = c.name;
        ev.seq = t.events.size();
        for (const auto& a : c.rendered_args) ev.args.emplace_back(strace::Comment{a});
        if (!c.outcome.ok) {
            ev.retval = strace::Failure{c.outcome.errno_name};
        } else if (c.outcome.value == "?") {
            ev.retval = strace::NoReturn{};
        } else {
            std::int64_t v = 0;
            if (c.outcome.value && !c.outcome.value->empty() && c.outcome.value->find_first_not_of("-0123456789") == std::string::npos) {
                v = std::stoll(*c.outcome.value);
            }
            ev.retval = strace::Success{v};
        }
        t.events.push_back(std::move(ev));
    }
    return t;
}

}  // namespace dozer::canon
