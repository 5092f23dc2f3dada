#pragma once

// Parser for strace text logs.
//
// Targets the output of `strace -f -v -s 65536 -o <file> -- <command>`:
// optional pid prefixes (`[pid N] ` or a bare leading pid), optional -t/-tt/-ttt
// timestamps, optional -T durations, C-style escaped strings, and
// `<unfinished ...>` / `<... name resumed>` pairs which are stitched back
// together per pid.

#include "dozer/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dozer::strace {

enum class Radix { Dec, Hex, Oct };

struct ArgValue;
struct StructField;

struct StringLit {
    std::string bytes;
    bool truncated = false;
    friend bool operator==(const StringLit&, const StringLit&) = default;
};

struct Number {
    std::int64_t value = 0;
    Radix radix = Radix::Dec;
    friend bool operator==(const Number&, const Number&) = default;
};

struct FlagSet {
    std::vector<std::string> names;
    friend bool operator==(const FlagSet&, const FlagSet&) = default;
};

struct Struct {
    std::vector<StructField> fields;
    bool truncated = false;  // strace printed a trailing `...` member
    friend bool operator==(const Struct&, const Struct&);
};

struct Array {
    std::vector<ArgValue> items;
    friend bool operator==(const Array&, const Array&);
};

struct Null {
    friend bool operator==(const Null&, const Null&) = default;
};

// Pointer-shaped hex literal.
struct Address {
    std::string text;
    friend bool operator==(const Address&, const Address&) = default;
};

// Anything the grammar does not model, kept verbatim.
struct Comment {
    std::string text;
    friend bool operator==(const Comment&, const Comment&) = default;
};

struct ArgValue {
    using Variant = std::variant<StringLit, Number, FlagSet, Struct, Array, Null, Address, Comment>;
    Variant value;

    ArgValue() : value(Null{}) {}
    template <typename T>
        requires std::is_constructible_v<Variant, T&&> && (!std::is_same_v<std::decay_t<T>, ArgValue>)
    ArgValue(T&& v) : value(std::forward<T>(v)) {}

    template <typename T>
    bool is() const { return std::holds_alternative<T>(value); }
    template <typename T>
    const T& as() const { return std::get<T>(value); }

    friend bool operator==(const ArgValue&, const ArgValue&) = default;
};

struct StructField {
    std::string name;
    ArgValue value;
    friend bool operator==(const StructField&, const StructField&) = default;
};

inline bool operator==(const Struct& a, const Struct& b) {
    return a.truncated == b.truncated && a.fields == b.fields;
}
inline bool operator==(const Array& a, const Array& b) { return a.items == b.items; }

struct Success {
    std::int64_t value = 0;
    friend bool operator==(const Success&, const Success&) = default;
};
struct Failure {
    std::string errno_name;
    friend bool operator==(const Failure&, const Failure&) = default;
};
struct NoReturn {
    friend bool operator==(const NoReturn&, const NoReturn&) = default;
};
using ReturnValue = std::variant<Success, Failure, NoReturn>;

struct SyscallEvent {
    int pid = 0;
    std::string name;
    std::vector<ArgValue> args;
    ReturnValue retval = NoReturn{};
    std::size_t seq = 0;
    friend bool operator==(const SyscallEvent&, const SyscallEvent&) = default;
};

struct TraceMeta {
    std::string capture_command;
    std::string timestamp;
    std::string source_label;
    friend bool operator==(const TraceMeta&, const TraceMeta&) = default;
};

struct Trace {
    std::vector<SyscallEvent> events;
    TraceMeta meta;
    friend bool operator==(const Trace&, const Trace&) = default;
};

enum class DiagnosticKind {
    Signal,              // --- SIGCHLD ... ---
    Exit,                // +++ exited with 0 +++
    Unparseable,         // not recognizable as any strace line
    DanglingUnfinished,  // <unfinished ...> never resumed (or superseded)
    OrphanResumed,       // <... resumed> without a pending call
    MalformedCall,       // recognized call start whose body failed to parse
};

inline std::string_view to_string(DiagnosticKind k) {
    switch (k) {
        case DiagnosticKind::Signal: return "signal";
        case DiagnosticKind::Exit: return "exit";
        case DiagnosticKind::Unparseable: return "unparseable";
        case DiagnosticKind::DanglingUnfinished: return "dangling-unfinished";
        case DiagnosticKind::OrphanResumed: return "orphan-resumed";
        case DiagnosticKind::MalformedCall: return "malformed-call";
    }
    return "?";
}

struct Diagnostic {
    std::size_t line = 0;  // 1-based
    DiagnosticKind kind = DiagnosticKind::Unparseable;
    std::string message;
};

struct ParseResult {
    Trace trace;
    std::vector<Diagnostic> diagnostics;

    // Diagnostics that stand in for a syscall-start line that produced no event.
    std::size_t lost_calls() const {
        return static_cast<std::size_t>(std::count_if(diagnostics.begin(), diagnostics.end(), [](const Diagnostic& d) {
            return d.kind == DiagnosticKind::DanglingUnfinished || d.kind == DiagnosticKind::MalformedCall;
        }));
    }
};

namespace detail {

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline bool is_identifier(std::string_view s) {
    if (s.empty() || !is_ident_start(s.front())) return false;
    return std::all_of(s.begin() + 1, s.end(), is_ident_char);
}

inline bool is_syscall_name(std::string_view s) {
    if (s.empty()) return false;
    char c = s.front();
    if (!((c >= 'a' && c <= 'z') || c == '_')) return false;
    return std::all_of(s.begin() + 1, s.end(), [](char ch) {
        return (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_';
    });
}

// Scans forward from `pos` (just past an opening quote) to the closing quote.
// Returns npos when the string never closes.
inline std::size_t skip_quoted(std::string_view s, std::size_t pos) {
    while (pos < s.size()) {
        if (s[pos] == '\\') {
            pos += 2;
            continue;
        }
        if (s[pos] == '"') return pos + 1;
        ++pos;
    }
    return std::string_view::npos;
}

// Splits `s` on `sep` at nesting depth zero, honoring quotes, brackets and /* */.
// Returns nullopt when the brackets or quotes do not balance.
inline std::optional<std::vector<std::string_view>> split_top_level(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::vector<char> stack;
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (c == '"') {
            std::size_t end = skip_quoted(s, i + 1);
            if (end == std::string_view::npos) return std::nullopt;
            i = end;
            continue;
        }
        if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
            std::size_t end = s.find("*/", i + 2);
            if (end == std::string_view::npos) return std::nullopt;
            i = end + 2;
            continue;
        }
        if (c == '(' || c == '[' || c == '{') {
            stack.push_back(c == '(' ? ')' : c == '[' ? ']' : '}');
        } else if (c == ')' || c == ']' || c == '}') {
            if (stack.empty() || stack.back() != c) return std::nullopt;
            stack.pop_back();
        } else if (c == sep && stack.empty()) {
            parts.push_back(s.substr(start, i - start));
            start = i + 1;
        }
        ++i;
    }
    if (!stack.empty()) return std::nullopt;
    parts.push_back(s.substr(start));
    return parts;
}

// Finds the `)` that closes an argument list starting at `pos`.
inline std::size_t find_closing_paren(std::string_view s, std::size_t pos) {
    int depth = 0;
    std::size_t i = pos;
    while (i < s.size()) {
        char c = s[i];
        if (c == '"') {
            std::size_t end = skip_quoted(s, i + 1);
            if (end == std::string_view::npos) return std::string_view::npos;
            i = end;
            continue;
        }
        if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
            std::size_t end = s.find("*/", i + 2);
            if (end == std::string_view::npos) return std::string_view::npos;
            i = end + 2;
            continue;
        }
        if (c == '(' || c == '[' || c == '{') {
            ++depth;
        } else if (c == ']' || c == '}') {
            --depth;
        } else if (c == ')') {
            if (depth == 0) return i;
            --depth;
        }
        ++i;
    }
    return std::string_view::npos;
}

inline int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

// Decodes the body of a quoted strace string. `s` excludes the quotes.
inline std::string decode_escapes(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c != '\\' || i + 1 == s.size()) {
            out.push_back(c);
            continue;
        }
        char e = s[++i];
        switch (e) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case 'r': out.push_back('\r'); break;
            case 'v': out.push_back('\v'); break;
            case 'f': out.push_back('\f'); break;
            case 'a': out.push_back('\a'); break;
            case 'b': out.push_back('\b'); break;
            case '\\': out.push_back('\\'); break;
            case '"': out.push_back('"'); break;
            case '\'': out.push_back('\''); break;
            case 'x': {
                int v = 0;
                int digits = 0;
                while (digits < 2 && i + 1 < s.size() && hex_digit(s[i + 1]) >= 0) {
                    v = v * 16 + hex_digit(s[++i]);
                    ++digits;
                }
                if (digits == 0) {
                    out.append("\\x");
                } else {
                    out.push_back(static_cast<char>(v));
                }
                break;
            }
            default:
                if (e >= '0' && e <= '7') {
                    int v = e - '0';
                    int digits = 1;
                    while (digits < 3 && i + 1 < s.size() && s[i + 1] >= '0' && s[i + 1] <= '7') {
                        v = v * 8 + (s[++i] - '0');
                        ++digits;
                    }
                    out.push_back(static_cast<char>(v & 0xff));
                } else {
                    out.push_back('\\');
                    out.push_back(e);
                }
        }
    }
    return out;
}

inline std::optional<ArgValue> parse_number(std::string_view s) {
    bool negative = false;
    std::string_view body = s;
    if (!body.empty() && body.front() == '-') {
        negative = true;
        body.remove_prefix(1);
    }
    if (body.empty()) return std::nullopt;
    if (body.size() > 2 && body[0] == '0' && (body[1] == 'x' || body[1] == 'X')) {
        std::string_view digits = body.substr(2);
        if (digits.empty() || digits.size() > 16) return std::nullopt;
        std::uint64_t v = 0;
        for (char c : digits) {
            int d = hex_digit(c);
            if (d < 0) return std::nullopt;
            v = v * 16 + static_cast<std::uint64_t>(d);
        }
        // Pointer-width hex literals are addresses, not quantities.
        if (!negative && digits.size() >= 8) return ArgValue(Address{std::string(s)});
        auto sv = static_cast<std::int64_t>(v);
        return ArgValue(Number{negative ? -sv : sv, Radix::Hex});
    }
    if (!std::all_of(body.begin(), body.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    if (body.size() > 20) return std::nullopt;
    bool octal = body.size() > 1 && body[0] == '0';
    if (octal && !std::all_of(body.begin(), body.end(), [](char c) { return c <= '7'; })) return std::nullopt;
    std::uint64_t v = 0;
    for (char c : body) v = v * (octal ? 8 : 10) + static_cast<std::uint64_t>(c - '0');
    auto sv = static_cast<std::int64_t>(v);
    return ArgValue(Number{negative ? -sv : sv, octal ? Radix::Oct : Radix::Dec});
}

inline std::optional<ArgValue> try_parse_value(std::string_view s);

}  // namespace detail

// Parses exactly one strace argument. Never fails: constructs the grammar does
// not model come back as Comment holding the raw text.
inline ArgValue parse_arg_value(std::string_view text) {
    std::string_view s = detail::trim(text);
    if (auto v = detail::try_parse_value(s)) return std::move(*v);
    return Comment{std::string(s)};
}

namespace detail {

inline std::optional<ArgValue> try_parse_value(std::string_view s) {
    if (s.empty()) return std::nullopt;

    // `0x7ffd... /* 12 vars */`: the annotation is dropped
    if (s.ends_with("*/") && !s.starts_with("/*")) {
        std::size_t open = s.rfind("/*");
        if (open != std::string_view::npos && open > 0 && s[open - 1] == ' ') {
            std::string_view head = trim(s.substr(0, open));
            if (!head.empty()) {
                if (auto v = try_parse_value(head)) return v;
            }
        }
    }

    // -y decoration: `3</etc/passwd>`, `AT_FDCWD</root>`
    if (s.back() == '>' && s.front() != '"') {
        std::size_t lt = s.find('<');
        if (lt != std::string_view::npos && lt > 0) {
            std::string_view head = s.substr(0, lt);
            if (is_identifier(head) || parse_number(head)) return try_parse_value(head);
        }
    }

    if (s.front() == '"') {
        std::size_t end = skip_quoted(s, 1);
        if (end == std::string_view::npos) return std::nullopt;
        std::string_view rest = s.substr(end);
        if (!rest.empty() && rest != "...") return std::nullopt;
        return ArgValue(StringLit{decode_escapes(s.substr(1, end - 2)), rest == "..."});
    }

    if (s.front() == '{' && s.back() == '}') {
        Struct st;
        std::string_view inner = trim(s.substr(1, s.size() - 2));
        if (inner.empty()) return ArgValue(std::move(st));
        auto items = split_top_level(inner, ',');
        if (!items) return std::nullopt;
        for (std::string_view raw : *items) {
            std::string_view item = trim(raw);
            if (item == "...") {
                st.truncated = true;
                continue;
            }
            std::size_t eq = item.find('=');
            if (eq == std::string_view::npos || eq == 0) return std::nullopt;
            std::string_view name = trim(item.substr(0, eq));
            if (!is_identifier(name)) return std::nullopt;
            st.fields.push_back(StructField{std::string(name), parse_arg_value(item.substr(eq + 1))});
        }
        return ArgValue(std::move(st));
    }

    if (s.front() == '[' && s.back() == ']') {
        Array arr;
        std::string_view inner = trim(s.substr(1, s.size() - 2));
        if (inner.empty()) return ArgValue(std::move(arr));
        auto items = split_top_level(inner, ',');
        if (!items) return std::nullopt;
        for (std::string_view item : *items) arr.items.push_back(parse_arg_value(item));
        return ArgValue(std::move(arr));
    }

    if (s == "NULL") return ArgValue(Null{});

    if (s.size() >= 4 && s.starts_with("/*") && s.ends_with("*/")) {
        return ArgValue(Comment{std::string(trim(s.substr(2, s.size() - 4)))});
    }

    if (auto n = parse_number(s)) return n;

    // FLAG_A|FLAG_B
    if (is_ident_start(s.front())) {
        if (auto parts = split_top_level(s, '|'); parts && parts->size() >= 1) {
            FlagSet fs;
            bool ok = true;
            for (std::string_view p : *parts) {
                if (!is_identifier(p)) {
                    ok = false;
                    break;
                }
                fs.names.emplace_back(p);
            }
            if (ok) return ArgValue(std::move(fs));
        }
        // name=value at the top level (clone, execve-style keyword args)
        std::size_t eq = s.find('=');
        if (eq != std::string_view::npos && is_identifier(s.substr(0, eq))) {
            Struct st;
            st.fields.push_back(StructField{std::string(s.substr(0, eq)), parse_arg_value(s.substr(eq + 1))});
            return ArgValue(std::move(st));
        }
    }
    return std::nullopt;
}

struct LinePrefix {
    int pid = 0;
    std::string_view rest;
};

// Strips `[pid N]`, a bare leading pid, and -t/-tt/-ttt timestamps.
inline LinePrefix strip_prefix(std::string_view line, int default_pid) {
    LinePrefix out{default_pid, line};
    std::string_view s = line;
    if (s.starts_with("[pid")) {
        std::size_t close = s.find(']');
        if (close != std::string_view::npos) {
            std::string_view num = trim(s.substr(4, close - 4));
            if (!num.empty() && std::all_of(num.begin(), num.end(), [](char c) { return c >= '0' && c <= '9'; })) {
                out.pid = std::stoi(std::string(num));
                s = trim(s.substr(close + 1));
            }
        }
    } else {
        std::size_t i = 0;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
        if (i > 0 && i < s.size() && (s[i] == ' ' || s[i] == '\t')) {
            out.pid = std::stoi(std::string(s.substr(0, i)));
            s = trim(s.substr(i));
        }
    }
    // Timestamp: HH:MM:SS[.frac] or epoch.frac
    std::size_t i = 0;
    while (i < s.size() && ((s[i] >= '0' && s[i] <= '9') || s[i] == ':' || s[i] == '.')) ++i;
    if (i > 0 && i < s.size() && s[i] == ' ') {
        std::string_view ts = s.substr(0, i);
        bool has_sep = ts.find(':') != std::string_view::npos || ts.find('.') != std::string_view::npos;
        if (has_sep) s = trim(s.substr(i));
    }
    out.rest = s;
    return out;
}

// Parses `= <ret>` (plus optional errno text and -T duration).
inline std::optional<ReturnValue> parse_return(std::string_view tail) {
    std::string_view s = trim(tail);
    if (s.empty() || s.front() != '=') return std::nullopt;
    s = trim(s.substr(1));
    // Drop a trailing -T duration like <0.000021>.
    if (!s.empty() && s.back() == '>') {
        std::size_t lt = s.rfind('<');
        if (lt != std::string_view::npos) {
            std::string_view dur = s.substr(lt + 1, s.size() - lt - 2);
            if (!dur.empty() && std::all_of(dur.begin(), dur.end(), [](char c) { return (c >= '0' && c <= '9') || c == '.'; })) {
                s = trim(s.substr(0, lt));
            }
        }
    }
    std::size_t sp = s.find(' ');
    std::string_view head = s.substr(0, sp);
    std::string_view rest = sp == std::string_view::npos ? std::string_view{} : trim(s.substr(sp + 1));
    auto errno_of = [](std::string_view r) -> std::optional<std::string> {
        std::size_t e = 0;
        while (e < r.size() && (std::isupper(static_cast<unsigned char>(r[e])) || std::isdigit(static_cast<unsigned char>(r[e])) || r[e] == '_')) ++e;
        if (e > 1 && r[0] == 'E') return std::string(r.substr(0, e));
        return std::nullopt;
    };
    if (head == "?") {
        if (auto e = errno_of(rest)) return ReturnValue(Failure{*e});
        return ReturnValue(NoReturn{});
    }
    if (head == "-1") {
        if (auto e = errno_of(rest)) return ReturnValue(Failure{*e});
    }
    // Strip -y decoration like 3</etc/passwd>.
    std::size_t lt = head.find('<');
    if (lt != std::string_view::npos) head = head.substr(0, lt);
    auto n = parse_number(head);
    if (!n) return std::nullopt;
    if (n->is<Number>()) return ReturnValue(Success{n->as<Number>().value});
    // Address-valued return (mmap, brk): keep the low bits, value is masked downstream.
    std::uint64_t v = 0;
    for (char c : head.substr(2)) v = v * 16 + static_cast<std::uint64_t>(hex_digit(c));
    return ReturnValue(Success{static_cast<std::int64_t>(v)});
}

struct CallBody {
    std::vector<ArgValue> args;
    ReturnValue retval;
};

// `body` is the text after `name(` through the end of the line.
inline std::optional<CallBody> parse_call_body(std::string_view body) {
    std::size_t close = find_closing_paren(body, 0);
    if (close == std::string_view::npos) return std::nullopt;
    auto ret = parse_return(body.substr(close + 1));
    if (!ret) return std::nullopt;
    CallBody out{{}, std::move(*ret)};
    std::string_view args = trim(body.substr(0, close));
    if (!args.empty()) {
        auto parts = split_top_level(args, ',');
        if (!parts) return std::nullopt;
        for (std::string_view p : *parts) out.args.push_back(parse_arg_value(p));
    }
    return out;
}

}  // namespace detail

// Parses a whole strace log. Throws TraceFormatError only when the input has
// content but not a single event could be recovered from it.
inline ParseResult parse_trace(std::string_view text, TraceMeta meta = {}) {
    using detail::trim;

    struct Pending {
        std::string name;
        std::string prefix;
        std::size_t line;
    };
    struct Built {
        std::size_t start_line;
        SyscallEvent event;
    };

    ParseResult result;
    result.trace.meta = std::move(meta);
    std::map<int, Pending> pending;
    std::vector<Built> built;
    bool any_content = false;

    auto diag = [&](std::size_t line, DiagnosticKind kind, std::string msg) {
        result.diagnostics.push_back(Diagnostic{line, kind, std::move(msg)});
    };

    auto finish = [&](int pid, std::string name, std::string_view body, std::size_t start_line, std::size_t at_line) {
        auto parsed = detail::parse_call_body(body);
        if (!parsed) {
            diag(at_line, DiagnosticKind::MalformedCall, "could not parse call to " + name);
            return;
        }
        SyscallEvent ev;
        ev.pid = pid;
        ev.name = std::move(name);
        ev.args = std::move(parsed->args);
        ev.retval = std::move(parsed->retval);
        built.push_back(Built{start_line, std::move(ev)});
    };

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) {
            if (nl == text.size()) break;
            continue;
        }
        any_content = true;

        auto [pid, rest] = detail::strip_prefix(trim(line), 0);

        if (rest.starts_with("---")) {
            diag(line_no, DiagnosticKind::Signal, std::string(rest));
        } else if (rest.starts_with("+++")) {
            diag(line_no, DiagnosticKind::Exit, std::string(rest));
        } else if (rest.starts_with("<...")) {
            std::size_t gt = rest.find('>');
            std::string_view head = rest.substr(4, gt == std::string_view::npos ? std::string_view::npos : gt - 4);
            head = trim(head);
            std::string_view name = head.substr(0, head.find(' '));
            bool is_resume = gt != std::string_view::npos && head.ends_with("resumed");
            auto it = pending.find(pid);
            if (!is_resume) {
                diag(line_no, DiagnosticKind::Unparseable, std::string(rest));
            } else if (it == pending.end() || it->second.name != name) {
                diag(line_no, DiagnosticKind::OrphanResumed, "resumed " + std::string(name) + " without pending call");
            } else {
                Pending p = std::move(it->second);
                pending.erase(it);
                std::string body = p.prefix;
                body.append(rest.substr(gt + 1));
                finish(pid, p.name, body, p.line, line_no);
            }
        } else {
            std::size_t paren = rest.find('(');
            std::string_view name = paren == std::string_view::npos ? std::string_view{} : rest.substr(0, paren);
            if (paren == std::string_view::npos || !detail::is_syscall_name(name)) {
                diag(line_no, DiagnosticKind::Unparseable, std::string(rest));
            } else {
                std::string_view body = rest.substr(paren + 1);
                constexpr std::string_view unfinished = "<unfinished ...>";
                if (body.ends_with(unfinished)) {
                    auto& slot = pending[pid];
                    if (!slot.name.empty()) {
                        diag(slot.line, DiagnosticKind::DanglingUnfinished, slot.name + " superseded before resume");
                    }
                    body.remove_suffix(unfinished.size());
                    slot = Pending{std::string(name), std::string(detail::trim(body)), line_no};
                } else {
                    finish(pid, std::string(name), body, line_no, line_no);
                }
            }
        }
        if (nl == text.size()) break;
    }

    for (auto& [pid, p] : pending) {
        diag(p.line, DiagnosticKind::DanglingUnfinished, p.name + " never resumed (pid " + std::to_string(pid) + ")");
    }

    std::stable_sort(built.begin(), built.end(), [](const Built& a, const Built& b) { return a.start_line < b.start_line; });
    result.trace.events.reserve(built.size());
    for (auto& b : built) {
        b.event.seq = result.trace.events.size();
        result.trace.events.push_back(std::move(b.event));
    }
    std::stable_sort(result.diagnostics.begin(), result.diagnostics.end(),
                     [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });

    if (any_content && result.trace.events.empty()) {
        throw TraceFormatError("no system calls could be parsed; input does not look like an strace log");
    }
    return result;
}

// Renders bytes the way strace quotes them. Non-printable bytes use three-digit
// octal so a following digit can never be absorbed into the escape.
inline std::string quote_string(std::string_view bytes) {
    static constexpr char oct[] = "01234567";
    std::string out = "\"";
    for (char ch : bytes) {
        auto c = static_cast<unsigned char>(ch);
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            case '\v': out += "\\v"; break;
            case '\f': out += "\\f"; break;
            default:
                if (c >= 0x20 && c < 0x7f) {
                    out.push_back(ch);
                } else {
                    out.push_back('\\');
                    out.push_back(oct[(c >> 6) & 7]);
                    out.push_back(oct[(c >> 3) & 7]);
                    out.push_back(oct[c & 7]);
                }
        }
    }
    out.push_back('"');
    return out;
}

}  // namespace dozer::strace
