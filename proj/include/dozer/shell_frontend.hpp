#pragma once

// Single-command shell frontend: words, quoting, simple redirections and
// leading environment assignments. Anything that would need a real shell
// (pipelines, lists, subshells, substitutions) is rejected up front.

#include "dozer/errors.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dozer::shell {

enum class RedirectKind { In, Out, Append, Err };

struct Redirect {
    RedirectKind kind = RedirectKind::Out;
    std::string target;

    // `>>` writes like `>` but never truncates.
    bool writes_stdout() const { return kind == RedirectKind::Out || kind == RedirectKind::Append; }
    bool append() const { return kind == RedirectKind::Append; }

    friend bool operator==(const Redirect&, const Redirect&) = default;
};

struct EnvAssignment {
    std::string name;
    std::string value;
    friend bool operator==(const EnvAssignment&, const EnvAssignment&) = default;
};

struct ShellExecution {
    std::string executable;
    std::vector<std::string> argv;  // arguments after the executable, quotes removed
    std::vector<Redirect> redirects;
    std::vector<EnvAssignment> env_prefix;
    std::string raw;
    std::vector<std::string> warnings;

    // Structural equality; ignores `raw` and warnings.
    bool same_command(const ShellExecution& o) const {
        return executable == o.executable && argv == o.argv && redirects == o.redirects && env_prefix == o.env_prefix;
    }
};

struct Param {
    std::string name;
    std::string value;
    bool groundable = false;
    friend bool operator==(const Param&, const Param&) = default;
};

struct ParamSet {
    std::vector<Param> params;

    const Param* find(std::string_view name) const {
        auto it = std::find_if(params.begin(), params.end(), [&](const Param& p) { return p.name == name; });
        return it == params.end() ? nullptr : &*it;
    }

    std::vector<const Param*> groundable() const {
        std::vector<const Param*> out;
        for (const auto& p : params) {
            if (p.groundable) out.push_back(&p);
        }
        return out;
    }

    std::size_t size() const { return params.size(); }
    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

// Builds a ParamSet from recorded name/value pairs; groundability is by length.
inline ParamSet make_param_set(const std::vector<std::pair<std::string, std::string>>& values, std::size_t min_groundable_len) {
    ParamSet out;
    for (const auto& [k, v] : values) out.params.push_back(Param{k, v, v.size() >= min_groundable_len});
    return out;
}

namespace detail {

inline bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\n'; }
inline bool is_meta(char c) { return c == '|' || c == '&' || c == ';' || c == '(' || c == ')' || c == '<' || c == '>'; }

struct Word {
    std::string text;
    // Length of an unquoted `NAME` prefix followed by an unquoted `=`, if any.
    std::optional<std::size_t> assign_at;
};

class Lexer {
public:
    Lexer(std::string_view src, std::vector<std::string>& warnings) : s_(src), warnings_(warnings) {}

    // Reads one word starting at the current position.
    Word read_word() {
        Word w;
        bool quoted = false;
        bool first_char = true;
        while (i_ < s_.size()) {
            char c = s_[i_];
            if (is_blank(c) || is_meta(c)) break;
            if (c == '\'') {
                quoted = true;
                std::size_t end = s_.find('\'', i_ + 1);
                if (end == std::string_view::npos) throw ShellParseError("unterminated single quote");
                w.text.append(s_.substr(i_ + 1, end - i_ - 1));
                i_ = end + 1;
            } else if (c == '"') {
                quoted = true;
                read_double_quoted(w.text);
            } else if (c == '\\') {
                if (i_ + 1 < s_.size()) {
                    if (s_[i_ + 1] != '\n') w.text.push_back(s_[i_ + 1]);
                    i_ += 2;
                } else {
                    w.text.push_back('\\');
                    ++i_;
                }
                quoted = true;
            } else if (c == '`') {
                throw UnsupportedConstruct("command substitution is not supported");
            } else if (c == '$') {
                check_dollar();
                w.text.push_back(c);
                ++i_;
            } else if (c == '#' && first_char) {
                // Comment: the rest of the line is ignored.
                i_ = s_.size();
                break;
            } else {
                if (c == '*' || c == '?' || c == '[') warn_once("glob characters left unexpanded");
                if (c == '=' && !quoted && !w.assign_at && is_name(w.text)) w.assign_at = w.text.size();
                w.text.push_back(c);
                ++i_;
            }
            first_char = false;
        }
        return w;
    }

    void skip_blanks() {
        while (i_ < s_.size() && is_blank(s_[i_])) ++i_;
    }

    bool done() const { return i_ >= s_.size(); }
    char peek(std::size_t ahead = 0) const { return i_ + ahead < s_.size() ? s_[i_ + ahead] : '\0'; }
    void advance(std::size_t n) { i_ += n; }
    bool at_word_start_comment() const { return peek() == '#'; }

private:
    static bool is_name(std::string_view t) {
        return !t.empty() && is_name_start(t.front()) && std::all_of(t.begin() + 1, t.end(), is_name_char);
    }

    void warn_once(const std::string& msg) {
        if (std::find(warnings_.begin(), warnings_.end(), msg) == warnings_.end()) warnings_.push_back(msg);
    }

    void check_dollar() {
        char n = peek(1);
        if (n == '(') throw UnsupportedConstruct("command substitution is not supported");
        if (n == '{' || is_name_start(n) || std::isdigit(static_cast<unsigned char>(n)) || n == '?' || n == '@' || n == '*' || n == '#' || n == '$') {
            warn_once("variable references are kept literally");
        }
    }

    void read_double_quoted(std::string& out) {
        ++i_;  // opening quote
        while (i_ < s_.size()) {
            char c = s_[i_];
            if (c == '"') {
                ++i_;
                return;
            }
            if (c == '\\' && i_ + 1 < s_.size()) {
                char e = s_[i_ + 1];
                if (e == '$' || e == '`' || e == '"' || e == '\\') {
                    out.push_back(e);
                } else if (e != '\n') {
                    out.push_back('\\');
                    out.push_back(e);
                }
                i_ += 2;
                continue;
            }
            if (c == '`') throw UnsupportedConstruct("command substitution is not supported");
            if (c == '$') check_dollar();
            out.push_back(c);
            ++i_;
        }
        throw ShellParseError("unterminated double quote");
    }

    std::string_view s_;
    std::size_t i_ = 0;
    std::vector<std::string>& warnings_;
};

}  // namespace detail

inline ShellExecution parse_command(std::string_view text) {
    ShellExecution out;
    out.raw = std::string(text);
    detail::Lexer lex(text, out.warnings);
    std::vector<detail::Word> words;

    for (;;) {
        lex.skip_blanks();
        if (lex.done()) break;
        char c = lex.peek();
        char n = lex.peek(1);

        if (c == '|') throw UnsupportedConstruct(n == '|' ? "'||' lists are not supported" : "pipelines are not supported");
        if (c == '&') {
            if (n == '&') throw UnsupportedConstruct("'&&' lists are not supported");
            if (n == '>') throw UnsupportedConstruct("'&>' redirection is not supported");
            throw UnsupportedConstruct("background jobs are not supported");
        }
        if (c == ';') throw UnsupportedConstruct("';' lists are not supported");
        if (c == '(' || c == ')') throw UnsupportedConstruct("subshells are not supported");

        std::optional<RedirectKind> redir;
        std::size_t op_len = 0;
        bool fd_prefixed = (c == '1' || c == '2') && (n == '>' || n == '<');
        if (fd_prefixed) {
            if (n == '<') throw UnsupportedConstruct("descriptor-numbered input redirection is not supported");
            char n2 = lex.peek(2);
            if (n2 == '&') throw UnsupportedConstruct("descriptor duplication is not supported");
            if (c == '2') {
                if (n2 == '>') throw UnsupportedConstruct("'2>>' redirection is not supported");
                redir = RedirectKind::Err;
                op_len = 2;
            } else {
                redir = n2 == '>' ? RedirectKind::Append : RedirectKind::Out;
                op_len = n2 == '>' ? 3 : 2;
            }
        } else if (c == '>') {
            if (n == '&') throw UnsupportedConstruct("descriptor duplication is not supported");
            if (n == '|') throw UnsupportedConstruct("'>|' redirection is not supported");
            redir = n == '>' ? RedirectKind::Append : RedirectKind::Out;
            op_len = n == '>' ? 2 : 1;
        } else if (c == '<') {
            if (n == '<') throw UnsupportedConstruct("here-documents are not supported");
            if (n == '&' || n == '>') throw UnsupportedConstruct("unsupported input redirection");
            redir = RedirectKind::In;
            op_len = 1;
        }

        if (redir) {
            lex.advance(op_len);
            lex.skip_blanks();
            if (lex.done() || detail::is_meta(lex.peek())) throw ShellParseError("redirection without a target");
            detail::Word target = lex.read_word();
            if (target.text.empty()) throw ShellParseError("redirection without a target");
            out.redirects.push_back(Redirect{*redir, std::move(target.text)});
            continue;
        }

        if (lex.at_word_start_comment()) break;
        words.push_back(lex.read_word());
    }

    std::size_t i = 0;
    for (; i < words.size() && words[i].assign_at; ++i) {
        const auto& w = words[i];
        out.env_prefix.push_back(EnvAssignment{w.text.substr(0, *w.assign_at), w.text.substr(*w.assign_at + 1)});
    }
    if (i == words.size()) throw ShellParseError("no command to execute");
    out.executable = words[i].text;
    if (out.executable.empty()) throw ShellParseError("empty command name");
    for (++i; i < words.size(); ++i) out.argv.push_back(words[i].text);
    return out;
}

// Quote-removes a whole command line (every quote and escape processed, all
// other characters kept).
inline std::string remove_quotes(std::string_view text) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '\'') {
            std::size_t end = text.find('\'', i + 1);
            if (end == std::string_view::npos) end = text.size();
            out.append(text.substr(i + 1, end - i - 1));
            i = end;
        } else if (c == '"') {
            for (++i; i < text.size() && text[i] != '"'; ++i) {
                if (text[i] == '\\' && i + 1 < text.size()) {
                    char e = text[i + 1];
                    if (e == '$' || e == '`' || e == '"' || e == '\\') {
                        out.push_back(e);
                        ++i;
                        continue;
                    }
                    if (e == '\n') {
                        ++i;
                        continue;
                    }
                }
                out.push_back(text[i]);
            }
        } else if (c == '\\' && i + 1 < text.size()) {
            if (text[i + 1] != '\n') out.push_back(text[i + 1]);
            ++i;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

// Quotes a word so parse_command reads it back unchanged.
inline std::string quote_word(std::string_view w) {
    bool safe = !w.empty() && std::all_of(w.begin(), w.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '/' || c == '.' || c == '_' || c == '-' || c == '+' ||
               c == ':' || c == ',' || c == '@' || c == '%';
    });
    if (safe) return std::string(w);
    std::string out = "'";
    for (char c : w) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('\'');
    return out;
}

inline std::string render_command(const ShellExecution& e) {
    std::string out;
    for (const auto& a : e.env_prefix) out += a.name + "=" + quote_word(a.value) + " ";
    out += quote_word(e.executable);
    for (const auto& a : e.argv) out += " " + quote_word(a);
    for (const auto& r : e.redirects) {
        switch (r.kind) {
            case RedirectKind::In: out += " < "; break;
            case RedirectKind::Out: out += " > "; break;
            case RedirectKind::Append: out += " >> "; break;
            case RedirectKind::Err: out += " 2> "; break;
        }
        out += quote_word(r.target);
    }
    return out;
}

namespace detail {
inline std::string sanitize(std::string_view s) {
    std::string out;
    for (char c : s) out.push_back(is_name_char(c) ? c : '_');
    return out;
}
}  // namespace detail

// Names parameters for mapping: positional words become arg1..argN, short and
// long switches become flag_<x> (never groundable), --opt=v becomes opt_<opt>,
// redirect targets become redirect_<dir>_path and env assignments env_<NAME>.
inline ParamSet extract_parameters(const ShellExecution& exec, std::size_t min_groundable_len = 3) {
    ParamSet out;
    std::map<std::string, int> seen;
    auto add = [&](std::string name, std::string value, bool can_ground) {
        int& n = seen[name];
        ++n;
        if (n > 1) name += "_" + std::to_string(n);
        bool groundable = can_ground && value.size() >= min_groundable_len;
        out.params.push_back(Param{std::move(name), std::move(value), groundable});
    };

    for (const auto& a : exec.env_prefix) add("env_" + detail::sanitize(a.name), a.value, true);

    int positional = 0;
    bool options_done = false;
    for (const auto& w : exec.argv) {
        if (!options_done && w == "--") {
            options_done = true;
            continue;
        }
        if (!options_done && w.size() > 2 && w.starts_with("--")) {
            std::size_t eq = w.find('=');
            if (eq != std::string::npos) {
                add("opt_" + detail::sanitize(w.substr(2, eq - 2)), w.substr(eq + 1), true);
            } else {
                add("flag_" + detail::sanitize(w.substr(2)), w, false);
            }
            continue;
        }
        if (!options_done && w.size() > 1 && w.front() == '-') {
            add("flag_" + detail::sanitize(w.substr(1)), w, false);
            continue;
        }
        add("arg" + std::to_string(++positional), w, true);
    }

    for (const auto& r : exec.redirects) {
        switch (r.kind) {
            case RedirectKind::In: add("redirect_in_path", r.target, true); break;
            case RedirectKind::Out:
            case RedirectKind::Append: add("redirect_out_path", r.target, true); break;
            case RedirectKind::Err: add("redirect_err_path", r.target, true); break;
        }
    }
    return out;
}

}  // namespace dozer::shell
