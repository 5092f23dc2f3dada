#pragma once

#include "dozer/comparator.hpp"
#include "dozer/knowledge_base.hpp"
#include "dozer/shell_frontend.hpp"

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dozer::synth {

struct Provenance {
    bool mapped = false;
    std::string source_param;  // set when mapped

    std::string tag() const { return mapped ? "mapped-from:" + source_param : "retained-from-record"; }
    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct CandidateTask {
    std::string module;
    kb::ParamList params;
    std::vector<Provenance> provenance;  // parallel to params
    std::string source_record;
    double comparison_score = 0.0;
};

// Fills each of the record's parameters from the mapped shell parameter when
// one exists, otherwise keeps the recorded value. Order follows the record.
inline CandidateTask generate(const shell::ParamSet& src_params, const compare::ComparisonResult& result, const kb::ExecutionRecord& rec) {
    if (result.record_id != rec.id) throw Error("comparison result " + result.record_id + " does not belong to record " + rec.id);
    CandidateTask task;
    task.module = rec.module;
    task.source_record = rec.id;
    task.comparison_score = result.score;
    for (const auto& [name, value] : rec.params) {
        const shell::Param* from = nullptr;
        for (const auto& [s, t] : result.mapping.pairs) {
            if (t == name) {
                from = src_params.find(s);
                break;
            }
        }
        if (from) {
            task.params.emplace_back(name, from->value);
            task.provenance.push_back(Provenance{true, from->name});
        } else {
            task.params.emplace_back(name, value);
            task.provenance.push_back(Provenance{false, {}});
        }
    }
    return task;
}

namespace detail {

inline bool needs_double_quotes(std::string_view v) {
    for (char c : v) {
        auto u = static_cast<unsigned char>(c);
        if (u < 0x20 || u == 0x7f) return true;
    }
    return false;
}

inline std::string double_quoted(std::string_view v) {
    static constexpr char hex[] = "0123456789abcdef";
    std::string out = "\"";
    for (char c : v) {
        auto u = static_cast<unsigned char>(c);
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (u < 0x20 || u == 0x7f) {
                    out += "\\x";
                    out.push_back(hex[u >> 4]);
                    out.push_back(hex[u & 0xf]);
                } else {
                    out.push_back(c);
                }
        }
    }
    out.push_back('"');
    return out;
}

}  // namespace detail

// YAML scalar: single-quoted with '' escaping. Values holding control
// characters fall back to a double-quoted scalar since single-quoted YAML
// folds line breaks.
inline std::string yaml_scalar(std::string_view v) {
    if (detail::needs_double_quotes(v)) return detail::double_quoted(v);
    std::string out = "'";
    for (char c : v) {
        if (c == '\'') out.push_back('\'');
        out.push_back(c);
    }
    out.push_back('\'');
    return out;
}

inline std::string yaml_key(std::string_view k) {
    bool plain = !k.empty() && (std::isalnum(static_cast<unsigned char>(k[0])) || k[0] == '_') && std::all_of(k.begin(), k.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
    return plain ? std::string(k) : yaml_scalar(k);
}

inline std::string emit_yaml(const CandidateTask& task) {
    if (task.params.empty()) return yaml_key(task.module) + ": {}\n";
    std::string out = yaml_key(task.module) + ":\n";
    for (const auto& [k, v] : task.params) out += "  " + yaml_key(k) + ": " + yaml_scalar(v) + "\n";
    return out;
}

}  // namespace dozer::synth
