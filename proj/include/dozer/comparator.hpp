#pragma once

// Trace comparison between a shell command and knowledge-base records.
//
// 1. Locate every parameter value inside the rendered syscall arguments of its
//    own trace (occurrences).
// 2. Enumerate injective partial mappings from source to target parameters.
// 3. For each mapping, rewrite both traces so mapped values become the same
//    slot token, then match calls in two tiers: exact key first, then syscall
//    name alone at a discount alpha. Each matched call is worth its
//    information-content weight.
// 4. Keep the mapping with the best weighted-Dice score.

#include "dozer/canonicalizer.hpp"
#include "dozer/errors.hpp"
#include "dozer/knowledge_base.hpp"
#include "dozer/shell_frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dozer::compare {

struct Occurrence {
    std::string param;
    std::size_t call_seq = 0;
    std::size_t arg_index = 0;
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the last byte
    friend bool operator==(const Occurrence&, const Occurrence&) = default;
};

// Injective partial map source-param -> target-param, kept sorted by source.
struct ParameterMapping {
    std::vector<std::pair<std::string, std::string>> pairs;

    const std::string* target_of(std::string_view source) const {
        for (const auto& [s, t] : pairs) {
            if (s == source) return &t;
        }
        return nullptr;
    }
    bool maps_target(std::string_view target) const {
        return std::any_of(pairs.begin(), pairs.end(), [&](const auto& p) { return p.second == target; });
    }
    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }

    void normalize() { std::sort(pairs.begin(), pairs.end()); }

    bool is_injective() const {
        std::set<std::string> srcs, tgts;
        for (const auto& [s, t] : pairs) {
            if (!srcs.insert(s).second || !tgts.insert(t).second) return false;
        }
        return true;
    }

    friend bool operator==(const ParameterMapping&, const ParameterMapping&) = default;
    friend auto operator<=>(const ParameterMapping&, const ParameterMapping&) = default;
};

inline std::string to_string(const ParameterMapping& m) {
    if (m.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < m.pairs.size(); ++i) {
        if (i) out += ",";
        out += m.pairs[i].first + "->" + m.pairs[i].second;
    }
    return out;
}

enum class Side { Source, Target };

struct TemplatedCall {
    std::string name;
    std::string key;
};
using TemplatedTrace = std::vector<TemplatedCall>;

// Weight provider. Scaling every weight by the same positive factor leaves
// scores and rankings unchanged.
struct Weighting {
    const kb::FrequencyTable* table = nullptr;
    double scale = 1.0;
    std::map<std::string, double, std::less<>> fixed;  // overrides the table for listed names

    double operator()(std::string_view name) const {
        static const kb::FrequencyTable empty;
        if (auto it = fixed.find(name); it != fixed.end()) return scale * it->second;
        return scale * kb::syscall_weight(name, table ? *table : empty);
    }
};

inline Weighting table_weighting(const kb::FrequencyTable& table, double scale = 1.0) {
    Weighting w;
    w.table = &table;
    w.scale = scale;
    return w;
}

struct MatchResult {
    double score = 0.0;
    double matched_weight = 0.0;
    double source_weight = 0.0;
    double target_weight = 0.0;
    std::size_t matched_full = 0;
    std::size_t matched_name_only = 0;
    std::vector<std::pair<std::string, std::string>> detail;  // (source key, target key)
};

struct ComparisonResult {
    std::string record_id;
    std::string module;
    ParameterMapping mapping;
    double score = 0.0;
    std::size_t matched_full = 0;
    std::size_t matched_name_only = 0;
    std::vector<std::pair<std::string, std::string>> detail;
};

struct CompareOptions {
    double alpha = 0.25;
    std::size_t exhaustive_limit = 10000;
    std::size_t beam_width = 32;
};

// The shell side of a comparison.
struct SourceCommand {
    shell::ShellExecution exec;
    shell::ParamSet params;
    canon::CanonicalTrace trace;
};

inline std::vector<Occurrence> find_occurrences(const canon::CanonicalTrace& trace, const shell::ParamSet& params) {
    std::vector<Occurrence> out;
    for (const auto& p : params.params) {
        if (!p.groundable || p.value.empty()) continue;
        for (std::size_t ci = 0; ci < trace.calls.size(); ++ci) {
            const auto& args = trace.calls[ci].rendered_args;
            for (std::size_t ai = 0; ai < args.size(); ++ai) {
                for (std::size_t pos = args[ai].find(p.value); pos != std::string::npos; pos = args[ai].find(p.value, pos + 1)) {
                    out.push_back(Occurrence{p.name, ci, ai, pos, pos + p.value.size()});
                }
            }
        }
    }
    return out;
}

// Copy of `params` where only parameters with at least one occurrence stay groundable.
inline shell::ParamSet restrict_to_grounded(const shell::ParamSet& params, const std::vector<Occurrence>& occ) {
    shell::ParamSet out = params;
    for (auto& p : out.params) {
        p.groundable = p.groundable && std::any_of(occ.begin(), occ.end(), [&](const Occurrence& o) { return o.param == p.name; });
    }
    return out;
}

// Number of injective partial mappings: sum_k C(s,k) * t!/(t-k)!, saturating.
inline std::uint64_t count_mappings(std::size_t s, std::size_t t) {
    constexpr auto cap = std::numeric_limits<std::uint64_t>::max() / 4;
    std::uint64_t total = 0;
    for (std::size_t k = 0; k <= std::min(s, t); ++k) {
        long double term = 1.0L;
        for (std::size_t i = 0; i < k; ++i) term *= static_cast<long double>(s - i) / static_cast<long double>(i + 1);
        for (std::size_t i = 0; i < k; ++i) term *= static_cast<long double>(t - i);
        if (term >= static_cast<long double>(cap) || total + static_cast<std::uint64_t>(std::llround(term)) >= cap) return cap;
        total += static_cast<std::uint64_t>(std::llround(term));
    }
    return total;
}

// Steers the beam-search fallback: `pair_hint` orders candidate pairs,
// `objective` ranks partial mappings.
struct BeamGuide {
    std::function<double(const std::string&, const std::string&)> pair_hint;
    std::function<double(const ParameterMapping&)> objective;
};

namespace detail {

inline void enumerate_rec(const std::vector<std::string>& src, const std::vector<std::string>& tgt, std::size_t i,
                          std::vector<bool>& used, ParameterMapping& cur, std::vector<ParameterMapping>& out) {
    if (i == src.size()) {
        out.push_back(cur);
        return;
    }
    enumerate_rec(src, tgt, i + 1, used, cur, out);
    for (std::size_t j = 0; j < tgt.size(); ++j) {
        if (used[j]) continue;
        used[j] = true;
        cur.pairs.emplace_back(src[i], tgt[j]);
        enumerate_rec(src, tgt, i + 1, used, cur, out);
        cur.pairs.pop_back();
        used[j] = false;
    }
}

inline std::vector<std::string> groundable_names(const shell::ParamSet& ps) {
    std::vector<std::string> out;
    for (const auto& p : ps.params) {
        if (p.groundable) out.push_back(p.name);
    }
    return out;
}

// Returns true when `a` should be preferred over `b` at equal score.
inline bool tie_prefers(const ParameterMapping& a, const ParameterMapping& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.pairs < b.pairs;
}

inline std::vector<ParameterMapping> beam_search(const std::vector<std::string>& src, const std::vector<std::string>& tgt,
                                                 const BeamGuide& guide, std::size_t width) {
    auto hint = [&](const std::string& s, const std::string& t) { return guide.pair_hint ? guide.pair_hint(s, t) : 0.0; };
    // Sources with the strongest best-pair hint are placed first.
    std::vector<std::string> order = src;
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        double ba = 0, bb = 0;
        for (const auto& t : tgt) {
            ba = std::max(ba, hint(a, t));
            bb = std::max(bb, hint(b, t));
        }
        return ba > bb;
    });

    struct State {
        ParameterMapping m;
        double value = 0;
    };
    std::vector<State> beam{State{{}, guide.objective ? guide.objective(ParameterMapping{}) : 0.0}};
    for (const auto& s : order) {
        std::vector<std::string> cands = tgt;
        std::stable_sort(cands.begin(), cands.end(), [&](const std::string& a, const std::string& b) { return hint(s, a) > hint(s, b); });
        std::vector<State> next;
        for (const auto& st : beam) {
            next.push_back(st);
            for (const auto& t : cands) {
                if (st.m.maps_target(t)) continue;
                State n{st.m, 0};
                n.m.pairs.emplace_back(s, t);
                n.m.normalize();
                n.value = guide.objective ? guide.objective(n.m) : static_cast<double>(n.m.size());
                next.push_back(std::move(n));
            }
        }
        std::stable_sort(next.begin(), next.end(), [](const State& a, const State& b) {
            if (a.value != b.value) return a.value > b.value;
            return tie_prefers(a.m, b.m);
        });
        if (next.size() > width) next.resize(width);
        beam = std::move(next);
    }
    std::vector<ParameterMapping> out;
    bool has_empty = false;
    for (auto& st : beam) {
        has_empty = has_empty || st.m.empty();
        out.push_back(std::move(st.m));
    }
    if (!has_empty) out.push_back(ParameterMapping{});
    return out;
}

}  // namespace detail

// All injective partial mappings between the groundable parameters of `src`
// and `tgt`, the empty mapping included. Past `limit` mappings, falls back to a
// beam search steered by `guide`.
inline std::vector<ParameterMapping> enumerate_mappings(const shell::ParamSet& src, const shell::ParamSet& tgt,
                                                        const BeamGuide& guide = {}, const CompareOptions& opts = {}) {
    auto s = detail::groundable_names(src);
    auto t = detail::groundable_names(tgt);
    if (count_mappings(s.size(), t.size()) > opts.exhaustive_limit) {
        return detail::beam_search(s, t, guide, opts.beam_width);
    }
    std::vector<ParameterMapping> out;
    std::vector<bool> used(t.size(), false);
    ParameterMapping cur;
    detail::enumerate_rec(s, t, 0, used, cur, out);
    for (auto& m : out) m.normalize();
    return out;
}

inline std::string slot_token(const std::string& param, const ParameterMapping& mapping, Side side) {
    if (side == Side::Source) {
        if (const auto* t = mapping.target_of(param)) return "<P:" + *t + ">";
        return "<P:src:" + param + ">";
    }
    if (mapping.maps_target(param)) return "<P:" + param + ">";
    return "<P:tgt:" + param + ">";
}

// Rewrites parameter occurrences into slot tokens, longest value first, then
// leftmost, never rewriting overlapping spans.
inline TemplatedTrace apply_mapping(const canon::CanonicalTrace& trace, const std::vector<Occurrence>& occurrences,
                                    const shell::ParamSet& params, const ParameterMapping& mapping, Side side) {
    std::map<std::pair<std::size_t, std::size_t>, std::vector<const Occurrence*>> by_arg;
    for (const auto& o : occurrences) {
        const auto* p = params.find(o.param);
        if (p && p->groundable) by_arg[{o.call_seq, o.arg_index}].push_back(&o);
    }
    auto param_rank = [&](const std::string& name) {
        for (std::size_t i = 0; i < params.params.size(); ++i) {
            if (params.params[i].name == name) return i;
        }
        return params.params.size();
    };

    TemplatedTrace out;
    out.reserve(trace.calls.size());
    for (std::size_t ci = 0; ci < trace.calls.size(); ++ci) {
        const auto& call = trace.calls[ci];
        std::vector<std::string> args = call.rendered_args;
        for (std::size_t ai = 0; ai < args.size(); ++ai) {
            auto it = by_arg.find({ci, ai});
            if (it == by_arg.end()) continue;
            auto spans = it->second;
            std::stable_sort(spans.begin(), spans.end(), [&](const Occurrence* a, const Occurrence* b) {
                std::size_t la = a->end - a->begin, lb = b->end - b->begin;
                if (la != lb) return la > lb;
                if (a->begin != b->begin) return a->begin < b->begin;
                return param_rank(a->param) < param_rank(b->param);
            });
            std::vector<const Occurrence*> accepted;
            for (const auto* o : spans) {
                bool overlaps = std::any_of(accepted.begin(), accepted.end(), [&](const Occurrence* a) {
                    return o->begin < a->end && a->begin < o->end;
                });
                if (!overlaps) accepted.push_back(o);
            }
            std::sort(accepted.begin(), accepted.end(), [](const Occurrence* a, const Occurrence* b) { return a->begin < b->begin; });
            const std::string& orig = call.rendered_args[ai];
            std::string rewritten;
            std::size_t pos = 0;
            for (const auto* o : accepted) {
                rewritten.append(orig, pos, o->begin - pos);
                rewritten += slot_token(o->param, mapping, side);
                pos = o->end;
            }
            rewritten.append(orig, pos, std::string::npos);
            args[ai] = std::move(rewritten);
        }
        out.push_back(TemplatedCall{call.name, canon::render_key(call.name, args, call.outcome)});
    }
    return out;
}

inline TemplatedTrace apply_mapping(const canon::CanonicalTrace& trace, const shell::ParamSet& params,
                                    const ParameterMapping& mapping, Side side) {
    return apply_mapping(trace, find_occurrences(trace, params), params, mapping, side);
}

// Two-tier multiset matching: exact keys at full weight, then leftover calls
// paired by syscall name at alpha * weight. Score is 2M / (W_src + W_tgt).
inline MatchResult match_and_score(const TemplatedTrace& src, const TemplatedTrace& tgt, const Weighting& weight, double alpha = 0.25) {
    struct KeyCount {
        std::string name;
        std::size_t a = 0;
        std::size_t b = 0;
    };
    std::map<std::string, KeyCount> keys;
    for (const auto& c : src) {
        auto& k = keys[c.key];
        k.name = c.name;
        ++k.a;
    }
    for (const auto& c : tgt) {
        auto& k = keys[c.key];
        k.name = c.name;
        ++k.b;
    }

    MatchResult r;
    std::map<std::string, std::pair<std::size_t, std::size_t>> residual;  // name -> (src, tgt) leftovers
    std::map<std::string, std::vector<std::string>> left_src_keys, left_tgt_keys;
    std::map<std::string, double> wcache;
    auto w = [&](const std::string& name) {
        auto it = wcache.find(name);
        if (it != wcache.end()) return it->second;
        return wcache[name] = weight(name);
    };

    for (const auto& [key, k] : keys) {
        double wk = w(k.name);
        r.source_weight += static_cast<double>(k.a) * wk;
        r.target_weight += static_cast<double>(k.b) * wk;
        std::size_t m = std::min(k.a, k.b);
        if (m) {
            r.matched_weight += static_cast<double>(m) * wk;
            r.matched_full += m;
            for (std::size_t i = 0; i < m; ++i) r.detail.emplace_back(key, key);
        }
        auto& res = residual[k.name];
        res.first += k.a - m;
        res.second += k.b - m;
        for (std::size_t i = m; i < k.a; ++i) left_src_keys[k.name].push_back(key);
        for (std::size_t i = m; i < k.b; ++i) left_tgt_keys[k.name].push_back(key);
    }
    for (const auto& [name, res] : residual) {
        std::size_t m = std::min(res.first, res.second);
        if (!m) continue;
        r.matched_weight += alpha * static_cast<double>(m) * w(name);
        r.matched_name_only += m;
        for (std::size_t i = 0; i < m; ++i) r.detail.emplace_back(left_src_keys[name][i], left_tgt_keys[name][i]);
    }
    const double denom = r.source_weight + r.target_weight;
    r.score = denom > 0 ? std::clamp(2.0 * r.matched_weight / denom, 0.0, 1.0) : 0.0;
    return r;
}

namespace detail {

// Scores that agree to 12 decimal places are treated as tied.
inline std::int64_t score_bucket(double score) { return std::llround(score * 1e12); }

// Co-occurrence hint for a (source, target) pair: weight of syscall names in
// which both parameters appear.
inline double cooccurrence(const std::string& s, const std::string& t, const std::vector<Occurrence>& src_occ,
                           const canon::CanonicalTrace& src_trace, const std::vector<Occurrence>& tgt_occ,
                           const canon::CanonicalTrace& tgt_trace, const Weighting& w) {
    std::map<std::string, std::pair<int, int>> names;
    for (const auto& o : src_occ) {
        if (o.param == s) ++names[src_trace.calls[o.call_seq].name].first;
    }
    for (const auto& o : tgt_occ) {
        if (o.param == t) ++names[tgt_trace.calls[o.call_seq].name].second;
    }
    double v = 0;
    for (const auto& [name, c] : names) v += std::min(c.first, c.second) * w(name);
    return v;
}

}  // namespace detail

inline ComparisonResult compare(const SourceCommand& src, const kb::ExecutionRecord& rec, const Weighting& weight,
                                const CompareOptions& opts = {}) {
    const auto src_occ_all = find_occurrences(src.trace, src.params);
    const auto tgt_occ_all = find_occurrences(rec.trace, rec.groundable_params);
    const auto src_params = restrict_to_grounded(src.params, src_occ_all);
    const auto tgt_params = restrict_to_grounded(rec.groundable_params, tgt_occ_all);

    auto evaluate = [&](const ParameterMapping& m) {
        auto a = apply_mapping(src.trace, src_occ_all, src_params, m, Side::Source);
        auto b = apply_mapping(rec.trace, tgt_occ_all, tgt_params, m, Side::Target);
        return match_and_score(a, b, weight, opts.alpha);
    };

    BeamGuide guide;
    guide.pair_hint = [&](const std::string& s, const std::string& t) {
        return detail::cooccurrence(s, t, src_occ_all, src.trace, tgt_occ_all, rec.trace, weight);
    };
    guide.objective = [&](const ParameterMapping& m) { return evaluate(m).score; };

    ComparisonResult best;
    best.record_id = rec.id;
    best.module = rec.module;
    bool have = false;
    for (const auto& m : enumerate_mappings(src_params, tgt_params, guide, opts)) {
        MatchResult r = evaluate(m);
        bool better = !have;
        if (have) {
            auto nb = detail::score_bucket(r.score), ob = detail::score_bucket(best.score);
            better = nb != ob ? nb > ob : detail::tie_prefers(m, best.mapping);
        }
        if (better) {
            have = true;
            best.mapping = m;
            best.score = r.score;
            best.matched_full = r.matched_full;
            best.matched_name_only = r.matched_name_only;
            best.detail = std::move(r.detail);
        }
    }
    return best;
}

// Record treated as a shell-side source (used for self-comparison).
inline SourceCommand as_source(const kb::ExecutionRecord& rec) {
    SourceCommand s;
    s.exec.executable = rec.module;
    s.exec.raw = rec.module;
    s.params = rec.groundable_params;
    s.trace = rec.trace;
    return s;
}

// Top-k records by score (descending), ties broken by record id.
inline std::vector<ComparisonResult> rank(const SourceCommand& src, const kb::KnowledgeBase& kb, std::size_t k,
                                          const Weighting& weight, const CompareOptions& opts = {}) {
    if (kb.empty()) throw EmptyKnowledgeBase();
    std::vector<ComparisonResult> all;
    all.reserve(kb.size());
    for (const auto& rec : kb.records()) all.push_back(compare(src, rec, weight, opts));
    std::stable_sort(all.begin(), all.end(), [](const ComparisonResult& a, const ComparisonResult& b) {
        auto sa = detail::score_bucket(a.score), sb = detail::score_bucket(b.score);
        if (sa != sb) return sa > sb;
        return a.record_id < b.record_id;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

inline std::vector<ComparisonResult> rank(const SourceCommand& src, const kb::KnowledgeBase& kb, std::size_t k = 5,
                                          const CompareOptions& opts = {}) {
    return rank(src, kb, k, table_weighting(kb.frequencies()), opts);
}

}  // namespace dozer::compare
