#pragma once

// Module execution records, corpus syscall frequencies, and the
// information-content weight derived from them.
//
// On-disk format (UTF-8, line oriented):
//
//   dozer-kb v1 <config-digest>
//   {"config": {...}}
//   {"record": {"id": ..., "module": ..., "params": [[k, v], ...], "origin": ..., "calls": [...]}}
//   ...
//   {"frequencies": {"total": N, "counts": {"name": n, ...}}}
//
// The frequency line is written last and checked against a recount on load,
// so a file cut off at a line boundary is still detected.

#include "dozer/canonicalizer.hpp"
#include "dozer/digest.hpp"
#include "dozer/errors.hpp"
#include "dozer/shell_frontend.hpp"
#include "dozer/strace_parser.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dozer::kb {

using ParamList = std::vector<std::pair<std::string, std::string>>;

struct ExecutionRecord {
    std::string id;
    std::string module;
    ParamList params;
    canon::CanonicalTrace trace;
    shell::ParamSet groundable_params;

    friend bool operator==(const ExecutionRecord&, const ExecutionRecord&) = default;
};

// Per-occurrence syscall counts over every stored trace.
struct FrequencyTable {
    std::map<std::string, std::uint64_t> counts;
    std::uint64_t total = 0;
    std::uint64_t distinct = 0;

    void add(const canon::CanonicalTrace& t) {
        for (const auto& c : t.calls) {
            if (counts[c.name]++ == 0) ++distinct;
            ++total;
        }
    }

    std::uint64_t count(std::string_view name) const {
        auto it = counts.find(std::string(name));
        return it == counts.end() ? 0 : it->second;
    }

    friend bool operator==(const FrequencyTable&, const FrequencyTable&) = default;
};

// Laplace-smoothed surprisal: ln((total + distinct + 1) / (count + 1)).
inline double syscall_weight(std::string_view name, const FrequencyTable& table) {
    const double num = static_cast<double>(table.total + table.distinct + 1);
    const double den = static_cast<double>(table.count(name) + 1);
    return std::log(num / den);
}

inline std::string trace_digest(const canon::CanonicalTrace& t) {
    Sha256 h;
    for (const auto& [key, n] : t.key_counts()) {
        h.update(key).update("#").update(std::to_string(n)).update("\n");
    }
    return h.hex();
}

inline std::string record_id(std::string_view module, const ParamList& params, const canon::CanonicalTrace& trace) {
    Sha256 h;
    h.update(module).update(std::string_view("\0", 1));
    for (const auto& [k, v] : params) {
        h.update(k).update(std::string_view("\0", 1)).update(v).update(std::string_view("\0", 1));
    }
    h.update("\x01").update(trace_digest(trace));
    return h.hex().substr(0, 16);
}

inline constexpr std::string_view kFormatMagic = "dozer-kb";
inline constexpr std::string_view kFormatVersion = "v1";

namespace detail {

using json = nlohmann::ordered_json;

inline json call_to_json(const canon::CanonicalSyscall& c) {
    return json{{"key", canon::render_key(c)}, {"name", c.name}, {"args", c.rendered_args}, {"outcome", canon::render_outcome(c.outcome)}};
}

inline canon::CanonicalSyscall call_from_json(const json& j) {
    canon::CanonicalSyscall c;
    c.name = j.at("name").get<std::string>();
    c.rendered_args = j.at("args").get<std::vector<std::string>>();
    auto outcome = canon::parse_outcome(j.at("outcome").get<std::string>());
    if (!outcome) throw std::runtime_error("bad outcome '" + j.at("outcome").get<std::string>() + "'");
    c.outcome = *outcome;
    if (canon::render_key(c) != j.at("key").get<std::string>()) throw std::runtime_error("call key does not match its fields");
    return c;
}

inline json trace_to_json(const canon::CanonicalTrace& t) {
    json calls = json::array();
    for (const auto& c : t.calls) calls.push_back(call_to_json(c));
    return calls;
}

inline canon::CanonicalTrace trace_from_json(const json& calls, std::string origin) {
    canon::CanonicalTrace t;
    t.origin = std::move(origin);
    for (const auto& c : calls) t.calls.push_back(call_from_json(c));
    return t;
}

inline json config_to_json(const canon::CanonicalConfig& c) {
    json j;
    j["denylist"] = std::vector<std::string>(c.denylist.begin(), c.denylist.end());
    j["fold_at_variants"] = c.fold_at_variants;
    j["mask_fds"] = c.mask_fds;
    j["mask_addresses"] = c.mask_addresses;
    j["collapse_retval"] = c.collapse_retval;
    j["min_groundable_len"] = c.min_groundable_len;
    if (c.baseline) {
        j["baseline"] = json{{"origin", c.baseline->origin}, {"calls", trace_to_json(*c.baseline)}};
    } else {
        j["baseline"] = nullptr;
    }
    return j;
}

inline canon::CanonicalConfig config_from_json(const json& j) {
    canon::CanonicalConfig c;
    auto deny = j.at("denylist").get<std::vector<std::string>>();
    c.denylist = std::set<std::string>(deny.begin(), deny.end());
    c.fold_at_variants = j.at("fold_at_variants").get<bool>();
    c.mask_fds = j.at("mask_fds").get<bool>();
    c.mask_addresses = j.at("mask_addresses").get<bool>();
    c.collapse_retval = j.at("collapse_retval").get<bool>();
    c.min_groundable_len = j.at("min_groundable_len").get<std::size_t>();
    if (!j.at("baseline").is_null()) {
        const auto& b = j.at("baseline");
        c.baseline = trace_from_json(b.at("calls"), b.at("origin").get<std::string>());
    }
    c.validate();
    return c;
}

}  // namespace detail

class KnowledgeBase {
public:
    KnowledgeBase() = default;
    explicit KnowledgeBase(canon::CanonicalConfig config) : config_(std::move(config)) { config_->validate(); }

    const std::optional<canon::CanonicalConfig>& config() const { return config_; }
    const std::vector<ExecutionRecord>& records() const { return records_; }
    const FrequencyTable& frequencies() const { return freq_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    const ExecutionRecord* find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        return it == index_.end() ? nullptr : &records_[it->second];
    }

    // Canonicalizes `raw_trace` under `config` and stores the record. The first
    // ingest into an unconfigured base adopts `config`; later ones must match it.
    std::string ingest(std::string module, ParamList params, const strace::Trace& raw_trace, const canon::CanonicalConfig& config) {
        if (module.empty()) throw Error("module name must not be empty");
        if (config_) {
            if (canon::config_digest(*config_) != canon::config_digest(config)) {
                throw ConfigMismatch("knowledge base canonical config " + canon::config_digest(*config_) +
                                     " differs from requested " + canon::config_digest(config));
            }
        } else {
            config.validate();
            config_ = config;
        }
        canon::CanonicalTrace trace = canon::canonicalize(raw_trace, *config_);
        if (trace.origin.empty()) trace.origin = module;
        return insert(std::move(module), std::move(params), std::move(trace));
    }

    // Stores an already-canonical trace (trusted to match this base's config).
    std::string insert(std::string module, ParamList params, canon::CanonicalTrace trace) {
        if (!config_) config_ = canon::CanonicalConfig{};
        ExecutionRecord rec;
        rec.id = record_id(module, params, trace);
        if (index_.contains(rec.id)) return rec.id;
        rec.module = std::move(module);
        rec.params = std::move(params);
        rec.groundable_params = shell::make_param_set(rec.params, config_->min_groundable_len);
        rec.trace = std::move(trace);
        freq_.add(rec.trace);
        index_.emplace(rec.id, records_.size());
        records_.push_back(std::move(rec));
        return records_.back().id;
    }

    FrequencyTable recount() const {
        FrequencyTable t;
        for (const auto& r : records_) t.add(r.trace);
        return t;
    }

    std::string to_text() const {
        using detail::json;
        std::string out;
        out += std::string(kFormatMagic) + " " + std::string(kFormatVersion) + " " +
               (config_ ? canon::config_digest(*config_) : std::string("-")) + "\n";
        if (config_) out += json{{"config", detail::config_to_json(*config_)}}.dump() + "\n";
        for (const auto& r : records_) {
            json params = json::array();
            for (const auto& [k, v] : r.params) params.push_back(json::array({k, v}));
            json rec{{"id", r.id}, {"module", r.module}, {"params", params}, {"origin", r.trace.origin}, {"calls", detail::trace_to_json(r.trace)}};
            out += json{{"record", rec}}.dump() + "\n";
        }
        json counts = json::object();
        for (const auto& [name, n] : freq_.counts) counts[name] = n;
        out += json{{"frequencies", {{"total", freq_.total}, {"distinct", freq_.distinct}, {"counts", counts}}}}.dump() + "\n";
        return out;
    }

    static KnowledgeBase from_text(std::string_view text) {
        using detail::json;
        KnowledgeBase kb;
        if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return kb;

        std::vector<std::string_view> lines;
        for (std::size_t pos = 0; pos < text.size();) {
            std::size_t nl = text.find('\n', pos);
            if (nl == std::string_view::npos) nl = text.size();
            lines.push_back(text.substr(pos, nl - pos));
            pos = nl + 1;
        }
        while (!lines.empty() && lines.back().empty()) lines.pop_back();

        // Header
        std::string_view header = lines.front();
        std::istringstream hs{std::string(header)};
        std::string magic, version, digest;
        hs >> magic >> version >> digest;
        if (magic != kFormatMagic || digest.empty()) throw CorruptRecord(1, "", "missing 'dozer-kb' header");
        if (version != kFormatVersion) {
            throw FormatVersionMismatch("knowledge base format " + version + " is not supported (expected " + std::string(kFormatVersion) + ")");
        }

        bool saw_freq = false;
        FrequencyTable stored;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const std::size_t line_no = i + 1;
            if (saw_freq) throw CorruptRecord(line_no, "", "content after frequency table");
            json j;
            try {
                j = json::parse(lines[i]);
            } catch (const json::exception& e) {
                throw CorruptRecord(line_no, "", std::string("unreadable line: ") + e.what());
            }
            std::string id;
            try {
                if (j.contains("config")) {
                    if (kb.config_ || !kb.records_.empty()) throw std::runtime_error("unexpected config line");
                    kb.config_ = detail::config_from_json(j.at("config"));
                    if (canon::config_digest(*kb.config_) != digest) throw std::runtime_error("config digest does not match header");
                } else if (j.contains("record")) {
                    const auto& r = j.at("record");
                    id = r.at("id").get<std::string>();
                    if (!kb.config_) throw std::runtime_error("record before config");
                    ParamList params;
                    for (const auto& p : r.at("params")) params.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
                    auto trace = detail::trace_from_json(r.at("calls"), r.at("origin").get<std::string>());
                    std::string module = r.at("module").get<std::string>();
                    if (record_id(module, params, trace) != id) throw std::runtime_error("record id does not match contents");
                    if (kb.index_.contains(id)) throw std::runtime_error("duplicate record");
                    kb.insert(std::move(module), std::move(params), std::move(trace));
                } else if (j.contains("frequencies")) {
                    const auto& f = j.at("frequencies");
                    stored.total = f.at("total").get<std::uint64_t>();
                    stored.distinct = f.at("distinct").get<std::uint64_t>();
                    for (const auto& [name, n] : f.at("counts").items()) stored.counts[name] = n.get<std::uint64_t>();
                    if (!(stored == kb.freq_)) throw std::runtime_error("frequency table does not match stored records");
                    saw_freq = true;
                } else {
                    throw std::runtime_error("unknown line kind");
                }
            } catch (const CorruptRecord&) {
                throw;
            } catch (const std::exception& e) {
                throw CorruptRecord(line_no, id, e.what());
            }
        }
        if (!saw_freq) throw CorruptRecord(lines.size() + 1, "", "missing frequency table (file truncated?)");
        if (!kb.config_ && digest != "-") throw CorruptRecord(2, "", "missing config line");
        return kb;
    }

    void save(const std::filesystem::path& path) const {
        std::filesystem::path tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw Error("cannot write " + tmp.string());
            out << to_text();
            if (!out) throw Error("short write to " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
    }

    static KnowledgeBase load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open knowledge base " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return from_text(ss.str());
    }

    friend bool operator==(const KnowledgeBase& a, const KnowledgeBase& b) {
        return a.config_ == b.config_ && a.records_ == b.records_ && a.freq_ == b.freq_;
    }

private:
    std::optional<canon::CanonicalConfig> config_;
    std::vector<ExecutionRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
    FrequencyTable freq_;
};

}  // namespace dozer::kb
