#include "helpers.hpp"

#include <gtest/gtest.h>
#include <yaml-cpp/yaml.h>

#include <random>

using namespace dozer;
using namespace dozer::synth;
using testing_support::parse_data;
using testing_support::source_from;

namespace {

const std::string kNginxTask =
    "lineinfile:\n"
    "  dest: '/etc/nginx/nginx.conf'\n"
    "  regexp: '^.*mesg n.*$'\n"
    "  line: 'daemon off;'\n"
    "  state: 'present'\n";

const kb::ExecutionRecord& lineinfile_record(const kb::KnowledgeBase& base) {
    for (const auto& r : base.records()) {
        if (r.module == "lineinfile") return r;
    }
    throw std::runtime_error("no lineinfile record");
}

std::string random_text(std::mt19937& rng) {
    static const std::vector<std::string> pieces{"a", "Z", "0", " ", "'", "\"", "\\", ":", "#", "-", "?", "{", "}", "[", "]", ",", "&", "*",
                                                 "!", "|", ">", "%", "@", "`", "\n", "\t", "\r", "\x01", "\x7f", "\xc3\xa9", "null", "true",
                                                 "~", "0x1F", "1e3", "  "};
    std::string s;
    for (int n = rng() % 7; n > 0; --n) s += pieces[rng() % pieces.size()];
    return s;
}

}  // namespace

TEST(Synthesizer, NginxCandidate) {
    auto base = testing_support::nginx_kb();
    const auto& rec = lineinfile_record(base);
    auto src = source_from(testing_support::kEchoCommand, parse_data("nginx/echo.strace"));
    auto result = compare::compare(src, rec, compare::table_weighting(base.frequencies()));
    auto task = generate(src.params, result, rec);
    EXPECT_EQ(task.module, "lineinfile");
    EXPECT_EQ(task.source_record, rec.id);
    EXPECT_EQ(task.comparison_score, result.score);
    ASSERT_EQ(task.provenance.size(), 4u);
    EXPECT_EQ(task.provenance[0].tag(), "mapped-from:redirect_out_path");
    EXPECT_EQ(task.provenance[1].tag(), "retained-from-record");
    EXPECT_EQ(task.provenance[2].tag(), "mapped-from:arg1");
    EXPECT_EQ(task.provenance[3].tag(), "retained-from-record");
    EXPECT_EQ(emit_yaml(task), kNginxTask);
}

TEST(Synthesizer, EmptyMappingRetainsEverything) {
    auto base = testing_support::nginx_kb();
    const auto& rec = lineinfile_record(base);
    compare::ComparisonResult none;
    none.record_id = rec.id;
    auto task = generate({}, none, rec);
    EXPECT_EQ(task.params, rec.params);
    for (const auto& p : task.provenance) EXPECT_FALSE(p.mapped);

    compare::ComparisonResult wrong;
    wrong.record_id = "0000000000000000";
    EXPECT_THROW(generate({}, wrong, rec), Error);
}

TEST(Synthesizer, ScalarQuoting) {
    EXPECT_EQ(yaml_scalar("it's"), "'it''s'");
    EXPECT_EQ(yaml_scalar(""), "''");
    EXPECT_EQ(yaml_scalar("a\nb"), "\"a\\nb\"");
    CandidateTask t;
    t.module = "ping";
    EXPECT_EQ(emit_yaml(t), "ping: {}\n");
    EXPECT_EQ(yaml_key("dest"), "dest");
    EXPECT_EQ(yaml_key("-x"), "'-x'");
    EXPECT_EQ(yaml_key("a b"), "'a b'");
}

TEST(SynthesizerProperty, YamlRoundTripsThroughParser) {
    std::mt19937 rng(61);
    for (int i = 0; i < 2000; ++i) {
        CandidateTask t;
        t.module = i % 5 == 0 ? random_text(rng) + "m" : "copy";
        for (int n = rng() % 4; n > 0; --n) t.params.emplace_back("k" + std::to_string(t.params.size()) + random_text(rng), random_text(rng));
        std::string text = emit_yaml(t);
        YAML::Node doc;
        ASSERT_NO_THROW(doc = YAML::Load(text)) << text;
        ASSERT_TRUE(doc.IsMap()) << text;
        ASSERT_EQ(doc.size(), 1u) << text;
        auto it = doc.begin();
        EXPECT_EQ(it->first.as<std::string>(), t.module) << text;
        const auto& body = it->second;
        ASSERT_TRUE(body.IsMap()) << text;
        ASSERT_EQ(body.size(), t.params.size()) << text;
        std::size_t j = 0;
        for (auto kv = body.begin(); kv != body.end(); ++kv, ++j) {
            EXPECT_EQ(kv->first.as<std::string>(), t.params[j].first) << text;
            EXPECT_EQ(kv->second.as<std::string>(), t.params[j].second) << text;
        }
    }
}

TEST(SynthesizerProperty, EveryParameterHasProvenance) {
    auto base = testing_support::nginx_kb();
    auto src = source_from(testing_support::kEchoCommand, parse_data("nginx/echo.strace"));
    for (const auto& r : compare::rank(src, base, 5)) {
        const auto* rec = base.find(r.record_id);
        ASSERT_NE(rec, nullptr);
        auto task = generate(src.params, r, *rec);
        ASSERT_EQ(task.provenance.size(), task.params.size());
        std::size_t mapped = 0;
        for (std::size_t i = 0; i < task.params.size(); ++i) {
            EXPECT_EQ(task.params[i].first, rec->params[i].first);
            if (task.provenance[i].mapped) {
                ++mapped;
                EXPECT_EQ(task.params[i].second, src.params.find(task.provenance[i].source_param)->value);
            } else {
                EXPECT_EQ(task.params[i].second, rec->params[i].second);
            }
        }
        EXPECT_EQ(mapped, r.mapping.size());
    }
}
