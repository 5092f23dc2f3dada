#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dozer;
using namespace dozer::kb;
using testing_support::call;
using testing_support::parse_data;
using testing_support::TempDir;
using testing_support::trace_of;

namespace {

FrequencyTable table_of(const std::map<std::string, std::uint64_t>& counts) {
    FrequencyTable t;
    for (const auto& [name, n] : counts) {
        canon::CanonicalTrace tr;
        for (std::uint64_t i = 0; i < n; ++i) tr.calls.push_back(call(name, {}));
        t.add(tr);
    }
    return t;
}

canon::CanonicalTrace random_trace(std::mt19937& rng) {
    static const std::vector<std::string> names{"open", "read", "write", "close", "stat", "rename", "unlink", "mkdir", "chmod", "chown"};
    static const std::vector<std::string> paths{"/etc/a", "/etc/b.conf", "/var/lib/x", "/root/.profile", "it's, (odd)"};
    canon::CanonicalTrace t;
    for (int i = 1 + static_cast<int>(rng() % 8); i > 0; --i) {
        auto c = call(names[rng() % names.size()], {paths[rng() % paths.size()]}, rng() % 4 != 0, "ENOENT");
        if (c.outcome.ok) c.outcome.errno_name.clear();
        t.calls.push_back(c);
    }
    t.origin = "rand";
    return t;
}

}  // namespace

TEST(KnowledgeBase, WeightExamples) {
    auto t = table_of({{"open", 6}, {"write", 3}, {"unlink", 1}});
    EXPECT_EQ(t.total, 10u);
    EXPECT_EQ(t.distinct, 3u);
    // N = total + distinct + 1 = 14
    EXPECT_NEAR(syscall_weight("open", t), std::log(14.0 / 7.0), 1e-12);
    EXPECT_NEAR(syscall_weight("open", t), 0.6931, 5e-5);
    EXPECT_NEAR(syscall_weight("unlink", t), std::log(14.0 / 2.0), 1e-12);
    EXPECT_NEAR(syscall_weight("unlink", t), 1.9459, 5e-5);
    EXPECT_NEAR(syscall_weight("mount", t), std::log(14.0), 1e-12);
    EXPECT_NEAR(syscall_weight("mount", t), 2.6391, 5e-5);
    FrequencyTable empty;
    EXPECT_EQ(syscall_weight("open", empty), 0.0);
    EXPECT_EQ(syscall_weight("anything", empty), 0.0);
}

TEST(KnowledgeBaseProperty, WeightAntiMonotoneAndPositive) {
    std::mt19937 rng(5);
    for (int round = 0; round < 500; ++round) {
        std::map<std::string, std::uint64_t> counts;
        for (int i = 1 + static_cast<int>(rng() % 8); i > 0; --i) counts["s" + std::to_string(rng() % 12)] += 1 + rng() % 50;
        auto t = table_of(counts);
        for (const auto& [a, ca] : counts) {
            EXPECT_GT(syscall_weight(a, t), 0.0);
            for (const auto& [b, cb] : counts) {
                if (ca > cb) {
                    EXPECT_LT(syscall_weight(a, t), syscall_weight(b, t));
                }
            }
            EXPECT_LT(syscall_weight(a, t), syscall_weight("never_seen", t));
        }
    }
}

TEST(KnowledgeBase, IngestExamplesAndDedup) {
    KnowledgeBase base;
    canon::CanonicalConfig cfg;
    auto trace = parse_data("nginx/lineinfile.strace");
    ParamList params{{"dest", "/root/.profile"}, {"regexp", "^.*mesg n.*$"}, {"line", "tty -s && mesg n || true"}, {"state", "present"}};
    auto id = base.ingest("lineinfile", params, trace, cfg);
    EXPECT_EQ(id.size(), 16u);
    auto id2 = base.ingest("file", {{"path", "/tmp/x"}, {"state", "absent"}}, parse_data("nginx/file.strace"), cfg);
    EXPECT_NE(id, id2);
    EXPECT_EQ(base.size(), 2u);
    EXPECT_EQ(base.ingest("lineinfile", params, trace, cfg), id);
    EXPECT_EQ(base.size(), 2u);
    EXPECT_EQ(base.frequencies(), base.recount());

    const auto* rec = base.find(id);
    ASSERT_NE(rec, nullptr);
    EXPECT_EQ(rec->module, "lineinfile");
    EXPECT_EQ(rec->trace.origin, "lineinfile");
    EXPECT_TRUE(rec->groundable_params.find("dest")->groundable);
}

TEST(KnowledgeBase, ConfigMismatchRejected) {
    KnowledgeBase base;
    canon::CanonicalConfig cfg;
    base.ingest("file", {{"path", "/tmp/x"}}, parse_data("nginx/file.strace"), cfg);
    canon::CanonicalConfig other;
    other.collapse_retval = false;
    EXPECT_THROW(base.ingest("file", {{"path", "/tmp/y"}}, parse_data("nginx/file.strace"), other), ConfigMismatch);
}

TEST(KnowledgeBase, SaveLoadRoundTrip) {
    TempDir dir;
    auto base = testing_support::nginx_kb();
    base.save(dir.path / "kb");
    auto loaded = KnowledgeBase::load(dir.path / "kb");
    EXPECT_EQ(loaded, base);
    EXPECT_EQ(loaded.to_text(), base.to_text());
    EXPECT_TRUE(loaded.to_text().starts_with("dozer-kb v1 " + canon::config_digest(*base.config()) + "\n"));
}

TEST(KnowledgeBase, RoundTripKeepsBaselineConfig) {
    canon::CanonicalConfig cfg;
    cfg.baseline = trace_of({call("getcwd", {"/root", "4096"})});
    cfg.denylist.insert("ioctl");
    cfg.min_groundable_len = 4;
    KnowledgeBase base;
    base.ingest("file", {{"path", "/tmp/stale.lock"}}, parse_data("nginx/file.strace"), cfg);
    auto back = KnowledgeBase::from_text(base.to_text());
    EXPECT_EQ(back, base);
    EXPECT_EQ(*back.config(), cfg);
}

TEST(KnowledgeBase, EmptyFileLoadsAsEmpty) {
    auto kb = KnowledgeBase::from_text("");
    EXPECT_TRUE(kb.empty());
    EXPECT_EQ(kb.frequencies().total, 0u);
    auto again = KnowledgeBase::from_text(KnowledgeBase{}.to_text());
    EXPECT_TRUE(again.empty());
}

TEST(KnowledgeBase, TruncatedFileNamesFailingLine) {
    auto text = testing_support::nginx_kb().to_text();
    // drop the trailing frequency line
    auto cut = text.substr(0, text.rfind("{\"frequencies\""));
    try {
        KnowledgeBase::from_text(cut);
        FAIL() << "expected CorruptRecord";
    } catch (const CorruptRecord& e) {
        EXPECT_EQ(e.line(), 5u);
    }
    // cut in the middle of the second record
    auto mid = text.substr(0, text.find("{\"record\"", text.find("{\"record\"") + 1) + 30);
    try {
        KnowledgeBase::from_text(mid);
        FAIL() << "expected CorruptRecord";
    } catch (const CorruptRecord& e) {
        EXPECT_EQ(e.line(), 4u);
    }
}

TEST(KnowledgeBase, TamperingDetected) {
    auto text = testing_support::nginx_kb().to_text();
    auto pos = text.find("/root/.profile");
    ASSERT_NE(pos, std::string::npos);
    auto edited = text;
    edited.replace(pos, 14, "/root/.bashrc_");
    EXPECT_THROW(KnowledgeBase::from_text(edited), CorruptRecord);

    auto bad_header = "dozer-kb v9 -\n" + text.substr(text.find('\n') + 1);
    EXPECT_THROW(KnowledgeBase::from_text(bad_header), FormatVersionMismatch);
    EXPECT_THROW(KnowledgeBase::from_text("hello\n"), CorruptRecord);
}

TEST(KnowledgeBaseProperty, FrequencyTableEqualsRecountAfterIngests) {
    std::mt19937 rng(9);
    KnowledgeBase base;
    for (int i = 0; i < 200; ++i) {
        base.insert("m" + std::to_string(rng() % 5), {{"p", std::to_string(rng() % 7)}}, random_trace(rng));
        ASSERT_EQ(base.frequencies(), base.recount());
    }
    auto back = KnowledgeBase::from_text(base.to_text());
    EXPECT_EQ(back, base);
    EXPECT_EQ(back.frequencies(), back.recount());
}
