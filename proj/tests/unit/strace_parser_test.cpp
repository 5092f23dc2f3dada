#include "helpers.hpp"

#include <gtest/gtest.h>

#include <random>
#include <regex>

using namespace dozer::strace;
using testing_support::read_data;

namespace {

// Independent count of lines that begin a system call: optional pid/time
// prefix, then `name(`. Resumption, signal and exit lines do not count.
std::size_t count_start_lines(const std::string& text) {
    static const std::regex start(R"(^\s*(\[pid\s+\d+\]\s*|\d+\s+)?(\d{2}:\d{2}:\d{2}(\.\d+)?\s+|\d+\.\d+\s+)?[a-z_][a-z0-9_]*\()");
    std::size_t n = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (std::regex_search(line, start)) ++n;
    }
    return n;
}

std::vector<std::string> corpus_files() {
    return {"corpus/cp-tt.strace", "corpus/apt-threads.strace", "corpus/python-module.strace", "corpus/sh-pipeline.strace",
            "corpus/misc-edge.strace", "nginx/echo.strace", "nginx/lineinfile.strace", "nginx/file.strace"};
}

}  // namespace

TEST(StraceParser, OpenCallWithFlagsAndOctalMode) {
    auto r = parse_trace(R"(open("/etc/nginx/nginx.conf", O_WRONLY|O_APPEND|O_CREAT, 0666) = 3)");
    ASSERT_EQ(r.trace.events.size(), 1u);
    const auto& ev = r.trace.events[0];
    EXPECT_EQ(ev.name, "open");
    ASSERT_EQ(ev.args.size(), 3u);
    EXPECT_EQ(ev.args[0].as<StringLit>().bytes, "/etc/nginx/nginx.conf");
    EXPECT_EQ(ev.args[1].as<FlagSet>().names, (std::vector<std::string>{"O_WRONLY", "O_APPEND", "O_CREAT"}));
    EXPECT_EQ(ev.args[2].as<Number>().value, 0666);
    EXPECT_EQ(ev.args[2].as<Number>().radix, Radix::Oct);
    EXPECT_EQ(std::get<Success>(ev.retval).value, 3);
}

TEST(StraceParser, UnfinishedResumedPairBecomesOneEvent) {
    auto r = parse_trace("[pid 42] write(1, \"hi\\n\", 3 <unfinished ...>\n"
                         "[pid 43] close(5) = 0\n"
                         "[pid 42] <... write resumed>) = 3\n");
    ASSERT_EQ(r.trace.events.size(), 2u);
    const auto& w = r.trace.events[0];
    EXPECT_EQ(w.pid, 42);
    EXPECT_EQ(w.name, "write");
    EXPECT_EQ(w.args[1].as<StringLit>().bytes, "hi\n");
    EXPECT_EQ(std::get<Success>(w.retval).value, 3);
    EXPECT_EQ(r.trace.events[1].name, "close");
    EXPECT_EQ(r.lost_calls(), 0u);
}

TEST(StraceParser, FailureCarriesErrnoName) {
    auto r = parse_trace("unlink(\"/tmp/x\") = -1 ENOENT (No such file or directory)\n");
    ASSERT_EQ(r.trace.events.size(), 1u);
    EXPECT_EQ(std::get<Failure>(r.trace.events[0].retval).errno_name, "ENOENT");
}

TEST(StraceParser, ArgValueShapes) {
    EXPECT_EQ(parse_arg_value("O_WRONLY|O_APPEND").as<FlagSet>().names, (std::vector<std::string>{"O_WRONLY", "O_APPEND"}));

    auto st = parse_arg_value("{st_mode=S_IFREG|0644, st_size=120, ...}");
    ASSERT_TRUE(st.is<Struct>());
    EXPECT_EQ(st.as<Struct>().fields.size(), 2u);
    EXPECT_TRUE(st.as<Struct>().truncated);
    EXPECT_EQ(st.as<Struct>().fields[1].name, "st_size");
    EXPECT_EQ(st.as<Struct>().fields[1].value.as<Number>().value, 120);

    auto s = parse_arg_value(R"("abc\x41"...)");
    ASSERT_TRUE(s.is<StringLit>());
    EXPECT_EQ(s.as<StringLit>().bytes, "abcA");
    EXPECT_TRUE(s.as<StringLit>().truncated);

    EXPECT_TRUE(parse_arg_value("NULL").is<Null>());
    EXPECT_TRUE(parse_arg_value("0x7ffd1e4b6c30").is<Address>());
    EXPECT_EQ(parse_arg_value("0x20").as<Number>().radix, Radix::Hex);
    EXPECT_EQ(parse_arg_value("-1").as<Number>().value, -1);
    EXPECT_EQ(parse_arg_value("[6, 7]").as<Array>().items.size(), 2u);
    EXPECT_TRUE(parse_arg_value("/* 12 vars */").is<Comment>());
    EXPECT_TRUE(parse_arg_value("0x7ffe9b3f4d28 /* 21 vars */").is<Address>());
    EXPECT_EQ(parse_arg_value("3</etc/passwd>").as<Number>().value, 3);
    EXPECT_TRUE(parse_arg_value("~[RTMIN RT_1]").is<Comment>());
}

TEST(StraceParser, PrefixesAndDurationsAreStripped) {
    auto r = parse_trace("14:02:11.487185 geteuid()               = 0 <0.000004>\n"
                         "20455 1689012345.123456 getuid() = 0\n"
                         "[pid  77] getgid() = 0\n");
    ASSERT_EQ(r.trace.events.size(), 3u);
    EXPECT_EQ(r.trace.events[1].pid, 20455);
    EXPECT_EQ(r.trace.events[2].pid, 77);
    for (const auto& e : r.trace.events) EXPECT_EQ(std::get<Success>(e.retval).value, 0);
}

TEST(StraceParser, SignalsExitsAndGarbageBecomeDiagnostics) {
    auto r = parse_trace("--- SIGCHLD {si_signo=SIGCHLD} ---\n"
                         "close(3) = 0\n"
                         "not strace at all\n"
                         "+++ exited with 0 +++\n");
    ASSERT_EQ(r.trace.events.size(), 1u);
    ASSERT_EQ(r.diagnostics.size(), 3u);
    EXPECT_EQ(r.diagnostics[0].kind, DiagnosticKind::Signal);
    EXPECT_EQ(r.diagnostics[0].line, 1u);
    EXPECT_EQ(r.diagnostics[1].kind, DiagnosticKind::Unparseable);
    EXPECT_EQ(r.diagnostics[2].kind, DiagnosticKind::Exit);
}

TEST(StraceParser, ExitGroupHasNoReturn) {
    auto r = parse_trace("exit_group(0) = ?\n");
    EXPECT_TRUE(std::holds_alternative<NoReturn>(r.trace.events[0].retval));
}

TEST(StraceParser, DanglingAndOrphanLinesAreReported) {
    auto r = parse_trace("[pid 5] read(3,  <unfinished ...>\n"
                         "[pid 6] <... write resumed>) = 1\n"
                         "[pid 6] close(1) = 0\n");
    EXPECT_EQ(r.trace.events.size(), 1u);
    ASSERT_EQ(r.diagnostics.size(), 2u);
    EXPECT_EQ(r.diagnostics[0].kind, DiagnosticKind::DanglingUnfinished);
    EXPECT_EQ(r.diagnostics[0].line, 1u);
    EXPECT_EQ(r.diagnostics[1].kind, DiagnosticKind::OrphanResumed);
    EXPECT_EQ(r.lost_calls(), 1u);
}

TEST(StraceParser, NonTraceInputIsFatal) {
    EXPECT_THROW(parse_trace("hello\nworld\n"), dozer::TraceFormatError);
    EXPECT_NO_THROW(parse_trace(""));
    EXPECT_TRUE(parse_trace("").trace.events.empty());
}

TEST(StraceParser, CorpusIsLargeEnoughAndParses) {
    std::size_t lines = 0;
    for (const auto& f : corpus_files()) {
        std::string text = read_data(f);
        lines += static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
        ParseResult r;
        ASSERT_NO_THROW(r = parse_trace(text)) << f;
        EXPECT_FALSE(r.trace.events.empty()) << f;
        EXPECT_EQ(r.lost_calls(), 0u) << f;
    }
    EXPECT_GE(lines, 200u);
}

TEST(StraceParserProperty, ReassemblyConservationOnCorpus) {
    for (const auto& f : corpus_files()) {
        std::string text = read_data(f);
        auto r = parse_trace(text);
        EXPECT_EQ(r.trace.events.size() + r.lost_calls(), count_start_lines(text)) << f;
    }
}

TEST(StraceParserProperty, ReassemblyConservationOnShuffledInterleavings) {
    // Random per-pid split calls, interleaved, with some resumptions dropped.
    std::mt19937 rng(7);
    for (int round = 0; round < 300; ++round) {
        std::vector<std::string> lines;
        std::size_t starts = 0;
        int pids = 1 + static_cast<int>(rng() % 4);
        std::vector<std::vector<std::string>> per_pid(static_cast<std::size_t>(pids));
        for (int p = 0; p < pids; ++p) {
            int calls = 1 + static_cast<int>(rng() % 5);
            for (int c = 0; c < calls; ++c) {
                std::string pfx = "[pid " + std::to_string(100 + p) + "] ";
                ++starts;
                switch (rng() % 4) {
                    case 0: per_pid[p].push_back(pfx + "close(" + std::to_string(c) + ") = 0"); break;
                    case 1:
                        per_pid[p].push_back(pfx + "read(3, <unfinished ...>");
                        if (rng() % 3) per_pid[p].push_back(pfx + "<... read resumed>\"x\", 1) = 1");
                        break;
                    case 2: per_pid[p].push_back(pfx + "open(\"/a\", O_RDONLY) = -1 ENOENT (No such file or directory)"); break;
                    default: per_pid[p].push_back(pfx + "--- SIGCHLD {si_signo=SIGCHLD} ---"); --starts;
                }
            }
        }
        // merge preserving per-pid order
        std::vector<std::size_t> idx(static_cast<std::size_t>(pids), 0);
        for (;;) {
            std::vector<int> live;
            for (int p = 0; p < pids; ++p) {
                if (idx[p] < per_pid[p].size()) live.push_back(p);
            }
            if (live.empty()) break;
            int p = live[rng() % live.size()];
            lines.push_back(per_pid[p][idx[p]++]);
        }
        std::string text;
        for (const auto& l : lines) text += l + "\n";
        if (starts == 0) continue;
        ParseResult r;
        try {
            r = parse_trace(text);
        } catch (const dozer::TraceFormatError&) {
            // every call dangled: nothing emitted
            EXPECT_EQ(count_start_lines(text), starts);
            continue;
        }
        EXPECT_EQ(count_start_lines(text), starts);
        EXPECT_EQ(r.trace.events.size() + r.lost_calls(), starts) << text;
    }
}

TEST(StraceParserProperty, DeterministicIncludingSeq) {
    for (const auto& f : corpus_files()) {
        std::string text = read_data(f);
        auto a = parse_trace(text);
        auto b = parse_trace(text);
        EXPECT_EQ(a.trace, b.trace) << f;
        for (std::size_t i = 0; i < a.trace.events.size(); ++i) EXPECT_EQ(a.trace.events[i].seq, i);
    }
}

TEST(StraceParserProperty, EscapeRoundTripOnRandomBytes) {
    std::mt19937 rng(11);
    for (int i = 0; i < 2000; ++i) {
        std::string bytes(rng() % 40, '\0');
        for (auto& c : bytes) c = static_cast<char>(rng() % 256);
        std::string quoted = quote_string(bytes);
        auto v = parse_arg_value(quoted);
        ASSERT_TRUE(v.is<StringLit>()) << quoted;
        EXPECT_EQ(v.as<StringLit>().bytes, bytes) << quoted;
        EXPECT_FALSE(v.as<StringLit>().truncated);
    }
}

TEST(StraceParserProperty, EscapeRoundTripInsideACall) {
    std::mt19937 rng(12);
    for (int i = 0; i < 500; ++i) {
        std::string bytes(1 + rng() % 30, '\0');
        for (auto& c : bytes) c = static_cast<char>(rng() % 256);
        auto r = parse_trace("write(1, " + quote_string(bytes) + ", " + std::to_string(bytes.size()) + ") = " + std::to_string(bytes.size()));
        ASSERT_EQ(r.trace.events.size(), 1u);
        EXPECT_EQ(r.trace.events[0].args[1].as<StringLit>().bytes, bytes);
    }
}

TEST(StraceParser, StraceStyleEscapesDecode) {
    auto v = parse_arg_value(R"("\177ELF\2\1\1\3\0\0\t\"q\"\\")");
    std::string expect = std::string("\177ELF\2\1\1\3", 8) + std::string("\0\0", 2) + "\t\"q\"\\";
    EXPECT_EQ(v.as<StringLit>().bytes, expect);
}
