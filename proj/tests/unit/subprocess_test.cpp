// SPDX-License-Identifier: Apache-2.0
#include "testgenie/subprocess.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace testgenie;
namespace tt = testgenie::testing;

namespace {

ProcessSpec sh(const std::string& script, std::map<std::string, std::string> env = {{"PATH", "/usr/bin:/bin"}}) {
    ProcessSpec s;
    s.argv = {"sh", "-c", script};
    s.cwd = std::filesystem::temp_directory_path();
    s.env = std::move(env);
    s.timeout = std::chrono::milliseconds{10000};
    return s;
}

} // namespace

TEST(Process, CapturesStreamsAndExitCode) {
    const auto r = run_process(sh("echo out; echo err >&2; exit 3"));
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_EQ(r.out, "out\n");
    EXPECT_EQ(r.err, "err\n");
    EXPECT_FALSE(r.timed_out);
    EXPECT_GE(r.elapsed_seconds, 0.0);
}

TEST(Process, LargeOutputDoesNotDeadlock) {
    const auto r = run_process(sh("head -c 1000000 /dev/zero | tr '\\0' x; head -c 300000 /dev/zero >&2"));
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_EQ(r.out.size(), 1000000U);
    EXPECT_EQ(r.err.size(), 300000U);
}

TEST(Process, EnvironmentIsExactlyTheSpec) {
    ::setenv("TESTGENIE_SHOULD_NOT_LEAK", "1", 1);
    const auto r = run_process(sh("env", {{"PATH", "/usr/bin:/bin"}, {"ONLY_ME", "yes"}}));
    ::unsetenv("TESTGENIE_SHOULD_NOT_LEAK");
    EXPECT_NE(r.out.find("ONLY_ME=yes"), std::string::npos);
    EXPECT_EQ(r.out.find("TESTGENIE_SHOULD_NOT_LEAK"), std::string::npos);
}

TEST(Process, WorkingDirectory) {
    tt::TempDir dir;
    auto s = sh("pwd");
    s.cwd = dir.path();
    const auto r = run_process(s);
    EXPECT_EQ(std::filesystem::canonical(r.out.substr(0, r.out.size() - 1)), std::filesystem::canonical(dir.path()));
}

TEST(Process, TimeoutKillsGroup) {
    tt::TempDir dir;
    auto s = sh("(sleep 5; touch " + (dir / "late").string() + ") & sleep 30");
    s.timeout = std::chrono::milliseconds{300};
    const auto r = run_process(s);
    EXPECT_TRUE(r.timed_out);
    EXPECT_LT(r.elapsed_seconds, 5.0);
    EXPECT_NE(r.term_signal, 0);
}

TEST(Process, Signals) {
    const auto r = run_process(sh("kill -TERM $$"));
    EXPECT_EQ(r.term_signal, 15);
}

TEST(Process, MissingProgram) {
    ProcessSpec s;
    s.argv = {"definitely-not-a-real-program-xyz"};
    s.cwd = std::filesystem::temp_directory_path();
    s.env = {{"PATH", "/usr/bin:/bin"}};
    EXPECT_THROW(run_process(s), SpawnError);
}

TEST(Process, BadWorkingDirectory) {
    auto s = sh("true");
    s.cwd = "/nonexistent/dir";
    EXPECT_THROW(run_process(s), SpawnError);
}

TEST(Process, NotExecutable) {
    tt::TempDir dir;
    tt::spit(dir / "plain.sh", "echo hi\n");
    ProcessSpec s;
    s.argv = {(dir / "plain.sh").string()};
    s.cwd = dir.path();
    EXPECT_THROW(run_process(s), SpawnError);
}

TEST(Process, EmptyArgv) {
    ProcessSpec s;
    EXPECT_THROW(run_process(s), Error);
}
