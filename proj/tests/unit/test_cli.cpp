#include <gtest/gtest.h>

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <set>
#include <spawn.h>
#include <thread>

#include "pgg/mock_server.hpp"
#include "pgg/records.hpp"
#include "support.hpp"

using testing_support::cli;
using testing_support::quote;
using testing_support::run_command;
using testing_support::slurp;
using testing_support::spit;
using testing_support::TempDir;

extern char** environ;

namespace {

std::string corpus_flag() { return " --corpus " + quote(testing_support::corpus_dir()); }

std::size_t line_count(const std::filesystem::path& p) {
  const auto t = slurp(p);
  return static_cast<std::size_t>(std::count(t.begin(), t.end(), '\n'));
}

}  // namespace

class HelpSnapshot : public ::testing::TestWithParam<std::string> {};

TEST_P(HelpSnapshot, MatchesGolden) {
  const std::string sub = GetParam();
  const auto r = run_command(cli() + (sub.empty() ? "" : " " + sub) + " --help", false);
  EXPECT_EQ(r.exit_code, 0);
  const auto golden = std::filesystem::path(PGG_GOLDEN_DIR) / ("help_" + (sub.empty() ? "pgg" : sub) + ".txt");
  if (std::getenv("PGG_UPDATE_GOLDEN")) spit(golden, r.output);
  EXPECT_EQ(r.output, slurp(golden)) << "regenerate with PGG_UPDATE_GOLDEN=1";
}

INSTANTIATE_TEST_SUITE_P(Cli, HelpSnapshot,
                         ::testing::Values("", "validate-corpus", "run", "analyze", "export-plots", "mock-serve"),
                         [](const auto& info) {
                           std::string n = info.param.empty() ? "top" : info.param;
                           std::replace(n.begin(), n.end(), '-', '_');
                           return n;
                         });

TEST(Cli, HelpDocumentsEveryRunFlag) {
  const auto r = run_command(cli() + " run --help", false);
  for (const char* flag : {"--preset", "--trials", "--seed", "--backend", "--endpoint", "--model", "--out", "--corpus",
                           "--parallel", "--temperature", "--reveal"}) {
    EXPECT_NE(r.output.find(flag), std::string::npos) << flag;
  }
}

TEST(Cli, ValidateCorpus) {
  EXPECT_EQ(run_command(cli() + " validate-corpus" + corpus_flag()).exit_code, 0);
  TempDir dir("cli");
  const auto r = run_command(cli() + " validate-corpus --corpus " + quote(dir.path()));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("manifest"), std::string::npos);
}

TEST(Cli, RunScaledPreset) {
  TempDir dir("cli");
  const auto out = dir / "r.jsonl";
  const auto r = run_command(cli() + " run --preset exp1_1 --backend scripted:AlwaysCooperate --trials 2 --seed 7 --out " +
                                 quote(out) + corpus_flag(),
                             false);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.output, "");  // logs go to stderr only
  EXPECT_EQ(pgg::read_results(out).size(), 24u);
  EXPECT_TRUE(std::filesystem::exists(dir / "r.manifest.json"));
}

TEST(Cli, ConfigErrorsExitOne) {
  TempDir dir("cli");
  const auto out = " --out " + quote(dir / "r.jsonl");
  EXPECT_EQ(run_command(cli() + " run --preset exp9" + out + corpus_flag()).exit_code, 1);
  EXPECT_EQ(run_command(cli() + " run" + out + corpus_flag()).exit_code, 1);
  EXPECT_EQ(run_command(cli() + " run --preset exp1_1 --backend scripted:Nice" + out + corpus_flag()).exit_code, 1);
  EXPECT_EQ(run_command(cli() + " run --preset exp1_1 --trials 0" + out + corpus_flag()).exit_code, 1);
  EXPECT_EQ(run_command(cli() + " run --preset exp1_1 --corpus " + quote(dir / "none") + out).exit_code, 1);
  spit(dir / "spec.toml", "preset = \"exp1_1\"\nflavour = 3\n");
  const auto r = run_command(cli() + " run " + quote(dir / "spec.toml") + out + corpus_flag());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("spec line 2"), std::string::npos);
  EXPECT_EQ(run_command(cli() + " run " + quote(dir / "spec.toml") + " --preset exp1_1" + out).exit_code, 1);
  EXPECT_EQ(run_command(cli() + " frobnicate").exit_code, 1);
  EXPECT_EQ(run_command(cli()).exit_code, 1);
}

TEST(Cli, SpecFileRun) {
  TempDir dir("cli");
  spit(dir / "spec.toml",
       "preset = \"exp1_3\"\ntrials_per_cell = 1\nbackend = \"scripted:AlwaysCooperate\"\nstory_cells = [\"Soup\"]\n"
       "output = \"" + (dir / "robust.jsonl").string() + "\"\ncorpus = \"" + testing_support::corpus_dir().string() + "\"\n");
  EXPECT_EQ(run_command(cli() + " run " + quote(dir / "spec.toml")).exit_code, 0);
  const auto recs = pgg::read_results(dir / "robust.jsonl");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].condition, "robustness");
}

TEST(Cli, IoFailureExitsTwo) {
  const auto r = run_command(cli() + " run --preset exp1_1 --backend scripted:AlwaysDefect --trials 1 --out /proc/pgg-no/r.jsonl" +
                             corpus_flag());
  EXPECT_EQ(r.exit_code, 2);
}

TEST(Cli, AllTrialsAbortedExitsTwo) {
  pgg::MockServer server(pgg::Playlist::from_lines({"!status 403"}));
  server.start();
  TempDir dir("cli");
  const auto r = run_command(cli() + " run --preset exp2 --trials 2 --endpoint " + server.base_url() + " --out " +
                             quote(dir / "r.jsonl") + corpus_flag());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("403"), std::string::npos);
  EXPECT_EQ(line_count(dir / "r.jsonl"), 2u);
}

TEST(Cli, AnalyzeAndExport) {
  TempDir dir("cli");
  const auto out = dir / "r.jsonl";
  ASSERT_EQ(run_command(cli() + " run --preset exp1_1 --backend scripted:RandomUniform --trials 3 --out " + quote(out) +
                        corpus_flag())
                .exit_code,
            0);
  EXPECT_EQ(run_command(cli() + " analyze " + quote(out) + " --n-boot 100 --out-dir " + quote(dir / "an")).exit_code, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "an" / "summary.txt"));
  EXPECT_EQ(run_command(cli() + " export-plots " + quote(out) + " --kind violin --out " + quote(dir / "v.csv")).exit_code, 0);
  EXPECT_EQ(line_count(dir / "v.csv"), 37u);
  EXPECT_EQ(run_command(cli() + " export-plots " + quote(out) + " --kind radar --out " + quote(dir / "x.csv")).exit_code, 1);
}

TEST(Cli, AnalyzeTruncatedFileNamesLine) {
  TempDir dir("cli");
  const auto out = dir / "r.jsonl";
  ASSERT_EQ(run_command(cli() + " run --preset exp1_1 --backend scripted:RandomUniform --trials 1 --out " + quote(out) +
                        corpus_flag())
                .exit_code,
            0);
  auto text = slurp(out);
  // chop the middle of the fourth record
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) pos = text.find('\n', pos) + 1;
  text.erase(pos + 50, text.find('\n', pos) - pos - 50);
  spit(out, text);
  const auto r = run_command(cli() + " analyze " + quote(out) + " --out-dir " + quote(dir / "an"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("line 4"), std::string::npos) << r.output;
}

TEST(Cli, MockServeSubcommand) {
  TempDir dir("cli");
  spit(dir / "playlist.txt", "!malformed\n5\n");
  // find a free port
  int port = 0;
  {
    pgg::MockServer probe(pgg::Playlist::from_lines({"1"}));
    probe.start();
    port = probe.port();
  }
  const std::string exe = PGG_CLI_PATH;
  const std::string playlist = (dir / "playlist.txt").string();
  const std::string port_text = std::to_string(port);
  std::vector<char*> argv{const_cast<char*>(exe.c_str()), const_cast<char*>("mock-serve"),
                          const_cast<char*>("--playlist"), const_cast<char*>(playlist.c_str()),
                          const_cast<char*>("--port"), const_cast<char*>(port_text.c_str()), nullptr};
  pid_t pid = 0;
  ASSERT_EQ(posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ), 0);
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  const auto r = run_command(cli() + " run --preset exp1_1 --trials 1 --endpoint http://127.0.0.1:" + port_text +
                             " --out " + quote(dir / "r.jsonl") + corpus_flag());
  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  EXPECT_EQ(pgg::read_results(dir / "r.jsonl").size(), 12u);
}

TEST(Cli, SigkillMidRunThenResume) {
  TempDir dir("cli");
  const auto partial = dir / "partial.jsonl";
  const auto reference = dir / "reference.jsonl";
  const std::string exe = PGG_CLI_PATH;
  const std::string out = partial.string();
  const std::string corpus = testing_support::corpus_dir().string();
  std::vector<std::string> args{exe, "run", "--preset", "exp1_2_32", "--backend", "scripted:RandomUniform",
                                "--trials", "300", "--seed", "3", "--parallel", "2", "--corpus", corpus, "--out", out};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = 0;
  ASSERT_EQ(posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ), 0);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  while (std::chrono::steady_clock::now() < deadline) {
    std::error_code ec;
    if (std::filesystem::file_size(partial, ec) > 40'000 && !ec) break;
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
  kill(pid, SIGKILL);
  int status = 0;
  waitpid(pid, &status, 0);
  ASSERT_TRUE(WIFSIGNALED(status)) << "run finished before it could be killed";
  const std::size_t before = line_count(partial);
  EXPECT_LT(before, 3600u);

  const auto resume = run_command(cli() + " run --preset exp1_2_32 --backend scripted:RandomUniform --trials 300 --seed 3 "
                                          "--parallel 2 --out " + quote(partial) + corpus_flag());
  ASSERT_EQ(resume.exit_code, 0) << resume.output;
  ASSERT_EQ(run_command(cli() + " run --preset exp1_2_32 --backend scripted:RandomUniform --trials 300 --seed 3 --out " +
                        quote(reference) + corpus_flag())
                .exit_code,
            0);

  std::set<pgg::TrialKey> keys;
  for (const auto& r : pgg::read_results(partial)) EXPECT_TRUE(keys.emplace(r.cell, r.trial_index).second);
  EXPECT_EQ(keys.size(), 3600u);
  EXPECT_EQ(slurp(partial), slurp(reference));
}
