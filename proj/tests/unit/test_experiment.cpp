#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <set>

#include "pgg/analysis.hpp"
#include "pgg/experiment.hpp"
#include "pgg/mock_server.hpp"
#include "pgg/records.hpp"
#include "support.hpp"

using testing_support::slurp;
using testing_support::spit;
using testing_support::TempDir;

namespace {

const pgg::Corpus& corpus() {
  static const pgg::Corpus c = pgg::Corpus::load(testing_support::corpus_dir());
  return c;
}

pgg::ExperimentSpec scripted_spec(const std::string& preset, int trials, const std::filesystem::path& out,
                                  const std::string& strategy = "ConditionalCooperator(10)") {
  auto spec = pgg::preset(preset);
  spec.trials_per_cell = trials;
  spec.backend = pgg::ScriptedBackend{pgg::parse_strategy(strategy)};
  spec.output_path = out;
  spec.master_seed = 17;
  return spec;
}

}  // namespace

TEST(Presets, Parameters) {
  for (const auto& name : pgg::preset_names()) {
    const auto s = pgg::preset(name);
    EXPECT_EQ(s.rounds, 5);
    EXPECT_EQ(s.endowment, 10);
    EXPECT_EQ(s.multiplier, pgg::Rational(3, 2));
    EXPECT_DOUBLE_EQ(s.temperature, 0.6);
    EXPECT_TRUE(std::holds_alternative<pgg::LlmBackend>(s.backend));
    EXPECT_NO_THROW(s.validate());
  }
  const auto e11 = pgg::preset("exp1_1");
  EXPECT_EQ(e11.num_agents, 4);
  EXPECT_EQ(e11.trials_per_cell, 100);
  ASSERT_EQ(e11.story_cells.size(), 12u);
  EXPECT_EQ(e11.story_cells.front(), "noinstruct");
  EXPECT_EQ(e11.dummy_count(), 0);
  EXPECT_EQ(pgg::preset("exp1_2_16").num_agents, 16);
  EXPECT_EQ(pgg::preset("exp1_2_32").num_agents, 32);
  EXPECT_EQ(pgg::preset("exp1_3").dummy_count(), 1);
  EXPECT_EQ(pgg::preset("exp1_3").game_config().dummy_count, 1);
  const auto e2 = pgg::preset("exp2");
  EXPECT_EQ(e2.condition, pgg::Condition::Heterogeneous);
  EXPECT_EQ(e2.trials_per_cell, 400);
  EXPECT_EQ(e2.story_cells, std::vector<std::string>{"pool"});
  EXPECT_THROW(pgg::preset("exp3"), std::invalid_argument);
}

TEST(Spec, Validation) {
  auto s = pgg::preset("exp1_1");
  s.trials_per_cell = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = pgg::preset("exp2");
  s.story_cells = {"Soup"};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = pgg::preset("exp1_1");
  s.story_cells = {"pool"};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Spec, BackendText) {
  EXPECT_EQ(pgg::to_string(pgg::parse_backend("scripted:AlwaysDefect")), "scripted:AlwaysDefect");
  EXPECT_EQ(pgg::to_string(pgg::parse_backend("llm")), "llm");
  EXPECT_THROW(pgg::parse_backend("gpt"), std::invalid_argument);
  EXPECT_THROW(pgg::parse_backend("scripted:Nice"), std::invalid_argument);
}

TEST(SpecFile, ParsesEveryKey) {
  const auto s = pgg::parse_experiment_spec(R"(# desk run
preset = "exp1_3"
name = "robust-mini"
trials_per_cell = 3
master_seed = 99
story_cells = ["Soup", "Turnip"]   # two cells
backend = "llm"
temperature = 0.25
reveal = "full"
output = "out/robust.jsonl"
max_parallel_trials = 2

[endpoint]
base_url = "http://localhost:9000"
model = "tiny"
timeout_ms = 5000
max_parse_retries = 1
max_transport_retries = 4
backoff_ms = 10
auth_token_env = "MY_TOKEN"
max_in_flight = 3
)");
  EXPECT_EQ(s.name, "robust-mini");
  EXPECT_EQ(s.condition, pgg::Condition::Robustness);
  EXPECT_EQ(s.trials_per_cell, 3);
  EXPECT_EQ(s.master_seed, 99u);
  EXPECT_EQ(s.story_cells, (std::vector<std::string>{"Soup", "Turnip"}));
  EXPECT_DOUBLE_EQ(s.temperature, 0.25);
  EXPECT_EQ(s.reveal, pgg::RevealMode::Full);
  EXPECT_EQ(s.output_path, std::filesystem::path("out/robust.jsonl"));
  EXPECT_EQ(s.max_parallel_trials, 2);
  const auto& ep = std::get<pgg::LlmBackend>(s.backend).endpoint;
  EXPECT_EQ(ep.base_url, "http://localhost:9000");
  EXPECT_EQ(ep.model_id, "tiny");
  EXPECT_EQ(ep.request_timeout, std::chrono::milliseconds(5000));
  EXPECT_EQ(ep.max_parse_retries, 1);
  EXPECT_EQ(ep.max_transport_retries, 4);
  EXPECT_EQ(ep.backoff_initial, std::chrono::milliseconds(10));
  EXPECT_EQ(ep.auth_token_env, "MY_TOKEN");
  EXPECT_EQ(ep.max_in_flight, 3);
}

TEST(SpecFile, ErrorsNameTheLine) {
  const auto expect_line = [](const std::string& text, const std::string& line) {
    try {
      pgg::parse_experiment_spec(text);
      FAIL() << text;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find("spec line " + line), std::string::npos) << e.what();
    }
  };
  expect_line("preset = \"exp1_1\"\ncolour = \"red\"\n", "2");
  expect_line("preset = \"exp1_1\"\n\ntrials_per_cell = many\n", "3");
  expect_line("name = \"unterminated\n", "1");
  expect_line("[endpoint]\nurl = \"x\"\n", "2");
  expect_line("[server]\n", "1");
}

TEST(SpecFile, ManifestEchoNeverHoldsToken) {
  ::setenv("PGG_SECRET_FOR_TEST", "sk-very-secret", 1);
  auto s = pgg::preset("exp1_1");
  std::get<pgg::LlmBackend>(s.backend).endpoint.auth_token_env = "PGG_SECRET_FOR_TEST";
  const auto dumped = pgg::to_json(s).dump();
  EXPECT_EQ(dumped.find("sk-very-secret"), std::string::npos);
  EXPECT_NE(dumped.find("PGG_SECRET_FOR_TEST"), std::string::npos);
  ::unsetenv("PGG_SECRET_FOR_TEST");
}

TEST(RunTrial, SeedIsDerived) {
  EXPECT_EQ(pgg::trial_seed(0, "noinstruct", 0), pgg::derive_seed(0, "noinstruct", 0));
  const auto spec = scripted_spec("exp1_1", 1, "unused.jsonl");
  const auto rec = pgg::run_trial(spec, corpus(), pgg::PromptSet::builtin(), "Soup", 4, nullptr);
  EXPECT_EQ(rec.rng_seed, pgg::derive_seed(17, "Soup", 4));
  EXPECT_EQ(rec.cell, "Soup");
  EXPECT_EQ(rec.trial_index, 4u);
  EXPECT_EQ(rec.story_assignment, std::vector<std::string>(4, "Soup"));
}

TEST(RunTrial, RobustnessSeatsOneDummyAtShuffledPositions) {
  const auto spec = scripted_spec("exp1_3", 1, "unused.jsonl", "AlwaysCooperate");
  std::set<int> positions;
  for (std::uint64_t i = 0; i < 40; ++i) {
    const auto rec = pgg::run_trial(spec, corpus(), pgg::PromptSet::builtin(), "Turnip", i, nullptr);
    ASSERT_EQ(rec.config.dummy_seats.size(), 1u);
    const int d = rec.config.dummy_seats[0];
    positions.insert(d);
    EXPECT_EQ(rec.agent_specs[d], "dummy");
    for (const auto& round : rec.rounds) EXPECT_EQ(round.contributions[d], 0);
    EXPECT_EQ(pgg::collaboration_score(rec), pgg::Rational(1));
  }
  EXPECT_EQ(positions.size(), 4u);
}

TEST(RunTrial, HeterogeneousDrawsFromPool) {
  const auto spec = scripted_spec("exp2", 1, "unused.jsonl");
  std::set<std::string> seen;
  for (std::uint64_t i = 0; i < 60; ++i) {
    const auto rec = pgg::run_trial(spec, corpus(), pgg::PromptSet::builtin(), "pool", i, nullptr);
    EXPECT_EQ(rec.cell, "pool");
    ASSERT_EQ(rec.story_assignment.size(), 4u);
    for (const auto& id : rec.story_assignment) {
      EXPECT_TRUE(corpus().contains(id));
      seen.insert(id);
    }
  }
  EXPECT_EQ(seen.size(), 12u);
}

TEST(RunExperiment, AllCooperateScaledPreset) {
  TempDir dir("run");
  const auto spec = scripted_spec("exp1_1", 2, dir / "r.jsonl", "AlwaysCooperate");
  const auto summary = pgg::run_experiment(spec, corpus());
  EXPECT_EQ(summary.planned, 24u);
  EXPECT_EQ(summary.written, 24u);
  EXPECT_EQ(summary.completed, 24u);
  const auto recs = pgg::read_results(spec.output_path);
  ASSERT_EQ(recs.size(), 24u);
  for (const auto& r : recs) EXPECT_EQ(pgg::collaboration_score(r), pgg::Rational(1));

  const auto manifest = nlohmann::json::parse(slurp(summary.manifest_path));
  EXPECT_EQ(manifest["prompt_version"], "rules-v1");
  EXPECT_EQ(manifest["corpus_size"], 12);
  EXPECT_TRUE(manifest["corpus_hash"].is_string());
  EXPECT_EQ(manifest["spec"]["master_seed"], 17);
  EXPECT_EQ(manifest["this_run"]["aborted"], 0);
}

TEST(RunExperiment, ParallelismNeverChangesContent) {
  TempDir dir("run");
  auto a = scripted_spec("exp1_3", 4, dir / "a.jsonl", "RandomUniform");
  auto b = a;
  b.output_path = dir / "b.jsonl";
  a.max_parallel_trials = 1;
  b.max_parallel_trials = 7;
  pgg::run_experiment(a, corpus());
  pgg::run_experiment(b, corpus());
  EXPECT_EQ(slurp(a.output_path), slurp(b.output_path));
}

TEST(RunExperiment, InterruptedRunResumesExactlyOnce) {
  TempDir dir("run");
  auto full = scripted_spec("exp1_1", 3, dir / "full.jsonl", "RandomUniform");
  pgg::run_experiment(full, corpus());

  auto part = full;
  part.output_path = dir / "part.jsonl";
  const auto first = pgg::run_experiment(part, corpus(), {.stop_after = 10, .on_record = nullptr});
  EXPECT_EQ(first.written, 10u);
  EXPECT_EQ(pgg::read_results(part.output_path).size(), 10u);

  const auto second = pgg::run_experiment(part, corpus());
  EXPECT_EQ(second.skipped, 10u);
  EXPECT_EQ(second.written, 26u);
  EXPECT_EQ(slurp(part.output_path), slurp(full.output_path));

  const auto third = pgg::run_experiment(part, corpus());
  EXPECT_EQ(third.written, 0u);
  EXPECT_EQ(third.skipped, 36u);
}

TEST(RunExperiment, TornTailIsRepairedOnResume) {
  TempDir dir("run");
  auto spec = scripted_spec("exp1_1", 2, dir / "r.jsonl");
  pgg::run_experiment(spec, corpus(), {.stop_after = 5, .on_record = nullptr});
  {
    std::ofstream out(spec.output_path, std::ios::app);
    out << R"({"schema_version":1,"cell":"nsPlumber","tri)";
  }
  pgg::run_experiment(spec, corpus());
  const auto recs = pgg::read_results(spec.output_path);
  std::set<pgg::TrialKey> keys;
  for (const auto& r : recs) EXPECT_TRUE(keys.emplace(r.cell, r.trial_index).second);
  EXPECT_EQ(keys.size(), 24u);
}

TEST(RunExperiment, UnknownCellIsRejected) {
  TempDir dir("run");
  auto spec = scripted_spec("exp1_1", 1, dir / "r.jsonl");
  spec.story_cells = {"Soup", "Cinderella"};
  EXPECT_THROW(pgg::run_experiment(spec, corpus()), pgg::CorpusError);
}

TEST(RunExperiment, MockEndpointHeterogeneous) {
  pgg::MockServer server(pgg::Playlist::from_lines({"I contribute 6 tokens."}));
  server.start();
  TempDir dir("run");
  auto spec = pgg::preset("exp2");
  spec.trials_per_cell = 3;
  spec.output_path = dir / "r.jsonl";
  auto& ep = std::get<pgg::LlmBackend>(spec.backend).endpoint;
  ep.base_url = server.base_url();
  ep.auth_token_env = "PGG_TEST_TOKEN_UNSET";
  const auto summary = pgg::run_experiment(spec, corpus());
  EXPECT_EQ(summary.completed, 3u);
  EXPECT_EQ(server.request_count(), 3u * 20u);
  for (const auto& r : pgg::read_results(spec.output_path)) {
    EXPECT_EQ(r.llm_requests, 20u);
    EXPECT_EQ(r.rounds[2].contributions, std::vector<pgg::Tokens>(4, 6));
    EXPECT_EQ(r.agent_specs[0], "llm:meta-llama-3.1-70b-instruct-fp8");
  }
}

TEST(RunExperiment, EndpointFailuresAbortTrialsNotTheBatch) {
  pgg::MockServer server(pgg::Playlist::from_lines({"!status 400"}));
  server.start();
  TempDir dir("run");
  auto spec = pgg::preset("exp1_1");
  spec.trials_per_cell = 1;
  spec.story_cells = {"Soup", "Spoons"};
  spec.output_path = dir / "r.jsonl";
  auto& ep = std::get<pgg::LlmBackend>(spec.backend).endpoint;
  ep.base_url = server.base_url();
  ep.auth_token_env = "PGG_TEST_TOKEN_UNSET";
  const auto summary = pgg::run_experiment(spec, corpus());
  EXPECT_EQ(summary.aborted, 2u);
  EXPECT_EQ(summary.completed, 0u);
  const auto recs = pgg::read_results(spec.output_path);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].status, pgg::TrialStatus::Aborted);
  EXPECT_EQ(recs[0].rounds.size(), 0u);
  EXPECT_NE(recs[0].abort_reason.find("400"), std::string::npos);
  // aborted trials count as present on resume
  EXPECT_EQ(pgg::run_experiment(spec, corpus()).skipped, 2u);
}
