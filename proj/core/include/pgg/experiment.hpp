#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgg/agents.hpp"
#include "pgg/corpus.hpp"
#include "pgg/game.hpp"
#include "pgg/llm.hpp"

namespace pgg {

enum class Condition { Homogeneous, Heterogeneous, Robustness };
std::string_view to_string(Condition condition);
Condition parse_condition(std::string_view text);

struct ScriptedBackend {
  StrategyKind strategy = ConditionalCooperator{};
};
struct LlmBackend {
  EndpointConfig endpoint;
};
using AgentBackend = std::variant<ScriptedBackend, LlmBackend>;

// "scripted:<Strategy>" or "llm".
AgentBackend parse_backend(std::string_view text, const EndpointConfig& endpoint = {});
std::string to_string(const AgentBackend& backend);

// Cell id of the heterogeneous condition.
inline constexpr std::string_view kPoolCell = "pool";

struct ExperimentSpec {
  std::string name = "custom";
  Condition condition = Condition::Homogeneous;
  int num_agents = 4;
  int trials_per_cell = 100;
  int rounds = 5;
  Tokens endowment = 10;
  Rational multiplier{3, 2};
  double temperature = 0.6;
  AgentBackend backend = ScriptedBackend{};
  // Story ids (homogeneous, robustness) or {"pool"} (heterogeneous).
  std::vector<std::string> story_cells;
  std::uint64_t master_seed = 0;
  std::filesystem::path output_path = "results.jsonl";
  int max_parallel_trials = 4;
  RevealMode reveal = RevealMode::Totals;
  bool with_replacement = true;  // heterogeneous draws
  std::filesystem::path corpus_path = "data/corpus";
  std::filesystem::path prompt_file;  // empty: built-in prompt set

  int dummy_count() const { return condition == Condition::Robustness ? 1 : 0; }
  GameConfig game_config() const;

  // Throws std::invalid_argument.
  void validate() const;
};

nlohmann::ordered_json to_json(const ExperimentSpec& spec);

std::vector<std::string> preset_names();
// exp1_1, exp1_2_16, exp1_2_32, exp1_3, exp2. Throws std::invalid_argument
// for anything else.
ExperimentSpec preset(std::string_view name);

// TOML-style key/value spec file. An optional `preset = "..."` key selects
// the starting point; other keys override it. Endpoint settings live under
// an [endpoint] table. Throws std::invalid_argument with a line number.
ExperimentSpec parse_experiment_spec(std::string_view text);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

// Per-trial seed; see derive_seed.
std::uint64_t trial_seed(std::uint64_t master_seed, std::string_view cell, std::uint64_t index);

// Plays one trial of a batch. Story assignment and dummy placement are drawn
// from sub-streams of the trial seed.
TrialRecord run_trial(const ExperimentSpec& spec, const Corpus& corpus, const PromptSet& prompts,
                      const std::string& cell, std::uint64_t index,
                      const std::shared_ptr<ChatClient>& client);

struct RunOptions {
  // Stop handing out work after this many new records were written
  // (simulates an interrupted batch).
  std::optional<std::size_t> stop_after;
  // Called from the writer thread after each appended record.
  std::function<void(const TrialRecord&)> on_record;
};

struct RunSummary {
  std::filesystem::path results_path;
  std::filesystem::path manifest_path;
  std::size_t planned = 0;    // cells x trials
  std::size_t skipped = 0;    // already present before this run
  std::size_t written = 0;    // appended by this run
  std::size_t completed = 0;  // of written
  std::size_t aborted = 0;    // of written
  std::map<std::string, std::size_t> abort_reasons;
};

// I/O failures while writing the batch.
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Appends one JSONL record per (cell, trial) not already in the results file,
// in (cell order, trial) order regardless of parallelism, then writes the
// run manifest next to it (<stem>.manifest.json).
RunSummary run_experiment(const ExperimentSpec& spec, const Corpus& corpus,
                          const RunOptions& options = {});

std::filesystem::path manifest_path_for(const std::filesystem::path& results_path);

}  // namespace pgg
