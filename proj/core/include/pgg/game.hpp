#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgg/random.hpp"
#include "pgg/rational.hpp"

namespace pgg {

using Tokens = int;

// Rules of one repeated public goods game.
struct GameConfig {
  int num_agents = 4;
  int rounds = 5;
  Tokens endowment = 10;
  Rational multiplier{3, 2};
  int dummy_count = 0;
  // Seats of the always-zero agents. Empty means the lowest dummy_count seats.
  std::vector<int> dummy_seats;

  // Throws std::invalid_argument when an invariant does not hold.
  void validate() const;

  std::vector<int> resolved_dummy_seats() const;
  bool is_dummy(int seat) const;

  // m >= N is legal but contributing is then individually rational.
  bool dilemma_warning() const;

  bool operator==(const GameConfig&) const = default;
};

// True iff 1 < m < N: full contribution is collectively optimal while each
// agent's own contribution lowers its own payoff.
bool is_social_dilemma(const GameConfig& config);

// payoff_i = T - t_i + m * sum(t) / N, exact.
// Throws std::invalid_argument on a length mismatch or a contribution
// outside [0, T]; both are caller bugs.
std::vector<Rational> compute_payoffs(std::span<const Tokens> contributions,
                                      const GameConfig& config);

struct RoundOutcome {
  int round_index = 0;  // 1-based
  std::vector<Tokens> contributions;
  Tokens pool_total = 0;
  std::vector<Rational> payoffs;

  bool operator==(const RoundOutcome&) const = default;
};

// What a seat knows when it has to decide. Optional fields are empty in
// round 1.
struct Observation {
  int round_index = 1;
  int total_rounds = 0;
  Tokens endowment = 0;
  int num_agents = 0;
  std::optional<Tokens> last_group_total;
  std::optional<Rational> last_own_payoff;
  // Previous round's per-seat contributions. Policies that follow the
  // totals-only information model ignore it.
  std::optional<std::vector<Tokens>> last_contributions;
  std::vector<Tokens> own_history;
};

// Raised by a policy that cannot produce a decision (unreachable endpoint,
// unparsable model output). Aborts the trial, not the batch.
class AgentFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One seat's decision rule. Implementations own their state; the engine
// calls decide() once per round.
class DecisionPolicy {
 public:
  virtual ~DecisionPolicy() = default;
  virtual Tokens decide(const Observation& obs, Rng& rng) = 0;
  // Identifier written to the trial log, e.g. "scripted:AlwaysDefect".
  virtual std::string spec() const = 0;
  // Completion requests issued so far (LLM-backed policies only).
  virtual std::uint64_t requests() const { return 0; }
};

enum class TrialStatus { Completed, Aborted };

struct TrialRecord {
  // Batch bookkeeping; empty for games played outside a runner.
  std::string cell;
  std::uint64_t trial_index = 0;
  std::string condition;

  GameConfig config;
  std::vector<std::string> agent_specs;
  std::vector<std::string> story_assignment;
  std::uint64_t rng_seed = 0;
  std::vector<RoundOutcome> rounds;
  std::vector<Rational> cumulative_payoffs;
  TrialStatus status = TrialStatus::Completed;
  std::string abort_reason;
  std::uint64_t llm_requests = 0;

  bool completed() const { return status == TrialStatus::Completed; }
  bool operator==(const TrialRecord&) const = default;
};

// Round-by-round state of a single game. Single writer.
class Game {
 public:
  explicit Game(GameConfig config);

  const GameConfig& config() const { return config_; }
  const std::vector<RoundOutcome>& history() const { return history_; }
  const std::vector<Rational>& cumulative_payoffs() const { return cumulative_; }
  bool finished() const { return static_cast<int>(history_.size()) >= config_.rounds; }

  Observation observation_for(int seat) const;

  // Dummy seats are forced to 0 before validation. Any other value outside
  // [0, T] throws std::invalid_argument.
  const RoundOutcome& play_round(std::vector<Tokens> decisions);

 private:
  GameConfig config_;
  std::vector<RoundOutcome> history_;
  std::vector<Rational> cumulative_;
};

struct PlayOptions {
  // Query all seats of a round in parallel; results are joined before the
  // payoff step.
  bool concurrent_decisions = false;
};

// Plays all rounds. Seat i draws from its own stream derive_stream(seed, i),
// so with scripted policies the record is a pure function of the inputs.
// An AgentFailure yields an aborted record holding the rounds played so far.
TrialRecord play_game(const GameConfig& config,
                      std::span<const std::unique_ptr<DecisionPolicy>> agents,
                      std::uint64_t seed, const PlayOptions& options = {});

}  // namespace pgg
