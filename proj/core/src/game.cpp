#include "pgg/game.hpp"

#include <algorithm>
#include <future>
#include <numeric>
#include <string>

namespace pgg {

void GameConfig::validate() const {
  if (num_agents < 2) throw std::invalid_argument("num_agents must be >= 2");
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (endowment < 1) throw std::invalid_argument("endowment must be >= 1");
  if (multiplier <= 0) throw std::invalid_argument("multiplier must be > 0");
  if (dummy_count < 0 || dummy_count >= num_agents) {
    throw std::invalid_argument("dummy_count must satisfy 0 <= dummy_count < num_agents");
  }
  if (!dummy_seats.empty()) {
    if (static_cast<int>(dummy_seats.size()) != dummy_count) {
      throw std::invalid_argument("dummy_seats must list exactly dummy_count seats");
    }
    std::vector<int> sorted = dummy_seats;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() ||
        sorted.front() < 0 || sorted.back() >= num_agents) {
      throw std::invalid_argument("dummy_seats must be distinct seats in [0, num_agents)");
    }
  }
}

std::vector<int> GameConfig::resolved_dummy_seats() const {
  if (!dummy_seats.empty()) return dummy_seats;
  std::vector<int> seats(static_cast<std::size_t>(dummy_count));
  std::iota(seats.begin(), seats.end(), 0);
  return seats;
}

bool GameConfig::is_dummy(int seat) const {
  if (dummy_seats.empty()) return seat < dummy_count;
  return std::find(dummy_seats.begin(), dummy_seats.end(), seat) != dummy_seats.end();
}

bool GameConfig::dilemma_warning() const { return multiplier >= num_agents; }

bool is_social_dilemma(const GameConfig& config) {
  return config.multiplier > 1 && config.multiplier < config.num_agents;
}

std::vector<Rational> compute_payoffs(std::span<const Tokens> contributions,
                                      const GameConfig& config) {
  if (static_cast<int>(contributions.size()) != config.num_agents) {
    throw std::invalid_argument("expected " + std::to_string(config.num_agents) +
                                " contributions, got " + std::to_string(contributions.size()));
  }
  std::int64_t pool = 0;
  for (Tokens t : contributions) {
    if (t < 0 || t > config.endowment) {
      throw std::invalid_argument("contribution " + std::to_string(t) + " outside [0, " +
                                  std::to_string(config.endowment) + "]");
    }
    pool += t;
  }
  const Rational share = config.multiplier * pool / Rational(config.num_agents);
  std::vector<Rational> payoffs;
  payoffs.reserve(contributions.size());
  for (Tokens t : contributions) payoffs.push_back(Rational(config.endowment - t) + share);
  return payoffs;
}

Game::Game(GameConfig config) : config_(std::move(config)) {
  config_.validate();
  cumulative_.assign(static_cast<std::size_t>(config_.num_agents), Rational(0));
}

Observation Game::observation_for(int seat) const {
  Observation obs;
  obs.round_index = static_cast<int>(history_.size()) + 1;
  obs.total_rounds = config_.rounds;
  obs.endowment = config_.endowment;
  obs.num_agents = config_.num_agents;
  const auto s = static_cast<std::size_t>(seat);
  obs.own_history.reserve(history_.size());
  for (const auto& round : history_) obs.own_history.push_back(round.contributions.at(s));
  if (!history_.empty()) {
    const RoundOutcome& last = history_.back();
    obs.last_group_total = last.pool_total;
    obs.last_own_payoff = last.payoffs.at(s);
    obs.last_contributions = last.contributions;
  }
  return obs;
}

const RoundOutcome& Game::play_round(std::vector<Tokens> decisions) {
  if (finished()) throw std::logic_error("play_round called after the final round");
  if (static_cast<int>(decisions.size()) != config_.num_agents) {
    throw std::invalid_argument("expected one decision per agent");
  }
  for (int seat : config_.resolved_dummy_seats()) decisions[static_cast<std::size_t>(seat)] = 0;

  RoundOutcome outcome;
  outcome.round_index = static_cast<int>(history_.size()) + 1;
  outcome.payoffs = compute_payoffs(decisions, config_);
  outcome.pool_total = std::accumulate(decisions.begin(), decisions.end(), Tokens{0});
  outcome.contributions = std::move(decisions);
  for (std::size_t i = 0; i < cumulative_.size(); ++i) cumulative_[i] += outcome.payoffs[i];
  history_.push_back(std::move(outcome));
  return history_.back();
}

TrialRecord play_game(const GameConfig& config,
                      std::span<const std::unique_ptr<DecisionPolicy>> agents,
                      std::uint64_t seed, const PlayOptions& options) {
  if (static_cast<int>(agents.size()) != config.num_agents) {
    throw std::invalid_argument("play_game: need exactly one policy per agent");
  }
  Game game(config);
  TrialRecord record;
  record.config = config;
  record.config.dummy_seats = config.resolved_dummy_seats();
  record.rng_seed = seed;
  for (const auto& agent : agents) record.agent_specs.push_back(agent->spec());

  std::vector<Rng> streams;
  streams.reserve(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) streams.emplace_back(derive_stream(seed, i));

  const auto seats = agents.size();
  try {
    while (!game.finished()) {
      std::vector<Tokens> decisions(seats, 0);
      if (options.concurrent_decisions) {
        std::vector<std::future<Tokens>> pending;
        pending.reserve(seats);
        for (std::size_t i = 0; i < seats; ++i) {
          pending.push_back(std::async(std::launch::async, [&, i] {
            return agents[i]->decide(game.observation_for(static_cast<int>(i)), streams[i]);
          }));
        }
        // Wait for every seat before rethrowing so no task outlives the round.
        for (auto& f : pending) f.wait();
        for (std::size_t i = 0; i < seats; ++i) decisions[i] = pending[i].get();
      } else {
        for (std::size_t i = 0; i < seats; ++i) {
          decisions[i] = agents[i]->decide(game.observation_for(static_cast<int>(i)), streams[i]);
        }
      }
      game.play_round(std::move(decisions));
    }
  } catch (const AgentFailure& failure) {
    record.status = TrialStatus::Aborted;
    record.abort_reason = failure.what();
  }

  record.rounds = game.history();
  record.cumulative_payoffs = game.cumulative_payoffs();
  for (const auto& agent : agents) record.llm_requests += agent->requests();
  return record;
}

}  // namespace pgg
