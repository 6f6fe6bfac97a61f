#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "pgg/game.hpp"

namespace pgg {

struct AlwaysDefect {
  bool operator==(const AlwaysDefect&) const = default;
};
struct AlwaysCooperate {
  bool operator==(const AlwaysCooperate&) const = default;
};
// Contributes round(fraction * T) every round; fraction in [0, 1].
struct FixedFraction {
  Rational fraction{1, 2};
  bool operator==(const FixedFraction&) const = default;
};
struct RandomUniform {
  bool operator==(const RandomUniform&) const = default;
};
// Matches the mean contribution of the others in the previous round,
// estimated from the group total minus its own contribution.
struct ConditionalCooperator {
  std::optional<Tokens> first_move;  // empty: open with the full endowment
  bool operator==(const ConditionalCooperator&) const = default;
};
// ConditionalCooperator that contributes nothing in the last round.
struct EndgameDefector {
  ConditionalCooperator inner;
  bool operator==(const EndgameDefector&) const = default;
};

using StrategyKind = std::variant<AlwaysDefect, AlwaysCooperate, FixedFraction, RandomUniform,
                                  ConditionalCooperator, EndgameDefector>;

// Result is always in [0, obs.endowment]. Ties round half to even.
Tokens decide(const StrategyKind& strategy, const Observation& obs, Rng& rng);

// Textual form used in config files and trial logs:
//   AlwaysDefect | AlwaysCooperate | FixedFraction(0.5) | RandomUniform |
//   ConditionalCooperator | ConditionalCooperator(7) |
//   EndgameDefector | EndgameDefector(ConditionalCooperator(7))
// Throws std::invalid_argument on unknown names or bad parameters.
StrategyKind parse_strategy(std::string_view text);
std::string to_string(const StrategyKind& strategy);

class ScriptedAgent final : public DecisionPolicy {
 public:
  explicit ScriptedAgent(StrategyKind strategy) : strategy_(std::move(strategy)) {}

  Tokens decide(const Observation& obs, Rng& rng) override;
  std::string spec() const override { return "scripted:" + to_string(strategy_); }

  const StrategyKind& strategy() const { return strategy_; }

 private:
  StrategyKind strategy_;
};

// The always-zero free rider occupying dummy seats.
class DummyAgent final : public DecisionPolicy {
 public:
  Tokens decide(const Observation&, Rng&) override { return 0; }
  std::string spec() const override { return "dummy"; }
};

}  // namespace pgg
