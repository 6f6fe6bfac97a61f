#include "pgg/agents.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

namespace pgg {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Tokens clamp_tokens(std::int64_t v, Tokens endowment) {
  return static_cast<Tokens>(std::clamp<std::int64_t>(v, 0, endowment));
}

Tokens conditional(const ConditionalCooperator& cc, const Observation& obs) {
  if (obs.round_index <= 1 || !obs.last_group_total || obs.own_history.empty()) {
    return clamp_tokens(cc.first_move.value_or(obs.endowment), obs.endowment);
  }
  const std::int64_t others = *obs.last_group_total - obs.own_history.back();
  const int peers = std::max(obs.num_agents - 1, 1);
  return clamp_tokens(round_half_even(Rational(others, peers)), obs.endowment);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

// Splits "Name(arg)" into name and argument; arg is empty without parens.
std::pair<std::string_view, std::string_view> split_call(std::string_view text) {
  text = trim(text);
  const auto open = text.find('(');
  if (open == std::string_view::npos) return {text, {}};
  if (text.back() != ')') {
    throw std::invalid_argument("unbalanced parentheses in strategy '" + std::string(text) + "'");
  }
  return {trim(text.substr(0, open)), trim(text.substr(open + 1, text.size() - open - 2))};
}

ConditionalCooperator parse_conditional(std::string_view arg) {
  ConditionalCooperator cc;
  if (arg.empty()) return cc;
  Tokens first = 0;
  auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), first);
  if (ec != std::errc{} || ptr != arg.data() + arg.size() || first < 0) {
    throw std::invalid_argument("ConditionalCooperator expects a non-negative integer first move");
  }
  cc.first_move = first;
  return cc;
}

}  // namespace

Tokens decide(const StrategyKind& strategy, const Observation& obs, Rng& rng) {
  const Tokens t = obs.endowment;
  return std::visit(
      Overloaded{
          [](const AlwaysDefect&) -> Tokens { return 0; },
          [t](const AlwaysCooperate&) -> Tokens { return t; },
          [t](const FixedFraction& f) -> Tokens {
            return clamp_tokens(round_half_even(f.fraction * t), t);
          },
          [t, &rng](const RandomUniform&) -> Tokens {
            return static_cast<Tokens>(uniform_index(rng, static_cast<std::size_t>(t) + 1));
          },
          [&obs](const ConditionalCooperator& cc) -> Tokens { return conditional(cc, obs); },
          [&obs](const EndgameDefector& ed) -> Tokens {
            if (obs.round_index >= obs.total_rounds) return 0;
            return conditional(ed.inner, obs);
          },
      },
      strategy);
}

StrategyKind parse_strategy(std::string_view text) {
  auto [name, arg] = split_call(text);
  if (name == "AlwaysDefect" && arg.empty()) return AlwaysDefect{};
  if (name == "AlwaysCooperate" && arg.empty()) return AlwaysCooperate{};
  if (name == "RandomUniform" && arg.empty()) return RandomUniform{};
  if (name == "FixedFraction") {
    if (arg.empty()) throw std::invalid_argument("FixedFraction needs a fraction, e.g. FixedFraction(0.5)");
    const Rational f = parse_rational(arg);
    if (f < 0 || f > 1) throw std::invalid_argument("FixedFraction fraction must lie in [0, 1]");
    return FixedFraction{f};
  }
  if (name == "ConditionalCooperator") return parse_conditional(arg);
  if (name == "EndgameDefector") {
    if (arg.empty()) return EndgameDefector{};
    auto [inner_name, inner_arg] = split_call(arg);
    if (inner_name != "ConditionalCooperator") {
      throw std::invalid_argument("EndgameDefector wraps a ConditionalCooperator");
    }
    return EndgameDefector{parse_conditional(inner_arg)};
  }
  throw std::invalid_argument("unknown strategy '" + std::string(text) + "'");
}

std::string to_string(const StrategyKind& strategy) {
  const auto cc_text = [](const ConditionalCooperator& cc) {
    std::string s = "ConditionalCooperator";
    if (cc.first_move) s += "(" + std::to_string(*cc.first_move) + ")";
    return s;
  };
  return std::visit(
      Overloaded{
          [](const AlwaysDefect&) -> std::string { return "AlwaysDefect"; },
          [](const AlwaysCooperate&) -> std::string { return "AlwaysCooperate"; },
          [](const FixedFraction& f) -> std::string {
            return "FixedFraction(" + pgg::to_string(f.fraction) + ")";
          },
          [](const RandomUniform&) -> std::string { return "RandomUniform"; },
          [&](const ConditionalCooperator& cc) -> std::string { return cc_text(cc); },
          [&](const EndgameDefector& ed) -> std::string {
            return "EndgameDefector(" + cc_text(ed.inner) + ")";
          },
      },
      strategy);
}

Tokens ScriptedAgent::decide(const Observation& obs, Rng& rng) {
  return pgg::decide(strategy_, obs, rng);
}

}  // namespace pgg
