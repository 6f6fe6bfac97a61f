#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pgg/llm.hpp"

namespace pgg {
namespace detail {
extern const std::string_view kBuiltinPromptText;
}  // namespace detail

namespace {

void replace_all(std::string& text, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
}

std::string rstrip(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

std::string fill_game(std::string text, const Observation& obs) {
  replace_all(text, "{R}", std::to_string(obs.total_rounds));
  replace_all(text, "{T}", std::to_string(obs.endowment));
  replace_all(text, "{N}", std::to_string(obs.num_agents));
  replace_all(text, "{round}", std::to_string(obs.round_index));
  replace_all(text, "{prev_round}", std::to_string(obs.round_index - 1));
  return text;
}

constexpr std::string_view kRequiredSections[] = {
    "rules", "bedtime", "maxreward", "feedback", "feedback_full", "ask", "reply_format", "reminder"};

}  // namespace

PromptSet PromptSet::parse(std::string_view text) {
  PromptSet out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::string current;
  std::string body;
  auto flush = [&] {
    if (!current.empty()) out.sections_[current] = rstrip(body);
    body.clear();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind('#', 0) == 0) continue;
    if (line.rfind("@version ", 0) == 0) {
      out.version_ = line.substr(9);
      continue;
    }
    if (line.rfind("@section ", 0) == 0) {
      flush();
      current = line.substr(9);
      continue;
    }
    if (current.empty()) continue;
    if (!body.empty()) body += '\n';
    body += line;
  }
  flush();

  if (out.version_.empty()) throw std::invalid_argument("prompt file has no @version line");
  for (auto name : kRequiredSections) {
    if (!out.sections_.contains(name)) {
      throw std::invalid_argument("prompt file is missing section '" + std::string(name) + "'");
    }
  }
  if (out.sections_.at("bedtime") != kPrimingTemplate) {
    throw std::invalid_argument("prompt file: bedtime section must be the priming template verbatim");
  }
  return out;
}

const PromptSet& PromptSet::builtin() {
  static const PromptSet prompts = parse(detail::kBuiltinPromptText);
  return prompts;
}

PromptSet PromptSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open prompt file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const std::string& PromptSet::section(std::string_view name) const {
  auto it = sections_.find(name);
  if (it == sections_.end()) throw std::out_of_range("no prompt section '" + std::string(name) + "'");
  return it->second;
}

RevealMode parse_reveal(std::string_view text) {
  if (text == "totals") return RevealMode::Totals;
  if (text == "full") return RevealMode::Full;
  throw std::invalid_argument("reveal must be 'totals' or 'full', got '" + std::string(text) + "'");
}

std::string_view to_string(RevealMode mode) {
  return mode == RevealMode::Totals ? "totals" : "full";
}

std::string format_tokens(const Rational& amount) {
  std::string exact = to_string(amount);
  if (exact.find('/') == std::string::npos) return exact;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", to_double(amount));
  return buf;
}

std::string build_system_prompt(const GameConfig& config, const Story& story,
                                const PromptSet& prompts) {
  std::string rules = prompts.section("rules");
  replace_all(rules, "{N}", std::to_string(config.num_agents));
  replace_all(rules, "{R}", std::to_string(config.rounds));
  replace_all(rules, "{T}", std::to_string(config.endowment));
  replace_all(rules, "{m}", format_tokens(config.multiplier));

  std::string condition;
  switch (story.category) {
    case StoryCategory::BaselineNoInstruct:
      return rules;
    case StoryCategory::BaselineMaxReward:
      condition = prompts.section("maxreward");
      break;
    case StoryCategory::Cooperative:
    case StoryCategory::BaselineNonsense:
      condition = prompts.section("bedtime");
      break;
  }
  // Story text goes in last so placeholders inside it are left untouched.
  const auto pos = condition.find("{story}");
  if (pos != std::string::npos) condition.replace(pos, 7, story.text);
  return rstrip(rules + "\n\n" + condition);
}

std::string build_round_prompt(const Observation& obs, RevealMode reveal, const PromptSet& prompts) {
  std::string out;
  if (obs.round_index > 1 && obs.last_group_total && obs.last_own_payoff) {
    std::string feedback = prompts.section("feedback");
    replace_all(feedback, "{group_total}", std::to_string(*obs.last_group_total));
    replace_all(feedback, "{payoff}", format_tokens(*obs.last_own_payoff));
    out += fill_game(feedback, obs) + "\n";
    if (reveal == RevealMode::Full && obs.last_contributions) {
      std::string list;
      for (std::size_t i = 0; i < obs.last_contributions->size(); ++i) {
        if (i) list += ", ";
        list += "player " + std::to_string(i + 1) + ": " + std::to_string((*obs.last_contributions)[i]);
      }
      std::string full = prompts.section("feedback_full");
      replace_all(full, "{contributions}", list);
      out += fill_game(full, obs) + "\n";
    }
  }
  out += fill_game(prompts.section("ask"), obs) + "\n";
  out += fill_game(prompts.section("reply_format"), obs);
  return out;
}

std::string build_reminder_prompt(const Observation& obs, const PromptSet& prompts) {
  return fill_game(prompts.section("reminder"), obs);
}

}  // namespace pgg
