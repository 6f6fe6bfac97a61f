#include "pgg/records.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace pgg {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <class T>
T require(const json& j, const char* key) {
  if (!j.contains(key)) throw std::invalid_argument(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("field '") + key + "' has the wrong type");
  }
}

double as_number(const Rational& r) { return to_double(r); }

void check_logged(const json& logged, const Rational& exact, const char* what) {
  if (!logged.is_number()) throw std::invalid_argument(std::string(what) + " is not a number");
  const double v = logged.get<double>();
  const double e = to_double(exact);
  if (std::abs(v - e) > 1e-9 * std::max(1.0, std::abs(e))) {
    throw std::invalid_argument(std::string(what) + " " + std::to_string(v) +
                                " disagrees with the contributions (expected " + to_string(exact) + ")");
  }
}

}  // namespace

ResultsFormatError::ResultsFormatError(std::size_t line, const std::string& what)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

ordered_json to_json(const GameConfig& config) {
  ordered_json j;
  j["num_agents"] = config.num_agents;
  j["rounds"] = config.rounds;
  j["endowment"] = config.endowment;
  j["multiplier"] = to_string(config.multiplier);
  j["dummy_count"] = config.dummy_count;
  j["dummy_seats"] = config.resolved_dummy_seats();
  return j;
}

GameConfig game_config_from_json(const json& j) {
  GameConfig c;
  c.num_agents = require<int>(j, "num_agents");
  c.rounds = require<int>(j, "rounds");
  c.endowment = require<int>(j, "endowment");
  c.multiplier = parse_rational(require<std::string>(j, "multiplier"));
  c.dummy_count = require<int>(j, "dummy_count");
  if (j.contains("dummy_seats")) c.dummy_seats = require<std::vector<int>>(j, "dummy_seats");
  c.validate();
  return c;
}

ordered_json to_json(const TrialRecord& r) {
  ordered_json j;
  j["schema_version"] = kResultsSchemaVersion;
  j["cell"] = r.cell;
  j["trial"] = r.trial_index;
  j["condition"] = r.condition;
  j["seed"] = r.rng_seed;
  j["config"] = to_json(r.config);
  j["agents"] = r.agent_specs;
  j["stories"] = r.story_assignment;
  j["status"] = r.completed() ? "completed" : "aborted";
  j["abort_reason"] = r.completed() ? ordered_json(nullptr) : ordered_json(r.abort_reason);
  j["llm_requests"] = r.llm_requests;
  ordered_json rounds = ordered_json::array();
  for (const auto& round : r.rounds) {
    ordered_json o;
    o["round"] = round.round_index;
    o["contributions"] = round.contributions;
    o["pool_total"] = round.pool_total;
    ordered_json payoffs = ordered_json::array();
    for (const auto& p : round.payoffs) payoffs.push_back(as_number(p));
    o["payoffs"] = std::move(payoffs);
    rounds.push_back(std::move(o));
  }
  j["rounds"] = std::move(rounds);
  ordered_json cumulative = ordered_json::array();
  for (const auto& p : r.cumulative_payoffs) cumulative.push_back(as_number(p));
  j["cumulative_payoffs"] = std::move(cumulative);
  return j;
}

std::string to_jsonl_line(const TrialRecord& record) { return to_json(record).dump(); }

TrialRecord trial_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  const int version = require<int>(j, "schema_version");
  if (version != kResultsSchemaVersion) {
    throw std::invalid_argument("unsupported schema_version " + std::to_string(version));
  }
  TrialRecord r;
  r.cell = require<std::string>(j, "cell");
  r.trial_index = require<std::uint64_t>(j, "trial");
  r.condition = require<std::string>(j, "condition");
  r.rng_seed = require<std::uint64_t>(j, "seed");
  if (!j.contains("config")) throw std::invalid_argument("missing field 'config'");
  r.config = game_config_from_json(j.at("config"));
  r.agent_specs = require<std::vector<std::string>>(j, "agents");
  r.story_assignment = require<std::vector<std::string>>(j, "stories");
  const auto status = require<std::string>(j, "status");
  if (status == "completed") {
    r.status = TrialStatus::Completed;
  } else if (status == "aborted") {
    r.status = TrialStatus::Aborted;
    r.abort_reason = j.at("abort_reason").is_string() ? j.at("abort_reason").get<std::string>() : "";
  } else {
    throw std::invalid_argument("unknown status '" + status + "'");
  }
  r.llm_requests = require<std::uint64_t>(j, "llm_requests");

  const auto n = static_cast<std::size_t>(r.config.num_agents);
  if (r.agent_specs.size() != n) throw std::invalid_argument("agents length differs from num_agents");
  if (!r.story_assignment.empty() && r.story_assignment.size() != n) {
    throw std::invalid_argument("stories length differs from num_agents");
  }

  if (!j.contains("rounds") || !j.at("rounds").is_array()) {
    throw std::invalid_argument("missing field 'rounds'");
  }
  r.cumulative_payoffs.assign(n, Rational(0));
  for (const auto& o : j.at("rounds")) {
    RoundOutcome round;
    round.round_index = require<int>(o, "round");
    if (round.round_index != static_cast<int>(r.rounds.size()) + 1) {
      throw std::invalid_argument("rounds are not numbered 1..R in order");
    }
    round.contributions = require<std::vector<Tokens>>(o, "contributions");
    round.pool_total = require<Tokens>(o, "pool_total");
    round.payoffs = compute_payoffs(round.contributions, r.config);
    Tokens sum = 0;
    for (Tokens t : round.contributions) sum += t;
    if (sum != round.pool_total) throw std::invalid_argument("pool_total differs from the contributions");
    for (int seat : r.config.resolved_dummy_seats()) {
      if (round.contributions[static_cast<std::size_t>(seat)] != 0) {
        throw std::invalid_argument("dummy seat contributed");
      }
    }
    const auto& logged = o.at("payoffs");
    if (!logged.is_array() || logged.size() != n) throw std::invalid_argument("payoffs length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      check_logged(logged[i], round.payoffs[i], "payoff");
      r.cumulative_payoffs[i] += round.payoffs[i];
    }
    r.rounds.push_back(std::move(round));
  }
  if (r.completed() && static_cast<int>(r.rounds.size()) != r.config.rounds) {
    throw std::invalid_argument("completed trial has " + std::to_string(r.rounds.size()) +
                                " rounds, expected " + std::to_string(r.config.rounds));
  }
  const auto& cumulative = j.at("cumulative_payoffs");
  if (!cumulative.is_array() || cumulative.size() != n) {
    throw std::invalid_argument("cumulative_payoffs length mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) check_logged(cumulative[i], r.cumulative_payoffs[i], "cumulative payoff");
  return r;
}

std::vector<TrialRecord> read_results(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResultsFormatError(0, "cannot open results file '" + path.string() + "'");
  std::vector<TrialRecord> records;
  std::map<TrialKey, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) throw ResultsFormatError(line_no, "not valid JSON (truncated record?)");
    try {
      TrialRecord r = trial_from_json(doc);
      TrialKey key{r.cell, r.trial_index};
      if (auto [it, inserted] = seen.emplace(key, line_no); !inserted) {
        throw std::invalid_argument("duplicate (cell, trial) = (" + key.first + ", " +
                                    std::to_string(key.second) + "), first seen on line " +
                                    std::to_string(it->second));
      }
      records.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw ResultsFormatError(line_no, e.what());
    } catch (const json::exception& e) {
      throw ResultsFormatError(line_no, e.what());
    }
  }
  std::sort(records.begin(), records.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return std::tie(a.cell, a.trial_index) < std::tie(b.cell, b.trial_index);
  });
  return records;
}

std::set<TrialKey> prepare_for_resume(const std::filesystem::path& path) {
  std::set<TrialKey> keys;
  if (!std::filesystem::exists(path)) return keys;
  std::string content;
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ResultsFormatError(0, "cannot open results file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    content = buf.str();
  }
  // Drop a torn tail left by a killed writer.
  if (!content.empty() && content.back() != '\n') {
    const auto cut = content.rfind('\n');
    const std::size_t keep = cut == std::string::npos ? 0 : cut + 1;
    std::filesystem::resize_file(path, keep);
    content.resize(keep);
  }
  std::istringstream lines(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("cell") || !doc.contains("trial")) {
      throw ResultsFormatError(line_no, "cannot resume: unreadable record");
    }
    try {
      keys.emplace(doc.at("cell").get<std::string>(), doc.at("trial").get<std::uint64_t>());
    } catch (const json::exception&) {
      throw ResultsFormatError(line_no, "cannot resume: bad cell or trial field");
    }
  }
  return keys;
}

}  // namespace pgg
