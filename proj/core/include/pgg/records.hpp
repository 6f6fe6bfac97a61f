#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgg/game.hpp"

namespace pgg {

inline constexpr int kResultsSchemaVersion = 1;

// A results file could not be read. line is 1-based, 0 when not line-bound.
class ResultsFormatError : public std::runtime_error {
 public:
  ResultsFormatError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

nlohmann::ordered_json to_json(const GameConfig& config);
GameConfig game_config_from_json(const nlohmann::json& j);

// One JSONL line: TrialRecord fields plus schema_version. Payoffs are written
// as decimals; on read they are recomputed exactly from the contributions and
// checked against the logged values.
nlohmann::ordered_json to_json(const TrialRecord& record);
TrialRecord trial_from_json(const nlohmann::json& j);  // throws std::invalid_argument
std::string to_jsonl_line(const TrialRecord& record);  // no trailing newline

using TrialKey = std::pair<std::string, std::uint64_t>;  // (cell, trial index)

// All records, sorted by (cell, trial). Throws ResultsFormatError naming the
// first bad line.
std::vector<TrialRecord> read_results(const std::filesystem::path& path);

// Keys already present, for resuming. A torn final line (no trailing
// newline, not parseable) is cut off the file so appends start clean.
std::set<TrialKey> prepare_for_resume(const std::filesystem::path& path);

}  // namespace pgg
