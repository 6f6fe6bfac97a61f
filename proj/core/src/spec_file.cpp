// Reader for the TOML-style experiment spec files accepted by `pgg run`.
// Supported: comments, [tables], key = value with quoted strings, integers,
// decimals, booleans and single-line arrays of strings.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pgg/experiment.hpp"

namespace pgg {
namespace {

struct Value {
  std::size_t line = 0;
  bool quoted = false;
  bool array = false;
  std::string scalar;
  std::vector<std::string> items;
};

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw std::invalid_argument("spec line " + std::to_string(line) + ": " + what);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Reads a double-quoted string starting at s[0] == '"'; returns the rest.
std::string_view read_quoted(std::string_view s, std::string& out, std::size_t line) {
  std::size_t i = 1;
  for (; i < s.size() && s[i] != '"'; ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char e = s[++i];
      out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
    } else {
      out += s[i];
    }
  }
  if (i >= s.size()) fail(line, "unterminated string");
  return s.substr(i + 1);
}

std::string_view strip_comment(std::string_view rest, std::size_t line) {
  rest = trim(rest);
  if (!rest.empty() && rest.front() != '#') fail(line, "unexpected text after value");
  return rest;
}

Value parse_value(std::string_view text, std::size_t line) {
  Value v;
  v.line = line;
  text = trim(text);
  if (text.empty()) fail(line, "missing value");
  if (text.front() == '"') {
    v.quoted = true;
    strip_comment(read_quoted(text, v.scalar, line), line);
    return v;
  }
  if (text.front() == '[') {
    v.array = true;
    std::string_view rest = trim(text.substr(1));
    while (true) {
      if (rest.empty()) fail(line, "unterminated array");
      if (rest.front() == ']') {
        strip_comment(rest.substr(1), line);
        return v;
      }
      if (rest.front() != '"') fail(line, "arrays may only hold quoted strings");
      std::string item;
      rest = trim(read_quoted(rest, item, line));
      v.items.push_back(std::move(item));
      if (!rest.empty() && rest.front() == ',') rest = trim(rest.substr(1));
    }
  }
  const auto hash = text.find('#');
  v.scalar = std::string(trim(text.substr(0, hash)));
  return v;
}

std::map<std::string, Value> parse_key_values(std::string_view text) {
  std::map<std::string, Value> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::string table;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) fail(line_no, "unterminated table header");
      table = std::string(trim(line.substr(1, close - 1)));
      if (table != "endpoint") fail(line_no, "unknown table '" + table + "'");
      strip_comment(line.substr(close + 1), line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected key = value");
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) fail(line_no, "empty key");
    if (!table.empty()) key = table + "." + key;
    if (out.contains(key)) fail(line_no, "duplicate key '" + key + "'");
    out.emplace(key, parse_value(line.substr(eq + 1), line_no));
  }
  return out;
}

std::string as_string(const Value& v, const std::string& key) {
  if (v.array) fail(v.line, "'" + key + "' must be a string");
  return v.scalar;
}

template <class Int>
Int as_int(const Value& v, const std::string& key) {
  if (v.array || v.quoted) fail(v.line, "'" + key + "' must be an integer");
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.scalar.data(), v.scalar.data() + v.scalar.size(), out);
  if (ec != std::errc{} || ptr != v.scalar.data() + v.scalar.size()) {
    fail(v.line, "'" + key + "' must be an integer, got '" + v.scalar + "'");
  }
  return out;
}

double as_double(const Value& v, const std::string& key) {
  if (v.array || v.quoted) fail(v.line, "'" + key + "' must be a number");
  try {
    std::size_t used = 0;
    const double d = std::stod(v.scalar, &used);
    if (used != v.scalar.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    fail(v.line, "'" + key + "' must be a number, got '" + v.scalar + "'");
  }
}

bool as_bool(const Value& v, const std::string& key) {
  if (!v.quoted && v.scalar == "true") return true;
  if (!v.quoted && v.scalar == "false") return false;
  fail(v.line, "'" + key + "' must be true or false");
}

}  // namespace

ExperimentSpec parse_experiment_spec(std::string_view text) {
  auto kv = parse_key_values(text);
  ExperimentSpec spec;
  if (auto it = kv.find("preset"); it != kv.end()) {
    try {
      spec = preset(as_string(it->second, "preset"));
    } catch (const std::invalid_argument& e) {
      fail(it->second.line, e.what());
    }
    kv.erase(it);
  }

  EndpointConfig endpoint;
  if (const auto* llm = std::get_if<LlmBackend>(&spec.backend)) endpoint = llm->endpoint;
  std::optional<std::string> backend_text;

  for (const auto& [key, value] : kv) {
    try {
      if (key == "name") spec.name = as_string(value, key);
      else if (key == "condition") spec.condition = parse_condition(as_string(value, key));
      else if (key == "num_agents") spec.num_agents = as_int<int>(value, key);
      else if (key == "trials_per_cell") spec.trials_per_cell = as_int<int>(value, key);
      else if (key == "rounds") spec.rounds = as_int<int>(value, key);
      else if (key == "endowment") spec.endowment = as_int<int>(value, key);
      else if (key == "multiplier") spec.multiplier = parse_rational(as_string(value, key));
      else if (key == "temperature") spec.temperature = as_double(value, key);
      else if (key == "backend") backend_text = as_string(value, key);
      else if (key == "story_cells") {
        if (value.array) spec.story_cells = value.items;
        else spec.story_cells = {as_string(value, key)};
      }
      else if (key == "master_seed") spec.master_seed = as_int<std::uint64_t>(value, key);
      else if (key == "output") spec.output_path = as_string(value, key);
      else if (key == "max_parallel_trials") spec.max_parallel_trials = as_int<int>(value, key);
      else if (key == "reveal") spec.reveal = parse_reveal(as_string(value, key));
      else if (key == "with_replacement") spec.with_replacement = as_bool(value, key);
      else if (key == "corpus") spec.corpus_path = as_string(value, key);
      else if (key == "prompt_file") spec.prompt_file = as_string(value, key);
      else if (key == "endpoint.base_url") endpoint.base_url = as_string(value, key);
      else if (key == "endpoint.model") endpoint.model_id = as_string(value, key);
      else if (key == "endpoint.timeout_ms") endpoint.request_timeout = std::chrono::milliseconds(as_int<long>(value, key));
      else if (key == "endpoint.max_parse_retries") endpoint.max_parse_retries = as_int<int>(value, key);
      else if (key == "endpoint.max_transport_retries") endpoint.max_transport_retries = as_int<int>(value, key);
      else if (key == "endpoint.backoff_ms") endpoint.backoff_initial = std::chrono::milliseconds(as_int<long>(value, key));
      else if (key == "endpoint.auth_token_env") endpoint.auth_token_env = as_string(value, key);
      else if (key == "endpoint.max_in_flight") endpoint.max_in_flight = as_int<int>(value, key);
      else fail(value.line, "unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      const std::string what = e.what();
      if (what.rfind("spec line ", 0) == 0) throw;
      fail(value.line, what);
    }
  }

  if (backend_text) {
    spec.backend = parse_backend(*backend_text, endpoint);
  } else if (auto* llm = std::get_if<LlmBackend>(&spec.backend)) {
    llm->endpoint = endpoint;
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open spec file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_spec(buf.str());
}

}  // namespace pgg
