#include "pgg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "pgg/records.hpp"

namespace pgg {
namespace {

// Sub-stream ids of a trial seed; seats use 0..N-1 inside play_game.
constexpr std::uint64_t kAssignmentStream = 1u << 20;
constexpr std::uint64_t kSeatingStream = (1u << 20) + 1;

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> canonical_cells() {
  return {kCanonicalStoryOrder.begin(), kCanonicalStoryOrder.end()};
}

std::vector<int> draw_dummy_seats(int num_agents, int dummy_count, Rng& rng) {
  std::vector<int> seats(static_cast<std::size_t>(num_agents));
  for (int i = 0; i < num_agents; ++i) seats[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < dummy_count; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   uniform_index(rng, static_cast<std::size_t>(num_agents - i));
    std::swap(seats[static_cast<std::size_t>(i)], seats[j]);
  }
  seats.resize(static_cast<std::size_t>(dummy_count));
  std::sort(seats.begin(), seats.end());
  return seats;
}

}  // namespace

std::string_view to_string(Condition condition) {
  switch (condition) {
    case Condition::Homogeneous: return "homogeneous";
    case Condition::Heterogeneous: return "heterogeneous";
    case Condition::Robustness: return "robustness";
  }
  return "homogeneous";
}

Condition parse_condition(std::string_view text) {
  if (text == "homogeneous") return Condition::Homogeneous;
  if (text == "heterogeneous") return Condition::Heterogeneous;
  if (text == "robustness") return Condition::Robustness;
  throw std::invalid_argument("condition must be homogeneous, heterogeneous or robustness, got '" +
                              std::string(text) + "'");
}

AgentBackend parse_backend(std::string_view text, const EndpointConfig& endpoint) {
  if (text == "llm") return LlmBackend{endpoint};
  constexpr std::string_view prefix = "scripted:";
  if (text.substr(0, prefix.size()) == prefix) {
    return ScriptedBackend{parse_strategy(text.substr(prefix.size()))};
  }
  throw std::invalid_argument("backend must be 'llm' or 'scripted:<Strategy>', got '" +
                              std::string(text) + "'");
}

std::string to_string(const AgentBackend& backend) {
  if (const auto* s = std::get_if<ScriptedBackend>(&backend)) return "scripted:" + to_string(s->strategy);
  return "llm";
}

GameConfig ExperimentSpec::game_config() const {
  GameConfig c;
  c.num_agents = num_agents;
  c.rounds = rounds;
  c.endowment = endowment;
  c.multiplier = multiplier;
  c.dummy_count = dummy_count();
  return c;
}

void ExperimentSpec::validate() const {
  game_config().validate();
  if (trials_per_cell < 1) throw std::invalid_argument("trials_per_cell must be >= 1");
  if (max_parallel_trials < 1) throw std::invalid_argument("max_parallel_trials must be >= 1");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (story_cells.empty()) throw std::invalid_argument("story_cells is empty");
  if (condition == Condition::Heterogeneous) {
    if (story_cells != std::vector<std::string>{std::string(kPoolCell)}) {
      throw std::invalid_argument("heterogeneous experiments use story_cells = \"pool\"");
    }
  } else {
    std::vector<std::string> sorted = story_cells;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::invalid_argument("story_cells contains duplicates");
    }
    if (std::find(sorted.begin(), sorted.end(), kPoolCell) != sorted.end()) {
      throw std::invalid_argument("\"pool\" is only valid for heterogeneous experiments");
    }
  }
  if (const auto* llm = std::get_if<LlmBackend>(&backend)) llm->endpoint.validate();
}

nlohmann::ordered_json to_json(const ExperimentSpec& spec) {
  nlohmann::ordered_json j;
  j["name"] = spec.name;
  j["condition"] = to_string(spec.condition);
  j["num_agents"] = spec.num_agents;
  j["dummy_count"] = spec.dummy_count();
  j["trials_per_cell"] = spec.trials_per_cell;
  j["rounds"] = spec.rounds;
  j["endowment"] = spec.endowment;
  j["multiplier"] = to_string(spec.multiplier);
  j["temperature"] = spec.temperature;
  j["backend"] = to_string(spec.backend);
  if (const auto* llm = std::get_if<LlmBackend>(&spec.backend)) {
    const auto& e = llm->endpoint;
    // The auth token itself is never echoed, only the variable it came from.
    j["endpoint"] = {{"base_url", e.base_url},
                     {"model", e.model_id},
                     {"timeout_ms", e.request_timeout.count()},
                     {"max_parse_retries", e.max_parse_retries},
                     {"max_transport_retries", e.max_transport_retries},
                     {"backoff_ms", e.backoff_initial.count()},
                     {"auth_token_env", e.auth_token_env},
                     {"max_in_flight", e.max_in_flight}};
  }
  j["story_cells"] = spec.story_cells;
  j["master_seed"] = spec.master_seed;
  j["output"] = spec.output_path.string();
  j["max_parallel_trials"] = spec.max_parallel_trials;
  j["reveal"] = to_string(spec.reveal);
  j["with_replacement"] = spec.with_replacement;
  j["corpus"] = spec.corpus_path.string();
  j["prompt_file"] = spec.prompt_file.string();
  return j;
}

std::vector<std::string> preset_names() {
  return {"exp1_1", "exp1_2_16", "exp1_2_32", "exp1_3", "exp2"};
}

ExperimentSpec preset(std::string_view name) {
  ExperimentSpec spec;
  spec.name = std::string(name);
  spec.rounds = 5;
  spec.endowment = 10;
  spec.multiplier = Rational(3, 2);
  spec.temperature = 0.6;
  spec.backend = LlmBackend{};
  spec.trials_per_cell = 100;
  spec.story_cells = canonical_cells();
  spec.output_path = std::string(name) + ".jsonl";
  if (name == "exp1_1") {
    spec.condition = Condition::Homogeneous;
    spec.num_agents = 4;
  } else if (name == "exp1_2_16") {
    spec.condition = Condition::Homogeneous;
    spec.num_agents = 16;
  } else if (name == "exp1_2_32") {
    spec.condition = Condition::Homogeneous;
    spec.num_agents = 32;
  } else if (name == "exp1_3") {
    spec.condition = Condition::Robustness;
    spec.num_agents = 4;
  } else if (name == "exp2") {
    spec.condition = Condition::Heterogeneous;
    spec.num_agents = 4;
    spec.trials_per_cell = 400;
    spec.story_cells = {std::string(kPoolCell)};
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown preset '" + std::string(name) + "' (known: " + known + ")");
  }
  return spec;
}

std::uint64_t trial_seed(std::uint64_t master_seed, std::string_view cell, std::uint64_t index) {
  return derive_seed(master_seed, cell, index);
}

TrialRecord run_trial(const ExperimentSpec& spec, const Corpus& corpus, const PromptSet& prompts,
                      const std::string& cell, std::uint64_t index,
                      const std::shared_ptr<ChatClient>& client) {
  const std::uint64_t seed = trial_seed(spec.master_seed, cell, index);
  GameConfig config = spec.game_config();

  Rng seating(derive_stream(seed, kSeatingStream));
  if (config.dummy_count > 0) config.dummy_seats = draw_dummy_seats(config.num_agents, config.dummy_count, seating);

  Rng assign_rng(derive_stream(seed, kAssignmentStream));
  AssignmentMode mode = spec.condition == Condition::Heterogeneous
                            ? AssignmentMode{Heterogeneous{spec.with_replacement}}
                            : AssignmentMode{Homogeneous{cell}};
  StoryAssignment assignment = assign_stories(corpus, mode, config.num_agents, assign_rng);

  std::vector<std::unique_ptr<DecisionPolicy>> agents;
  agents.reserve(static_cast<std::size_t>(config.num_agents));
  bool uses_llm = false;
  for (int seat = 0; seat < config.num_agents; ++seat) {
    if (config.is_dummy(seat)) {
      agents.push_back(std::make_unique<DummyAgent>());
    } else if (const auto* scripted = std::get_if<ScriptedBackend>(&spec.backend)) {
      agents.push_back(std::make_unique<ScriptedAgent>(scripted->strategy));
    } else {
      if (!client) throw std::invalid_argument("run_trial: LLM backend without a client");
      const Story& story = corpus.at(assignment.story_ids[static_cast<std::size_t>(seat)]);
      agents.push_back(std::make_unique<LlmAgent>(client, build_system_prompt(config, story, prompts),
                                                  spec.reveal, prompts));
      uses_llm = true;
    }
  }

  TrialRecord record = play_game(config, agents, seed, PlayOptions{.concurrent_decisions = uses_llm});
  record.cell = cell;
  record.trial_index = index;
  record.condition = std::string(to_string(spec.condition));
  record.story_assignment = std::move(assignment.story_ids);
  return record;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& results_path) {
  auto p = results_path;
  p.replace_extension(".manifest.json");
  return p;
}

RunSummary run_experiment(const ExperimentSpec& spec, const Corpus& corpus, const RunOptions& options) {
  spec.validate();
  if (spec.condition != Condition::Heterogeneous) {
    for (const auto& cell : spec.story_cells) corpus.at(cell);
  }
  const PromptSet prompts = spec.prompt_file.empty() ? PromptSet::builtin() : PromptSet::load(spec.prompt_file);

  std::shared_ptr<ChatClient> client;
  if (const auto* llm = std::get_if<LlmBackend>(&spec.backend)) {
    EndpointConfig endpoint = llm->endpoint;
    endpoint.temperature = spec.temperature;
    client = std::make_shared<ChatClient>(endpoint);
  }

  RunSummary summary;
  summary.results_path = spec.output_path;
  summary.manifest_path = manifest_path_for(spec.output_path);
  if (spec.output_path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(spec.output_path.parent_path(), ec);
    if (ec) throw RunError("cannot create '" + spec.output_path.parent_path().string() + "': " + ec.message());
  }

  std::set<TrialKey> existing;
  try {
    existing = prepare_for_resume(spec.output_path);
  } catch (const ResultsFormatError& e) {
    throw RunError(spec.output_path.string() + ": " + e.what());
  }

  std::vector<TrialKey> pending;
  for (const auto& cell : spec.story_cells) {
    for (int i = 0; i < spec.trials_per_cell; ++i) {
      TrialKey key{cell, static_cast<std::uint64_t>(i)};
      ++summary.planned;
      if (existing.contains(key)) {
        ++summary.skipped;
      } else {
        pending.push_back(std::move(key));
      }
    }
  }

  std::ofstream out(spec.output_path, std::ios::binary | std::ios::app);
  if (!out) throw RunError("cannot open '" + spec.output_path.string() + "' for append");

  // Workers fill slots; this thread commits them strictly in pending order.
  std::vector<std::optional<TrialRecord>> slots(pending.size());
  std::mutex mutex;
  std::condition_variable ready;
  std::atomic<std::size_t> next_task{0};
  std::atomic<bool> stop{false};
  std::exception_ptr worker_error;

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t task = next_task.fetch_add(1);
      if (task >= pending.size()) return;
      try {
        TrialRecord record = run_trial(spec, corpus, prompts, pending[task].first, pending[task].second, client);
        std::lock_guard lock(mutex);
        slots[task] = std::move(record);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!worker_error) worker_error = std::current_exception();
        stop = true;
      }
      ready.notify_all();
    }
  };

  const auto thread_count = std::min<std::size_t>(static_cast<std::size_t>(spec.max_parallel_trials),
                                                   std::max<std::size_t>(pending.size(), 1));
  std::vector<std::jthread> threads;
  threads.reserve(thread_count);
  for (std::size_t i = 0; i < thread_count; ++i) threads.emplace_back(worker);

  std::exception_ptr commit_error;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    std::optional<TrialRecord> record;
    {
      std::unique_lock lock(mutex);
      ready.wait(lock, [&] { return slots[i].has_value() || worker_error != nullptr; });
      if (!slots[i]) break;
      record = std::move(slots[i]);
      slots[i].reset();
    }
    out << to_jsonl_line(*record) << '\n';
    out.flush();
    if (!out) {
      commit_error = std::make_exception_ptr(RunError("write to '" + spec.output_path.string() + "' failed"));
      stop = true;
      break;
    }
    ++summary.written;
    if (record->completed()) {
      ++summary.completed;
    } else {
      ++summary.aborted;
      const auto colon = record->abort_reason.find(':');
      ++summary.abort_reasons[record->abort_reason.substr(0, colon)];
    }
    if (options.on_record) options.on_record(*record);
    if (options.stop_after && summary.written >= *options.stop_after) {
      stop = true;
      break;
    }
  }
  stop = true;
  threads.clear();  // joins
  if (worker_error) std::rethrow_exception(worker_error);
  if (commit_error) std::rethrow_exception(commit_error);
  out.close();

  // Totals over the whole file, including records from earlier runs.
  std::size_t file_completed = 0;
  std::size_t file_aborted = 0;
  {
    std::ifstream in(spec.output_path, std::ios::binary);
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto doc = nlohmann::json::parse(line, nullptr, false);
      if (!doc.is_discarded() && doc.value("status", "") == "completed") ++file_completed;
      else ++file_aborted;
    }
  }

  nlohmann::ordered_json manifest;
  manifest["schema_version"] = kResultsSchemaVersion;
  manifest["created_at"] = utc_timestamp();
  manifest["results"] = spec.output_path.filename().string();
  manifest["spec"] = to_json(spec);
  manifest["corpus_hash"] = hex64(corpus.content_hash());
  manifest["corpus_size"] = corpus.size();
  manifest["prompt_version"] = prompts.version();
  manifest["this_run"] = {{"planned", summary.planned},
                          {"skipped_existing", summary.skipped},
                          {"written", summary.written},
                          {"completed", summary.completed},
                          {"aborted", summary.aborted},
                          {"abort_reasons", summary.abort_reasons}};
  manifest["file_totals"] = {{"records", file_completed + file_aborted},
                             {"completed", file_completed},
                             {"aborted", file_aborted}};
  if (client) manifest["http_requests"] = client->http_requests();
  std::ofstream mf(summary.manifest_path, std::ios::binary | std::ios::trunc);
  mf << manifest.dump(2) << '\n';
  if (!mf) throw RunError("cannot write manifest '" + summary.manifest_path.string() + "'");
  return summary;
}

}  // namespace pgg
