// pgg: command line front end for the public goods game harness.
//
// Machine-readable output always goes to files; progress and errors go to
// stderr. Exit codes: 0 success, 1 validation or configuration error,
// 2 runtime failure.

#include <csignal>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "pgg/analysis.hpp"
#include "pgg/corpus.hpp"
#include "pgg/experiment.hpp"
#include "pgg/mock_server.hpp"
#include "pgg/records.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct RunArgs {
  std::string spec_file;
  std::string preset;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string endpoint;
  std::string model;
  std::string out;
  std::string corpus;
  std::optional<int> parallel;
  std::optional<double> temperature;
  std::string reveal;
};

struct AnalyzeArgs {
  std::vector<std::string> results;
  std::uint64_t seed = 0;
  std::string out_dir = "analysis";
  int n_boot = 1000;
};

struct ExportArgs {
  std::vector<std::string> results;
  std::string kind;
  std::string out;
  std::uint64_t seed = 0;
  int n_boot = 1000;
};

struct MockArgs {
  std::string playlist;
  std::string host = "127.0.0.1";
  int port = 9999;
};

int cmd_validate_corpus(const std::string& dir) {
  try {
    const pgg::Corpus corpus = pgg::Corpus::load(dir);
    std::cerr << "corpus " << dir << ": " << corpus.size() << " stories ("
              << corpus.count(pgg::StoryCategory::Cooperative) << " cooperative, "
              << corpus.size() - corpus.count(pgg::StoryCategory::Cooperative) << " baseline)\n";
    for (const auto& s : corpus.stories()) {
      std::cerr << "  " << s.id << "  " << pgg::to_string(s.category) << "  " << s.char_count << " chars\n";
    }
    return kOk;
  } catch (const pgg::CorpusError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

int cmd_run(const RunArgs& args) {
  pgg::ExperimentSpec spec;
  pgg::Corpus corpus;
  try {
    if (!args.spec_file.empty() && !args.preset.empty()) {
      throw std::invalid_argument("give either a spec file or --preset, not both (spec files accept preset = \"...\")");
    }
    if (!args.spec_file.empty()) {
      spec = pgg::load_experiment_spec(args.spec_file);
    } else if (!args.preset.empty()) {
      spec = pgg::preset(args.preset);
    } else {
      throw std::invalid_argument("run needs a spec file or --preset");
    }
    if (args.trials) spec.trials_per_cell = *args.trials;
    if (args.seed) spec.master_seed = *args.seed;
    if (args.parallel) spec.max_parallel_trials = *args.parallel;
    if (args.temperature) spec.temperature = *args.temperature;
    if (!args.reveal.empty()) spec.reveal = pgg::parse_reveal(args.reveal);
    if (!args.out.empty()) spec.output_path = args.out;
    if (!args.corpus.empty()) spec.corpus_path = args.corpus;

    pgg::EndpointConfig endpoint;
    if (const auto* llm = std::get_if<pgg::LlmBackend>(&spec.backend)) endpoint = llm->endpoint;
    if (!args.endpoint.empty()) endpoint.base_url = args.endpoint;
    if (!args.model.empty()) endpoint.model_id = args.model;
    if (!args.backend.empty()) {
      spec.backend = pgg::parse_backend(args.backend, endpoint);
    } else if (auto* llm = std::get_if<pgg::LlmBackend>(&spec.backend)) {
      llm->endpoint = endpoint;
    }
    if (!args.endpoint.empty() && std::holds_alternative<pgg::ScriptedBackend>(spec.backend)) {
      std::cerr << "warning: --endpoint ignored for a scripted backend\n";
    }
    spec.validate();
    corpus = pgg::Corpus::load(spec.corpus_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }

  std::cerr << "run " << spec.name << ": " << to_string(spec.condition) << ", N=" << spec.num_agents << ", "
            << spec.story_cells.size() << " cell(s) x " << spec.trials_per_cell << " trial(s), backend "
            << pgg::to_string(spec.backend) << '\n';
  try {
    pgg::RunOptions options;
    options.on_record = [](const pgg::TrialRecord& r) {
      if (!r.completed()) std::cerr << "trial " << r.cell << "/" << r.trial_index << " aborted: " << r.abort_reason << '\n';
    };
    const auto summary = pgg::run_experiment(spec, corpus, options);
    std::cerr << "done: " << summary.completed << " completed, " << summary.aborted << " aborted, "
              << summary.skipped << " already present -> " << summary.results_path.string() << " (manifest "
              << summary.manifest_path.string() << ")\n";
    for (const auto& [reason, count] : summary.abort_reasons) {
      std::cerr << "  aborted (" << reason << "): " << count << '\n';
    }
    if (summary.written > 0 && summary.completed == 0) {
      std::cerr << "error: every trial of this run aborted\n";
      return kRuntimeError;
    }
    return kOk;
  } catch (const pgg::CorpusError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

std::vector<pgg::Dataset> load_all(const std::vector<std::string>& paths) {
  std::vector<pgg::Dataset> out;
  for (const auto& p : paths) out.push_back(pgg::load_dataset(p));
  return out;
}

int cmd_analyze(const AnalyzeArgs& args) {
  try {
    const auto datasets = load_all(args.results);
    const auto outputs = pgg::analyze(datasets, args.out_dir, args.seed, args.n_boot);
    std::cerr << "wrote " << outputs.summary_csv.string() << ", " << outputs.summary_txt.string() << ", "
              << outputs.pairwise_csv.string() << ", " << outputs.aborts_csv.string() << '\n';
    return kOk;
  } catch (const pgg::ResultsFormatError& e) {
    std::cerr << "error: malformed results: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

int cmd_export(const ExportArgs& args) {
  try {
    const auto kind = pgg::parse_plot_kind(args.kind);
    const auto datasets = load_all(args.results);
    pgg::export_plot_data(datasets, kind, args.out, args.seed, args.n_boot);
    std::cerr << "wrote " << args.out << '\n';
    return kOk;
  } catch (const pgg::ResultsFormatError& e) {
    std::cerr << "error: malformed results: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

int cmd_mock_serve(const MockArgs& args) {
  std::optional<pgg::MockServer> server;
  try {
    server.emplace(pgg::Playlist::load(args.playlist), args.host);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server->stop();
  });
  std::cerr << "mock endpoint on http://" << args.host << ':' << args.port << "/v1/chat/completions\n";
  int rc = kOk;
  try {
    server->serve(args.port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    rc = kRuntimeError;
    pthread_kill(waiter.native_handle(), SIGTERM);
  }
  waiter.join();
  std::cerr << "served " << server->request_count() << " request(s)\n";
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Public goods game harness: narrative-primed agents, scripted or LLM-backed", "pgg"};
  app.require_subcommand(1);

  std::string corpus_dir = "data/corpus";
  auto* validate = app.add_subcommand("validate-corpus", "Load and validate a story corpus directory");
  validate->add_option("--corpus", corpus_dir, "Corpus directory holding manifest.csv")->capture_default_str();

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run an experiment and append trial records to a JSONL file");
  run->add_option("spec", run_args.spec_file, "TOML-style experiment spec file");
  run->add_option("--preset", run_args.preset, "Preset: exp1_1, exp1_2_16, exp1_2_32, exp1_3, exp2");
  run->add_option("--trials", run_args.trials, "Override trials per cell")->check(CLI::PositiveNumber);
  run->add_option("--seed", run_args.seed, "Override the master seed");
  run->add_option("--backend", run_args.backend, "llm or scripted:<Strategy>, e.g. scripted:ConditionalCooperator(10)");
  run->add_option("--endpoint", run_args.endpoint, "Base URL of an OpenAI-compatible endpoint");
  run->add_option("--model", run_args.model, "Model id sent to the endpoint");
  run->add_option("--out", run_args.out, "Results JSONL path (appended to; existing trials are skipped)");
  run->add_option("--corpus", run_args.corpus, "Story corpus directory");
  run->add_option("--parallel", run_args.parallel, "Maximum trials in flight")->check(CLI::PositiveNumber);
  run->add_option("--temperature", run_args.temperature, "Sampling temperature")->check(CLI::NonNegativeNumber);
  run->add_option("--reveal", run_args.reveal, "Round feedback for LLM seats: totals or full");
  run->footer("The endpoint token is read from the environment variable named by auth_token_env\n"
              "(default OPENAI_API_KEY); it is never accepted as a flag.");

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Summaries and pairwise bootstrap CIs from results files");
  analyze->add_option("results", analyze_args.results, "Results JSONL file(s)")->required()->check(CLI::ExistingFile);
  analyze->add_option("--seed", analyze_args.seed, "Bootstrap seed")->capture_default_str();
  analyze->add_option("--out-dir", analyze_args.out_dir, "Output directory")->capture_default_str();
  analyze->add_option("--n-boot", analyze_args.n_boot, "Bootstrap replicates")->capture_default_str()->check(CLI::PositiveNumber);

  ExportArgs export_args;
  auto* exp = app.add_subcommand("export-plots", "Write long-format CSV for a figure");
  exp->add_option("results", export_args.results, "Results JSONL file(s); scaling accepts several")->required()->check(CLI::ExistingFile);
  exp->add_option("--kind", export_args.kind, "violin, scaling, payoff or ci_forest")->required();
  exp->add_option("--out", export_args.out, "Output CSV path")->required();
  exp->add_option("--seed", export_args.seed, "Bootstrap seed (ci_forest)")->capture_default_str();
  exp->add_option("--n-boot", export_args.n_boot, "Bootstrap replicates (ci_forest)")->capture_default_str()->check(CLI::PositiveNumber);

  MockArgs mock_args;
  auto* mock = app.add_subcommand("mock-serve", "Serve a scripted OpenAI-compatible chat endpoint");
  mock->add_option("--playlist", mock_args.playlist, "Reply playlist file")->required()->check(CLI::ExistingFile);
  mock->add_option("--host", mock_args.host, "Bind address")->capture_default_str();
  mock->add_option("--port", mock_args.port, "Port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  if (*validate) return cmd_validate_corpus(corpus_dir);
  if (*run) return cmd_run(run_args);
  if (*analyze) return cmd_analyze(analyze_args);
  if (*exp) return cmd_export(export_args);
  if (*mock) return cmd_mock_serve(mock_args);
  return kConfigError;
}
