#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pgg/game.hpp"
#include "pgg/random.hpp"

namespace pgg {

// sum_r sum_i t_{i,r} / ((N - dummies) * R * T). Dummies contribute zero, so
// they only shrink the denominator. Throws std::invalid_argument for an
// aborted trial.
Rational collaboration_score(const TrialRecord& trial);

// Sum of one seat's per-round payoffs. Throws std::out_of_range for a bad
// seat and std::invalid_argument for an aborted trial.
Rational cumulative_payoff(const TrialRecord& trial, std::size_t agent);

struct ScoreSample {
  std::string cell;
  std::uint64_t trial = 0;
  double value = 0.0;
};

struct CellSummary {
  std::string cell;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for n = 1
  std::size_t n = 0;
};

// Per-cell mean and sample std, in report order (baselines, then the
// cooperative stories, then anything else by id).
std::vector<CellSummary> summarize(std::span<const ScoreSample> samples);

struct PairwiseCI {
  std::string cell_a;
  std::string cell_b;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  int n_boot = 1000;
  bool significant = false;  // interval excludes zero
};

// Linear-interpolation quantile (numpy's default) of sorted data:
// h = (n - 1) q, result = x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h]).
double quantile_sorted(std::span<const double> sorted, double q);

// Percentile bootstrap of mean(a) - mean(b). Each replicate draws |a| indices
// into a, then |b| indices into b, with uniform_index. The interval is the
// ((1 - level) / 2, (1 + level) / 2) quantiles of the replicates. Throws
// std::invalid_argument for an empty group.
PairwiseCI bootstrap_ci(std::span<const double> a, std::span<const double> b, Rng& rng,
                        int n_boot = 1000, double level = 0.95);

// Seed of the stream used for the unordered pair {a, b}: lexicographic order,
// independent of which side is passed first.
std::uint64_t pair_seed(std::uint64_t seed, std::string_view cell_a, std::string_view cell_b);

// CI for mean(a) - mean(b). Always resamples the lexicographically smaller
// cell first; the reversed pair is returned negated and swapped.
PairwiseCI pairwise_ci(const std::string& cell_a, std::span<const double> a, const std::string& cell_b,
                       std::span<const double> b, std::uint64_t seed, int n_boot = 1000,
                       double level = 0.95);

// One CI per unordered pair of cells, pairs in report order (i < j), each
// reported as earlier cell minus later cell. No multiple-testing correction.
std::vector<PairwiseCI> pairwise_matrix(const std::map<std::string, std::vector<double>>& samples_by_cell,
                                        std::uint64_t seed, int n_boot = 1000, double level = 0.95);

// ---------------------------------------------------------------------------
// Results-file level

// Completed trials of one results file plus abort bookkeeping.
struct Dataset {
  std::filesystem::path source;
  std::string condition;  // homogeneous | heterogeneous | robustness
  int num_agents = 0;
  int dummy_count = 0;
  std::vector<TrialRecord> completed;
  std::vector<TrialRecord> aborted;

  // e.g. "homogeneous N=4"
  std::string label() const;
  bool heterogeneous() const { return condition == "heterogeneous"; }
};

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ResultsFormatError for malformed files and AnalysisError when one
// file mixes conditions or group sizes.
Dataset load_dataset(const std::filesystem::path& results);

// One collaboration score per completed trial, grouped by the trial's cell.
std::vector<ScoreSample> collaboration_samples(const Dataset& data);
// One cumulative payoff per live (non-dummy) seat, grouped by that seat's
// story. `trial` holds the trial index.
std::vector<ScoreSample> payoff_samples_by_story(const Dataset& data);
// The headline metric of a dataset: payoffs by story for heterogeneous
// groups, collaboration scores otherwise.
std::vector<ScoreSample> primary_samples(const Dataset& data);
std::string_view primary_metric(const Dataset& data);

std::map<std::string, std::vector<double>> group_by_cell(std::span<const ScoreSample> samples);

struct AnalyzeOutputs {
  std::filesystem::path summary_csv;
  std::filesystem::path summary_txt;
  std::filesystem::path pairwise_csv;
  std::filesystem::path aborts_csv;
};

// Writes summary.csv, summary.txt, pairwise_ci.csv and aborts.csv into
// out_dir. Each dataset becomes one column of the text table.
AnalyzeOutputs analyze(std::span<const Dataset> datasets, const std::filesystem::path& out_dir,
                       std::uint64_t seed, int n_boot = 1000);

enum class PlotKind { Violin, Scaling, Payoff, CiForest };
PlotKind parse_plot_kind(std::string_view text);
std::string_view to_string(PlotKind kind);

// Long-format CSV for plotting. Headers:
//   violin:    cell,trial,score
//   scaling:   cell,n_agents,mean,std
//   payoff:    cell,trial,agent,payoff
//   ci_forest: pair,lower,upper,significant
// scaling takes any number of datasets; the other kinds take exactly one.
void export_plot_data(std::span<const Dataset> datasets, PlotKind kind,
                      const std::filesystem::path& out_csv, std::uint64_t seed, int n_boot = 1000);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace pgg
