#include "pgg/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "pgg/corpus.hpp"
#include "pgg/records.hpp"

namespace pgg {
namespace {

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

bool report_less(const std::string& a, const std::string& b) {
  return story_order_key(a) < story_order_key(b);
}

std::string story_type(std::string_view cell) {
  const auto [rank, id] = story_order_key(cell);
  if (rank < 4) return "baseline";
  if (rank < kCanonicalStoryOrder.size()) return "meaningful";
  return "other";
}

std::string dataset_id(const Dataset& d) { return d.source.stem().string(); }

// CSV field quoting for ids that might contain separators.
std::string csv(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AnalysisError("cannot write '" + path.string() + "'");
  return out;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  // Width in code points so "±" lines up.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  if (cps < width) s.append(width - cps, ' ');
  return s;
}

}  // namespace

Rational collaboration_score(const TrialRecord& trial) {
  if (!trial.completed()) throw std::invalid_argument("collaboration_score: trial was aborted");
  const auto& c = trial.config;
  std::int64_t total = 0;
  for (const auto& round : trial.rounds) {
    for (Tokens t : round.contributions) total += t;
  }
  const std::int64_t live = c.num_agents - c.dummy_count;
  return Rational(total, live * c.rounds * static_cast<std::int64_t>(c.endowment));
}

Rational cumulative_payoff(const TrialRecord& trial, std::size_t agent) {
  if (!trial.completed()) throw std::invalid_argument("cumulative_payoff: trial was aborted");
  if (agent >= static_cast<std::size_t>(trial.config.num_agents)) {
    throw std::out_of_range("cumulative_payoff: agent index " + std::to_string(agent) + " out of range");
  }
  Rational sum(0);
  for (const auto& round : trial.rounds) sum += round.payoffs.at(agent);
  return sum;
}

std::vector<CellSummary> summarize(std::span<const ScoreSample> samples) {
  if (samples.empty()) throw std::invalid_argument("summarize: no samples");
  std::vector<CellSummary> out;
  for (const auto& [cell, values] : group_by_cell(samples)) {
    CellSummary s;
    s.cell = cell;
    s.n = values.size();
    s.mean = mean_of(values);
    if (s.n > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - s.mean) * (v - s.mean);
      s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const CellSummary& a, const CellSummary& b) {
    return report_less(a.cell, b.cell);
  });
  return out;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

PairwiseCI bootstrap_ci(std::span<const double> a, std::span<const double> b, Rng& rng, int n_boot,
                        double level) {
  if (a.empty() || b.empty()) throw std::invalid_argument("bootstrap_ci: empty group");
  if (n_boot < 1) throw std::invalid_argument("bootstrap_ci: n_boot must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: level must be in (0, 1)");

  std::vector<double> replicates(static_cast<std::size_t>(n_boot));
  for (auto& rep : replicates) {
    double sa = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) sa += a[uniform_index(rng, a.size())];
    double sb = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) sb += b[uniform_index(rng, b.size())];
    rep = sa / static_cast<double>(a.size()) - sb / static_cast<double>(b.size());
  }
  std::sort(replicates.begin(), replicates.end());

  PairwiseCI ci;
  ci.level = level;
  ci.n_boot = n_boot;
  ci.lower = quantile_sorted(replicates, (1.0 - level) / 2.0);
  ci.upper = quantile_sorted(replicates, (1.0 + level) / 2.0);
  ci.significant = ci.lower > 0.0 || ci.upper < 0.0;
  return ci;
}

std::uint64_t pair_seed(std::uint64_t seed, std::string_view cell_a, std::string_view cell_b) {
  if (cell_b < cell_a) std::swap(cell_a, cell_b);
  return splitmix64(splitmix64(seed ^ fnv1a64(cell_a)) ^ fnv1a64(cell_b));
}

PairwiseCI pairwise_ci(const std::string& cell_a, std::span<const double> a, const std::string& cell_b,
                       std::span<const double> b, std::uint64_t seed, int n_boot, double level) {
  Rng rng(pair_seed(seed, cell_a, cell_b));
  if (cell_b < cell_a) {
    PairwiseCI flipped = bootstrap_ci(b, a, rng, n_boot, level);
    PairwiseCI ci = flipped;
    ci.lower = -flipped.upper;
    ci.upper = -flipped.lower;
    ci.cell_a = cell_a;
    ci.cell_b = cell_b;
    return ci;
  }
  PairwiseCI ci = bootstrap_ci(a, b, rng, n_boot, level);
  ci.cell_a = cell_a;
  ci.cell_b = cell_b;
  return ci;
}

std::vector<PairwiseCI> pairwise_matrix(const std::map<std::string, std::vector<double>>& samples_by_cell,
                                        std::uint64_t seed, int n_boot, double level) {
  if (samples_by_cell.size() < 2) throw std::invalid_argument("pairwise_matrix: need at least 2 cells");
  std::vector<std::string> cells;
  for (const auto& [cell, values] : samples_by_cell) {
    if (values.empty()) throw std::invalid_argument("pairwise_matrix: cell '" + cell + "' is empty");
    cells.push_back(cell);
  }
  std::sort(cells.begin(), cells.end(), report_less);
  std::vector<PairwiseCI> out;
  out.reserve(cells.size() * (cells.size() - 1) / 2);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      out.push_back(pairwise_ci(cells[i], samples_by_cell.at(cells[i]), cells[j],
                                samples_by_cell.at(cells[j]), seed, n_boot, level));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string Dataset::label() const {
  std::string l = condition + " N=" + std::to_string(num_agents);
  return l;
}

Dataset load_dataset(const std::filesystem::path& results) {
  Dataset d;
  d.source = results;
  std::vector<TrialRecord> records = read_results(results);
  if (records.empty()) throw AnalysisError(results.string() + ": no records");
  d.condition = records.front().condition;
  d.num_agents = records.front().config.num_agents;
  d.dummy_count = records.front().config.dummy_count;
  for (auto& r : records) {
    if (r.condition != d.condition || r.config.num_agents != d.num_agents ||
        r.config.dummy_count != d.dummy_count) {
      throw AnalysisError(results.string() + ": records mix conditions or group sizes (cell " + r.cell +
                          ", trial " + std::to_string(r.trial_index) + ")");
    }
    (r.completed() ? d.completed : d.aborted).push_back(std::move(r));
  }
  return d;
}

std::vector<ScoreSample> collaboration_samples(const Dataset& data) {
  std::vector<ScoreSample> out;
  out.reserve(data.completed.size());
  for (const auto& t : data.completed) out.push_back({t.cell, t.trial_index, to_double(collaboration_score(t))});
  return out;
}

std::vector<ScoreSample> payoff_samples_by_story(const Dataset& data) {
  std::vector<ScoreSample> out;
  for (const auto& t : data.completed) {
    for (std::size_t seat = 0; seat < static_cast<std::size_t>(t.config.num_agents); ++seat) {
      if (t.config.is_dummy(static_cast<int>(seat))) continue;
      const std::string& story = t.story_assignment.empty() ? t.cell : t.story_assignment[seat];
      out.push_back({story, t.trial_index, to_double(cumulative_payoff(t, seat))});
    }
  }
  return out;
}

std::vector<ScoreSample> primary_samples(const Dataset& data) {
  return data.heterogeneous() ? payoff_samples_by_story(data) : collaboration_samples(data);
}

std::string_view primary_metric(const Dataset& data) {
  return data.heterogeneous() ? "cumulative_payoff" : "collaboration_score";
}

std::map<std::string, std::vector<double>> group_by_cell(std::span<const ScoreSample> samples) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& s : samples) out[s.cell].push_back(s.value);
  return out;
}

AnalyzeOutputs analyze(std::span<const Dataset> datasets, const std::filesystem::path& out_dir,
                       std::uint64_t seed, int n_boot) {
  if (datasets.empty()) throw AnalysisError("analyze: no datasets");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw AnalysisError("cannot create '" + out_dir.string() + "': " + ec.message());

  AnalyzeOutputs paths{out_dir / "summary.csv", out_dir / "summary.txt", out_dir / "pairwise_ci.csv",
                       out_dir / "aborts.csv"};
  auto summary_csv = open_out(paths.summary_csv);
  auto pairwise_csv = open_out(paths.pairwise_csv);
  auto aborts_csv = open_out(paths.aborts_csv);
  summary_csv << "dataset,metric,story_type,cell,n,mean,std\n";
  pairwise_csv << "dataset,metric,cell_a,cell_b,lower,upper,significant\n";
  aborts_csv << "dataset,cell,trial,reason\n";

  struct Column {
    std::string label;
    std::map<std::string, CellSummary> by_cell;
  };
  std::map<std::string, std::vector<Column>> sections;  // metric -> columns
  std::string footer;

  for (const auto& d : datasets) {
    const std::string id = dataset_id(d);
    const std::string metric(primary_metric(d));
    for (const auto& t : d.aborted) {
      aborts_csv << csv(id) << ',' << csv(t.cell) << ',' << t.trial_index << ',' << csv(t.abort_reason) << '\n';
    }
    footer += d.label() + " (" + d.source.filename().string() + "): " + std::to_string(d.completed.size()) +
              " completed, " + std::to_string(d.aborted.size()) + " aborted and excluded\n";
    if (d.completed.empty()) continue;

    const auto samples = primary_samples(d);
    Column column{d.label(), {}};
    for (const auto& s : summarize(samples)) {
      summary_csv << csv(id) << ',' << metric << ',' << story_type(s.cell) << ',' << csv(s.cell) << ','
                  << s.n << ',' << format_double(s.mean) << ',' << format_double(s.std) << '\n';
      column.by_cell.emplace(s.cell, s);
    }
    sections[metric].push_back(std::move(column));

    const auto grouped = group_by_cell(samples);
    if (grouped.size() >= 2) {
      for (const auto& ci : pairwise_matrix(grouped, seed, n_boot)) {
        pairwise_csv << csv(id) << ',' << metric << ',' << csv(ci.cell_a) << ',' << csv(ci.cell_b) << ','
                     << format_double(ci.lower) << ',' << format_double(ci.upper) << ','
                     << (ci.significant ? "true" : "false") << '\n';
      }
    }
  }

  auto txt = open_out(paths.summary_txt);
  for (const auto& metric : {std::string("collaboration_score"), std::string("cumulative_payoff")}) {
    auto it = sections.find(metric);
    if (it == sections.end()) continue;
    const auto& columns = it->second;
    std::vector<std::string> cells;
    for (const auto& col : columns) {
      for (const auto& [cell, s] : col.by_cell) {
        if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
      }
    }
    std::sort(cells.begin(), cells.end(), report_less);

    txt << (metric == "collaboration_score" ? "Collaboration score" : "Cumulative payoff")
        << " (mean ± std)\n";
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Story Type", "Story Prompt"};
    for (const auto& col : columns) header.push_back(col.label);
    rows.push_back(header);
    for (const auto& cell : cells) {
      std::vector<std::string> row{story_type(cell), cell};
      for (const auto& col : columns) {
        auto s = col.by_cell.find(cell);
        row.push_back(s == col.by_cell.end() ? "-" : fixed2(s->second.mean) + " ± " + fixed2(s->second.std));
      }
      rows.push_back(std::move(row));
    }
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        std::size_t cps = 0;
        for (unsigned char ch : row[c]) cps += (ch & 0xC0) != 0x80;
        widths[c] = std::max(widths[c], cps);
      }
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::string line;
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        line += pad(rows[r][c], widths[c]);
        if (c + 1 < rows[r].size()) line += "  ";
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      txt << line << '\n';
      if (r == 0) {
        std::size_t total = 0;
        for (auto w : widths) total += w + 2;
        txt << std::string(total - 2, '-') << '\n';
      }
    }
    txt << '\n';
  }
  txt << footer;
  return paths;
}

PlotKind parse_plot_kind(std::string_view text) {
  if (text == "violin") return PlotKind::Violin;
  if (text == "scaling") return PlotKind::Scaling;
  if (text == "payoff") return PlotKind::Payoff;
  if (text == "ci_forest") return PlotKind::CiForest;
  throw std::invalid_argument("plot kind must be violin, scaling, payoff or ci_forest, got '" +
                              std::string(text) + "'");
}

std::string_view to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::Violin: return "violin";
    case PlotKind::Scaling: return "scaling";
    case PlotKind::Payoff: return "payoff";
    case PlotKind::CiForest: return "ci_forest";
  }
  return "violin";
}

void export_plot_data(std::span<const Dataset> datasets, PlotKind kind, const std::filesystem::path& out_csv,
                      std::uint64_t seed, int n_boot) {
  if (datasets.empty()) throw AnalysisError("export_plot_data: no datasets");
  if (kind != PlotKind::Scaling && datasets.size() != 1) {
    throw AnalysisError(std::string(to_string(kind)) + " export takes exactly one results file");
  }
  if (out_csv.has_parent_path()) std::filesystem::create_directories(out_csv.parent_path());
  auto out = open_out(out_csv);
  const Dataset& first = datasets.front();

  switch (kind) {
    case PlotKind::Violin: {
      out << "cell,trial,score\n";
      auto samples = collaboration_samples(first);
      std::stable_sort(samples.begin(), samples.end(), [](const ScoreSample& a, const ScoreSample& b) {
        if (a.cell != b.cell) return report_less(a.cell, b.cell);
        return a.trial < b.trial;
      });
      for (const auto& s : samples) out << csv(s.cell) << ',' << s.trial << ',' << format_double(s.value) << '\n';
      break;
    }
    case PlotKind::Scaling: {
      out << "cell,n_agents,mean,std\n";
      std::vector<const Dataset*> ordered;
      for (const auto& d : datasets) ordered.push_back(&d);
      std::stable_sort(ordered.begin(), ordered.end(),
                       [](const Dataset* a, const Dataset* b) { return a->num_agents < b->num_agents; });
      for (const Dataset* d : ordered) {
        if (d->completed.empty()) continue;
        const auto samples = collaboration_samples(*d);
        for (const auto& s : summarize(samples)) {
          out << csv(s.cell) << ',' << d->num_agents << ',' << format_double(s.mean) << ','
              << format_double(s.std) << '\n';
        }
      }
      break;
    }
    case PlotKind::Payoff: {
      out << "cell,trial,agent,payoff\n";
      std::vector<const TrialRecord*> trials;
      for (const auto& t : first.completed) trials.push_back(&t);
      std::stable_sort(trials.begin(), trials.end(), [](const TrialRecord* a, const TrialRecord* b) {
        if (a->cell != b->cell) return report_less(a->cell, b->cell);
        return a->trial_index < b->trial_index;
      });
      for (const TrialRecord* t : trials) {
        for (std::size_t seat = 0; seat < static_cast<std::size_t>(t->config.num_agents); ++seat) {
          const std::string& cell = first.heterogeneous() && !t->story_assignment.empty()
                                        ? t->story_assignment[seat]
                                        : t->cell;
          out << csv(cell) << ',' << t->trial_index << ',' << seat << ','
              << format_double(to_double(cumulative_payoff(*t, seat))) << '\n';
        }
      }
      break;
    }
    case PlotKind::CiForest: {
      out << "pair,lower,upper,significant\n";
      const auto grouped = group_by_cell(primary_samples(first));
      for (const auto& ci : pairwise_matrix(grouped, seed, n_boot)) {
        out << csv(ci.cell_a + " vs " + ci.cell_b) << ',' << format_double(ci.lower) << ','
            << format_double(ci.upper) << ',' << (ci.significant ? "true" : "false") << '\n';
      }
      break;
    }
  }
  if (!out) throw AnalysisError("write to '" + out_csv.string() + "' failed");
}

std::string format_double(double v) {
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::to_string(v);
}

}  // namespace pgg
