#include "pgg/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace pgg {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// RFC 4180 style: comma separated, double-quoted fields may hold commas and
// doubled quotes. No embedded newlines.
std::vector<std::string> split_csv_row(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw CorpusError("manifest.csv line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(field));
  return fields;
}

std::size_t utf8_code_points(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(
      s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

std::string_view to_string(StoryCategory category) {
  switch (category) {
    case StoryCategory::Cooperative: return "cooperative";
    case StoryCategory::BaselineNoInstruct: return "baseline_noinstruct";
    case StoryCategory::BaselineMaxReward: return "baseline_maxreward";
    case StoryCategory::BaselineNonsense: return "baseline_nonsense";
  }
  return "unknown";
}

StoryCategory parse_category(std::string_view text) {
  if (text == "cooperative") return StoryCategory::Cooperative;
  if (text == "baseline_noinstruct") return StoryCategory::BaselineNoInstruct;
  if (text == "baseline_maxreward") return StoryCategory::BaselineMaxReward;
  if (text == "baseline_nonsense") return StoryCategory::BaselineNonsense;
  throw CorpusError("unknown story category '" + std::string(text) + "'");
}

std::pair<std::size_t, std::string> story_order_key(std::string_view id) {
  const auto it = std::find(kCanonicalStoryOrder.begin(), kCanonicalStoryOrder.end(), id);
  return {static_cast<std::size_t>(it - kCanonicalStoryOrder.begin()), std::string(id)};
}

Corpus::Corpus(std::vector<Story> stories) : stories_(std::move(stories)) {
  std::set<std::string> seen;
  for (Story& story : stories_) {
    if (story.id.empty()) throw CorpusError("story with empty id");
    if (!seen.insert(story.id).second) throw CorpusError("duplicate story id '" + story.id + "'");
    const bool noinstruct = story.category == StoryCategory::BaselineNoInstruct;
    if (noinstruct && !story.text.empty()) {
      throw CorpusError("story '" + story.id + "': no-instruction baseline must have empty text");
    }
    if (!noinstruct && story.text.empty()) {
      throw CorpusError("story '" + story.id + "': text is empty for category " +
                        std::string(to_string(story.category)));
    }
    story.char_count = utf8_code_points(story.text);
  }
  std::sort(stories_.begin(), stories_.end(), [](const Story& a, const Story& b) {
    return story_order_key(a.id) < story_order_key(b.id);
  });
}

Corpus Corpus::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.csv";
  if (!std::filesystem::exists(manifest_path)) {
    throw CorpusError("missing manifest '" + manifest_path.string() + "'");
  }
  std::istringstream manifest(read_file(manifest_path));
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<Story> stories;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    auto fields = split_csv_row(line, line_no);
    if (!header_seen) {
      if (fields != std::vector<std::string>{"id", "title", "category", "file"}) {
        throw CorpusError("manifest.csv: header must be 'id,title,category,file'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 4) {
      throw CorpusError("manifest.csv line " + std::to_string(line_no) + ": expected 4 fields");
    }
    Story story;
    story.id = fields[0];
    story.title = fields[1];
    story.category = parse_category(fields[2]);
    if (!fields[3].empty()) {
      const auto body = dir / fields[3];
      if (!std::filesystem::exists(body)) {
        throw CorpusError("story '" + story.id + "': missing text file '" + body.string() + "'");
      }
      story.text = strip_trailing_newlines(read_file(body));
    }
    stories.push_back(std::move(story));
  }
  if (!header_seen) throw CorpusError("manifest.csv is empty");
  return Corpus(std::move(stories));
}

bool Corpus::contains(std::string_view id) const {
  return std::any_of(stories_.begin(), stories_.end(), [&](const Story& s) { return s.id == id; });
}

const Story& Corpus::at(std::string_view id) const {
  for (const Story& s : stories_) {
    if (s.id == id) return s;
  }
  throw CorpusError("unknown story id '" + std::string(id) + "'");
}

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  out.reserve(stories_.size());
  for (const Story& s : stories_) out.push_back(s.id);
  return out;
}

std::size_t Corpus::count(StoryCategory category) const {
  return static_cast<std::size_t>(std::count_if(
      stories_.begin(), stories_.end(), [&](const Story& s) { return s.category == category; }));
}

std::uint64_t Corpus::content_hash() const {
  std::string buf;
  for (const Story& s : stories_) {
    buf += s.id;
    buf += '\0';
    buf += to_string(s.category);
    buf += '\0';
    buf += s.text;
    buf += '\0';
  }
  return fnv1a64(buf);
}

StoryAssignment assign_stories(const Corpus& corpus, const AssignmentMode& mode, int num_agents,
                               Rng& rng) {
  if (num_agents < 1) throw std::invalid_argument("assign_stories: num_agents must be >= 1");
  StoryAssignment out;
  out.mode = mode;
  const auto n = static_cast<std::size_t>(num_agents);
  if (const auto* homo = std::get_if<Homogeneous>(&mode)) {
    corpus.at(homo->story_id);
    out.story_ids.assign(n, homo->story_id);
    return out;
  }
  const auto& het = std::get<Heterogeneous>(mode);
  if (corpus.size() == 0) throw CorpusError("cannot draw stories from an empty corpus");
  std::vector<std::string> pool = corpus.ids();
  if (het.with_replacement) {
    for (std::size_t i = 0; i < n; ++i) out.story_ids.push_back(pool[uniform_index(rng, pool.size())]);
    return out;
  }
  if (n > pool.size()) {
    throw CorpusError("cannot draw " + std::to_string(n) + " distinct stories from a pool of " +
                      std::to_string(pool.size()));
  }
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
    out.story_ids.push_back(pool[i]);
  }
  return out;
}

}  // namespace pgg
