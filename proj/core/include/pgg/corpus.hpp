#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pgg/random.hpp"

namespace pgg {

enum class StoryCategory { Cooperative, BaselineNoInstruct, BaselineMaxReward, BaselineNonsense };

std::string_view to_string(StoryCategory category);
StoryCategory parse_category(std::string_view text);
inline bool is_baseline(StoryCategory c) { return c != StoryCategory::Cooperative; }

struct Story {
  std::string id;
  std::string title;
  StoryCategory category = StoryCategory::Cooperative;
  std::string text;            // empty only for the no-instruction baseline
  std::size_t char_count = 0;  // UTF-8 code points of text

  bool operator==(const Story&) const = default;
};

// Report order: the four baselines, then the eight cooperative narratives.
inline constexpr std::array<std::string_view, 12> kCanonicalStoryOrder = {
    "noinstruct", "nsCarrot", "maxreward", "nsPlumber",  "OldManSons", "Odyssey",
    "Soup",       "Peacemaker", "Musketeers", "Teamwork", "Spoons",     "Turnip"};

// Sort key placing canonical ids first (in report order), then others by id.
std::pair<std::size_t, std::string> story_order_key(std::string_view id);

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Immutable after load; safe for concurrent reads.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Story> stories);  // validates; throws CorpusError

  // Reads <dir>/manifest.csv (header id,title,category,file) and the story
  // bodies it references.
  static Corpus load(const std::filesystem::path& dir);

  // Stories in report order; this is also the draw order for assignments.
  const std::vector<Story>& stories() const { return stories_; }
  std::size_t size() const { return stories_.size(); }
  bool contains(std::string_view id) const;
  const Story& at(std::string_view id) const;  // throws CorpusError
  std::vector<std::string> ids() const;

  std::size_t count(StoryCategory category) const;

  // FNV-1a digest over (id, category, text) in report order; independent of
  // manifest row order.
  std::uint64_t content_hash() const;

  bool operator==(const Corpus&) const = default;

 private:
  std::vector<Story> stories_;
};

struct Homogeneous {
  std::string story_id;
};
struct Heterogeneous {
  bool with_replacement = true;
};
using AssignmentMode = std::variant<Homogeneous, Heterogeneous>;

struct StoryAssignment {
  std::vector<std::string> story_ids;  // one per seat
  AssignmentMode mode;
};

// Homogeneous: the same id for every seat. Heterogeneous: independent uniform
// draws over the whole pool (or a uniform permutation prefix without
// replacement).
StoryAssignment assign_stories(const Corpus& corpus, const AssignmentMode& mode, int num_agents,
                               Rng& rng);

}  // namespace pgg
