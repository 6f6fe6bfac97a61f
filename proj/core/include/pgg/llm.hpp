#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pgg/corpus.hpp"
#include "pgg/game.hpp"

namespace pgg {

// ---------------------------------------------------------------------------
// Prompts

// The canonical bedtime-story priming sentence; {story} is replaced by the
// story body.
inline constexpr std::string_view kPrimingTemplate =
    "Your behavior is influenced by the following bedtime story your mother read to you every "
    "night: {story}";

// Named prompt fragments loaded from a versioned prompt file (see
// core/prompts/rules_v1.txt for the format).
class PromptSet {
 public:
  // The prompt file compiled into the library.
  static const PromptSet& builtin();
  static PromptSet load(const std::filesystem::path& path);
  static PromptSet parse(std::string_view text);

  const std::string& version() const { return version_; }
  const std::string& section(std::string_view name) const;  // throws std::out_of_range

 private:
  std::string version_;
  std::map<std::string, std::string, std::less<>> sections_;
};

// Whether per-round feedback reveals only totals or every seat's contribution.
enum class RevealMode { Totals, Full };
RevealMode parse_reveal(std::string_view text);
std::string_view to_string(RevealMode mode);

// Token amounts for prompts: exact decimals, else two decimal places.
std::string format_tokens(const Rational& amount);

// Rules with N, R, T, m instantiated, followed by the condition-specific part:
// nothing for the no-instruction baseline, a self-interest directive for the
// max-reward baseline, the priming sentence with the story text otherwise.
std::string build_system_prompt(const GameConfig& config, const Story& story,
                                const PromptSet& prompts = PromptSet::builtin());

// Round 1 only asks; later rounds first report the previous group total and
// own payoff. The last round carries no endgame hint.
std::string build_round_prompt(const Observation& obs, RevealMode reveal = RevealMode::Totals,
                               const PromptSet& prompts = PromptSet::builtin());

std::string build_reminder_prompt(const Observation& obs,
                                  const PromptSet& prompts = PromptSet::builtin());

// ---------------------------------------------------------------------------
// Transcript

enum class Role { System, User, Assistant };
std::string_view to_string(Role role);

struct ChatMessage {
  Role role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

// One system message first, then strictly alternating user/assistant turns.
// Appends that would break the shape throw std::logic_error.
class ChatTranscript {
 public:
  ChatTranscript() = default;
  explicit ChatTranscript(std::string system_prompt);

  void add_user(std::string content);
  void add_assistant(std::string content);

  const std::vector<ChatMessage>& messages() const { return messages_; }
  bool awaiting_reply() const { return !messages_.empty() && messages_.back().role == Role::User; }

  static bool well_formed(const std::vector<ChatMessage>& messages);

 private:
  std::vector<ChatMessage> messages_;
};

// ---------------------------------------------------------------------------
// Parsing

enum class ParseFailure { NoInteger, NotInteger, OutOfRange };
std::string_view to_string(ParseFailure failure);

struct ParsedContribution {
  std::optional<Tokens> value;
  ParseFailure failure = ParseFailure::NoInteger;  // meaningful when !value
  std::string literal;                             // the number that was selected

  bool ok() const { return value.has_value(); }
};

// Selects the first number after the first "contribut" (case-insensitive) if
// there is one, else the first number in the text. The selection must be an
// integer in [0, endowment]; nothing is ever clamped.
ParsedContribution parse_contribution(std::string_view text, Tokens endowment);

// ---------------------------------------------------------------------------
// Endpoint

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model_id = "meta-llama-3.1-70b-instruct-fp8";
  double temperature = 0.6;
  std::chrono::milliseconds request_timeout{120'000};
  int max_parse_retries = 3;
  int max_transport_retries = 3;
  std::chrono::milliseconds backoff_initial{250};  // doubles per retry
  std::string auth_token_env = "OPENAI_API_KEY";
  int max_in_flight = 8;

  void validate() const;  // throws std::invalid_argument
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON body of POST {base_url}/v1/chat/completions.
std::string chat_request_body(const EndpointConfig& endpoint, const ChatTranscript& transcript);

// Extracts choices[0].message.content; throws TransportError when malformed.
std::string extract_completion(std::string_view response_body);

// OpenAI-compatible chat-completion client. Thread-safe; the in-flight
// semaphore is shared by every copy of the returned shared_ptr.
class ChatClient {
 public:
  explicit ChatClient(EndpointConfig endpoint);

  const EndpointConfig& endpoint() const { return endpoint_; }

  // Retries connection failures, timeouts, 429 and 5xx up to
  // max_transport_retries times with exponential backoff. Throws
  // TransportError once they are exhausted or on a non-retryable failure.
  std::string complete(const ChatTranscript& transcript);

  std::uint64_t http_requests() const { return http_requests_.load(); }

 private:
  EndpointConfig endpoint_;
  std::string auth_token_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  std::atomic<std::uint64_t> http_requests_{0};
};

// One-shot convenience over ChatClient.
std::string request_completion(const EndpointConfig& endpoint, const ChatTranscript& transcript);

// A game seat played by a model. Keeps one private transcript; the rules and
// story are sent once as the system message.
class LlmAgent final : public DecisionPolicy {
 public:
  LlmAgent(std::shared_ptr<ChatClient> client, std::string system_prompt,
           RevealMode reveal = RevealMode::Totals,
           const PromptSet& prompts = PromptSet::builtin());

  // Throws AgentFailure when the endpoint fails or no valid integer arrives
  // within max_parse_retries reprompts.
  Tokens decide(const Observation& obs, Rng& rng) override;
  std::string spec() const override;
  std::uint64_t requests() const override { return requests_; }

  const ChatTranscript& transcript() const { return transcript_; }

 private:
  std::shared_ptr<ChatClient> client_;
  ChatTranscript transcript_;
  RevealMode reveal_;
  PromptSet prompts_;
  std::uint64_t requests_ = 0;
};

}  // namespace pgg
