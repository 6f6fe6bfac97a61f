#include "pgg/llm.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace pgg {
namespace {

struct NumberToken {
  std::size_t begin = 0;
  std::string_view literal;
  bool fractional = false;
};

std::vector<NumberToken> scan_numbers(std::string_view text) {
  std::vector<NumberToken> out;
  const auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_digit(text[i])) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    // A '-' directly before the digits is a sign unless it joins two words or
    // numbers ("3-5").
    if (begin > 0 && text[begin - 1] == '-' &&
        (begin == 1 || !std::isalnum(static_cast<unsigned char>(text[begin - 2])))) {
      --begin;
    }
    while (i < text.size() && is_digit(text[i])) ++i;
    bool fractional = false;
    if (i + 1 < text.size() && text[i] == '.' && is_digit(text[i + 1])) {
      fractional = true;
      ++i;
      while (i < text.size() && is_digit(text[i])) ++i;
    }
    out.push_back({begin, text.substr(begin, i - begin), fractional});
  }
  return out;
}

std::size_t find_contribut(std::string_view text) {
  constexpr std::string_view key = "contribut";
  if (text.size() < key.size()) return std::string_view::npos;
  for (std::size_t i = 0; i + key.size() <= text.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < key.size() && match; ++k) {
      match = std::tolower(static_cast<unsigned char>(text[i + k])) == key[k];
    }
    if (match) return i;
  }
  return std::string_view::npos;
}

struct UrlParts {
  std::string scheme_host_port;
  std::string path_prefix;
};

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_begin = url.find('/', host_begin);
  UrlParts parts;
  parts.scheme_host_port = url.substr(0, path_begin);
  if (path_begin != std::string::npos) parts.path_prefix = url.substr(path_begin);
  while (!parts.path_prefix.empty() && parts.path_prefix.back() == '/') parts.path_prefix.pop_back();
  return parts;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

ChatTranscript::ChatTranscript(std::string system_prompt) {
  messages_.push_back({Role::System, std::move(system_prompt)});
}

void ChatTranscript::add_user(std::string content) {
  if (messages_.empty() || messages_.back().role == Role::User) {
    throw std::logic_error("transcript: user message must follow the system prompt or a reply");
  }
  messages_.push_back({Role::User, std::move(content)});
}

void ChatTranscript::add_assistant(std::string content) {
  if (messages_.empty() || messages_.back().role != Role::User) {
    throw std::logic_error("transcript: assistant reply must follow a user message");
  }
  messages_.push_back({Role::Assistant, std::move(content)});
}

bool ChatTranscript::well_formed(const std::vector<ChatMessage>& messages) {
  if (messages.empty() || messages.front().role != Role::System) return false;
  for (std::size_t i = 1; i < messages.size(); ++i) {
    const Role expected = (i % 2 == 1) ? Role::User : Role::Assistant;
    if (messages[i].role != expected) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ParseFailure failure) {
  switch (failure) {
    case ParseFailure::NoInteger: return "no integer found";
    case ParseFailure::NotInteger: return "number is not an integer";
    case ParseFailure::OutOfRange: return "integer out of range";
  }
  return "unknown";
}

ParsedContribution parse_contribution(std::string_view text, Tokens endowment) {
  ParsedContribution out;
  const auto numbers = scan_numbers(text);
  if (numbers.empty()) {
    out.failure = ParseFailure::NoInteger;
    return out;
  }
  const NumberToken* chosen = &numbers.front();
  if (const auto anchor = find_contribut(text); anchor != std::string_view::npos) {
    for (const auto& n : numbers) {
      if (n.begin >= anchor) {
        chosen = &n;
        break;
      }
    }
  }
  out.literal = std::string(chosen->literal);
  if (chosen->fractional) {
    out.failure = ParseFailure::NotInteger;
    return out;
  }
  long long value = 0;
  const auto [ptr, ec] =
      std::from_chars(chosen->literal.data(), chosen->literal.data() + chosen->literal.size(), value);
  if (ec != std::errc{} || value < 0 || value > endowment) {
    out.failure = ParseFailure::OutOfRange;
    return out;
  }
  out.value = static_cast<Tokens>(value);
  return out;
}

// ---------------------------------------------------------------------------

void EndpointConfig::validate() const {
  if (base_url.empty()) throw std::invalid_argument("endpoint base_url is empty");
  if (model_id.empty()) throw std::invalid_argument("endpoint model is empty");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (max_parse_retries < 0 || max_transport_retries < 0) {
    throw std::invalid_argument("retry counts must be >= 0");
  }
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  if (request_timeout.count() <= 0) throw std::invalid_argument("request_timeout must be > 0");
}

std::string chat_request_body(const EndpointConfig& endpoint, const ChatTranscript& transcript) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : transcript.messages()) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  nlohmann::json body = {
      {"model", endpoint.model_id}, {"messages", messages}, {"temperature", endpoint.temperature}};
  return body.dump();
}

std::string extract_completion(std::string_view response_body) {
  const auto doc = nlohmann::json::parse(response_body, nullptr, false);
  if (doc.is_discarded()) throw TransportError("response body is not JSON");
  const auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) {
    throw TransportError("response has no choices");
  }
  const auto& first = (*choices)[0];
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    throw TransportError("response choice has no message content");
  }
  return first["message"]["content"].get<std::string>();
}

ChatClient::ChatClient(EndpointConfig endpoint) : endpoint_(std::move(endpoint)) {
  endpoint_.validate();
  if (!endpoint_.auth_token_env.empty()) {
    if (const char* token = std::getenv(endpoint_.auth_token_env.c_str())) auth_token_ = token;
  }
  in_flight_ = std::make_unique<std::counting_semaphore<>>(endpoint_.max_in_flight);
}

std::string ChatClient::complete(const ChatTranscript& transcript) {
  const UrlParts url = split_url(endpoint_.base_url);
  const std::string path = url.path_prefix + "/v1/chat/completions";
  const std::string body = chat_request_body(endpoint_, transcript);

  std::string last_error;
  auto backoff = endpoint_.backoff_initial;
  for (int attempt = 0; attempt <= endpoint_.max_transport_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Result result{nullptr, httplib::Error::Unknown};
    {
      in_flight_->acquire();
      try {
        httplib::Client http(url.scheme_host_port);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.request_timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
            endpoint_.request_timeout - secs);
        http.set_connection_timeout(secs.count(), usecs.count());
        http.set_read_timeout(secs.count(), usecs.count());
        http.set_write_timeout(secs.count(), usecs.count());
        if (!auth_token_.empty()) http.set_bearer_token_auth(auth_token_);
        ++http_requests_;
        result = http.Post(path, body, "application/json");
      } catch (...) {
        in_flight_->release();
        throw;
      }
      in_flight_->release();
    }

    if (!result) {
      last_error = "request to " + endpoint_.base_url + " failed: " + httplib::to_string(result.error());
      continue;
    }
    const int status = result->status;
    if (status == 429 || status >= 500) {
      last_error = "endpoint returned status " + std::to_string(status);
      continue;
    }
    if (status < 200 || status >= 300) {
      throw TransportError("endpoint returned status " + std::to_string(status) + ": " +
                           result->body.substr(0, 200));
    }
    try {
      return extract_completion(result->body);
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw TransportError(last_error + " (after " + std::to_string(endpoint_.max_transport_retries) +
                       " retries)");
}

std::string request_completion(const EndpointConfig& endpoint, const ChatTranscript& transcript) {
  ChatClient client(endpoint);
  return client.complete(transcript);
}

// ---------------------------------------------------------------------------

LlmAgent::LlmAgent(std::shared_ptr<ChatClient> client, std::string system_prompt, RevealMode reveal,
                   const PromptSet& prompts)
    : client_(std::move(client)),
      transcript_(std::move(system_prompt)),
      reveal_(reveal),
      prompts_(prompts) {
  if (!client_) throw std::invalid_argument("LlmAgent needs a client");
}

std::string LlmAgent::spec() const { return "llm:" + client_->endpoint().model_id; }

Tokens LlmAgent::decide(const Observation& obs, Rng&) {
  transcript_.add_user(build_round_prompt(obs, reveal_, prompts_));
  const int max_reprompts = client_->endpoint().max_parse_retries;
  for (int attempt = 0;; ++attempt) {
    std::string reply;
    try {
      ++requests_;
      reply = client_->complete(transcript_);
    } catch (const TransportError& e) {
      throw AgentFailure(std::string("transport: ") + e.what());
    }
    transcript_.add_assistant(reply);
    const ParsedContribution parsed = parse_contribution(reply, obs.endowment);
    if (parsed.ok()) return *parsed.value;
    if (attempt >= max_reprompts) {
      throw AgentFailure("unparsable: " + std::string(to_string(parsed.failure)) + " in round " +
                         std::to_string(obs.round_index) + " after " + std::to_string(max_reprompts) +
                         " reprompts");
    }
    transcript_.add_user(build_reminder_prompt(obs, prompts_));
  }
}

}  // namespace pgg
