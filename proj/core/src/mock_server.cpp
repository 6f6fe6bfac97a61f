#include "pgg/mock_server.hpp"

#include <fstream>
#include <stdexcept>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace pgg {
namespace {

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == 'n') {
      out += '\n';
      ++i;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::string completion_body(const std::string& content) {
  nlohmann::json body = {
      {"id", "mock"},
      {"object", "chat.completion"},
      {"choices",
       {{{"index", 0},
         {"message", {{"role", "assistant"}, {"content", content}}},
         {"finish_reason", "stop"}}}}};
  return body.dump();
}

}  // namespace

Playlist::Playlist(std::vector<MockReply> replies) : replies_(std::move(replies)) {
  if (replies_.empty()) throw std::invalid_argument("playlist is empty");
}

Playlist Playlist::from_lines(const std::vector<std::string>& lines) {
  std::vector<MockReply> replies;
  for (std::string line : lines) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    MockReply reply;
    if (line.rfind("!status ", 0) == 0) {
      reply.status = std::stoi(line.substr(8));
    } else if (line == "!malformed") {
      reply.malformed = true;
    } else {
      reply.content = unescape(line);
    }
    replies.push_back(std::move(reply));
  }
  return Playlist(std::move(replies));
}

Playlist Playlist::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open playlist '" + path.string() + "'");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return from_lines(lines);
}

MockReply Playlist::next() {
  if (replies_.empty()) throw std::logic_error("playlist is empty");
  const MockReply& reply = replies_[std::min(cursor_, replies_.size() - 1)];
  if (cursor_ < replies_.size()) ++cursor_;
  return reply;
}

struct MockServer::Impl {
  httplib::Server server;
  Playlist playlist;
  std::string last_authorization;
  mutable std::mutex mutex;
};

MockServer::MockServer(Playlist playlist, std::string host)
    : impl_(std::make_unique<Impl>()), host_(std::move(host)) {
  impl_->playlist = std::move(playlist);
  impl_->server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
    ++requests_;
    const auto request = nlohmann::json::parse(req.body, nullptr, false);
    if (request.is_discarded() || !request.contains("messages") || !request["messages"].is_array()) {
      res.status = 400;
      res.set_content(R"({"error":"bad request"})", "application/json");
      return;
    }
    MockReply reply;
    {
      std::lock_guard lock(impl_->mutex);
      impl_->last_authorization = req.get_header_value("Authorization");
      reply = impl_->playlist.next();
    }
    res.status = reply.status;
    if (reply.status != 200) {
      res.set_content(R"({"error":"scripted failure"})", "application/json");
    } else if (reply.malformed) {
      res.set_content("this is not a completion", "text/plain");
    } else {
      res.set_content(completion_body(reply.content), "application/json");
    }
  });
}

MockServer::~MockServer() { stop(); }

void MockServer::start(int port) {
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host_);
  } else if (impl_->server.bind_to_port(host_, port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw std::runtime_error("mock server: cannot bind " + host_);
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void MockServer::serve(int port) {
  if (!impl_->server.bind_to_port(host_, port)) {
    throw std::runtime_error("mock server: cannot bind " + host_ + ":" + std::to_string(port));
  }
  port_ = port;
  impl_->server.listen_after_bind();
}

void MockServer::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockServer::last_authorization() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->last_authorization;
}

std::string MockServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace pgg
