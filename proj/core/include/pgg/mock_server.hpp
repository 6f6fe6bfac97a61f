#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace pgg {

// One scripted endpoint reply.
struct MockReply {
  int status = 200;
  std::string content;     // assistant message content
  bool malformed = false;  // 200 with a body that is not a chat completion
};

// Replies served in order; once exhausted the last entry repeats forever.
//
// Playlist file: one reply per line, blank lines and '#' comments ignored.
//   7              reply "7"
//   I give 5\nok   "\n" is unescaped to a newline
//   !status 500    HTTP 500 with an error body
//   !malformed     HTTP 200 whose body is not a completion
class Playlist {
 public:
  Playlist() = default;
  explicit Playlist(std::vector<MockReply> replies);

  static Playlist load(const std::filesystem::path& path);
  static Playlist from_lines(const std::vector<std::string>& lines);

  MockReply next();
  std::size_t size() const { return replies_.size(); }

 private:
  std::vector<MockReply> replies_;
  std::size_t cursor_ = 0;
};

// Loopback OpenAI-compatible endpoint for tests and offline runs. Serves
// POST /v1/chat/completions from a Playlist, one reply per request in
// arrival order.
class MockServer {
 public:
  explicit MockServer(Playlist playlist, std::string host = "127.0.0.1");
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  void start(int port = 0);
  // Binds and serves on the calling thread until stop() is called.
  void serve(int port);
  void stop();

  int port() const { return port_; }
  std::string base_url() const;
  std::uint64_t request_count() const { return requests_.load(); }
  // Authorization header of the most recent well-formed request.
  std::string last_authorization() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  int port_ = 0;
  std::atomic<std::uint64_t> requests_{0};
  std::thread thread_;
};

}  // namespace pgg
