#pragma once

#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "damqa/backend.hpp"

namespace httplib {
class Server;
}

namespace damqa {

/// Serves /v1/infer and /v1/complete from a MockBackend using digest
/// lookup, so the HTTP client can be exercised without a model. Schema
/// violations answer 400; lookups the fixture cannot satisfy answer 503.
class MockServer {
 public:
  explicit MockServer(MockBackend& backend);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  void serve(const std::string& host, int port);
  void stop();

  /// Queues a canned reply that pre-empts the next request on any endpoint.
  void push_reply(int status, std::string body);

  std::size_t requests() const;

 private:
  void install_routes();

  MockBackend& backend_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::deque<std::pair<int, std::string>> canned_;
  std::size_t requests_ = 0;
};

}  // namespace damqa
