#include <httplib.h>

#include <chrono>
#include <cmath>
#include <future>
#include <optional>
#include <thread>

#include <spdlog/spdlog.h>

#include "damqa/backend.hpp"
#include "damqa/error.hpp"
#include "damqa/mock_server.hpp"

namespace damqa {

using nlohmann::json;

namespace {

std::chrono::microseconds to_micros(double seconds) {
  return std::chrono::microseconds(static_cast<long long>(std::llround(seconds * 1e6)));
}

bool is_retryable_status(int status) {
  return status == 502 || status == 503 || status == 504;
}

}  // namespace

HttpBackend::HttpBackend(BackendEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  endpoint_.validate();
  const auto& url = endpoint_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw InvalidInputError("backend base_url must start with http:// : " + url);
  }
  if (url.compare(0, scheme_end, "http") != 0) {
    throw InvalidInputError("only plain http backends are supported: " + url);
  }
  const auto path_begin = url.find('/', scheme_end + 3);
  host_ = url.substr(0, path_begin);
  if (path_begin != std::string::npos) {
    prefix_ = url.substr(path_begin);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
}

std::string HttpBackend::post_with_retries(std::string_view path, const std::string& body,
                                           std::string_view field) {
  const std::string target = prefix_ + std::string(path);
  const auto deadline = to_micros(endpoint_.timeout_seconds);
  std::string last_error;

  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double backoff = endpoint_.retry_backoff_seconds * std::pow(2.0, attempt - 1);
      spdlog::debug("retrying {} in {:.2f}s after: {}", target, backoff, last_error);
      std::this_thread::sleep_for(to_micros(backoff));
    }

    httplib::Client client(host_);
    client.set_connection_timeout(deadline);
    client.set_read_timeout(deadline);
    client.set_write_timeout(deadline);

    auto pending = std::async(std::launch::async, [&] {
      return client.Post(target, body, "application/json");
    });
    if (pending.wait_for(deadline) == std::future_status::timeout) {
      client.stop();
      pending.wait();
      last_error = "request exceeded " + std::to_string(endpoint_.timeout_seconds) + "s";
      continue;
    }
    const auto result = pending.get();
    if (!result) {
      last_error = httplib::to_string(result.error());
      continue;
    }
    if (result->status == 200) {
      return parse_response_field(result->body, field);
    }
    if (is_retryable_status(result->status)) {
      last_error = "HTTP " + std::to_string(result->status);
      continue;
    }
    throw ProtocolError("HTTP " + std::to_string(result->status) + " from " + target + ": " +
                        result->body);
  }
  throw BackendUnavailableError("backend " + endpoint_.base_url + " unavailable after " +
                                std::to_string(endpoint_.max_retries + 1) +
                                " attempt(s): " + last_error);
}

std::string HttpBackend::infer(const InferRequest& request) {
  const auto body = make_infer_body(request.view, request.prompt, request.params).dump();
  return post_with_retries(kInferPath, body, "answer");
}

std::string HttpBackend::complete(const CompleteRequest& request) {
  const auto body = make_complete_body(request.prompt, request.params).dump();
  return post_with_retries(kCompletePath, body, "text");
}

void HttpBackend::probe() {
  httplib::Client client(host_);
  const auto deadline = to_micros(std::min(endpoint_.timeout_seconds, 10.0));
  client.set_connection_timeout(deadline);
  client.set_read_timeout(deadline);
  // Any HTTP status proves the server is listening.
  if (const auto result = client.Get(prefix_ + "/"); !result) {
    throw BackendUnavailableError("backend " + endpoint_.base_url +
                                  " is not reachable: " + httplib::to_string(result.error()));
  }
}

// ---------------------------------------------------------------------------

MockServer::MockServer(MockBackend& backend)
    : backend_(backend), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

MockServer::~MockServer() { stop(); }

void MockServer::install_routes() {
  auto reply_json = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };

  auto handle = [this, reply_json](const httplib::Request& req, httplib::Response& res,
                                   bool is_infer) {
    {
      std::lock_guard lock(mutex_);
      ++requests_;
      if (!canned_.empty()) {
        auto [status, body] = std::move(canned_.front());
        canned_.pop_front();
        res.status = status;
        res.set_content(body, "application/json");
        return;
      }
    }
    const auto body = json::parse(req.body, nullptr, /*allow_exceptions=*/false);
    if (body.is_discarded()) {
      reply_json(res, 400, {{"error", "body is not valid JSON"}});
      return;
    }
    try {
      if (is_infer) {
        const auto decoded = decode_infer_body(body);
        reply_json(res, 200, {{"answer", backend_.infer_by_digest(decoded.image, decoded.prompt)}});
      } else {
        const auto decoded = decode_complete_body(body);
        reply_json(res, 200, {{"text", backend_.complete_by_prompt(decoded.prompt)}});
      }
    } catch (const ProtocolError& e) {
      reply_json(res, 400, {{"error", e.what()}});
    } catch (const BackendUnavailableError& e) {
      reply_json(res, 503, {{"error", e.what()}});
    }
  };

  server_->Post(std::string(kInferPath), [handle](const httplib::Request& req,
                                                  httplib::Response& res) { handle(req, res, true); });
  server_->Post(std::string(kCompletePath),
                [handle](const httplib::Request& req, httplib::Response& res) {
                  handle(req, res, false);
                });
}

int MockServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    throw Error("mock server could not bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void MockServer::serve(const std::string& host, int port) {
  if (!server_->listen(host, port)) {
    throw Error("mock server could not listen on " + host + ":" + std::to_string(port));
  }
}

void MockServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void MockServer::push_reply(int status, std::string body) {
  std::lock_guard lock(mutex_);
  canned_.emplace_back(status, std::move(body));
}

std::size_t MockServer::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

}  // namespace damqa
