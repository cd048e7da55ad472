#pragma once

// In-process completions stub for provider tests: scripted status sequences
// and request timestamps for rate-limit checks.

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace teststub {

class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit StubServer(Handler handler, const std::string& route = "/completions")
      : handler_(std::move(handler)) {
    server_.Post(route, [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard<std::mutex> lock(mutex_);
        request_times_.push_back(std::chrono::steady_clock::now());
        bodies_.push_back(req.body);
      }
      handler_(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this]() { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::vector<std::chrono::steady_clock::time_point> request_times() {
    std::lock_guard<std::mutex> lock(mutex_);
    return request_times_;
  }

  std::size_t request_count() {
    std::lock_guard<std::mutex> lock(mutex_);
    return request_times_.size();
  }

  std::vector<std::string> bodies() {
    std::lock_guard<std::mutex> lock(mutex_);
    return bodies_;
  }

  // canned OK body in the completions shape
  static std::string ok_body(const std::string& text, const std::string& finish = "stop") {
    nlohmann::ordered_json j;
    j["choices"] = nlohmann::ordered_json::array();
    j["choices"].push_back({{"text", text}, {"finish_reason", finish}});
    return j.dump();
  }

 private:
  httplib::Server server_;
  Handler handler_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mutex_;
  std::vector<std::chrono::steady_clock::time_point> request_times_;
  std::vector<std::string> bodies_;
};

}  // namespace teststub
