#pragma once

// Completion backends behind one interface: an HTTP client for
// completions-style APIs (retry with exponential backoff, token-bucket rate
// limiting), a deterministic offline mock, and a persistent file cache
// keyed by a request digest. The cache exists because a full permutation
// search is hundreds of slow, paid queries — re-runs must be free.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "umrf_forge/detail/sha256.hpp"
#include "umrf_forge/errors.hpp"
#include "umrf_forge/io.hpp"
#include "umrf_forge/prompt.hpp"
#include "umrf_forge/umrf.hpp"

namespace umrf_forge {

inline constexpr const char* kApiKeyEnvVar = "UMRF_FORGE_API_KEY";
inline constexpr const char* kCacheEnvVar = "UMRF_FORGE_CACHE";

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 1024;
  double temperature = 0.0;
  std::vector<std::string> stop;
  std::string model_id = "text-davinci-003";
};

enum class FinishReason { stop, length, error };

inline const char* finish_reason_name(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "?";
}

struct CompletionResult {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  double latency_seconds = 0.0;
  bool from_cache = false;
  int retries = 0;
  std::string warning;  // non-empty whenever finish_reason == length
};

struct ProviderConfig {
  std::string base_url;
  std::string credential;  // normally from UMRF_FORGE_API_KEY
  double requests_per_minute = 60.0;
  int max_retries = 3;
  double backoff_base_seconds = 0.5;
  int fanout = 2;  // bounded-parallel callers must not exceed this
};

inline ProviderConfig config_from_env(std::string base_url) {
  ProviderConfig cfg;
  cfg.base_url = std::move(base_url);
  if (const char* key = std::getenv(kApiKeyEnvVar)) cfg.credential = key;
  return cfg;
}

// Equal requests hash equally; any field that changes the completion
// changes the digest.
inline std::string cache_key(const CompletionRequest& req) {
  Json j = Json::object();
  j["model"] = req.model_id;
  j["max_tokens"] = req.max_tokens;
  j["temperature"] = req.temperature;
  j["stop"] = req.stop;
  j["prompt"] = req.prompt;
  return detail::sha256_hex(j.dump());
}

class Provider {
 public:
  virtual ~Provider() = default;
  virtual CompletionResult complete(const CompletionRequest& req) = 0;
  virtual std::string name() const = 0;
};

namespace detail {

// Capacity-1 token bucket: enforces a minimum spacing of 60/rpm seconds
// between requests, which bounds any 60 s window at rpm + 1 requests.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute) {
    if (requests_per_minute <= 0)
      throw Error(Errc::config, "requests_per_minute must be > 0");
    interval_ = std::chrono::duration<double>(60.0 / requests_per_minute);
  }

  void acquire() {
    std::chrono::steady_clock::time_point wait_until;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto now = std::chrono::steady_clock::now();
      if (next_slot_ < now) next_slot_ = now;
      wait_until = next_slot_;
      next_slot_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval_);
    }
    std::this_thread::sleep_until(wait_until);
  }

 private:
  std::mutex mutex_;
  std::chrono::duration<double> interval_{1.0};
  std::chrono::steady_clock::time_point next_slot_{};
};

struct ParsedUrl {
  std::string origin;  // scheme://host:port for httplib::Client
  std::string path_prefix;
};

inline ParsedUrl parse_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(Errc::config, "base_url must start with http:// — got: " + base_url);
  auto path_begin = base_url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_begin);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_begin), prefix};
}

}  // namespace detail

// POSTs to {base_url}/completions with an OpenAI-completions-style body.
// 429 and 5xx responses (and transport failures) are retried with
// exponential backoff; other 4xx fail immediately.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(ProviderConfig cfg)
      : cfg_(std::move(cfg)), limiter_(cfg_.requests_per_minute) {}

  std::string name() const override { return "http:" + cfg_.base_url; }

  CompletionResult complete(const CompletionRequest& req) override {
    if (cfg_.credential.empty())
      throw Error(Errc::config, std::string("no API credential: set ") + kApiKeyEnvVar);
    if (req.max_tokens < 1) throw Error(Errc::argument, "max_tokens must be >= 1");

    auto url = detail::parse_base_url(cfg_.base_url);
    Json body = Json::object();
    body["model"] = req.model_id;
    body["prompt"] = req.prompt;
    body["max_tokens"] = req.max_tokens;
    body["temperature"] = req.temperature;
    if (!req.stop.empty()) body["stop"] = req.stop;
    const std::string payload = body.dump();
    const std::string path = url.path_prefix + "/completions";

    auto started = std::chrono::steady_clock::now();
    std::string last_failure = "no attempt made";
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        double delay = cfg_.backoff_base_seconds * std::pow(2.0, attempt - 1);
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      }
      limiter_.acquire();

      httplib::Client client(url.origin);
      client.set_connection_timeout(10, 0);
      client.set_read_timeout(120, 0);
      httplib::Headers headers{{"Authorization", "Bearer " + cfg_.credential}};
      auto res = client.Post(path, headers, payload, "application/json");

      if (!res) {
        last_failure = "transport error: " + httplib::to_string(res.error());
        continue;  // retryable
      }
      if (res->status == 429 || res->status >= 500) {
        last_failure = "HTTP " + std::to_string(res->status);
        continue;  // retryable
      }
      if (res->status >= 400) {
        throw Error(Errc::provider,
                    "request rejected with HTTP " + std::to_string(res->status) + ": " +
                        res->body.substr(0, 200));
      }

      Json reply;
      try {
        reply = Json::parse(res->body);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::provider, std::string("unparseable provider response: ") + e.what());
      }
      if (!reply.contains("choices") || !reply["choices"].is_array() ||
          reply["choices"].empty())
        throw Error(Errc::provider, "provider response has no choices");
      const Json& choice = reply["choices"][0];

      CompletionResult result;
      result.text = choice.value("text", std::string{});
      std::string finish = choice.value("finish_reason", std::string{"stop"});
      result.finish_reason = finish == "length" ? FinishReason::length : FinishReason::stop;
      if (result.finish_reason == FinishReason::length)
        result.warning = "completion truncated at max_tokens=" + std::to_string(req.max_tokens);
      result.retries = attempt;
      result.latency_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      return result;
    }
    throw Error(Errc::provider, "provider unavailable after " +
                                    std::to_string(cfg_.max_retries) +
                                    " retry(ies); last failure: " + last_failure);
  }

 private:
  ProviderConfig cfg_;
  detail::RateLimiter limiter_;
};

// The documented fallback completion: a single scan action.
inline std::string fallback_scan_completion() {
  UmrfGraph g;
  g.graph_name = "scan fallback";
  UmrfNode scan;
  scan.ref = {"scan", 0};
  g.nodes.push_back(scan);
  return serialize_graph(g);
}

// Deterministic offline backend. The fixture maps a suffix of the prompt's
// final query block to a canned completion; the longest matching suffix
// wins, and an unmatched query falls back to a single scan action. Suffix
// matching lets a bare marker key match the full "text [marker]" command.
class MockProvider : public Provider {
 public:
  MockProvider() = default;
  explicit MockProvider(std::map<std::string, std::string> fixture)
      : fixture_(std::move(fixture)) {}

  std::string name() const override { return "mock"; }

  void add(std::string query_suffix, std::string completion) {
    fixture_[std::move(query_suffix)] = std::move(completion);
  }

  CompletionResult complete(const CompletionRequest& req) override {
    const std::string block = final_query_block(req.prompt);
    const std::string* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& [key, value] : fixture_) {
      if (key.size() > block.size() || key.empty()) continue;
      if (block.compare(block.size() - key.size(), key.size(), key) != 0) continue;
      if (key.size() >= best_len) {
        best_len = key.size();
        best = &value;
      }
    }
    CompletionResult result;
    result.text = best ? *best : fallback_scan_completion();
    result.finish_reason = FinishReason::stop;
    return result;
  }

 private:
  std::map<std::string, std::string> fixture_;
};

// Persistent cache wrapper: one JSON file per request digest, so experiment
// artifacts stay inspectable and diffable. Only temperature-0 requests are
// cached — nondeterministic output must not be replayed as truth.
class CachingProvider : public Provider {
 public:
  CachingProvider(std::shared_ptr<Provider> inner, std::filesystem::path cache_dir)
      : inner_(std::move(inner)), dir_(std::move(cache_dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(Errc::io, "cannot create cache dir " + dir_.string());
  }

  std::string name() const override { return inner_->name() + "+cache"; }

  CompletionResult complete(const CompletionRequest& req) override {
    if (req.temperature != 0.0) return inner_->complete(req);

    const auto path = dir_ / (cache_key(req) + ".json");
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (std::filesystem::exists(path)) {
        try {
          return load_entry(path);
        } catch (const std::exception& e) {
          std::cerr << "warning: corrupt cache entry " << path.string() << " (" << e.what()
                    << "), refetching\n";
        }
      }
    }
    CompletionResult result = inner_->complete(req);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      store_entry(path, result);
    }
    return result;
  }

 private:
  static CompletionResult load_entry(const std::filesystem::path& path) {
    Json j = Json::parse(read_file(path));
    CompletionResult r;
    r.text = j.at("text").get<std::string>();
    std::string finish = j.at("finish_reason").get<std::string>();
    r.finish_reason = finish == "length"  ? FinishReason::length
                      : finish == "error" ? FinishReason::error
                                          : FinishReason::stop;
    r.latency_seconds = j.value("latency_seconds", 0.0);
    r.retries = j.value("retries", 0);
    r.warning = j.value("warning", std::string{});
    r.from_cache = true;
    return r;
  }

  static void store_entry(const std::filesystem::path& path, const CompletionResult& r) {
    Json j = Json::object();
    j["text"] = r.text;
    j["finish_reason"] = finish_reason_name(r.finish_reason);
    j["latency_seconds"] = r.latency_seconds;
    j["retries"] = r.retries;
    if (!r.warning.empty()) j["warning"] = r.warning;
    write_file_atomic(path, j.dump(2));
  }

  std::shared_ptr<Provider> inner_;
  std::filesystem::path dir_;
  std::mutex mutex_;
};

// Free-function forms of the three backend operations.

inline CompletionResult complete(const CompletionRequest& req, const ProviderConfig& cfg) {
  HttpProvider provider(cfg);
  return provider.complete(req);
}

inline CompletionResult cached_complete(const CompletionRequest& req, const ProviderConfig& cfg,
                                        const std::filesystem::path& cache_dir) {
  CachingProvider provider(std::make_shared<HttpProvider>(cfg), cache_dir);
  return provider.complete(req);
}

inline CompletionResult mock_complete(const CompletionRequest& req,
                                      const std::map<std::string, std::string>& fixture) {
  MockProvider provider(fixture);
  return provider.complete(req);
}

}  // namespace umrf_forge
