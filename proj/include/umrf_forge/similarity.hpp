#pragma once

// Embedding-based similarity between prompts and a reference corpus, plus
// Pearson correlation of similarity against score. The built-in offline
// embedder is a hashed bag-of-words (dim 384, L2-normalized) so the whole
// analysis runs without a network; a remote embedder reuses the completion
// provider's config, rate limiting and cache.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "umrf_forge/bleu.hpp"
#include "umrf_forge/detail/sha256.hpp"
#include "umrf_forge/errors.hpp"
#include "umrf_forge/io.hpp"
#include "umrf_forge/provider.hpp"

namespace umrf_forge {

struct EmbeddingVector {
  std::vector<double> values;
  int dim = 0;
  std::string provider_id;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingVector embed(const std::string& text) = 0;
  virtual std::string id() const = 0;
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

// Token counts hashed into a fixed number of buckets, L2-normalized.
// Deterministic and dependency-free; good enough to exercise the analysis
// pipeline offline.
class HashEmbedder : public EmbeddingProvider {
 public:
  static constexpr int kDim = 384;

  std::string id() const override { return "hashed-bow-384"; }

  EmbeddingVector embed(const std::string& text) override {
    TokenSequence tokens = tokenize(text);
    if (tokens.empty())
      throw Error(Errc::argument, "cannot embed empty text (zero information)");
    EmbeddingVector v;
    v.dim = kDim;
    v.provider_id = id();
    v.values.assign(kDim, 0.0);
    for (const auto& t : tokens.tokens)
      v.values[detail::fnv1a64(t) % kDim] += 1.0;
    double norm = 0.0;
    for (double x : v.values) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v.values) x /= norm;
    return v;
  }
};

// POSTs {model, input} to {base_url}/embeddings. Shares ProviderConfig
// semantics with the completion client: token-bucket rate limit, backoff
// retries, and an optional on-disk cache keyed by (model, text).
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(ProviderConfig cfg, std::string model_id,
                        std::filesystem::path cache_dir = {})
      : cfg_(std::move(cfg)),
        model_id_(std::move(model_id)),
        cache_dir_(std::move(cache_dir)),
        limiter_(cfg_.requests_per_minute) {
    if (!cache_dir_.empty()) std::filesystem::create_directories(cache_dir_);
  }

  std::string id() const override { return "http:" + model_id_; }

  EmbeddingVector embed(const std::string& text) override {
    if (cfg_.credential.empty())
      throw Error(Errc::config, std::string("no API credential: set ") + kApiKeyEnvVar);
    if (text.empty()) throw Error(Errc::argument, "cannot embed empty text");

    std::filesystem::path entry;
    if (!cache_dir_.empty()) {
      entry = cache_dir_ / ("emb-" + detail::sha256_hex(model_id_ + "\x1f" + text) + ".json");
      if (std::filesystem::exists(entry)) {
        try {
          return from_json(Json::parse(read_file(entry)));
        } catch (const std::exception&) {
          // corrupt entry: refetch and overwrite
        }
      }
    }

    auto url = detail::parse_base_url(cfg_.base_url);
    Json body = Json::object();
    body["model"] = model_id_;
    body["input"] = text;
    const std::string payload = body.dump();

    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(std::chrono::duration<double>(
            cfg_.backoff_base_seconds * std::pow(2.0, attempt - 1)));
      limiter_.acquire();
      httplib::Client client(url.origin);
      httplib::Headers headers{{"Authorization", "Bearer " + cfg_.credential}};
      auto res = client.Post(url.path_prefix + "/embeddings", headers, payload,
                             "application/json");
      if (!res || res->status == 429 || res->status >= 500) continue;
      if (res->status >= 400)
        throw Error(Errc::provider, "embedding request rejected with HTTP " +
                                        std::to_string(res->status) + ": " +
                                        res->body.substr(0, 200));
      Json reply = Json::parse(res->body);
      if (!reply.contains("data") || reply["data"].empty() ||
          !reply["data"][0].contains("embedding"))
        throw Error(Errc::provider, "embedding response missing data[0].embedding");
      EmbeddingVector v;
      v.provider_id = id();
      for (const auto& x : reply["data"][0]["embedding"])
        v.values.push_back(x.get<double>());
      v.dim = static_cast<int>(v.values.size());
      if (!entry.empty()) write_file_atomic(entry, to_json(v).dump());
      return v;
    }
    throw Error(Errc::provider, "embedding provider unavailable after retries");
  }

 private:
  static Json to_json(const EmbeddingVector& v) {
    Json j = Json::object();
    j["provider_id"] = v.provider_id;
    j["values"] = v.values;
    return j;
  }
  EmbeddingVector from_json(const Json& j) const {
    EmbeddingVector v;
    v.provider_id = j.at("provider_id").get<std::string>();
    v.values = j.at("values").get<std::vector<double>>();
    v.dim = static_cast<int>(v.values.size());
    return v;
  }

  ProviderConfig cfg_;
  std::string model_id_;
  std::filesystem::path cache_dir_;
  detail::RateLimiter limiter_;
};

inline EmbeddingVector embed(const std::string& text, EmbeddingProvider& provider) {
  return provider.embed(text);
}

inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dim != v.dim)
    throw Error(Errc::argument, "dimension mismatch: " + std::to_string(u.dim) + " vs " +
                                    std::to_string(v.dim));
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (int i = 0; i < u.dim; ++i) {
    dot += u.values[i] * v.values[i];
    nu += u.values[i] * u.values[i];
    nv += v.values[i] * v.values[i];
  }
  if (nu == 0.0 || nv == 0.0) throw Error(Errc::argument, "cosine of a zero vector");
  double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

struct SimilarityRecord {
  int prompt_index = 0;
  double max_similarity = 0.0;
  double mean_similarity = 0.0;
  double score = 0.0;  // the prompt's average BLEU
};

inline std::vector<SimilarityRecord> similarity_report(
    const std::vector<std::pair<std::string, double>>& prompts,
    const std::vector<std::string>& corpus, EmbeddingProvider& provider) {
  if (corpus.empty()) throw Error(Errc::argument, "similarity corpus is empty");
  std::vector<EmbeddingVector> corpus_vecs;
  corpus_vecs.reserve(corpus.size());
  for (const auto& doc : corpus) corpus_vecs.push_back(provider.embed(doc));

  std::vector<SimilarityRecord> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    EmbeddingVector pv = provider.embed(prompts[i].first);
    SimilarityRecord rec;
    rec.prompt_index = static_cast<int>(i);
    rec.score = prompts[i].second;
    double sum = 0.0, best = -1.0;
    for (const auto& cv : corpus_vecs) {
      double c = cosine(pv, cv);
      sum += c;
      if (c > best) best = c;
    }
    rec.max_similarity = best;
    rec.mean_similarity = sum / static_cast<double>(corpus_vecs.size());
    out.push_back(rec);
  }
  return out;
}

// Sample Pearson correlation. Undefined for constant series — that is an
// error, not a zero.
inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size())
    throw Error(Errc::argument, "pearson needs equal-length series");
  if (xs.size() < 3) throw Error(Errc::argument, "pearson needs at least 3 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(ys.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw Error(Errc::correlation, "correlation undefined for a constant series");
  double r = sxy / std::sqrt(sxx * syy);
  if (r > 1.0) r = 1.0;
  if (r < -1.0) r = -1.0;
  return r;
}

// Frozen CSV: prompt_index,max_sim,mean_sim,score.
inline std::string similarity_csv(const std::vector<SimilarityRecord>& records) {
  std::string out = "prompt_index,max_sim,mean_sim,score\n";
  for (const auto& r : records) {
    out += std::to_string(r.prompt_index);
    out += ',';
    out += format_double(r.max_similarity);
    out += ',';
    out += format_double(r.mean_similarity);
    out += ',';
    out += format_double(r.score);
    out += '\n';
  }
  return out;
}

inline Json similarity_summary_json(const std::vector<SimilarityRecord>& records,
                                    const std::string& provider_id) {
  std::vector<double> max_sims, mean_sims, scores;
  for (const auto& r : records) {
    max_sims.push_back(r.max_similarity);
    mean_sims.push_back(r.mean_similarity);
    scores.push_back(r.score);
  }
  Json j = Json::object();
  j["count"] = records.size();
  j["embedding_provider"] = provider_id;
  auto correlate = [&](const std::vector<double>& sims) -> Json {
    try {
      return pearson(sims, scores);
    } catch (const Error&) {
      return nullptr;  // undefined (constant series or too few points)
    }
  };
  j["pearson_max_vs_score"] = correlate(max_sims);
  j["pearson_mean_vs_score"] = correlate(mean_sims);
  return j;
}

}  // namespace umrf_forge
