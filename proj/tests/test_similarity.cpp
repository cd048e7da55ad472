#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "umrf_forge/similarity.hpp"

#include "support/stub_server.hpp"
#include "support/temp_dir.hpp"

using namespace umrf_forge;

namespace {

EmbeddingVector vec(std::vector<double> values) {
  EmbeddingVector v;
  v.dim = static_cast<int>(values.size());
  v.values = std::move(values);
  v.provider_id = "fixture";
  return v;
}

// independent FNV-1a, for verifying the documented hashing from outside
std::uint64_t ref_fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

}  // namespace

TEST_CASE("offline embedder: deterministic, unit norm, fixed dimension") {
  HashEmbedder embedder;
  auto a = embedder.embed("navigate to the hall");
  auto b = embedder.embed("navigate to the hall");
  CHECK(a.dim == 384);
  CHECK(a.values == b.values);
  double norm = 0.0;
  for (double x : a.values) norm += x * x;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(embedder.embed(""), Error);
  CHECK_THROWS_AS(embedder.embed("   "), Error);
}

TEST_CASE("disjoint vocabularies embed nearly orthogonally") {
  // verify the two vocabularies collide on no hash bucket first
  std::vector<std::string> left = {"alpha", "beta", "gamma"};
  std::vector<std::string> right = {"delta", "epsilon", "zeta"};
  std::set<std::uint64_t> left_buckets, right_buckets;
  for (const auto& w : left) left_buckets.insert(ref_fnv1a(w) % 384);
  for (const auto& w : right) right_buckets.insert(ref_fnv1a(w) % 384);
  for (auto bucket : left_buckets) REQUIRE(right_buckets.count(bucket) == 0);

  HashEmbedder embedder;
  double c = cosine(embedder.embed("alpha beta gamma"), embedder.embed("delta epsilon zeta"));
  CHECK(std::abs(c) < 0.1);
  CHECK(c == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cosine fixtures") {
  CHECK(cosine(vec({3, 4}), vec({3, 4})) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine(vec({1, 0}), vec({0, 1})) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine(vec({1, 1, 0}), vec({1, 0, 0})) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
  CHECK_THROWS_AS(cosine(vec({1, 0}), vec({1, 0, 0})), Error);
  CHECK_THROWS_AS(cosine(vec({0, 0}), vec({1, 0})), Error);
}

TEST_CASE("cosine symmetry and positive scale invariance") {
  auto u = vec({0.3, -1.2, 4.0, 0.0});
  auto v = vec({2.0, 0.5, -0.25, 1.0});
  CHECK(cosine(u, v) == cosine(v, u));
  auto scaled = u;
  for (double& x : scaled.values) x *= 7.5;
  CHECK(cosine(scaled, v) == doctest::Approx(cosine(u, v)).epsilon(1e-12));
}

TEST_CASE("similarity report: max and mean against the corpus") {
  HashEmbedder embedder;
  std::vector<std::string> corpus = {"navigate the hall", "scan the area"};
  std::vector<std::pair<std::string, double>> prompts = {
      {"navigate the hall", 0.9},       // present verbatim in the corpus
      {"scan the area", 0.5},
      {"unrelated words entirely", 0.1},
  };
  auto records = similarity_report(prompts, corpus, embedder);
  REQUIRE(records.size() == 3);
  CHECK(records[0].max_similarity == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(records[0].score == 0.9);
  for (const auto& rec : records) CHECK(rec.max_similarity >= rec.mean_similarity);

  // brute-force check with independently computed bag-of-words cosines
  auto counts = [&](const std::string& text) {
    std::map<std::uint64_t, double> m;
    for (const auto& tok : tokenize(text).tokens) ++m[ref_fnv1a(tok) % 384];
    return m;
  };
  auto raw_cosine = [&](const std::string& a, const std::string& b) {
    auto ma = counts(a), mb = counts(b);
    double dot = 0, na = 0, nb = 0;
    for (const auto& [k, v] : ma) {
      na += v * v;
      if (mb.count(k)) dot += v * mb.at(k);
    }
    for (const auto& [k, v] : mb) nb += v * v;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    double best = -1.0, sum = 0.0;
    for (const auto& doc : corpus) {
      double c = raw_cosine(prompts[i].first, doc);
      best = std::max(best, c);
      sum += c;
    }
    CHECK(records[i].max_similarity == doctest::Approx(best).epsilon(1e-12));
    CHECK(records[i].mean_similarity ==
          doctest::Approx(sum / static_cast<double>(corpus.size())).epsilon(1e-12));
  }

  // single-element corpus: max == mean
  auto solo = similarity_report(prompts, {"scan the area"}, embedder);
  for (const auto& rec : solo) CHECK(rec.max_similarity == rec.mean_similarity);

  CHECK_THROWS_AS(similarity_report(prompts, {}, embedder), Error);
}

TEST_CASE("pearson fixtures") {
  std::vector<double> xs = {1, 2, 3};
  CHECK(pearson(xs, {3, 5, 7}) == doctest::Approx(1.0).epsilon(1e-12));   // ys = 2x + 1
  CHECK(pearson(xs, {-1, -2, -3}) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pearson(xs, {2, 1, 3}) == doctest::Approx(0.5).epsilon(1e-9));
  // straight covariance/sigma arithmetic for an uneven triple:
  // dx=(-1,0,1), dy=(-1/3,-4/3,5/3) => r = 2 / sqrt(2 * 42/9) = 6/sqrt(84)
  CHECK(pearson(xs, {2, 1, 4}) == doctest::Approx(6.0 / std::sqrt(84.0)).epsilon(1e-12));

  CHECK_THROWS_AS(pearson(xs, {1, 1, 1}), Error);
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2}), Error);
  CHECK_THROWS_AS(pearson(xs, {1, 2}), Error);
}

TEST_CASE("pearson is invariant under positive affine transforms") {
  std::vector<double> xs = {0.5, 1.5, 2.0, 4.0, 4.5};
  std::vector<double> ys = {2.0, 1.0, 3.5, 3.0, 5.0};
  double base = pearson(xs, ys);
  std::vector<double> xs2;
  for (double x : xs) xs2.push_back(3.0 * x + 11.0);
  CHECK(pearson(xs2, ys) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("http embedding provider round-trips through a stub and its cache") {
  teststub::StubServer stub(
      [](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::ordered_json::parse(req.body);
        CHECK(body.contains("input"));
        nlohmann::ordered_json reply;
        reply["data"] = nlohmann::ordered_json::array();
        reply["data"].push_back({{"embedding", {0.6, 0.8}}});
        res.set_content(reply.dump(), "application/json");
      },
      "/embeddings");
  ProviderConfig cfg;
  cfg.base_url = stub.base_url();
  cfg.credential = "key";
  cfg.requests_per_minute = 6000;
  testutil::TempDir cache;
  HttpEmbeddingProvider provider(cfg, "mini-model", cache.path());
  auto v = provider.embed("some text");
  REQUIRE(v.dim == 2);
  CHECK(v.values[0] == doctest::Approx(0.6));
  auto again = provider.embed("some text");
  CHECK(again.values == v.values);
  CHECK(stub.request_count() == 1);  // second call served from the cache
}
