#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <set>
#include <string>

#include "umrf_forge/search.hpp"

#include "support/temp_dir.hpp"

using namespace umrf_forge;

namespace {

std::filesystem::path data_dir() { return UMRF_FORGE_DATA_DIR; }

Pool spatial_pool() {
  Pool pool;
  for (const auto& ex : load_examples(data_dir() / "examples_spatial.jsonl")) {
    pool.emplace_back(ex, OrderingFlag::VisualFirst);
    pool.emplace_back(ex, OrderingFlag::LanguageFirst);
  }
  return pool;
}

std::vector<ValidationItem> validation_items() {
  return load_validation(data_dir() / "validation.jsonl");
}

MockProvider echo_mock(const std::vector<ValidationItem>& items) {
  std::map<std::string, std::string> fixture;
  for (const auto& item : items)
    fixture[render_command(item.command)] = serialize_graph(item.reference_graph);
  return MockProvider(fixture);
}

struct FixedTextProvider : Provider {
  std::string text;
  explicit FixedTextProvider(std::string t) : text(std::move(t)) {}
  std::string name() const override { return "fixed"; }
  CompletionResult complete(const CompletionRequest&) override {
    CompletionResult r;
    r.text = text;
    return r;
  }
};

// counts calls through to an inner provider
struct CountingProvider : Provider {
  Provider& inner;
  std::atomic<int> calls{0};
  explicit CountingProvider(Provider& p) : inner(p) {}
  std::string name() const override { return "counting"; }
  CompletionResult complete(const CompletionRequest& req) override {
    calls.fetch_add(1);
    return inner.complete(req);
  }
};

struct AbortSearch {};

// simulates a killed process partway through a search
struct AbortingProvider : Provider {
  Provider& inner;
  int budget;
  AbortingProvider(Provider& p, int n) : inner(p), budget(n) {}
  std::string name() const override { return "aborting"; }
  CompletionResult complete(const CompletionRequest& req) override {
    if (budget-- <= 0) throw AbortSearch{};
    return inner.complete(req);
  }
};

}  // namespace

TEST_CASE("permutation counts") {
  Pool pool = spatial_pool();
  REQUIRE(pool.size() == 10);
  CHECK(enumerate_prompts(pool, 2).size() == 90);

  Pool three(pool.begin(), pool.begin() + 3);
  CHECK(enumerate_prompts(three, 2).size() == 6);

  Pool one(pool.begin(), pool.begin() + 1);
  CHECK(enumerate_prompts(one, 1).size() == 1);

  CHECK_THROWS_AS(enumerate_prompts(pool, 0), Error);
  CHECK_THROWS_AS(enumerate_prompts(pool, 11), Error);
}

TEST_CASE("enumeration is lexicographic over pool indices") {
  Pool pool = spatial_pool();
  auto prompts = enumerate_prompts(pool, 2);
  // first prompt = (pool[0], pool[1]), second = (pool[0], pool[2])
  CHECK(prompts[0].examples[0].first.example_id == pool[0].first.example_id);
  CHECK(prompts[0].examples[0].second == pool[0].second);
  CHECK(prompts[0].examples[1].second == pool[1].second);
  CHECK(prompts[1].examples[1].first.example_id == pool[2].first.example_id);
}

TEST_CASE("echo mock scores a perfect average") {
  auto items = validation_items();
  auto mock = echo_mock(items);
  Pool pool = spatial_pool();
  PromptSpec spec;
  spec.examples.emplace_back(pool[0]);
  spec.examples.emplace_back(pool[3]);

  auto [records, average] = evaluate_prompt(spec, items, mock);
  REQUIRE(records.size() == items.size());
  CHECK(average == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& rec : records) {
    CHECK(rec.bleu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rec.parse_ok);
    CHECK(rec.error.empty());
  }
}

TEST_CASE("empty completions score zero but still parse-fail gracefully") {
  auto items = validation_items();
  FixedTextProvider empty("");
  Pool pool = spatial_pool();
  PromptSpec spec;
  spec.examples.emplace_back(pool[0]);
  auto [records, average] = evaluate_prompt(spec, items, empty);
  CHECK(average == 0.0);
  for (const auto& rec : records) {
    CHECK(rec.bleu == 0.0);
    CHECK(!rec.parse_ok);
  }
}

TEST_CASE("one exact and one disjoint completion average to one half") {
  auto all_items = validation_items();
  std::vector<ValidationItem> items{all_items[0], all_items[4]};
  // fixture answers item 0 exactly; item 4 gets unrelated text
  MockProvider mock({{render_command(items[0].command),
                      serialize_graph(items[0].reference_graph)},
                     {render_command(items[1].command), "totally unrelated words"}});
  Pool pool = spatial_pool();
  PromptSpec spec;
  spec.examples.emplace_back(pool[0]);
  auto [records, average] = evaluate_prompt(spec, items, mock);
  CHECK(records[0].bleu == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(records[1].bleu == 0.0);
  CHECK(average == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("per-item provider failures do not abort the evaluation") {
  struct FlakyProvider : Provider {
    std::string name() const override { return "flaky"; }
    CompletionResult complete(const CompletionRequest& req) override {
      if (final_query_block(req.prompt).find("corridor") != std::string::npos)
        throw Error(Errc::provider, "simulated outage");
      CompletionResult r;
      r.text = "words";
      return r;
    }
  } flaky;
  auto items = validation_items();
  Pool pool = spatial_pool();
  PromptSpec spec;
  spec.examples.emplace_back(pool[0]);
  auto [records, average] = evaluate_prompt(spec, items, flaky);
  REQUIRE(records.size() == items.size());
  bool saw_failure = false;
  for (const auto& rec : records)
    if (!rec.error.empty()) {
      saw_failure = true;
      CHECK(rec.bleu == 0.0);
      CHECK(!rec.parse_ok);
    }
  CHECK(saw_failure);
}

TEST_CASE("full search over a 10-pool emits 450 deterministic records") {
  auto items = validation_items();
  auto mock = echo_mock(items);
  Pool pool = spatial_pool();

  SearchReport report = exhaustive_search(pool, 2, items, mock);
  CHECK(report.total_prompts == 90);
  CHECK(report.records.size() == 450);
  for (double avg : report.averages) CHECK(avg == doctest::Approx(1.0).epsilon(1e-12));
  // perfect tie everywhere: ranking falls back to prompt_index order
  for (std::size_t i = 0; i < report.ranking.size(); ++i)
    CHECK(report.ranking[i] == static_cast<int>(i));

  SearchReport again = exhaustive_search(pool, 2, items, mock);
  CHECK(records_csv(again) == records_csv(report));

  // parallel evaluation produces the identical report
  SearchOptions parallel;
  parallel.parallelism = 2;
  SearchReport par = exhaustive_search(pool, 2, items, mock, parallel);
  CHECK(records_csv(par) == records_csv(report));
}

TEST_CASE("an adversarial provider promotes exactly its target structure") {
  auto items = validation_items();
  auto echo = echo_mock(items);
  Pool pool = spatial_pool();
  auto prompts = enumerate_prompts(pool, 2);
  const int target = 42;
  std::string prefix;
  for (const auto& [ex, flag] : prompts[target].examples)
    prefix += render_example(ex, flag, prompts[target].include_cot);

  struct PrefixGated : Provider {
    std::string prefix;
    Provider& echo;
    PrefixGated(std::string p, Provider& e) : prefix(std::move(p)), echo(e) {}
    std::string name() const override { return "gated"; }
    CompletionResult complete(const CompletionRequest& req) override {
      if (req.prompt.starts_with(prefix)) return echo.complete(req);
      CompletionResult junk;
      junk.text = "irrelevant chatter";
      return junk;
    }
  } gated(prefix, echo);

  SearchReport report = exhaustive_search(pool, 2, items, gated);
  CHECK(report.ranking.front() == target);
  CHECK(report.averages[target] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("shuffling the pool preserves the multiset of structure scores") {
  auto items = validation_items();
  Pool pool = spatial_pool();
  auto prompts = enumerate_prompts(pool, 2);
  const int favored = 17;
  std::string prefix;
  for (const auto& [ex, flag] : prompts[favored].examples)
    prefix += render_example(ex, flag, prompts[favored].include_cot);
  auto echo = echo_mock(items);
  struct PrefixGated : Provider {
    std::string prefix;
    Provider& echo;
    PrefixGated(std::string p, Provider& e) : prefix(std::move(p)), echo(e) {}
    std::string name() const override { return "gated"; }
    CompletionResult complete(const CompletionRequest& req) override {
      if (req.prompt.starts_with(prefix)) return echo.complete(req);
      CompletionResult junk;
      junk.text = "irrelevant chatter";
      return junk;
    }
  } gated(prefix, echo);

  SearchReport base = exhaustive_search(pool, 2, items, gated);
  Pool rotated(pool.begin() + 3, pool.end());
  rotated.insert(rotated.end(), pool.begin(), pool.begin() + 3);
  SearchReport shuffled = exhaustive_search(rotated, 2, items, gated);

  auto score_map = [&](const SearchReport& r, const Pool& p) {
    std::multiset<std::pair<std::string, double>> out;
    auto specs = enumerate_prompts(p, 2);
    for (int i = 0; i < r.total_prompts; ++i)
      out.insert({structure_label(spec_structure(specs[i])), r.averages[i]});
    return out;
  };
  CHECK(score_map(base, pool) == score_map(shuffled, rotated));
}

TEST_CASE("aborted searches resume from the cache with no recomputation") {
  auto items = validation_items();
  auto mock = echo_mock(items);
  Pool pool = spatial_pool();
  Pool small(pool.begin(), pool.begin() + 4);  // 12 prompts x 5 items = 60 records

  // clean reference run
  testutil::TempDir cache_a;
  std::string full_csv;
  {
    CountingProvider counted(mock);
    CachingProvider caching(
        std::shared_ptr<Provider>(&counted, [](Provider*) {}), cache_a.path());
    full_csv = records_csv(exhaustive_search(small, 2, items, caching));
    CHECK(counted.calls.load() == 60);
  }

  // interrupted run: provider dies after 30 completions
  testutil::TempDir cache_b;
  {
    AbortingProvider aborting(mock, 30);
    CachingProvider caching(
        std::shared_ptr<Provider>(&aborting, [](Provider*) {}), cache_b.path());
    CHECK_THROWS_AS(exhaustive_search(small, 2, items, caching), AbortSearch);
  }
  // resume: only the missing records hit the provider
  {
    CountingProvider counted(mock);
    CachingProvider caching(
        std::shared_ptr<Provider>(&counted, [](Provider*) {}), cache_b.path());
    SearchReport resumed = exhaustive_search(small, 2, items, caching);
    CHECK(records_csv(resumed) == full_csv);
    CHECK(counted.calls.load() <= 30);
  }
}
