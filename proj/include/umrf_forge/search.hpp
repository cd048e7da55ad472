#pragma once

// Exhaustive search over k-length example permutations, each candidate
// prompt scored by average BLEU over a validation set. Evaluation keeps
// going through per-item provider failures — a multi-hour search must not
// die on one dropped request.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "umrf_forge/bleu.hpp"
#include "umrf_forge/command.hpp"
#include "umrf_forge/errors.hpp"
#include "umrf_forge/io.hpp"
#include "umrf_forge/prompt.hpp"
#include "umrf_forge/provider.hpp"
#include "umrf_forge/umrf.hpp"

namespace umrf_forge {

struct ValidationItem {
  MultimodalCommand command;
  UmrfGraph reference_graph;
};

// JSON-lines: {"command": "...", "umrf_graph": {...}} per line.
inline std::vector<ValidationItem> load_validation(const std::filesystem::path& path) {
  std::vector<ValidationItem> out;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    Json j;
    try {
      j = Json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::syntax, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("command") || !j["command"].is_string() ||
        !j.contains("umrf_graph"))
      throw Error(Errc::schema, where + ": expected {command, umrf_graph}");
    ValidationItem item;
    item.command = parse_command(j["command"].get<std::string>());
    item.reference_graph = parse_graph(j["umrf_graph"].dump());
    auto violations = validate_graph(item.reference_graph);
    if (!violations.empty())
      throw Error(Errc::schema, where + ": reference graph invalid: " +
                                    violations.front().message);
    out.push_back(std::move(item));
  }
  return out;
}

struct EvalRecord {
  int prompt_index = 0;
  std::vector<std::pair<int, OrderingFlag>> prompt_structure;
  int item_index = 0;
  double bleu = 0.0;
  std::string completion;
  bool parse_ok = false;
  std::string error;  // provider failure note, empty on success
};

struct SearchReport {
  std::vector<EvalRecord> records;
  std::vector<double> averages;  // indexed by prompt_index
  std::vector<int> ranking;      // prompt indices, best first, ties by index
  int total_prompts = 0;
  int item_count = 0;
  double elapsed_seconds = 0.0;
};

using Pool = std::vector<std::pair<FewShotExample, OrderingFlag>>;

// All ordered k-permutations of pool entries, in lexicographic order over
// pool indices. The returned specs have an empty query; evaluation fills it
// per validation item.
inline std::vector<PromptSpec> enumerate_prompts(const Pool& pool, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > pool.size())
    throw Error(Errc::argument, "k must be in [1, pool size]; got k=" + std::to_string(k) +
                                    " with pool of " + std::to_string(pool.size()));
  std::vector<PromptSpec> out;
  std::vector<std::size_t> chosen;
  std::vector<bool> used(pool.size(), false);
  auto recurse = [&](auto&& self) -> void {
    if (chosen.size() == static_cast<std::size_t>(k)) {
      PromptSpec spec;
      for (std::size_t idx : chosen) spec.examples.push_back(pool[idx]);
      out.push_back(std::move(spec));
      return;
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      used[i] = true;
      chosen.push_back(i);
      self(self);
      chosen.pop_back();
      used[i] = false;
    }
  };
  recurse(recurse);
  return out;
}

inline std::pair<std::vector<EvalRecord>, double> evaluate_prompt(
    const PromptSpec& spec, const std::vector<ValidationItem>& items, Provider& provider) {
  if (items.empty()) throw Error(Errc::argument, "validation set is empty");
  std::vector<EvalRecord> records;
  records.reserve(items.size());
  double sum = 0.0;
  const auto structure = spec_structure(spec);
  for (std::size_t i = 0; i < items.size(); ++i) {
    EvalRecord rec;
    rec.prompt_structure = structure;
    rec.item_index = static_cast<int>(i);

    PromptSpec query_spec = spec;
    query_spec.query = items[i].command;
    Prompt prompt = build_prompt(query_spec);

    CompletionRequest req;
    req.prompt = prompt.text;
    try {
      CompletionResult result = provider.complete(req);
      rec.completion = extract_candidate(result.text, req.stop);
      const std::string reference = serialize_graph(items[i].reference_graph);
      rec.bleu = sentence_bleu(tokenize(rec.completion), tokenize(reference));
      try {
        parse_graph(rec.completion, ParseMode::lenient);
        rec.parse_ok = true;
      } catch (const Error&) {
        rec.parse_ok = false;
      }
    } catch (const Error& e) {
      if (e.code() != Errc::provider) throw;  // config/argument bugs must surface
      rec.bleu = 0.0;
      rec.parse_ok = false;
      rec.error = e.what();
    }
    sum += rec.bleu;
    records.push_back(std::move(rec));
  }
  return {records, sum / static_cast<double>(items.size())};
}

struct SearchOptions {
  int top_n = 10;
  int parallelism = 1;  // keep at or below the provider fanout bound
};

inline SearchReport exhaustive_search(const Pool& pool, int k,
                                      const std::vector<ValidationItem>& items,
                                      Provider& provider, SearchOptions options = {}) {
  auto started = std::chrono::steady_clock::now();
  std::vector<PromptSpec> prompts = enumerate_prompts(pool, k);

  SearchReport report;
  report.total_prompts = static_cast<int>(prompts.size());
  report.item_count = static_cast<int>(items.size());
  report.averages.assign(prompts.size(), 0.0);

  std::vector<std::vector<EvalRecord>> slots(prompts.size());
  const int workers = std::max(1, std::min<int>(options.parallelism,
                                                static_cast<int>(prompts.size())));
  if (workers == 1) {
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      auto [records, average] = evaluate_prompt(prompts[p], items, provider);
      slots[p] = std::move(records);
      report.averages[p] = average;
    }
  } else {
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      while (true) {
        std::size_t p = next.fetch_add(1);
        if (p >= prompts.size()) return;
        try {
          auto [records, average] = evaluate_prompt(prompts[p], items, provider);
          slots[p] = std::move(records);
          report.averages[p] = average;
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  for (std::size_t p = 0; p < prompts.size(); ++p) {
    for (auto& rec : slots[p]) {
      rec.prompt_index = static_cast<int>(p);
      report.records.push_back(std::move(rec));
    }
  }

  report.ranking.resize(prompts.size());
  std::iota(report.ranking.begin(), report.ranking.end(), 0);
  std::sort(report.ranking.begin(), report.ranking.end(), [&](int a, int b) {
    if (report.averages[a] != report.averages[b])
      return report.averages[a] > report.averages[b];
    return a < b;
  });

  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// Report files. Column order is frozen for downstream plotting:
// prompt_index,prompt_structure,item_index,bleu,parse_ok,error,completion
inline std::string records_csv(const SearchReport& report) {
  std::string out = "prompt_index,prompt_structure,item_index,bleu,parse_ok,error,completion\n";
  for (const auto& r : report.records) {
    out += std::to_string(r.prompt_index);
    out += ',';
    out += csv_escape(structure_label(r.prompt_structure));
    out += ',';
    out += std::to_string(r.item_index);
    out += ',';
    out += format_double(r.bleu);
    out += ',';
    out += r.parse_ok ? "true" : "false";
    out += ',';
    out += csv_escape(r.error);
    out += ',';
    out += csv_escape(r.completion);
    out += '\n';
  }
  return out;
}

inline Json summary_json(const SearchReport& report,
                         const std::vector<PromptSpec>& prompts) {
  Json j = Json::object();
  j["total_prompts"] = report.total_prompts;
  j["item_count"] = report.item_count;
  j["elapsed_seconds"] = report.elapsed_seconds;
  Json ranked = Json::array();
  for (int idx : report.ranking) {
    Json entry = Json::object();
    entry["prompt_index"] = idx;
    entry["structure"] = structure_label(spec_structure(prompts[idx]));
    entry["average_bleu"] = report.averages[idx];
    ranked.push_back(std::move(entry));
  }
  j["ranking"] = std::move(ranked);
  return j;
}

}  // namespace umrf_forge
