// umrf-forge: decode multimodal operator commands into UMRF task graphs via
// a completion provider, and run the prompt-quality experiment pipeline
// (permutation search, fragility sweeps, similarity analysis) offline or
// against a live endpoint.

#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "umrf_forge/augment.hpp"
#include "umrf_forge/bleu.hpp"
#include "umrf_forge/command.hpp"
#include "umrf_forge/engine.hpp"
#include "umrf_forge/errors.hpp"
#include "umrf_forge/prompt.hpp"
#include "umrf_forge/provider.hpp"
#include "umrf_forge/search.hpp"
#include "umrf_forge/similarity.hpp"
#include "umrf_forge/umrf.hpp"

namespace fs = std::filesystem;
using namespace umrf_forge;

namespace {

struct CommonOpts {
  std::string provider = "mock";
  std::string base_url = "https://api.openai.com/v1";
  std::string cache_dir;
  std::string examples_file = "data/examples_operator.jsonl";
  std::string validation_file = "data/validation.jsonl";
  std::string lexicon_file = "data/lexicon.tsv";
  std::string corpus_file = "data/corpus.txt";
  std::string output_dir = "runs";
  long long seed = 0;
  bool json = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--provider", opts.provider, "completion backend: mock or http")
      ->check(CLI::IsMember({"mock", "http"}));
  cmd->add_option("--base-url", opts.base_url, "completions API base URL (http provider)");
  cmd->add_option("--cache-dir", opts.cache_dir,
                  "completion cache directory (default: $UMRF_FORGE_CACHE)");
  cmd->add_option("--seed", opts.seed, "seed for randomized operations");
  cmd->add_option("--output-dir", opts.output_dir, "directory for report runs");
  cmd->add_flag("--json", opts.json, "machine-readable output on stdout");
}

fs::path resolve_cache_dir(const CommonOpts& opts) {
  if (!opts.cache_dir.empty()) return opts.cache_dir;
  if (const char* env = std::getenv(kCacheEnvVar)) return env;
  return ".umrf_forge_cache";
}

// The mock maps known command texts (validation queries plus example cues)
// to their reference decodings, so the whole pipeline runs offline.
std::map<std::string, std::string> build_mock_fixture(
    const std::vector<FewShotExample>& examples, const std::vector<ValidationItem>& items) {
  std::map<std::string, std::string> fixture;
  for (const auto& ex : examples) {
    std::string key = render_command(ex.visual_cue);
    if (key.empty()) key = ex.nl_command;
    fixture[key] = serialize_graph(ex.umrf_output);
  }
  for (const auto& item : items)
    fixture[render_command(item.command)] = serialize_graph(item.reference_graph);
  return fixture;
}

std::shared_ptr<Provider> make_provider(const CommonOpts& opts,
                                        const std::vector<FewShotExample>& examples,
                                        const std::vector<ValidationItem>& items) {
  std::shared_ptr<Provider> inner;
  if (opts.provider == "mock") {
    inner = std::make_shared<MockProvider>(build_mock_fixture(examples, items));
  } else {
    inner = std::make_shared<HttpProvider>(config_from_env(opts.base_url));
  }
  return std::make_shared<CachingProvider>(std::move(inner), resolve_cache_dir(opts));
}

std::string timestamp_utc() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

// runs/<timestamp>/ plus a best-effort `latest` symlink.
fs::path make_run_dir(const fs::path& base) {
  fs::create_directories(base);
  std::string stamp = timestamp_utc();
  fs::path dir = base / stamp;
  for (int suffix = 1; fs::exists(dir); ++suffix)
    dir = base / (stamp + "-" + std::to_string(suffix));
  fs::create_directories(dir);
  std::error_code ec;
  fs::path latest = base / "latest";
  fs::remove(latest, ec);
  fs::create_directory_symlink(dir.filename(), latest, ec);
  return dir;
}

Pool expand_pool(const std::vector<FewShotExample>& examples, const std::string& flags) {
  Pool pool;
  for (const auto& ex : examples) {
    if (flags == "both" || flags == "visual") pool.emplace_back(ex, OrderingFlag::VisualFirst);
    if (flags == "both" || flags == "language")
      pool.emplace_back(ex, OrderingFlag::LanguageFirst);
  }
  return pool;
}

Pool parse_structure(const std::string& structure, const std::vector<FewShotExample>& examples) {
  Pool pool;
  std::size_t pos = 0;
  while (pos < structure.size()) {
    auto plus = structure.find('+', pos);
    std::string token =
        structure.substr(pos, plus == std::string::npos ? std::string::npos : plus - pos);
    if (token.size() < 2)
      throw Error(Errc::argument, "bad structure token '" + token + "' (want e.g. 5L)");
    auto flag = flag_from_letter(token.back());
    if (!flag)
      throw Error(Errc::argument, "bad ordering letter in '" + token + "' (want V or L)");
    int id = 0;
    try {
      id = std::stoi(token.substr(0, token.size() - 1));
    } catch (const std::exception&) {
      throw Error(Errc::argument, "bad example id in '" + token + "'");
    }
    const FewShotExample* found = nullptr;
    for (const auto& ex : examples)
      if (ex.example_id == id) found = &ex;
    if (!found)
      throw Error(Errc::argument, "structure names example " + std::to_string(id) +
                                      " which is not in the pool file");
    pool.emplace_back(*found, *flag);
    if (plus == std::string::npos) break;
    pos = plus + 1;
  }
  if (pool.empty()) throw Error(Errc::argument, "empty structure");
  return pool;
}

// parse one operator command through the provider; shared by parse and repl
int decode_command(const std::string& text, const CommonOpts& opts,
                   const std::vector<FewShotExample>& examples, Provider& provider) {
  MultimodalCommand cmd = parse_command(text);
  PromptSpec spec;
  for (const auto& ex : examples) spec.examples.emplace_back(ex, OrderingFlag::VisualFirst);
  spec.query = cmd;
  Prompt prompt = build_prompt(spec);

  CompletionRequest req;
  req.prompt = prompt.text;
  CompletionResult result = provider.complete(req);
  std::string candidate = extract_candidate(result.text, req.stop);

  UmrfGraph graph;
  std::vector<Violation> violations;
  std::string parse_failure;
  try {
    graph = parse_graph(candidate, ParseMode::lenient);
    violations = validate_graph(graph);
  } catch (const Error& e) {
    parse_failure = e.what();
  }

  if (!parse_failure.empty() || !violations.empty()) {
    // surface the raw completion: incomplete parses are a real failure mode
    if (opts.json) {
      Json j = Json::object();
      j["ok"] = false;
      if (!parse_failure.empty()) j["parse_error"] = parse_failure;
      Json v = Json::array();
      for (const auto& viol : violations) {
        Json vj = Json::object();
        vj["code"] = violation_code_name(viol.code);
        if (viol.node) vj["node"] = {{"name", viol.node->name}, {"id", viol.node->id}};
        vj["message"] = viol.message;
        v.push_back(std::move(vj));
      }
      j["violations"] = std::move(v);
      j["completion"] = result.text;
      std::cout << j.dump(2) << "\n";
    } else {
      std::cerr << "error: provider output is not a valid UMRF document\n";
      if (!parse_failure.empty()) std::cerr << "  " << parse_failure << "\n";
      for (const auto& viol : violations) std::cerr << "  " << viol.message << "\n";
      std::cerr << "raw completion follows:\n" << result.text << "\n";
    }
    return 1;
  }

  std::string canonical = serialize_graph(graph);
  if (opts.json) {
    Json j = Json::object();
    j["ok"] = true;
    j["graph"] = Json::parse(canonical);
    j["from_cache"] = result.from_cache;
    j["token_estimate"] = prompt.token_estimate;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << canonical << "\n";
  }
  return 0;
}

int run_parse(const std::string& text, const CommonOpts& opts) {
  auto examples = load_examples(opts.examples_file);
  std::vector<ValidationItem> items;
  if (fs::exists(opts.validation_file)) items = load_validation(opts.validation_file);
  auto provider = make_provider(opts, examples, items);
  return decode_command(text, opts, examples, *provider);
}

int run_repl(const CommonOpts& opts) {
  auto examples = load_examples(opts.examples_file);
  std::vector<ValidationItem> items;
  if (fs::exists(opts.validation_file)) items = load_validation(opts.validation_file);
  auto provider = make_provider(opts, examples, items);
  std::string line;
  int failures = 0;
  while (true) {
    std::cerr << "umrf> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    if (line.empty()) continue;
    if (line == "exit" || line == "quit") break;
    try {
      failures += decode_command(line, opts, examples, *provider) != 0;
    } catch (const Error& e) {
      std::cerr << "error (" << errc_name(e.code()) << "): " << e.what() << "\n";
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

int run_validate(const std::string& file, bool lenient, const CommonOpts& opts) {
  UmrfGraph graph = parse_graph(read_file(file),
                                lenient ? ParseMode::lenient : ParseMode::strict);
  auto violations = validate_graph(graph);
  if (opts.json) {
    Json v = Json::array();
    for (const auto& viol : violations) {
      Json vj = Json::object();
      vj["code"] = violation_code_name(viol.code);
      if (viol.node) vj["node"] = {{"name", viol.node->name}, {"id", viol.node->id}};
      vj["message"] = viol.message;
      v.push_back(std::move(vj));
    }
    std::cout << Json{{"violations", std::move(v)}}.dump(2) << "\n";
  } else if (violations.empty()) {
    std::cout << "valid: " << graph.nodes.size() << " node(s), no violations\n";
  } else {
    for (const auto& viol : violations)
      std::cout << violation_code_name(viol.code) << ": " << viol.message << "\n";
  }
  return violations.empty() ? 0 : 1;
}

int run_exec(const std::string& file, const std::string& registry_file, long long max_steps,
             const std::string& trace_out, const CommonOpts& opts) {
  UmrfGraph graph = parse_graph(read_file(file));
  auto violations = validate_graph(graph);
  ActionRegistry registry =
      registry_file.empty() ? default_registry() : load_registry(registry_file);
  GroundResult grounded;
  if (violations.empty()) {
    grounded = ground_graph(graph, registry);
    violations = grounded.violations;
  }
  if (!violations.empty()) {
    for (const auto& viol : violations)
      std::cerr << violation_code_name(viol.code) << ": " << viol.message << "\n";
    return 1;
  }
  ExecutionTrace trace =
      execute_graph(*grounded.plan, WorldState{}, static_cast<std::size_t>(max_steps));
  std::string jsonl = trace_jsonl(trace);
  if (trace_out.empty()) {
    std::cout << jsonl;
  } else {
    write_file_atomic(trace_out, jsonl);
    if (!opts.json) std::cout << "trace written to " << trace_out << "\n";
  }
  return 0;
}

int run_search(const std::string& pool_file, int k, const std::string& flags, int top_n,
               int parallel, const CommonOpts& opts) {
  auto examples = load_examples(pool_file);
  auto items = load_validation(opts.validation_file);
  Pool pool = expand_pool(examples, flags);
  auto provider = make_provider(opts, examples, items);

  SearchOptions options;
  options.top_n = top_n;
  options.parallelism = parallel;
  SearchReport report = exhaustive_search(pool, k, items, *provider, options);

  auto prompts = enumerate_prompts(pool, k);
  fs::path dir = make_run_dir(opts.output_dir);
  write_file_atomic(dir / "records.csv", records_csv(report));
  Json summary = summary_json(report, prompts);
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");

  if (opts.json) {
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << report.total_prompts << " prompts x " << report.item_count
              << " items = " << report.records.size() << " records in "
              << format_double(report.elapsed_seconds) << "s\n";
    int shown = 0;
    for (int idx : report.ranking) {
      if (shown++ >= top_n) break;
      std::cout << "  #" << shown << "  prompt " << idx << "  ["
                << structure_label(spec_structure(prompts[idx])) << "]  avg BLEU "
                << format_double(report.averages[idx]) << "\n";
    }
    std::cout << "reports: " << (dir / "records.csv").string() << ", "
              << (dir / "summary.json").string() << "\n";
  }
  return 0;
}

int run_perturb(const std::string& pool_file, const std::string& structure, int trials,
                bool compositional, const CommonOpts& opts) {
  auto examples = load_examples(pool_file);
  auto items = load_validation(opts.validation_file);
  Lexicon lexicon = Lexicon::load(opts.lexicon_file);
  auto provider = make_provider(opts, examples, items);

  PromptSpec base;
  if (structure.empty()) {
    if (examples.size() < 2)
      throw Error(Errc::argument, "need at least 2 examples in the pool file");
    base.examples.emplace_back(examples[0], OrderingFlag::VisualFirst);
    base.examples.emplace_back(examples[1], OrderingFlag::VisualFirst);
  } else {
    base.examples = parse_structure(structure, examples);
  }

  auto grid = compositional ? compositional_grid() : default_fragility_grid();
  auto records = fragility_sweep(base, grid, trials, items, *provider, lexicon,
                                 static_cast<std::uint64_t>(opts.seed));

  fs::path dir = make_run_dir(opts.output_dir);
  write_file_atomic(dir / "sweep.csv", fragility_csv(records));
  if (opts.json) {
    Json j = Json::object();
    j["records"] = records.size();
    j["csv"] = (dir / "sweep.csv").string();
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << records.size() << " sweep records -> " << (dir / "sweep.csv").string()
              << "\n";
  }
  return 0;
}

int run_similarity(const std::string& pool_file, int k, const std::string& flags,
                   const CommonOpts& opts) {
  auto examples = load_examples(pool_file);
  auto items = load_validation(opts.validation_file);
  Pool pool = expand_pool(examples, flags);
  auto provider = make_provider(opts, examples, items);

  SearchReport report = exhaustive_search(pool, k, items, *provider);
  auto prompts = enumerate_prompts(pool, k);

  std::vector<std::pair<std::string, double>> scored;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    std::string text;
    for (const auto& [ex, flag] : prompts[i].examples)
      text += render_example(ex, flag, prompts[i].include_cot);
    scored.emplace_back(std::move(text), report.averages[i]);
  }

  auto corpus = read_lines(opts.corpus_file);
  HashEmbedder embedder;
  auto records = similarity_report(scored, corpus, embedder);
  Json summary = similarity_summary_json(records, embedder.id());

  fs::path dir = make_run_dir(opts.output_dir);
  write_file_atomic(dir / "similarity.csv", similarity_csv(records));
  write_file_atomic(dir / "similarity.json", summary.dump(2) + "\n");
  if (opts.json) {
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << records.size() << " prompts vs " << corpus.size() << " corpus docs\n"
              << "pearson(max_sim, score)  = " << summary["pearson_max_vs_score"].dump() << "\n"
              << "pearson(mean_sim, score) = " << summary["pearson_mean_vs_score"].dump()
              << "\n"
              << "reports: " << (dir / "similarity.csv").string() << ", "
              << (dir / "similarity.json").string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UMRF command decoding and prompt-quality experiment toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;

  std::string parse_text;
  auto* parse_cmd = app.add_subcommand("parse", "decode one operator command to UMRF");
  parse_cmd->add_option("command", parse_text, "operator command text")->required();
  parse_cmd->add_option("--examples", opts.examples_file, "few-shot example library");
  parse_cmd->add_option("--validation", opts.validation_file,
                        "validation set (extends the mock fixture)");
  add_common(parse_cmd, opts);

  std::string validate_file;
  bool validate_lenient = false;
  auto* validate_cmd = app.add_subcommand("validate", "validate a UMRF graph file");
  validate_cmd->add_option("file", validate_file, "UMRF JSON document")->required();
  validate_cmd->add_flag("--lenient", validate_lenient, "tolerate unknown fields");
  add_common(validate_cmd, opts);

  std::string exec_file, exec_registry, exec_trace_out;
  long long exec_max_steps = 1000;
  auto* exec_cmd = app.add_subcommand("exec", "ground and execute a UMRF graph");
  exec_cmd->add_option("file", exec_file, "UMRF JSON document")->required();
  exec_cmd->add_option("--registry", exec_registry, "extra action specs (JSON array)");
  exec_cmd->add_option("--max-steps", exec_max_steps, "step cap for cyclic graphs");
  exec_cmd->add_option("--trace-out", exec_trace_out, "write trace JSON-lines here");
  add_common(exec_cmd, opts);

  std::string search_pool = "data/examples_spatial.jsonl";
  std::string search_flags = "both";
  int search_k = 2, search_top = 10, search_parallel = 1;
  auto* search_cmd = app.add_subcommand("search", "exhaustive prompt permutation search");
  search_cmd->add_option("--pool", search_pool, "few-shot example pool file");
  search_cmd->add_option("--k", search_k, "permutation length");
  search_cmd->add_option("--flags", search_flags, "pool ordering flags: both|visual|language")
      ->check(CLI::IsMember({"both", "visual", "language"}));
  search_cmd->add_option("--top", search_top, "ranking entries to print");
  search_cmd->add_option("--parallel", search_parallel, "bounded prompt-level parallelism");
  search_cmd->add_option("--validation", opts.validation_file, "validation set file");
  add_common(search_cmd, opts);

  std::string perturb_pool = "data/examples_spatial.jsonl";
  std::string perturb_structure;
  int perturb_trials = 3;
  bool perturb_compositional = false;
  auto* perturb_cmd = app.add_subcommand("perturb", "EDA fragility sweep over a prompt");
  perturb_cmd->add_option("--pool", perturb_pool, "few-shot example pool file");
  perturb_cmd->add_option("--structure", perturb_structure,
                          "base prompt structure, e.g. 5L+4V (default: first two examples)");
  perturb_cmd->add_option("--trials", perturb_trials, "trials per grid point");
  perturb_cmd->add_flag("--compositional", perturb_compositional,
                        "use 2-op compositional policies");
  perturb_cmd->add_option("--validation", opts.validation_file, "validation set file");
  perturb_cmd->add_option("--lexicon", opts.lexicon_file, "synonym lexicon (TSV)");
  add_common(perturb_cmd, opts);

  std::string sim_pool = "data/examples_spatial.jsonl";
  std::string sim_flags = "both";
  int sim_k = 2;
  auto* sim_cmd =
      app.add_subcommand("similarity", "prompt-vs-corpus similarity and correlation");
  sim_cmd->add_option("--pool", sim_pool, "few-shot example pool file");
  sim_cmd->add_option("--k", sim_k, "permutation length");
  sim_cmd->add_option("--flags", sim_flags, "pool ordering flags: both|visual|language")
      ->check(CLI::IsMember({"both", "visual", "language"}));
  sim_cmd->add_option("--validation", opts.validation_file, "validation set file");
  sim_cmd->add_option("--corpus", opts.corpus_file, "reference corpus, one doc per line");
  add_common(sim_cmd, opts);

  auto* repl_cmd = app.add_subcommand("repl", "interactive parse loop (one command per line)");
  repl_cmd->add_option("--examples", opts.examples_file, "few-shot example library");
  repl_cmd->add_option("--validation", opts.validation_file,
                       "validation set (extends the mock fixture)");
  add_common(repl_cmd, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
      return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (parse_cmd->parsed()) return run_parse(parse_text, opts);
    if (validate_cmd->parsed()) return run_validate(validate_file, validate_lenient, opts);
    if (exec_cmd->parsed())
      return run_exec(exec_file, exec_registry, exec_max_steps, exec_trace_out, opts);
    if (search_cmd->parsed())
      return run_search(search_pool, search_k, search_flags, search_top, search_parallel, opts);
    if (perturb_cmd->parsed())
      return run_perturb(perturb_pool, perturb_structure, perturb_trials,
                         perturb_compositional, opts);
    if (sim_cmd->parsed()) return run_similarity(sim_pool, sim_k, sim_flags, opts);
    if (repl_cmd->parsed()) return run_repl(opts);
  } catch (const Error& e) {
    std::cerr << "error (" << errc_name(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
