#include <doctest.h>

#include <string>

#include "umrf_forge/prompt.hpp"

using namespace umrf_forge;

namespace {

FewShotExample sample_example(int id) {
  FewShotExample ex;
  ex.example_id = id;
  ex.visual_cue = parse_fragment("[x=-9.074; y=-1.89; yaw=2.97] the left side of the same desk");
  ex.nl_command = "Turn left and approach the left side of the same desk";
  ex.cot_rationale = "One referent and one marker mean a single navigation.";
  UmrfNode node;
  node.ref = {"navigation", 0};
  node.input_parameters["x"] = {ValueType::number, Json(-9.074)};
  node.input_parameters["y"] = {ValueType::number, Json(-1.89)};
  node.input_parameters["yaw"] = {ValueType::number, Json(2.97)};
  ex.umrf_output.graph_name = "approach the desk";
  ex.umrf_output.nodes.push_back(node);
  return ex;
}

std::filesystem::path data_dir() { return UMRF_FORGE_DATA_DIR; }

}  // namespace

TEST_CASE("visual-first rendering orders cue, command, rationale, graph") {
  FewShotExample ex = sample_example(1);
  std::string text = render_example(ex, OrderingFlag::VisualFirst, true);
  auto cue = text.find("[x=-9.074; y=-1.89; yaw=2.97] the left side of the same desk\n");
  auto nl = text.find("Turn left and approach the left side of the same desk\n");
  auto cot = text.find("One referent and one marker mean a single navigation.\n");
  auto graph = text.find("{\n  \"graph_name\": \"approach the desk\",");
  REQUIRE(cue != std::string::npos);
  REQUIRE(nl != std::string::npos);
  REQUIRE(cot != std::string::npos);
  REQUIRE(graph != std::string::npos);
  CHECK(cue < nl);
  CHECK(nl < cot);
  CHECK(cot < graph);
  CHECK(text.ends_with("\n\n"));
}

TEST_CASE("language-first swaps the first two blocks only") {
  FewShotExample ex = sample_example(1);
  std::string visual = render_example(ex, OrderingFlag::VisualFirst, true);
  std::string language = render_example(ex, OrderingFlag::LanguageFirst, true);
  CHECK(language.find("Turn left") < language.find("[x=-9.074"));
  // graph block identical either way
  CHECK(visual.substr(visual.find('{')) == language.substr(language.find('{')));
}

TEST_CASE("include_cot=false drops the rationale block") {
  FewShotExample ex = sample_example(1);
  std::string text = render_example(ex, OrderingFlag::VisualFirst, false);
  CHECK(text.find("One referent") == std::string::npos);
}

TEST_CASE("every rendered graph block re-parses") {
  for (const auto& file : {"examples_operator.jsonl", "examples_spatial.jsonl"}) {
    for (const auto& ex : load_examples(data_dir() / file)) {
      std::string text = render_example(ex, OrderingFlag::VisualFirst, true);
      std::string block = text.substr(text.find('{'));
      UmrfGraph g = parse_graph(block.substr(0, block.rfind('}') + 1));
      CHECK(g == ex.umrf_output);
    }
  }
}

TEST_CASE("build_prompt ends with the query and the cue line") {
  auto examples = load_examples(data_dir() / "examples_operator.jsonl");
  REQUIRE(examples.size() == 5);
  PromptSpec spec;
  for (const auto& ex : examples) spec.examples.emplace_back(ex, OrderingFlag::VisualFirst);
  spec.query = parse_command("robot go inspect the workshop [x=74.2; y=-223.6; yaw=2.72]");
  Prompt prompt = build_prompt(spec);
  CHECK(prompt.text.ends_with(
      "robot go inspect the workshop [x=74.2; y=-223.6; yaw=2.72]\nUMRF:\n"));
  CHECK(prompt.token_estimate == static_cast<int>((prompt.text.size() + 3) / 4));
  // determinism: same spec, same bytes
  CHECK(build_prompt(spec).text == prompt.text);
}

TEST_CASE("example order changes the prompt text") {
  auto examples = load_examples(data_dir() / "examples_spatial.jsonl");
  PromptSpec forward, reversed;
  forward.examples.emplace_back(examples[3], OrderingFlag::VisualFirst);
  forward.examples.emplace_back(examples[4], OrderingFlag::LanguageFirst);
  reversed.examples.emplace_back(examples[4], OrderingFlag::LanguageFirst);
  reversed.examples.emplace_back(examples[3], OrderingFlag::VisualFirst);
  forward.query = reversed.query = parse_command("Scan the area");
  CHECK(build_prompt(forward).text != build_prompt(reversed).text);
  // blocks appear in exactly the requested order
  std::string text = build_prompt(forward).text;
  CHECK(text.find("wooden desk") < text.find("middle of the side of the bed"));
}

TEST_CASE("empty example list violates the precondition") {
  PromptSpec spec;
  spec.query = parse_command("Scan the area");
  CHECK_THROWS_AS(build_prompt(spec), Error);
}

TEST_CASE("duplicate (example_id, flag) pairs are rejected") {
  FewShotExample ex = sample_example(1);
  PromptSpec spec;
  spec.examples.emplace_back(ex, OrderingFlag::VisualFirst);
  spec.examples.emplace_back(ex, OrderingFlag::VisualFirst);
  spec.query = parse_command("Scan the area");
  CHECK_THROWS_AS(build_prompt(spec), Error);
  // same example under both flags is fine
  spec.examples[1].second = OrderingFlag::LanguageFirst;
  CHECK_NOTHROW(build_prompt(spec));
}

TEST_CASE("over-budget prompts name the trailing examples to drop") {
  PromptSpec spec;
  for (int i = 1; i <= 3; ++i)
    spec.examples.emplace_back(sample_example(i), OrderingFlag::VisualFirst);
  spec.query = parse_command("Scan the area");
  spec.token_budget = 120;
  try {
    build_prompt(spec);
    FAIL("expected BudgetError");
  } catch (const BudgetError& e) {
    CHECK(e.code() == Errc::budget);
    CHECK(e.budget() == 120);
    CHECK(e.estimate() > e.budget());
    REQUIRE(!e.drop_ids().empty());
    CHECK(e.drop_ids().front() == 3);  // last example goes first
  }
}

TEST_CASE("candidate extraction stops at the first blank line or stop sequence") {
  CHECK(extract_candidate("\n{\"a\": 1}\n\ntrailing junk") == "{\"a\": 1}");
  CHECK(extract_candidate("{\"a\": 1}") == "{\"a\": 1}");
  CHECK(extract_candidate("line one\nline two\n  \nrest") == "line one\nline two");
  CHECK(extract_candidate("abcSTOPdef", {"STOP"}) == "abc");
  CHECK(extract_candidate("\n\n\n") == "");
}

TEST_CASE("final_query_block recovers the rendered query") {
  auto examples = load_examples(data_dir() / "examples_operator.jsonl");
  PromptSpec spec;
  for (const auto& ex : examples) spec.examples.emplace_back(ex, OrderingFlag::VisualFirst);
  spec.query = parse_command("Scan the area");
  CHECK(final_query_block(build_prompt(spec).text) == "Scan the area");
  spec.query = parse_command("Move to the main hall [x=14; y=3.2; yaw=1.26]");
  CHECK(final_query_block(build_prompt(spec).text) ==
        "Move to the main hall [x=14; y=3.2; yaw=1.26]");
}
