#pragma once

// Grounds UMRF graphs onto a registry of known actions and executes them
// against a small simulated world: navigation moves the pose, scan bumps a
// counter, manipulate re-poses the arm. Enough state to make the decoded
// graphs observable in tests without any robot underneath.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <json.hpp>

#include "umrf_forge/errors.hpp"
#include "umrf_forge/io.hpp"
#include "umrf_forge/umrf.hpp"

namespace umrf_forge {

enum class ActionBehavior { set_pose, take_scan, set_posture, noop };

inline const char* behavior_name(ActionBehavior b) {
  switch (b) {
    case ActionBehavior::set_pose: return "set_pose";
    case ActionBehavior::take_scan: return "take_scan";
    case ActionBehavior::set_posture: return "set_posture";
    case ActionBehavior::noop: return "noop";
  }
  return "?";
}

inline std::optional<ActionBehavior> behavior_from_name(std::string_view s) {
  if (s == "set_pose") return ActionBehavior::set_pose;
  if (s == "take_scan") return ActionBehavior::take_scan;
  if (s == "set_posture") return ActionBehavior::set_posture;
  if (s == "noop") return ActionBehavior::noop;
  return std::nullopt;
}

struct ActionSpec {
  std::string name;
  std::map<std::string, ValueType> required_inputs;
  ActionBehavior behavior = ActionBehavior::noop;
};

using ActionRegistry = std::map<std::string, ActionSpec>;

// Built-in actions. Both "navigation" and "navigate" appear in decoded
// graphs, so both are registered.
inline ActionRegistry default_registry() {
  ActionRegistry reg;
  std::map<std::string, ValueType> pose_inputs{{"x", ValueType::number},
                                               {"y", ValueType::number},
                                               {"yaw", ValueType::number}};
  reg["navigation"] = {"navigation", pose_inputs, ActionBehavior::set_pose};
  reg["navigate"] = {"navigate", pose_inputs, ActionBehavior::set_pose};
  reg["scan"] = {"scan", {}, ActionBehavior::take_scan};
  reg["manipulate"] = {"manipulate", {}, ActionBehavior::set_posture};
  return reg;
}

// Extends a registry from a JSON array of
// {"name": ..., "behavior": ..., "required_inputs": {param: type, ...}}.
inline ActionRegistry load_registry(const std::filesystem::path& path,
                                    ActionRegistry base = default_registry()) {
  Json doc;
  try {
    doc = Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::syntax, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw Error(Errc::schema, path.string() + ": expected a JSON array");
  for (const auto& entry : doc) {
    ActionSpec spec;
    if (!entry.contains("name") || !entry["name"].is_string())
      throw Error(Errc::schema, path.string() + ": action entry without a name");
    spec.name = entry["name"].get<std::string>();
    if (entry.contains("behavior")) {
      auto b = behavior_from_name(entry["behavior"].get<std::string>());
      if (!b)
        throw Error(Errc::schema, path.string() + ": unknown behavior for " + spec.name);
      spec.behavior = *b;
    }
    if (entry.contains("required_inputs")) {
      for (auto it = entry["required_inputs"].begin(); it != entry["required_inputs"].end();
           ++it) {
        auto vt = value_type_from_name(it.value().get<std::string>());
        if (!vt)
          throw Error(Errc::schema, path.string() + ": bad value type for " + spec.name +
                                        "/" + it.key());
        spec.required_inputs[it.key()] = *vt;
      }
    }
    base[spec.name] = std::move(spec);
  }
  return base;
}

struct WorldState {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  long scans_taken = 0;
  std::string arm_posture = "stowed";
};

struct TraceEvent {
  NodeRef node;
  std::string action;
  double start_seconds = 0.0;
  double end_seconds = 0.0;
  WorldState state_after;
  bool ok = true;
};

struct ExecutionTrace {
  std::vector<TraceEvent> events;
  bool truncated = false;  // cyclic graph hit max_steps
};

struct Plan {
  UmrfGraph graph;
  std::map<NodeRef, ActionSpec> bindings;
};

struct GroundResult {
  std::optional<Plan> plan;
  std::vector<Violation> violations;

  bool ok() const { return plan.has_value(); }
};

// Resolves every node to a registry action and checks its required inputs.
// All mismatches are enumerated, not just the first.
inline GroundResult ground_graph(const UmrfGraph& graph, const ActionRegistry& registry) {
  GroundResult result;
  Plan plan;
  plan.graph = graph;
  for (const auto& node : graph.nodes) {
    auto it = registry.find(node.ref.name);
    if (it == registry.end()) {
      result.violations.push_back({ViolationCode::unknown_action, node.ref,
                                   "no registered action named '" + node.ref.name + "'"});
      continue;
    }
    const ActionSpec& spec = it->second;
    if (node.effect != "synchronous") {
      result.violations.push_back(
          {ViolationCode::unsupported_effect, node.ref,
           "effect '" + node.effect + "' is not executable (only: synchronous)"});
    }
    for (const auto& [param, type] : spec.required_inputs) {
      auto pit = node.input_parameters.find(param);
      if (pit == node.input_parameters.end()) {
        result.violations.push_back({ViolationCode::missing_parameter, node.ref,
                                     to_string(node.ref) + " is missing required input '" +
                                         param + "'"});
      } else if (pit->second.value_type != type) {
        result.violations.push_back(
            {ViolationCode::parameter_type_mismatch, node.ref,
             to_string(node.ref) + " input '" + param + "' must be " +
                 value_type_name(type) + ", got " +
                 value_type_name(pit->second.value_type)});
      }
    }
    plan.bindings[node.ref] = spec;
  }
  if (result.violations.empty()) result.plan = std::move(plan);
  return result;
}

namespace detail {

inline void apply_action(const ActionSpec& spec, const UmrfNode& node, WorldState& state,
                         bool& ok) {
  switch (spec.behavior) {
    case ActionBehavior::set_pose: {
      auto get = [&](const char* key) {
        return node.input_parameters.at(key).value.get<double>();
      };
      double x = get("x"), y = get("y"), yaw = get("yaw");
      if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(yaw)) {
        ok = false;  // refuse to corrupt the pose
        return;
      }
      state.x = x;
      state.y = y;
      state.yaw = yaw;
      return;
    }
    case ActionBehavior::take_scan:
      ++state.scans_taken;
      return;
    case ActionBehavior::set_posture: {
      auto it = node.input_parameters.find("posture");
      if (it != node.input_parameters.end() && it->second.value.is_string())
        state.arm_posture = it->second.value.get<std::string>();
      else
        state.arm_posture = "repositioned";
      return;
    }
    case ActionBehavior::noop:
      return;
  }
}

}  // namespace detail

// Runs a grounded plan with simulated unit durations. Acyclic graphs
// execute in deterministic topological order (ties broken by (name, id)).
// Cyclic graphs propagate completion events child-by-child until max_steps,
// then the trace is truncated — truncation is an annotation, not an error.
inline ExecutionTrace execute_graph(const Plan& plan, WorldState initial,
                                    std::size_t max_steps = 1000) {
  ExecutionTrace trace;
  if (plan.graph.nodes.empty()) return trace;
  WorldState state = initial;

  auto run_node = [&](const NodeRef& ref, std::size_t step) {
    const UmrfNode& node = *plan.graph.find(ref);
    const ActionSpec& spec = plan.bindings.at(ref);
    TraceEvent event;
    event.node = ref;
    event.action = spec.name;
    event.start_seconds = static_cast<double>(step);
    event.end_seconds = static_cast<double>(step + 1);
    bool ok = true;
    detail::apply_action(spec, node, state, ok);
    event.ok = ok;
    event.state_after = state;
    trace.events.push_back(std::move(event));
  };

  TopoResult topo = topological_order(plan.graph);
  if (topo.acyclic()) {
    std::size_t steps = std::min(topo.order.size(), max_steps);
    for (std::size_t i = 0; i < steps; ++i) run_node(topo.order[i], i);
    trace.truncated = steps < topo.order.size();
    return trace;
  }

  // Cyclic: each completion re-triggers its children in (name, id) order.
  std::vector<NodeRef> entries;
  for (const auto& n : plan.graph.nodes)
    if (n.parents.empty()) entries.push_back(n.ref);
  std::sort(entries.begin(), entries.end());
  std::queue<NodeRef> pending;
  for (const auto& e : entries) pending.push(e);
  std::size_t step = 0;
  while (!pending.empty() && step < max_steps) {
    NodeRef ref = pending.front();
    pending.pop();
    run_node(ref, step++);
    std::vector<NodeRef> children = plan.graph.find(ref)->children;
    std::sort(children.begin(), children.end());
    for (const auto& c : children) pending.push(c);
  }
  trace.truncated = !pending.empty();
  return trace;
}

// One JSON object per line; a final {"truncated": true} line marks a
// truncated cyclic run.
inline std::string trace_jsonl(const ExecutionTrace& trace) {
  std::string out;
  for (const auto& e : trace.events) {
    Json j = Json::object();
    j["node"] = {{"name", e.node.name}, {"id", e.node.id}};
    j["action"] = e.action;
    j["start"] = e.start_seconds;
    j["end"] = e.end_seconds;
    j["state_after"] = {{"x", e.state_after.x},
                        {"y", e.state_after.y},
                        {"yaw", e.state_after.yaw},
                        {"scans_taken", e.state_after.scans_taken},
                        {"arm_posture", e.state_after.arm_posture}};
    j["status"] = e.ok ? "ok" : "failed";
    out += j.dump();
    out += '\n';
  }
  if (trace.truncated) out += "{\"truncated\":true}\n";
  return out;
}

}  // namespace umrf_forge
