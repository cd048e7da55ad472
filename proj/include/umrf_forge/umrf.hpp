#pragma once

// UMRF task graphs: parsing, validation, canonical serialization and
// ordering. A task is a graph of parametrized actions linked by
// parent/child relations; sequential, concurrent and cyclic shapes are all
// representable. The JSON field layout is frozen in docs/umrf_schema.md.

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "umrf_forge/errors.hpp"
#include "umrf_forge/io.hpp"

namespace umrf_forge {

using Json = nlohmann::ordered_json;

struct NodeRef {
  std::string name;
  long long id = 0;  // non-negative instance suffix; (name, id) is unique per graph

  auto operator<=>(const NodeRef&) const = default;
};

inline std::string to_string(const NodeRef& ref) {
  return ref.name + "_" + std::to_string(ref.id);
}

enum class ValueType { number, string, boolean, number_list };

inline const char* value_type_name(ValueType t) {
  switch (t) {
    case ValueType::number: return "number";
    case ValueType::string: return "string";
    case ValueType::boolean: return "bool";
    case ValueType::number_list: return "number-list";
  }
  return "?";
}

inline std::optional<ValueType> value_type_from_name(std::string_view s) {
  if (s == "number") return ValueType::number;
  if (s == "string") return ValueType::string;
  if (s == "bool") return ValueType::boolean;
  if (s == "number-list") return ValueType::number_list;
  return std::nullopt;
}

// A typed action parameter. The payload keeps the original JSON value so
// integers and decimals survive round-trips without reformatting.
struct Parameter {
  ValueType value_type = ValueType::number;
  Json value;
  Json extras = Json::object();  // lenient-mode passthrough of unknown keys

  friend bool operator==(const Parameter& a, const Parameter& b) {
    return a.value_type == b.value_type && a.value == b.value && a.extras == b.extras;
  }
};

inline bool value_matches_type(const Json& v, ValueType t) {
  switch (t) {
    case ValueType::number: return v.is_number();
    case ValueType::string: return v.is_string();
    case ValueType::boolean: return v.is_boolean();
    case ValueType::number_list:
      if (!v.is_array()) return false;
      return std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_number(); });
  }
  return false;
}

struct UmrfNode {
  NodeRef ref;
  std::string effect = "synchronous";
  std::map<std::string, Parameter> input_parameters;
  std::map<std::string, Parameter> output_parameters;
  std::vector<NodeRef> parents;
  std::vector<NodeRef> children;
  Json extras = Json::object();
};

struct UmrfGraph {
  std::string graph_name;
  std::vector<UmrfNode> nodes;
  Json extras = Json::object();

  const UmrfNode* find(const NodeRef& ref) const {
    for (const auto& n : nodes)
      if (n.ref == ref) return &n;
    return nullptr;
  }
};

// Link lists carry no ordering semantics, so equality compares them as sets;
// node order in the document is likewise not significant.
inline bool operator==(const UmrfNode& a, const UmrfNode& b) {
  auto sorted = [](std::vector<NodeRef> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  return a.ref == b.ref && a.effect == b.effect &&
         a.input_parameters == b.input_parameters &&
         a.output_parameters == b.output_parameters &&
         sorted(a.parents) == sorted(b.parents) &&
         sorted(a.children) == sorted(b.children) && a.extras == b.extras;
}

inline bool operator==(const UmrfGraph& a, const UmrfGraph& b) {
  if (a.graph_name != b.graph_name || a.extras != b.extras) return false;
  if (a.nodes.size() != b.nodes.size()) return false;
  auto by_ref = [](const UmrfNode& x, const UmrfNode& y) { return x.ref < y.ref; };
  std::vector<UmrfNode> an = a.nodes, bn = b.nodes;
  std::sort(an.begin(), an.end(), by_ref);
  std::sort(bn.begin(), bn.end(), by_ref);
  return an == bn;
}

// Closed set of validation/grounding violation codes; see docs/umrf_schema.md.
enum class ViolationCode {
  duplicate_node,
  self_link,
  duplicate_link,
  unresolved_ref,
  asymmetric_link,
  no_entry_node,
  unreachable_node,
  unknown_action,
  missing_parameter,
  parameter_type_mismatch,
  unsupported_effect,
};

inline const char* violation_code_name(ViolationCode c) {
  switch (c) {
    case ViolationCode::duplicate_node: return "duplicate_node";
    case ViolationCode::self_link: return "self_link";
    case ViolationCode::duplicate_link: return "duplicate_link";
    case ViolationCode::unresolved_ref: return "unresolved_ref";
    case ViolationCode::asymmetric_link: return "asymmetric_link";
    case ViolationCode::no_entry_node: return "no_entry_node";
    case ViolationCode::unreachable_node: return "unreachable_node";
    case ViolationCode::unknown_action: return "unknown_action";
    case ViolationCode::missing_parameter: return "missing_parameter";
    case ViolationCode::parameter_type_mismatch: return "parameter_type_mismatch";
    case ViolationCode::unsupported_effect: return "unsupported_effect";
  }
  return "?";
}

struct Violation {
  ViolationCode code;
  std::optional<NodeRef> node;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

class InvalidGraphError : public Error {
 public:
  InvalidGraphError(std::string message, std::vector<Violation> violations)
      : Error(Errc::schema, std::move(message)), violations_(std::move(violations)) {}
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

enum class ParseMode { strict, lenient };

namespace detail {

inline Error schema_error(const std::string& path, const std::string& what) {
  return Error(Errc::schema, "schema error at " + path + ": " + what, path);
}

inline NodeRef parse_node_ref(const Json& j, const std::string& path, ParseMode mode) {
  if (!j.is_object()) throw schema_error(path, "expected an object with name/id");
  NodeRef ref;
  if (!j.contains("name") || !j["name"].is_string())
    throw schema_error(path + "/name", "expected a string action name");
  ref.name = j["name"].get<std::string>();
  if (j.contains("id")) {
    if (!j["id"].is_number_integer() || j["id"].get<long long>() < 0)
      throw schema_error(path + "/id", "expected a non-negative integer");
    ref.id = j["id"].get<long long>();
  }
  if (mode == ParseMode::strict) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() != "name" && it.key() != "id")
        throw schema_error(path + "/" + it.key(), "unknown field");
    }
  }
  return ref;
}

inline Parameter parse_parameter(const Json& j, const std::string& path, ParseMode mode) {
  if (!j.is_object()) throw schema_error(path, "expected a parameter object");
  if (!j.contains("pvf_type") || !j["pvf_type"].is_string())
    throw schema_error(path + "/pvf_type", "expected a string");
  Parameter p;
  auto type = value_type_from_name(j["pvf_type"].get<std::string>());
  if (!type)
    throw schema_error(path + "/pvf_type",
                       "expected one of number|string|bool|number-list");
  p.value_type = *type;
  if (!j.contains("pvf_value")) throw schema_error(path + "/pvf_value", "missing");
  p.value = j["pvf_value"];
  if (!value_matches_type(p.value, p.value_type))
    throw schema_error(path + "/pvf_value",
                       std::string("value does not match pvf_type ") +
                           value_type_name(p.value_type));
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "pvf_type" || it.key() == "pvf_value") continue;
    if (mode == ParseMode::strict)
      throw schema_error(path + "/" + it.key(), "unknown field");
    p.extras[it.key()] = it.value();
  }
  return p;
}

inline std::map<std::string, Parameter> parse_parameter_map(const Json& j,
                                                            const std::string& path,
                                                            ParseMode mode) {
  if (!j.is_object()) throw schema_error(path, "expected an object of parameters");
  std::map<std::string, Parameter> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[it.key()] = parse_parameter(it.value(), path + "/" + it.key(), mode);
  return out;
}

inline std::vector<NodeRef> parse_ref_list(const Json& j, const std::string& path,
                                           ParseMode mode) {
  if (!j.is_array()) throw schema_error(path, "expected an array of node references");
  std::vector<NodeRef> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(parse_node_ref(j[i], path + "/" + std::to_string(i), mode));
  return out;
}

inline Json sorted_object(const Json& obj) {
  nlohmann::json sorted = obj;  // plain json keeps keys sorted
  return Json(sorted);
}

}  // namespace detail

// Parses a UMRF JSON document. Strict mode rejects unknown fields; lenient
// mode (for untrusted provider output) preserves them verbatim so a
// re-serialization does not lose information. Link-consistency problems are
// not errors here; validate_graph reports them as data.
inline UmrfGraph parse_graph(std::string_view json_text, ParseMode mode = ParseMode::strict) {
  Json doc;
  try {
    doc = Json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::syntax, e.what()).with_offset(e.byte);
  }
  if (!doc.is_object()) throw detail::schema_error("/", "expected a JSON object");
  if (!doc.contains("graph_name") || !doc["graph_name"].is_string())
    throw detail::schema_error("/graph_name", "expected a string");
  if (!doc.contains("umrf_actions") || !doc["umrf_actions"].is_array())
    throw detail::schema_error("/umrf_actions", "expected an array");
  if (doc["umrf_actions"].empty())
    throw detail::schema_error("/umrf_actions", "node list must not be empty");

  UmrfGraph graph;
  graph.graph_name = doc["graph_name"].get<std::string>();

  const auto& actions = doc["umrf_actions"];
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const std::string path = "/umrf_actions/" + std::to_string(i);
    const Json& nj = actions[i];
    if (!nj.is_object()) throw detail::schema_error(path, "expected a node object");
    UmrfNode node;
    node.ref = detail::parse_node_ref(nj, path, ParseMode::lenient);  // extra keys handled below
    for (auto it = nj.begin(); it != nj.end(); ++it) {
      const std::string& key = it.key();
      const std::string kpath = path + "/" + key;
      if (key == "name" || key == "id") continue;
      if (key == "effect") {
        if (!it.value().is_string()) throw detail::schema_error(kpath, "expected a string");
        node.effect = it.value().get<std::string>();
      } else if (key == "input_parameters") {
        node.input_parameters = detail::parse_parameter_map(it.value(), kpath, mode);
      } else if (key == "output_parameters") {
        node.output_parameters = detail::parse_parameter_map(it.value(), kpath, mode);
      } else if (key == "parents") {
        node.parents = detail::parse_ref_list(it.value(), kpath, mode);
      } else if (key == "children") {
        node.children = detail::parse_ref_list(it.value(), kpath, mode);
      } else if (mode == ParseMode::strict) {
        throw detail::schema_error(kpath, "unknown field");
      } else {
        node.extras[key] = it.value();
      }
    }
    graph.nodes.push_back(std::move(node));
  }

  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() == "graph_name" || it.key() == "umrf_actions") continue;
    if (mode == ParseMode::strict)
      throw detail::schema_error("/" + it.key(), "unknown field");
    graph.extras[it.key()] = it.value();
  }
  return graph;
}

// Pure structural validation. Cycles and fan-out are legal; what is checked:
// unique (name, id), link hygiene, mutual parent/child consistency, at least
// one entry node, and reachability from the entry set.
inline std::vector<Violation> validate_graph(const UmrfGraph& graph) {
  std::vector<Violation> out;
  std::set<NodeRef> seen;
  std::set<NodeRef> known;
  for (const auto& n : graph.nodes) known.insert(n.ref);

  for (const auto& n : graph.nodes) {
    if (!seen.insert(n.ref).second)
      out.push_back({ViolationCode::duplicate_node, n.ref,
                     "node " + to_string(n.ref) + " appears more than once"});

    auto check_links = [&](const std::vector<NodeRef>& refs, const char* which) {
      std::set<NodeRef> local;
      for (const auto& r : refs) {
        if (r == n.ref)
          out.push_back({ViolationCode::self_link, n.ref,
                         "node " + to_string(n.ref) + " lists itself in " + which});
        else if (!local.insert(r).second)
          out.push_back({ViolationCode::duplicate_link, n.ref,
                         "node " + to_string(n.ref) + " lists " + to_string(r) +
                             " twice in " + which});
        if (!known.count(r))
          out.push_back({ViolationCode::unresolved_ref, n.ref,
                         "node " + to_string(n.ref) + " references missing node " +
                             to_string(r) + " in " + which});
      }
    };
    check_links(n.parents, "parents");
    check_links(n.children, "children");
  }

  // Every directed claim must have its mirror on the other endpoint.
  auto contains = [](const std::vector<NodeRef>& v, const NodeRef& r) {
    return std::find(v.begin(), v.end(), r) != v.end();
  };
  for (const auto& n : graph.nodes) {
    for (const auto& c : n.children) {
      const UmrfNode* other = graph.find(c);
      if (other && !contains(other->parents, n.ref))
        out.push_back({ViolationCode::asymmetric_link, n.ref,
                       "node " + to_string(n.ref) + " lists child " + to_string(c) +
                           " but " + to_string(c) + " does not list it as parent"});
    }
    for (const auto& p : n.parents) {
      const UmrfNode* other = graph.find(p);
      if (other && !contains(other->children, n.ref))
        out.push_back({ViolationCode::asymmetric_link, n.ref,
                       "node " + to_string(n.ref) + " lists parent " + to_string(p) +
                           " but " + to_string(p) + " does not list it as child"});
    }
  }

  std::vector<NodeRef> entries;
  for (const auto& n : graph.nodes)
    if (n.parents.empty()) entries.push_back(n.ref);
  if (entries.empty()) {
    out.push_back({ViolationCode::no_entry_node, std::nullopt,
                   "graph has no node with empty parents"});
    return out;  // reachability is meaningless without an entry set
  }

  std::set<NodeRef> reached(entries.begin(), entries.end());
  std::queue<NodeRef> frontier;
  for (const auto& e : entries) frontier.push(e);
  while (!frontier.empty()) {
    const UmrfNode* node = graph.find(frontier.front());
    frontier.pop();
    if (!node) continue;
    for (const auto& c : node->children)
      if (known.count(c) && reached.insert(c).second) frontier.push(c);
  }
  for (const auto& n : graph.nodes)
    if (!reached.count(n.ref))
      out.push_back({ViolationCode::unreachable_node, n.ref,
                     "node " + to_string(n.ref) + " is not reachable from any entry node"});
  return out;
}

// Result of topological_order: either a full ordering or the set of nodes
// that sit on cycles (members of non-trivial strongly connected components).
struct TopoResult {
  std::vector<NodeRef> order;
  std::vector<NodeRef> cycle_nodes;

  bool acyclic() const { return cycle_nodes.empty(); }
};

inline TopoResult topological_order(const UmrfGraph& graph) {
  TopoResult result;
  std::map<NodeRef, std::size_t> index;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) index[graph.nodes[i].ref] = i;

  std::vector<int> in_degree(graph.nodes.size(), 0);
  std::vector<std::vector<std::size_t>> adj(graph.nodes.size());
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    for (const auto& c : graph.nodes[i].children) {
      auto it = index.find(c);
      if (it == index.end()) continue;
      adj[i].push_back(it->second);
      ++in_degree[it->second];
    }
  }

  // Kahn with a min-heap on (name, id) for deterministic tie-breaking.
  auto cmp = [&](std::size_t a, std::size_t b) {
    return graph.nodes[b].ref < graph.nodes[a].ref;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> ready(cmp);
  for (std::size_t i = 0; i < graph.nodes.size(); ++i)
    if (in_degree[i] == 0) ready.push(i);
  while (!ready.empty()) {
    std::size_t i = ready.top();
    ready.pop();
    result.order.push_back(graph.nodes[i].ref);
    for (std::size_t j : adj[i])
      if (--in_degree[j] == 0) ready.push(j);
  }
  if (result.order.size() == graph.nodes.size()) return result;

  // Cycle report: nodes in strongly connected components of size > 1
  // (self-links are banned by validation, so singleton SCCs are acyclic).
  result.order.clear();
  std::size_t n = graph.nodes.size();
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  int timer = 0;
  std::set<NodeRef> cyclic;

  // Iterative Tarjan to stay safe on deep graphs.
  struct Frame {
    std::size_t v;
    std::size_t edge = 0;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (disc[root] != -1) continue;
    std::vector<Frame> call_stack{{root}};
    while (!call_stack.empty()) {
      Frame& f = call_stack.back();
      if (f.edge == 0) {
        disc[f.v] = low[f.v] = timer++;
        stack.push_back(f.v);
        on_stack[f.v] = true;
      }
      if (f.edge < adj[f.v].size()) {
        std::size_t w = adj[f.v][f.edge++];
        if (disc[w] == -1) {
          call_stack.push_back({w});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], disc[w]);
        }
      } else {
        if (low[f.v] == disc[f.v]) {
          std::vector<std::size_t> comp;
          while (true) {
            std::size_t w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            comp.push_back(w);
            if (w == f.v) break;
          }
          if (comp.size() > 1)
            for (std::size_t w : comp) cyclic.insert(graph.nodes[w].ref);
        }
        std::size_t v = f.v;
        call_stack.pop_back();
        if (!call_stack.empty())
          low[call_stack.back().v] = std::min(low[call_stack.back().v], low[v]);
      }
    }
  }
  result.cycle_nodes.assign(cyclic.begin(), cyclic.end());
  return result;
}

namespace detail {

inline Json node_ref_to_json(const NodeRef& ref) {
  Json j = Json::object();
  j["name"] = ref.name;
  j["id"] = ref.id;
  return j;
}

inline Json parameter_to_json(const Parameter& p) {
  Json j = Json::object();
  j["pvf_type"] = value_type_name(p.value_type);
  j["pvf_value"] = p.value;
  if (!p.extras.empty()) {
    Json sorted = sorted_object(p.extras);
    for (auto it = sorted.begin(); it != sorted.end(); ++it) j[it.key()] = it.value();
  }
  return j;
}

}  // namespace detail

// Canonical serialization: fixed key order, 2-space indentation, minimal
// digits, node order topological when acyclic (else sorted by (name, id)),
// link lists sorted, empty collections and the default effect omitted.
// Refuses graphs that do not validate cleanly.
inline std::string serialize_graph(const UmrfGraph& graph) {
  auto violations = validate_graph(graph);
  if (!violations.empty()) {
    std::string message = "refusing to serialize invalid graph (" +
                          std::to_string(violations.size()) +
                          " violation(s), first: " + violations.front().message + ")";
    throw InvalidGraphError(std::move(message), std::move(violations));
  }

  std::vector<NodeRef> node_order;
  TopoResult topo = topological_order(graph);
  if (topo.acyclic()) {
    node_order = topo.order;
  } else {
    for (const auto& n : graph.nodes) node_order.push_back(n.ref);
    std::sort(node_order.begin(), node_order.end());
  }

  Json doc = Json::object();
  doc["graph_name"] = graph.graph_name;
  Json actions = Json::array();
  for (const auto& ref : node_order) {
    const UmrfNode& n = *graph.find(ref);
    Json nj = Json::object();
    nj["name"] = n.ref.name;
    nj["id"] = n.ref.id;
    if (n.effect != "synchronous") nj["effect"] = n.effect;
    auto emit_params = [&](const char* key, const std::map<std::string, Parameter>& params) {
      if (params.empty()) return;
      Json pj = Json::object();
      for (const auto& [name, p] : params) pj[name] = detail::parameter_to_json(p);
      nj[key] = std::move(pj);
    };
    emit_params("input_parameters", n.input_parameters);
    emit_params("output_parameters", n.output_parameters);
    auto emit_refs = [&](const char* key, std::vector<NodeRef> refs) {
      if (refs.empty()) return;
      std::sort(refs.begin(), refs.end());
      Json arr = Json::array();
      for (const auto& r : refs) arr.push_back(detail::node_ref_to_json(r));
      nj[key] = std::move(arr);
    };
    emit_refs("parents", n.parents);
    emit_refs("children", n.children);
    if (!n.extras.empty()) {
      Json sorted = detail::sorted_object(n.extras);
      for (auto it = sorted.begin(); it != sorted.end(); ++it) nj[it.key()] = it.value();
    }
    actions.push_back(std::move(nj));
  }
  doc["umrf_actions"] = std::move(actions);
  if (!graph.extras.empty()) {
    Json sorted = detail::sorted_object(graph.extras);
    for (auto it = sorted.begin(); it != sorted.end(); ++it) doc[it.key()] = it.value();
  }
  return doc.dump(2);
}

}  // namespace umrf_forge
