#pragma once

// JSON Schema -> typed AST.
//
// Supported keywords: type, properties, required, items, enum, minimum,
// maximum, anyOf, $ref (internal "#/..." pointers), additionalProperties
// (boolean), and the extensions evaluation_config and
// additional_instructions. Annotation-only keywords (title, description,
// $schema, $id, $comment, default, examples, $defs, definitions) are
// accepted and ignored. Anything else is UnsupportedConstruct.
//
// References are inlined during parsing; a reference cycle is rejected.
// `null` is accepted wherever a value is: the tri-state value model needs
// explicit nulls at every position, so "type": ["string", "null"] and an
// anyOf branch {"type": "null"} only restate that.

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xb/error.hpp"
#include "xb/metrics.hpp"
#include "xb/value_semantics.hpp"

namespace xb {

using ojson = nlohmann::ordered_json;

enum class NodeKind { Object, Array, Primitive, Choice };
enum class PrimitiveKind { String, Number, Integer, Boolean };

inline std::string_view to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::String: return "string";
    case PrimitiveKind::Number: return "number";
    case PrimitiveKind::Integer: return "integer";
    case PrimitiveKind::Boolean: return "boolean";
  }
  return "?";
}

struct SchemaNode;
using NodePtr = std::shared_ptr<const SchemaNode>;

struct Property {
  std::string name;
  NodePtr node;
};

struct Constraints {
  std::optional<std::vector<json>> enum_values;
  std::optional<double> minimum;
  std::optional<double> maximum;
  /// Only meaningful for objects; absent means extra properties are allowed.
  std::optional<bool> additional_properties;
};

struct SchemaNode {
  NodeKind kind = NodeKind::Primitive;
  PrimitiveKind primitive = PrimitiveKind::String;
  std::vector<Property> properties;  // document order
  std::vector<std::string> required;
  NodePtr items;
  std::vector<NodePtr> branches;
  Constraints constraints;
  /// Empty metric_id for object nodes, which are never field positions.
  MetricSpec metric;
  std::optional<std::string> additional_instructions;

  const SchemaNode* property(std::string_view name) const {
    for (const auto& p : properties) {
      if (p.name == name) return p.node.get();
    }
    return nullptr;
  }

  /// "object", "array", "choice" or the primitive kind name.
  std::string value_kind() const {
    switch (kind) {
      case NodeKind::Object: return "object";
      case NodeKind::Array: return "array";
      case NodeKind::Choice: return "choice";
      case NodeKind::Primitive: return std::string(to_string(primitive));
    }
    return "?";
  }
};

struct FieldPosition {
  FieldPath path;
  NodePtr node;

  bool is_array() const { return node->kind == NodeKind::Array; }
  /// Pointer plus "[]" for array positions.
  std::string display() const { return path.pointer() + (is_array() ? "[]" : ""); }
};

namespace schema_detail {

inline const std::set<std::string, std::less<>>& annotation_keywords() {
  static const std::set<std::string, std::less<>> k = {
      "title", "description", "$schema", "$id", "$comment", "default", "examples", "$defs",
      "definitions"};
  return k;
}

inline const std::set<std::string, std::less<>>& structural_keywords() {
  static const std::set<std::string, std::less<>> k = {
      "type", "properties", "required", "items", "enum", "minimum", "maximum", "anyOf",
      "$ref", "additionalProperties", "evaluation_config", "additional_instructions"};
  return k;
}

inline std::string escape_token(std::string_view s) { return FieldPath{{std::string(s)}}.pointer(); }

inline std::string default_metric_for(const std::string& value_kind) {
  if (value_kind == "string") return "string_exact";
  if (value_kind == "number") return "number_exact";
  if (value_kind == "integer") return "integer_exact";
  if (value_kind == "boolean") return "boolean_exact";
  if (value_kind == "array") return "array_llm";
  if (value_kind == "choice") return "any_of";
  return {};
}

/// Declared kind of a raw fragment, without following references.
inline std::string raw_value_kind(const ojson& raw, const std::string& where) {
  if (!raw.is_object()) throw Error(ErrorCode::UnsupportedConstruct, "schema must be an object", where);
  if (raw.contains("anyOf")) return "choice";
  if (auto t = raw.find("type"); t != raw.end()) {
    std::vector<std::string> types;
    if (t->is_string()) {
      types.push_back(t->get<std::string>());
    } else if (t->is_array()) {
      for (const auto& e : *t) {
        if (!e.is_string()) throw Error(ErrorCode::UnsupportedConstruct, "type entries must be strings", where + "/type");
        types.push_back(e.get<std::string>());
      }
    } else {
      throw Error(ErrorCode::UnsupportedConstruct, "type must be a string or array", where + "/type");
    }
    types.erase(std::remove(types.begin(), types.end(), "null"), types.end());
    if (types.size() != 1) {
      throw Error(ErrorCode::UnsupportedConstruct,
                  "type must name exactly one non-null type", where + "/type");
    }
    static const std::set<std::string> known = {"object", "array", "string", "number", "integer", "boolean"};
    if (known.count(types.front()) == 0) {
      throw Error(ErrorCode::UnsupportedConstruct, "unsupported type '" + types.front() + "'", where + "/type");
    }
    return types.front();
  }
  if (raw.contains("properties")) return "object";
  if (raw.contains("items")) return "array";
  throw Error(ErrorCode::UnsupportedConstruct, "cannot determine the schema type", where);
}

inline bool metric_accepts(const MetricInfo& info, const std::string& value_kind) {
  return info.accepts.count("*") != 0 || info.accepts.count(value_kind) != 0;
}

inline MetricSpec resolve_config(const ojson* config, const std::string& value_kind,
                                 const std::optional<std::string>& instructions,
                                 const MetricRegistry& registry, const std::string& where) {
  if (value_kind == "object") {
    if (config != nullptr) {
      throw Error(ErrorCode::BadConfig, "evaluation_config is not allowed on objects", where);
    }
    return {};
  }
  std::string id;
  json params = json::object();
  if (config == nullptr) {
    id = default_metric_for(value_kind);
  } else if (config->is_string()) {
    id = config->get<std::string>();
  } else if (config->is_object()) {
    for (const auto& [key, _] : config->items()) {
      if (key != "metric_id" && key != "params") {
        throw Error(ErrorCode::BadConfig, "unexpected key '" + key + "' in evaluation_config", where);
      }
    }
    auto mid = config->find("metric_id");
    if (mid == config->end() || !mid->is_string()) {
      throw Error(ErrorCode::BadConfig, "evaluation_config object needs a string metric_id", where);
    }
    id = mid->get<std::string>();
    if (auto p = config->find("params"); p != config->end()) {
      if (!p->is_object()) throw Error(ErrorCode::BadConfig, "params must be an object", where);
      params = json::parse(p->dump());
    }
  } else {
    throw Error(ErrorCode::BadConfig, "evaluation_config must be a preset name or an object", where);
  }
  const MetricInfo* info = registry.find(id);
  if (info == nullptr) throw Error(ErrorCode::BadConfig, "unknown metric '" + id + "'", where);
  if (!metric_accepts(*info, value_kind)) {
    throw Error(ErrorCode::BadConfig, "metric '" + id + "' does not apply to " + value_kind, where);
  }
  MetricSpec spec;
  try {
    spec = registry.make_spec(id, params);
  } catch (const Error& e) {
    throw Error(ErrorCode::BadConfig, e.what(), where);
  }
  spec.additional_instructions = instructions;
  return spec;
}

inline std::optional<std::string> read_instructions(const ojson& raw, const std::string& where) {
  auto it = raw.find("additional_instructions");
  if (it == raw.end()) return std::nullopt;
  if (!it->is_string()) {
    throw Error(ErrorCode::BadConfig, "additional_instructions must be a string", where);
  }
  return it->get<std::string>();
}

class Parser {
 public:
  Parser(const ojson& root, const MetricRegistry& registry) : root_(root), registry_(registry) {}

  NodePtr parse(const ojson& raw, const std::string& where) {
    if (!raw.is_object()) throw Error(ErrorCode::UnsupportedConstruct, "schema must be an object", where);
    for (const auto& [key, _] : raw.items()) {
      if (structural_keywords().count(key) == 0 && annotation_keywords().count(key) == 0) {
        throw Error(ErrorCode::UnsupportedConstruct, "unsupported keyword '" + key + "'",
                    where + escape_token(key));
      }
    }
    if (raw.contains("$ref")) return parse_ref(raw, where);
    const std::string kind = raw_value_kind(raw, where);
    if (kind == "choice") return parse_choice(raw, where);

    auto node = std::make_shared<SchemaNode>();
    node->additional_instructions = read_instructions(raw, where);
    check_only(raw, where, kind);
    if (kind == "object") {
      node->kind = NodeKind::Object;
      if (auto props = raw.find("properties"); props != raw.end()) {
        if (!props->is_object()) {
          throw Error(ErrorCode::UnsupportedConstruct, "properties must be an object", where + "/properties");
        }
        for (const auto& [name, sub] : props->items()) {
          node->properties.push_back({name, parse(sub, where + "/properties" + escape_token(name))});
        }
      }
      if (auto req = raw.find("required"); req != raw.end()) {
        if (!req->is_array()) throw Error(ErrorCode::UnsupportedConstruct, "required must be an array", where + "/required");
        for (const auto& r : *req) {
          if (!r.is_string()) throw Error(ErrorCode::UnsupportedConstruct, "required entries must be strings", where + "/required");
          node->required.push_back(r.get<std::string>());
        }
      }
      if (auto ap = raw.find("additionalProperties"); ap != raw.end()) {
        if (!ap->is_boolean()) {
          throw Error(ErrorCode::UnsupportedConstruct, "additionalProperties must be a boolean",
                      where + "/additionalProperties");
        }
        node->constraints.additional_properties = ap->get<bool>();
      }
    } else if (kind == "array") {
      node->kind = NodeKind::Array;
      auto items = raw.find("items");
      if (items == raw.end()) {
        throw Error(ErrorCode::UnsupportedConstruct, "array schema needs items", where);
      }
      node->items = parse(*items, where + "/items");
    } else {
      node->kind = NodeKind::Primitive;
      node->primitive = kind == "string"    ? PrimitiveKind::String
                        : kind == "number"  ? PrimitiveKind::Number
                        : kind == "integer" ? PrimitiveKind::Integer
                                            : PrimitiveKind::Boolean;
    }
    read_constraints(raw, where, *node);
    const ojson* config = raw.contains("evaluation_config") ? &raw["evaluation_config"] : nullptr;
    node->metric = resolve_config(config, kind, node->additional_instructions, registry_, where);
    return node;
  }

 private:
  void check_only(const ojson& raw, const std::string& where, const std::string& kind) {
    auto reject = [&](const char* key) {
      if (raw.contains(key)) {
        throw Error(ErrorCode::UnsupportedConstruct,
                    std::string("keyword '") + key + "' does not apply to " + kind, where + "/" + key);
      }
    };
    if (kind != "object") {
      reject("properties"), reject("required"), reject("additionalProperties");
    }
    if (kind != "array") reject("items");
    if (kind != "number" && kind != "integer") reject("minimum"), reject("maximum");
  }

  void read_constraints(const ojson& raw, const std::string& where, SchemaNode& node) {
    if (auto e = raw.find("enum"); e != raw.end()) {
      if (!e->is_array()) throw Error(ErrorCode::UnsupportedConstruct, "enum must be an array", where + "/enum");
      std::vector<json> values;
      for (const auto& v : *e) values.push_back(json::parse(v.dump()));
      node.constraints.enum_values = std::move(values);
    }
    for (const char* key : {"minimum", "maximum"}) {
      if (auto m = raw.find(key); m != raw.end()) {
        if (!m->is_number()) {
          throw Error(ErrorCode::UnsupportedConstruct, std::string(key) + " must be a number", where + "/" + key);
        }
        (std::string_view(key) == "minimum" ? node.constraints.minimum : node.constraints.maximum) =
            m->get<double>();
      }
    }
  }

  NodePtr parse_ref(const ojson& raw, const std::string& where) {
    for (const auto& [key, _] : raw.items()) {
      if (key != "$ref" && key != "evaluation_config" && key != "additional_instructions" &&
          annotation_keywords().count(key) == 0) {
        throw Error(ErrorCode::UnsupportedConstruct, "keyword '" + key + "' cannot accompany $ref",
                    where + escape_token(key));
      }
    }
    const auto& ref = raw["$ref"];
    if (!ref.is_string()) throw Error(ErrorCode::UnsupportedConstruct, "$ref must be a string", where + "/$ref");
    const std::string target = ref.get<std::string>();
    if (target.rfind("#", 0) != 0 || (target.size() > 1 && target[1] != '/')) {
      throw Error(ErrorCode::UnsupportedConstruct, "only internal '#/...' references are supported",
                  where + "/$ref");
    }
    const std::string pointer = target.substr(1);
    NodePtr base;
    if (auto it = memo_.find(pointer); it != memo_.end()) {
      base = it->second;
    } else {
      if (std::find(stack_.begin(), stack_.end(), pointer) != stack_.end()) {
        throw Error(ErrorCode::CyclicReference, "reference cycle through '" + target + "'", where + "/$ref");
      }
      const ojson* resolved = nullptr;
      try {
        resolved = &root_.at(ojson::json_pointer(pointer));
      } catch (const std::exception&) {
        throw Error(ErrorCode::UnsupportedConstruct, "unresolvable reference '" + target + "'", where + "/$ref");
      }
      stack_.push_back(pointer);
      base = parse(*resolved, pointer);
      stack_.pop_back();
      memo_.emplace(pointer, base);
    }
    if (!raw.contains("evaluation_config") && !raw.contains("additional_instructions")) return base;

    // Use-site overrides on a referenced definition.
    auto node = std::make_shared<SchemaNode>(*base);
    auto instructions = read_instructions(raw, where);
    if (instructions) node->additional_instructions = instructions;
    const ojson* config = raw.contains("evaluation_config") ? &raw["evaluation_config"] : nullptr;
    if (config != nullptr || node->kind != NodeKind::Object) {
      if (config == nullptr) {
        node->metric.additional_instructions = node->additional_instructions;
      } else {
        node->metric = resolve_config(config, node->value_kind(), node->additional_instructions,
                                      registry_, where);
      }
    }
    return node;
  }

  NodePtr parse_choice(const ojson& raw, const std::string& where) {
    for (const auto& [key, _] : raw.items()) {
      if (key != "anyOf" && key != "evaluation_config" && key != "additional_instructions" &&
          annotation_keywords().count(key) == 0) {
        throw Error(ErrorCode::UnsupportedConstruct, "keyword '" + key + "' cannot accompany anyOf",
                    where + escape_token(key));
      }
    }
    const auto& any = raw["anyOf"];
    if (!any.is_array() || any.empty()) {
      throw Error(ErrorCode::UnsupportedConstruct, "anyOf must be a non-empty array", where + "/anyOf");
    }
    std::vector<NodePtr> branches;
    for (std::size_t i = 0; i < any.size(); ++i) {
      const auto& b = any[i];
      if (b.is_object() && b.size() == 1 && b.contains("type") && b["type"] == "null") continue;
      branches.push_back(parse(b, where + "/anyOf/" + std::to_string(i)));
    }
    if (branches.empty()) {
      throw Error(ErrorCode::UnsupportedConstruct, "anyOf needs a non-null branch", where + "/anyOf");
    }
    auto instructions = read_instructions(raw, where);
    const ojson* config = raw.contains("evaluation_config") ? &raw["evaluation_config"] : nullptr;
    if (branches.size() == 1) {
      // anyOf [X, null] is X.
      auto node = std::make_shared<SchemaNode>(*branches.front());
      if (instructions) node->additional_instructions = instructions;
      if (config != nullptr) {
        node->metric = resolve_config(config, node->value_kind(), node->additional_instructions,
                                      registry_, where);
      } else if (instructions && node->kind != NodeKind::Object) {
        node->metric.additional_instructions = instructions;
      }
      return node;
    }
    auto node = std::make_shared<SchemaNode>();
    node->kind = NodeKind::Choice;
    node->branches = std::move(branches);
    node->additional_instructions = instructions;
    node->metric = resolve_config(config, "choice", instructions, registry_, where);
    return node;
  }

  const ojson& root_;
  const MetricRegistry& registry_;
  std::vector<std::string> stack_;
  std::map<std::string, NodePtr> memo_;
};

}  // namespace schema_detail

/// Parses schema text into a fully resolved AST.
inline NodePtr parse_schema(std::string_view schema_text,
                            const MetricRegistry& registry = MetricRegistry::default_registry()) {
  ojson root;
  try {
    root = ojson::parse(schema_text);
  } catch (const ojson::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, e.what());
  }
  schema_detail::Parser parser(root, registry);
  return parser.parse(root, "");
}

inline NodePtr parse_schema(const std::string& schema_text,
                            const MetricRegistry& registry = MetricRegistry::default_registry()) {
  return parse_schema(std::string_view(schema_text), registry);
}

inline NodePtr parse_schema(const char* schema_text,
                            const MetricRegistry& registry = MetricRegistry::default_registry()) {
  return parse_schema(std::string_view(schema_text), registry);
}

inline NodePtr parse_schema(const ojson& schema,
                            const MetricRegistry& registry = MetricRegistry::default_registry()) {
  schema_detail::Parser parser(schema, registry);
  return parser.parse(schema, "");
}

/// Metric for a raw schema fragment: preset string -> defaults, object
/// {metric_id, params} -> defaults overridden by params, absent -> the
/// default for the declared type.
inline MetricSpec resolve_eval_config(const ojson& raw_node,
                                      const MetricRegistry& registry = MetricRegistry::default_registry()) {
  const std::string kind = schema_detail::raw_value_kind(raw_node, "");
  const ojson* config = raw_node.contains("evaluation_config") ? &raw_node["evaluation_config"] : nullptr;
  return schema_detail::resolve_config(config, kind, schema_detail::read_instructions(raw_node, ""),
                                       registry, "");
}

/// Field positions in document order: primitive and anyOf leaves reachable
/// without crossing an array, plus each array node counted once.
inline std::vector<FieldPosition> enumerate_field_positions(const NodePtr& root) {
  std::vector<FieldPosition> out;
  auto walk = [&](auto&& self, const NodePtr& node, const FieldPath& path) -> void {
    if (node->kind == NodeKind::Object) {
      for (const auto& p : node->properties) self(self, p.node, path.child(p.name));
    } else {
      out.push_back({path, node});
    }
  };
  walk(walk, root, FieldPath{});
  return out;
}

/// Inverse of parse_schema, up to references (which are inlined) and
/// annotation keywords (which are dropped). Metrics are written as full
/// {metric_id, params} objects.
inline ojson serialize_schema(const SchemaNode& node) {
  ojson j = ojson::object();
  switch (node.kind) {
    case NodeKind::Object: {
      j["type"] = "object";
      j["properties"] = ojson::object();
      for (const auto& p : node.properties) j["properties"][p.name] = serialize_schema(*p.node);
      if (!node.required.empty()) j["required"] = node.required;
      if (node.constraints.additional_properties) {
        j["additionalProperties"] = *node.constraints.additional_properties;
      }
      break;
    }
    case NodeKind::Array:
      j["type"] = "array";
      j["items"] = serialize_schema(*node.items);
      break;
    case NodeKind::Primitive:
      j["type"] = std::string(to_string(node.primitive));
      break;
    case NodeKind::Choice:
      j["anyOf"] = ojson::array();
      for (const auto& b : node.branches) j["anyOf"].push_back(serialize_schema(*b));
      break;
  }
  if (node.constraints.enum_values) {
    j["enum"] = ojson::array();
    for (const auto& v : *node.constraints.enum_values) j["enum"].push_back(ojson::parse(v.dump()));
  }
  if (node.constraints.minimum) j["minimum"] = *node.constraints.minimum;
  if (node.constraints.maximum) j["maximum"] = *node.constraints.maximum;
  if (node.additional_instructions) j["additional_instructions"] = *node.additional_instructions;
  if (!node.metric.metric_id.empty()) {
    j["evaluation_config"] = {{"metric_id", node.metric.metric_id},
                              {"params", ojson::parse(node.metric.params.dump())}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Instance validation

enum class ViolationKind {
  TypeMismatch,
  MissingRequired,
  EnumViolation,
  BelowMinimum,
  AboveMaximum,
  UnexpectedProperty,
  NoMatchingBranch,
};

inline std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::TypeMismatch: return "TypeMismatch";
    case ViolationKind::MissingRequired: return "MissingRequired";
    case ViolationKind::EnumViolation: return "EnumViolation";
    case ViolationKind::BelowMinimum: return "BelowMinimum";
    case ViolationKind::AboveMaximum: return "AboveMaximum";
    case ViolationKind::UnexpectedProperty: return "UnexpectedProperty";
    case ViolationKind::NoMatchingBranch: return "NoMatchingBranch";
  }
  return "?";
}

struct Violation {
  std::string pointer;
  ViolationKind kind;
  std::string message;
};

struct ValidityReport {
  bool conforming = true;
  std::vector<Violation> violations;

  json to_json() const {
    json v = json::array();
    for (const auto& x : violations) {
      v.push_back({{"pointer", x.pointer}, {"kind", to_string(x.kind)}, {"message", x.message}});
    }
    return {{"conforming", conforming}, {"violations", v}};
  }
};

namespace schema_detail {

inline bool primitive_matches(PrimitiveKind k, const json& v) {
  switch (k) {
    case PrimitiveKind::String: return v.is_string();
    case PrimitiveKind::Boolean: return v.is_boolean();
    case PrimitiveKind::Number: return v.is_number();
    case PrimitiveKind::Integer: return detail::integral_value(v);
  }
  return false;
}

inline void validate(const SchemaNode& node, const json& v, const std::string& where,
                     std::vector<Violation>& out) {
  if (v.is_null()) return;
  auto add = [&](ViolationKind k, std::string msg) { out.push_back({where, k, std::move(msg)}); };
  switch (node.kind) {
    case NodeKind::Object: {
      if (!v.is_object()) return add(ViolationKind::TypeMismatch, std::string("expected object, got ") + v.type_name());
      for (const auto& r : node.required) {
        if (!v.contains(r)) {
          out.push_back({where + escape_token(r), ViolationKind::MissingRequired,
                         "required property '" + r + "' is absent"});
        }
      }
      for (const auto& p : node.properties) {
        if (auto it = v.find(p.name); it != v.end()) validate(*p.node, *it, where + escape_token(p.name), out);
      }
      if (node.constraints.additional_properties == false) {
        for (const auto& [key, _] : v.items()) {
          if (node.property(key) == nullptr) {
            out.push_back({where + escape_token(key), ViolationKind::UnexpectedProperty,
                           "property '" + key + "' is not declared"});
          }
        }
      }
      break;
    }
    case NodeKind::Array:
      if (!v.is_array()) return add(ViolationKind::TypeMismatch, std::string("expected array, got ") + v.type_name());
      for (std::size_t i = 0; i < v.size(); ++i) validate(*node.items, v[i], where + "/" + std::to_string(i), out);
      break;
    case NodeKind::Choice: {
      for (const auto& b : node.branches) {
        std::vector<Violation> sub;
        validate(*b, v, where, sub);
        if (sub.empty()) return;
      }
      return add(ViolationKind::NoMatchingBranch, "value matches no anyOf branch");
    }
    case NodeKind::Primitive:
      if (!primitive_matches(node.primitive, v)) {
        return add(ViolationKind::TypeMismatch, "expected " + std::string(to_string(node.primitive)) +
                                                    ", got " + v.type_name());
      }
      if (v.is_number()) {
        double d = v.get<double>();
        if (node.constraints.minimum && d < *node.constraints.minimum) {
          add(ViolationKind::BelowMinimum, "below minimum " + std::to_string(*node.constraints.minimum));
        }
        if (node.constraints.maximum && d > *node.constraints.maximum) {
          add(ViolationKind::AboveMaximum, "above maximum " + std::to_string(*node.constraints.maximum));
        }
      }
      break;
  }
  if (node.constraints.enum_values) {
    const auto& ev = *node.constraints.enum_values;
    if (std::find(ev.begin(), ev.end(), v) == ev.end()) add(ViolationKind::EnumViolation, "value not in enum");
  }
}

}  // namespace schema_detail

inline ValidityReport validate_instance(const SchemaNode& ast, const json& instance) {
  ValidityReport r;
  schema_detail::validate(ast, instance, "", r.violations);
  r.conforming = r.violations.empty();
  return r;
}

}  // namespace xb
