#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace xb {

using json = nlohmann::json;

/// Location of a field position: property names from the root. An array
/// position ends at the array property; array interiors are never part of
/// a FieldPath.
struct FieldPath {
  std::vector<std::string> segments;

  bool operator==(const FieldPath&) const = default;
  auto operator<=>(const FieldPath&) const = default;

  FieldPath child(std::string name) const {
    FieldPath p = *this;
    p.segments.push_back(std::move(name));
    return p;
  }

  /// JSON pointer rendering ("" for the root).
  std::string pointer() const {
    std::string out;
    for (const auto& s : segments) {
      out.push_back('/');
      for (char c : s) {
        if (c == '~') {
          out += "~0";
        } else if (c == '/') {
          out += "~1";
        } else {
          out.push_back(c);
        }
      }
    }
    return out;
  }
};

enum class ValueTag { Present, ExplicitNull, Missing };

/// Tri-state value at a field position. Only Present carries a value.
class FieldState {
 public:
  static FieldState present(json value) {
    if (value.is_null()) return explicit_null();
    return FieldState(ValueTag::Present, std::move(value));
  }
  static FieldState explicit_null() { return FieldState(ValueTag::ExplicitNull, nullptr); }
  static FieldState missing() { return FieldState(ValueTag::Missing, nullptr); }

  /// Wraps a possibly-absent JSON slot: nullptr means the key was absent.
  static FieldState from_slot(const json* slot) {
    if (slot == nullptr) return missing();
    return present(*slot);
  }

  ValueTag tag() const noexcept { return tag_; }
  bool is_present() const noexcept { return tag_ == ValueTag::Present; }
  const json& value() const noexcept { return value_; }

  bool operator==(const FieldState&) const = default;

 private:
  FieldState(ValueTag tag, json value) : tag_(tag), value_(std::move(value)) {}

  ValueTag tag_;
  json value_;
};

inline std::string_view to_string(ValueTag tag) {
  switch (tag) {
    case ValueTag::Present: return "present";
    case ValueTag::ExplicitNull: return "null";
    case ValueTag::Missing: return "missing";
  }
  return "?";
}

struct ReadResult {
  FieldState state = FieldState::missing();
  /// Pointer of the first segment that indexed into a non-object value.
  std::optional<std::string> type_clash;
};

/// Child slot of a state. Null or missing parents yield Missing children.
inline ReadResult child_state(const FieldState& parent, const std::string& key,
                              const std::string& where = {}) {
  if (!parent.is_present()) return {};
  const json& v = parent.value();
  if (!v.is_object()) return {FieldState::missing(), where};
  auto it = v.find(key);
  if (it == v.end()) return {};
  return {FieldState::present(*it), std::nullopt};
}

/// Total read of a field position from an instance.
inline ReadResult read_value(const json& instance, const FieldPath& path) {
  ReadResult cur{FieldState::present(instance), std::nullopt};
  FieldPath walked;
  for (const auto& seg : path.segments) {
    cur = child_state(cur.state, seg, walked.pointer());
    if (cur.type_clash || !cur.state.is_present()) {
      // A null or absent segment mid-path makes every deeper position Missing.
      if (&seg != &path.segments.back()) cur.state = FieldState::missing();
      return cur;
    }
    walked.segments.push_back(seg);
  }
  return cur;
}

enum class PairPolicy { Compare, AutoPass, Omission, Hallucination, Skip };

inline std::string_view to_string(PairPolicy p) {
  switch (p) {
    case PairPolicy::Compare: return "compare";
    case PairPolicy::AutoPass: return "auto_pass";
    case PairPolicy::Omission: return "omission";
    case PairPolicy::Hallucination: return "hallucination";
    case PairPolicy::Skip: return "skip";
  }
  return "?";
}

/// How an unannotated (Missing) gold slot is treated when the prediction
/// has a value.
enum class GoldMissingPolicy { Hallucination, Skip };

/// The 3x3 (gold, predicted) policy matrix.
///
///   gold \ pred   | Present        | ExplicitNull | Missing
///   Present       | Compare        | Omission     | Omission
///   ExplicitNull  | Hallucination  | AutoPass     | AutoPass
///   Missing       | Halluc. / Skip | AutoPass     | AutoPass
inline PairPolicy classify_pair(const FieldState& gold, const FieldState& predicted,
                                GoldMissingPolicy missing_policy = GoldMissingPolicy::Hallucination) {
  const bool pred_present = predicted.is_present();
  switch (gold.tag()) {
    case ValueTag::Present:
      return pred_present ? PairPolicy::Compare : PairPolicy::Omission;
    case ValueTag::ExplicitNull:
      return pred_present ? PairPolicy::Hallucination : PairPolicy::AutoPass;
    case ValueTag::Missing:
      if (!pred_present) return PairPolicy::AutoPass;
      return missing_policy == GoldMissingPolicy::Skip ? PairPolicy::Skip
                                                       : PairPolicy::Hallucination;
  }
  return PairPolicy::AutoPass;
}

}  // namespace xb
