#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "promptcause/error.hpp"

namespace promptcause {

enum class IntentionGroup { instruction, role, scenario };

inline std::string_view to_string(IntentionGroup g) {
  switch (g) {
    case IntentionGroup::instruction: return "instruction";
    case IntentionGroup::role: return "role";
    case IntentionGroup::scenario: return "scenario";
  }
  return "?";
}

inline IntentionGroup parse_intention_group(std::string_view s) {
  if (s == "instruction") return IntentionGroup::instruction;
  if (s == "role") return IntentionGroup::role;
  if (s == "scenario") return IntentionGroup::scenario;
  throw Error("unknown intention group '" + std::string(s) + "'");
}

// One rephrasing clause the meta-prompt can carry.
struct Intention {
  std::string id;
  IntentionGroup group = IntentionGroup::instruction;
  std::string surface_text;

  bool operator==(const Intention&) const = default;
};

// Bit i selects registry entry i.
class IntentionVector {
 public:
  IntentionVector() = default;
  explicit IntentionVector(std::size_t size) : bits_(size, 0) {}
  explicit IntentionVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) b = b ? 1 : 0;
  }

  // "101000..." -> bits. Any other character is rejected.
  static IntentionVector parse(std::string_view text) {
    std::vector<std::uint8_t> bits;
    bits.reserve(text.size());
    for (char c : text) {
      if (c != '0' && c != '1') throw Error("intention vector must be a 0/1 string, got '" + std::string(text) + "'");
      bits.push_back(c == '1');
    }
    return IntentionVector(std::move(bits));
  }

  std::string str() const {
    std::string s;
    s.reserve(bits_.size());
    for (auto b : bits_) s += b ? '1' : '0';
    return s;
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v) { bits_.at(i) = v ? 1 : 0; }
  void flip(std::size_t i) { bits_.at(i) ^= 1; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  bool operator==(const IntentionVector&) const = default;
  auto operator<=>(const IntentionVector&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

using IntentionRegistry = std::vector<Intention>;

inline void validate_registry(const IntentionRegistry& registry) {
  std::unordered_set<std::string> seen, texts;
  for (const auto& in : registry) {
    if (in.id.empty()) throw Error("intention with empty id");
    if (in.surface_text.empty()) throw Error("intention '" + in.id + "' has empty surface text");
    if (!seen.insert(in.id).second) throw Error("duplicate intention id '" + in.id + "'");
    // Distinct texts keep distinct selections distinguishable in the meta-prompt.
    if (!texts.insert(in.surface_text).second) throw Error("duplicate intention text '" + in.surface_text + "'");
  }
}

// Six instructions, three roles, three scenarios. Short, Fluent, Long and
// Formal are the ones whose effects are reported; the rest fill the slots.
inline IntentionRegistry default_intention_registry() {
  using G = IntentionGroup;
  return {
      {"Short", G::instruction, "make it short"},
      {"Fluent", G::instruction, "make it fluent"},
      {"Long", G::instruction, "make it long"},
      {"Formal", G::instruction, "make it formal"},
      {"Technical", G::instruction, "make it more technical"},
      {"Simple", G::instruction, "make it simple"},
      {"Student", G::role, "as a student"},
      {"Teacher", G::role, "as a teacher"},
      {"Expert", G::role, "as an expert programmer"},
      {"Competition", G::scenario, "in a programming competition"},
      {"Interview", G::scenario, "in a job interview"},
      {"Textbook", G::scenario, "in a textbook exercise"},
  };
}

// Names of selected intentions, registry order.
inline std::vector<std::string> decode_intentions(const IntentionVector& v, const IntentionRegistry& registry) {
  if (v.size() != registry.size())
    throw LengthMismatch("intention vector has " + std::to_string(v.size()) + " bits, registry has " +
                         std::to_string(registry.size()));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i]) out.push_back(registry[i].id);
  return out;
}

}  // namespace promptcause
