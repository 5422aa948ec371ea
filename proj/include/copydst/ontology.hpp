#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace copydst {

// Slot gate classes. Non-boolean slots classify over the five-way set,
// boolean slots over the four-way set. Serialized by these lowercase names.
enum class GateClass { none, dontcare, span, inform, refer };
enum class BoolGateClass { none, dontcare, btrue, bfalse };

constexpr int kGateClasses = 5;
constexpr int kBoolGateClasses = 4;

const char* to_string(GateClass c);
const char* to_string(BoolGateClass c);
GateClass gate_from_string(const std::string& s);
BoolGateClass bool_gate_from_string(const std::string& s);
bool is_gate_name(const std::string& s);
bool is_bool_gate_name(const std::string& s);

struct SlotDef {
  std::string slot_id;  // "domain-slot", e.g. "hotel-area"
  bool is_boolean = false;
};

// Lowercase, trim, and collapse internal whitespace runs.
std::string canonicalize(const std::string& s);

// The slot schema plus the value-variant equivalence map. Immutable after
// load; safe to share across threads.
class Ontology {
 public:
  Ontology() = default;
  Ontology(std::vector<SlotDef> slots,
           std::map<std::string, std::map<std::string, std::set<std::string>>> variants);

  const std::vector<SlotDef>& slots() const { return slots_; }
  int num_slots() const { return static_cast<int>(slots_.size()); }
  const SlotDef& slot(int index) const { return slots_[index]; }
  bool has_slot(const std::string& slot_id) const;
  // Index of slot_id in the fixed ordering; throws on unknown ids.
  int slot_index(const std::string& slot_id) const;
  bool is_boolean(const std::string& slot_id) const;

  // Canonical value for a surface string under the slot's variant map;
  // strings outside the map canonicalize to themselves.
  std::string canonical_value(const std::string& slot_id, const std::string& value) const;
  // Every accepted surface form of a value, including the canonical one.
  std::vector<std::string> surface_forms(const std::string& slot_id, const std::string& value) const;

  // True iff predicted and gold map to the same canonical value.
  bool normalize_match(const std::string& slot_id, const std::string& predicted,
                       const std::string& gold) const;

  static Ontology load(const std::string& path);
  void save(const std::string& path) const;
  static Ontology from_json_text(const std::string& text, const std::string& origin = "<string>");

 private:
  std::vector<SlotDef> slots_;
  std::map<std::string, int> index_;
  // slot_id -> canonical -> surface set (contains the canonical itself)
  std::map<std::string, std::map<std::string, std::set<std::string>>> variants_;
  // slot_id -> surface -> canonical, derived at construction
  std::map<std::string, std::map<std::string, std::string>> surface_to_canonical_;
};

}  // namespace copydst
