#include "copydst/ontology.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace copydst {

using ordered_json = nlohmann::ordered_json;

const char* to_string(GateClass c) {
  switch (c) {
    case GateClass::none: return "none";
    case GateClass::dontcare: return "dontcare";
    case GateClass::span: return "span";
    case GateClass::inform: return "inform";
    case GateClass::refer: return "refer";
  }
  return "none";
}

const char* to_string(BoolGateClass c) {
  switch (c) {
    case BoolGateClass::none: return "none";
    case BoolGateClass::dontcare: return "dontcare";
    case BoolGateClass::btrue: return "true";
    case BoolGateClass::bfalse: return "false";
  }
  return "none";
}

GateClass gate_from_string(const std::string& s) {
  if (s == "none") return GateClass::none;
  if (s == "dontcare") return GateClass::dontcare;
  if (s == "span") return GateClass::span;
  if (s == "inform") return GateClass::inform;
  if (s == "refer") return GateClass::refer;
  throw std::runtime_error("unknown gate class '" + s + "'");
}

BoolGateClass bool_gate_from_string(const std::string& s) {
  if (s == "none") return BoolGateClass::none;
  if (s == "dontcare") return BoolGateClass::dontcare;
  if (s == "true") return BoolGateClass::btrue;
  if (s == "false") return BoolGateClass::bfalse;
  throw std::runtime_error("unknown boolean gate class '" + s + "'");
}

bool is_gate_name(const std::string& s) {
  return s == "none" || s == "dontcare" || s == "span" || s == "inform" || s == "refer";
}

bool is_bool_gate_name(const std::string& s) {
  return s == "none" || s == "dontcare" || s == "true" || s == "false";
}

std::string canonicalize(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

Ontology::Ontology(std::vector<SlotDef> slots,
                   std::map<std::string, std::map<std::string, std::set<std::string>>> variants)
    : slots_(std::move(slots)), variants_(std::move(variants)) {
  for (size_t i = 0; i < slots_.size(); ++i) {
    if (!index_.emplace(slots_[i].slot_id, static_cast<int>(i)).second)
      throw std::runtime_error("ontology: duplicate slot id '" + slots_[i].slot_id + "'");
  }
  // Normalize the variant map and derive the reverse lookup. Every variant
  // set must contain its own canonical value, and a surface form may belong
  // to only one equivalence class per slot.
  std::map<std::string, std::map<std::string, std::set<std::string>>> cleaned;
  for (const auto& [slot_id, per_value] : variants_) {
    if (!index_.count(slot_id))
      throw std::runtime_error("ontology: variants reference unknown slot '" + slot_id + "'");
    auto& reverse = surface_to_canonical_[slot_id];
    for (const auto& [value, surfaces] : per_value) {
      const std::string canon = canonicalize(value);
      auto& cset = cleaned[slot_id][canon];
      cset.insert(canon);
      for (const auto& surf : surfaces) cset.insert(canonicalize(surf));
      for (const auto& surf : cset) {
        auto [it, inserted] = reverse.emplace(surf, canon);
        if (!inserted && it->second != canon)
          throw std::runtime_error("ontology: surface '" + surf + "' of slot '" + slot_id +
                                   "' maps to both '" + it->second + "' and '" + canon + "'");
      }
    }
  }
  variants_ = std::move(cleaned);
}

bool Ontology::has_slot(const std::string& slot_id) const { return index_.count(slot_id) > 0; }

int Ontology::slot_index(const std::string& slot_id) const {
  auto it = index_.find(slot_id);
  if (it == index_.end())
    throw std::runtime_error("unknown slot id '" + slot_id + "' (schema mismatch)");
  return it->second;
}

bool Ontology::is_boolean(const std::string& slot_id) const {
  return slots_[slot_index(slot_id)].is_boolean;
}

std::string Ontology::canonical_value(const std::string& slot_id, const std::string& value) const {
  slot_index(slot_id);  // validate
  const std::string canon = canonicalize(value);
  auto sit = surface_to_canonical_.find(slot_id);
  if (sit != surface_to_canonical_.end()) {
    auto vit = sit->second.find(canon);
    if (vit != sit->second.end()) return vit->second;
  }
  return canon;
}

std::vector<std::string> Ontology::surface_forms(const std::string& slot_id,
                                                 const std::string& value) const {
  const std::string canon = canonical_value(slot_id, value);
  std::vector<std::string> out;
  auto sit = variants_.find(slot_id);
  if (sit != variants_.end()) {
    auto vit = sit->second.find(canon);
    if (vit != sit->second.end()) {
      out.assign(vit->second.begin(), vit->second.end());
      return out;
    }
  }
  out.push_back(canon);
  return out;
}

bool Ontology::normalize_match(const std::string& slot_id, const std::string& predicted,
                               const std::string& gold) const {
  return canonical_value(slot_id, predicted) == canonical_value(slot_id, gold);
}

Ontology Ontology::from_json_text(const std::string& text, const std::string& origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error("ontology " + origin + ": malformed JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("slots") || !j["slots"].is_array())
    throw std::runtime_error("ontology " + origin + ": expected object with a 'slots' array");
  std::vector<SlotDef> slots;
  for (const auto& s : j["slots"]) {
    SlotDef def;
    def.slot_id = s.at("id").get<std::string>();
    def.is_boolean = s.value("boolean", false);
    slots.push_back(std::move(def));
  }
  std::map<std::string, std::map<std::string, std::set<std::string>>> variants;
  if (j.contains("variants")) {
    for (const auto& [slot_id, per_value] : j["variants"].items()) {
      for (const auto& [value, surfaces] : per_value.items()) {
        auto& set = variants[slot_id][value];
        for (const auto& surf : surfaces) set.insert(surf.get<std::string>());
      }
    }
  }
  return Ontology(std::move(slots), std::move(variants));
}

Ontology Ontology::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ontology file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(), path);
}

void Ontology::save(const std::string& path) const {
  ordered_json j;
  j["slots"] = ordered_json::array();
  for (const auto& s : slots_) {
    ordered_json js;
    js["id"] = s.slot_id;
    js["boolean"] = s.is_boolean;
    j["slots"].push_back(js);
  }
  ordered_json jv = ordered_json::object();
  for (const auto& [slot_id, per_value] : variants_) {
    ordered_json pv = ordered_json::object();
    for (const auto& [value, surfaces] : per_value)
      pv[value] = std::vector<std::string>(surfaces.begin(), surfaces.end());
    jv[slot_id] = pv;
  }
  j["variants"] = jv;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write ontology file '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace copydst
