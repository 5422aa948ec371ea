#include "copydst/predictions.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace copydst {

using ordered_json = nlohmann::ordered_json;

int argmax(const std::vector<double>& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

TurnDecisions decide(const PredictionBundle& bundle, const EncoderInput& input,
                     const Ontology& ont, const std::string& dialog_id, int turn) {
  TurnDecisions out;
  out.dialog_id = dialog_id;
  out.turn = turn;
  const int n = ont.num_slots();
  if (static_cast<int>(bundle.slots.size()) != n)
    throw std::runtime_error("decide: bundle does not cover all slots");
  for (int i = 0; i < n; ++i) {
    const SlotDef& def = ont.slot(i);
    const SlotPrediction& p = bundle.slots[i];
    SlotDecision d;
    if (def.is_boolean) {
      d.gate = to_string(static_cast<BoolGateClass>(argmax(p.gate)));
    } else {
      d.gate = to_string(static_cast<GateClass>(argmax(p.gate)));
      // Span argmaxes restricted to user-role positions, the same masking
      // resolve_span applies.
      double bs = -1.0, be = -1.0;
      for (int k = 0; k < input.size(); ++k) {
        if (input.roles[k] != Role::user && input.roles[k] != Role::history_user) continue;
        if (p.start[k] > bs) { bs = p.start[k]; d.start = k; }
        if (p.end[k] > be) { be = p.end[k]; d.end = k; }
      }
      const int r = argmax(p.refer);
      d.refer = r == n ? "none" : ont.slot(r).slot_id;
    }
    out.slots[def.slot_id] = d;
  }
  return out;
}

PredictionBundle bundle_from_decisions(const TurnDecisions& decisions, const Ontology& ont,
                                       int input_len) {
  const int n = ont.num_slots();
  PredictionBundle bundle;
  bundle.slots.resize(n);
  for (int i = 0; i < n; ++i) {
    const SlotDef& def = ont.slot(i);
    auto it = decisions.slots.find(def.slot_id);
    SlotDecision d;
    if (it != decisions.slots.end()) d = it->second;
    SlotPrediction& p = bundle.slots[i];
    if (def.is_boolean) {
      if (!is_bool_gate_name(d.gate))
        throw std::runtime_error("predictions: gate '" + d.gate + "' invalid for boolean slot '" +
                                 def.slot_id + "'");
      p.gate.assign(kBoolGateClasses, 0.0);
      p.gate[static_cast<int>(bool_gate_from_string(d.gate))] = 1.0;
      continue;
    }
    if (!is_gate_name(d.gate))
      throw std::runtime_error("predictions: gate '" + d.gate + "' invalid for slot '" +
                               def.slot_id + "'");
    p.gate.assign(kGateClasses, 0.0);
    p.gate[static_cast<int>(gate_from_string(d.gate))] = 1.0;
    p.start.assign(input_len, 0.0);
    p.end.assign(input_len, 0.0);
    if (d.start >= 0 && d.start < input_len) p.start[d.start] = 1.0;
    else p.start[0] = 1.0;
    if (d.end >= 0 && d.end < input_len) p.end[d.end] = 1.0;
    else p.end[0] = 1.0;
    p.refer.assign(n + 1, 0.0);
    p.refer[d.refer == "none" ? n : ont.slot_index(d.refer)] = 1.0;
  }
  return bundle;
}

void save_predictions(const PredictionsFile& preds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions file '" + path + "'");
  ordered_json h;
  h["type"] = "header";
  h["version"] = preds.header.version;
  h["max_len"] = preds.header.max_len;
  h["mask_history"] = preds.header.mask_history;
  h["no_history"] = preds.header.no_history;
  h["no_aux"] = preds.header.no_aux;
  h["single_copy"] = preds.header.single_copy;
  h["seed"] = preds.header.seed;
  out << h.dump() << "\n";
  for (const auto& t : preds.turns) {
    ordered_json row;
    row["dialog_id"] = t.dialog_id;
    row["turn"] = t.turn;
    ordered_json slots = ordered_json::object();
    for (const auto& [slot, d] : t.slots) {
      ordered_json jd;
      jd["gate"] = d.gate;
      jd["start"] = d.start;
      jd["end"] = d.end;
      jd["refer"] = d.refer;
      slots[slot] = jd;
    }
    row["slots"] = slots;
    out << row.dump() << "\n";
  }
}

PredictionsFile load_predictions(const std::string& path, const Ontology& ont) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions file '" + path + "'");
  PredictionsFile preds;
  std::string line;
  bool have_header = false;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("predictions '" + path + "' line " + std::to_string(lineno) +
                               ": malformed JSON: " + e.what());
    }
    if (!have_header) {
      if (j.value("type", "") != "header")
        throw std::runtime_error("predictions '" + path + "': first line must be the header");
      preds.header.version = j.value("version", 1);
      preds.header.max_len = j.value("max_len", 180);
      preds.header.mask_history = j.value("mask_history", true);
      preds.header.no_history = j.value("no_history", false);
      preds.header.no_aux = j.value("no_aux", false);
      preds.header.single_copy = j.value("single_copy", false);
      preds.header.seed = j.value("seed", 0ULL);
      have_header = true;
      continue;
    }
    TurnDecisions t;
    t.dialog_id = j.at("dialog_id").get<std::string>();
    t.turn = j.at("turn").get<int>();
    for (const auto& [slot, jd] : j.at("slots").items()) {
      if (!ont.has_slot(slot))
        throw std::runtime_error("predictions '" + path + "': unknown slot '" + slot + "'");
      SlotDecision d;
      d.gate = jd.at("gate").get<std::string>();
      d.start = jd.value("start", -1);
      d.end = jd.value("end", -1);
      d.refer = jd.value("refer", "none");
      if (d.refer != "none" && !ont.has_slot(d.refer))
        throw std::runtime_error("predictions '" + path + "': unknown refer source '" + d.refer + "'");
      const bool ok = ont.is_boolean(slot) ? is_bool_gate_name(d.gate) : is_gate_name(d.gate);
      if (!ok)
        throw std::runtime_error("predictions '" + path + "': gate '" + d.gate +
                                 "' invalid for slot '" + slot + "'");
      t.slots[slot] = d;
    }
    preds.turns.push_back(std::move(t));
  }
  if (!have_header) throw std::runtime_error("predictions '" + path + "': missing header line");
  return preds;
}

void save_states(const StatesFile& states, const std::vector<std::string>& dialog_order,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write states file '" + path + "'");
  for (const auto& id : dialog_order) {
    auto it = states.states.find(id);
    if (it == states.states.end()) continue;
    for (size_t t = 0; t < it->second.size(); ++t) {
      ordered_json row;
      row["dialog_id"] = id;
      row["turn"] = static_cast<int>(t + 1);
      ordered_json st = ordered_json::object();
      for (const auto& [slot, v] : it->second[t]) st[slot] = v;
      row["state"] = st;
      out << row.dump() << "\n";
    }
  }
}

StatesFile load_states(const std::string& path, const Ontology& ont) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open states file '" + path + "'");
  StatesFile out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("states '" + path + "' line " + std::to_string(lineno) +
                               ": malformed JSON: " + e.what());
    }
    const std::string id = j.at("dialog_id").get<std::string>();
    const int turn = j.at("turn").get<int>();
    auto& turns = out.states[id];
    if (turn != static_cast<int>(turns.size()) + 1)
      throw std::runtime_error("states '" + path + "': turns of dialog '" + id +
                               "' out of order at line " + std::to_string(lineno));
    std::map<std::string, std::string> st;
    for (const auto& [slot, v] : j.at("state").items()) {
      if (!ont.has_slot(slot))
        throw std::runtime_error("states '" + path + "': unknown slot '" + slot + "'");
      st[slot] = v.get<std::string>();
    }
    turns.push_back(std::move(st));
  }
  return out;
}

}  // namespace copydst
