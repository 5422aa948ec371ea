#include "copydst/tracker.hpp"

#include <stdexcept>

namespace copydst {

AuxFeatures aux_features(const InformMemory& inform_mem, const DialogState& ds,
                         const Ontology& ont) {
  AuxFeatures aux;
  const int n = ont.num_slots();
  aux.inform_vec.assign(n, 0.0);
  aux.ds_vec.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const std::string& slot = ont.slot(i).slot_id;
    if (inform_mem.last_informed.count(slot)) aux.inform_vec[i] = 1.0;
    if (ds.filled(slot)) aux.ds_vec[i] = 1.0;
  }
  return aux;
}

static bool user_role(Role r) { return r == Role::user || r == Role::history_user; }

std::string resolve_span(const std::vector<double>& start_dist,
                         const std::vector<double>& end_dist, const EncoderInput& input) {
  const size_t n = static_cast<size_t>(input.size());
  if (start_dist.size() != n || end_dist.size() != n)
    throw std::runtime_error("resolve_span: distribution length does not match input length");
  int start = -1, end = -1;
  double best_s = -1.0, best_e = -1.0;
  for (size_t i = 0; i < n; ++i) {
    if (!user_role(input.roles[i])) continue;  // masked to zero
    if (start_dist[i] > best_s) {
      best_s = start_dist[i];
      start = static_cast<int>(i);
    }
    if (end_dist[i] > best_e) {
      best_e = end_dist[i];
      end = static_cast<int>(i);
    }
  }
  if (start < 0 || end < start) return "";
  return decode_span(input, start, end);
}

DialogState apply_turn(const DialogState& ds, const DialogTurn& turn,
                       const PredictionBundle& preds, const EncoderInput& input,
                       const Ontology& ont) {
  const int n = ont.num_slots();
  if (static_cast<int>(preds.slots.size()) != n)
    throw std::runtime_error("apply_turn: prediction bundle does not cover all slots");

  const InformMemory informs = InformMemory::from_turn(turn);
  DialogState next = ds;
  for (int i = 0; i < n; ++i) {
    const SlotDef& def = ont.slot(i);
    const SlotPrediction& p = preds.slots[i];
    if (def.is_boolean) {
      if (static_cast<int>(p.gate.size()) != kBoolGateClasses)
        throw std::runtime_error("apply_turn: boolean slot '" + def.slot_id +
                                 "' carries a non-boolean gate distribution");
      switch (static_cast<BoolGateClass>(argmax(p.gate))) {
        case BoolGateClass::none: break;
        case BoolGateClass::dontcare: next.assignments[def.slot_id] = "dontcare"; break;
        case BoolGateClass::btrue: next.assignments[def.slot_id] = "true"; break;
        case BoolGateClass::bfalse: next.assignments[def.slot_id] = "false"; break;
      }
      continue;
    }
    if (static_cast<int>(p.gate.size()) != kGateClasses)
      throw std::runtime_error("apply_turn: slot '" + def.slot_id +
                               "' carries a malformed gate distribution");
    switch (static_cast<GateClass>(argmax(p.gate))) {
      case GateClass::none:
        break;
      case GateClass::dontcare:
        next.assignments[def.slot_id] = "dontcare";
        break;
      case GateClass::span: {
        const std::string value = resolve_span(p.start, p.end, input);
        if (!value.empty()) next.assignments[def.slot_id] = value;
        break;
      }
      case GateClass::inform: {
        auto it = informs.last_informed.find(def.slot_id);
        if (it != informs.last_informed.end()) next.assignments[def.slot_id] = it->second;
        break;
      }
      case GateClass::refer: {
        if (static_cast<int>(p.refer.size()) != n + 1)
          throw std::runtime_error("apply_turn: slot '" + def.slot_id +
                                   "' carries a malformed refer distribution");
        const int source = argmax(p.refer);
        if (source == n) break;  // "none": no reference
        const SlotDef& src = ont.slot(source);
        // Snapshot semantics: read the state as of the start of the turn.
        auto it = ds.assignments.find(src.slot_id);
        if (it != ds.assignments.end()) next.assignments[def.slot_id] = it->second;
        break;
      }
    }
  }
  return next;
}

std::vector<DialogState> track_dialog(const Dialog& dialog, const Ontology& ont,
                                      const Tokenizer& tok, const PrepInfo& prep,
                                      const PredictionProvider& provider) {
  std::vector<DialogState> states;
  DialogState ds;
  for (size_t t = 0; t < dialog.turns.size(); ++t) {
    const DialogTurn& turn = dialog.turns[t];
    const auto history = history_for_turn(dialog, t, prep.no_history);
    const EncoderInput input = build_input(turn, history, tok, prep.max_len, prep.mask_history);
    const PredictionBundle bundle = provider(turn, t, input, ds);
    ds = apply_turn(ds, turn, bundle, input, ont);
    states.push_back(ds);
  }
  return states;
}

}  // namespace copydst
