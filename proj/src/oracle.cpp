#include "copydst/oracle.hpp"

#include <stdexcept>

namespace copydst {

PredictionBundle oracle_predictions(const DialogTurn& turn, const Ontology& ont, int input_len) {
  if (!turn.gold)
    throw std::runtime_error("oracle_predictions: turn " + std::to_string(turn.turn_index) +
                             " has no gold labels");
  const GoldLabels& gold = *turn.gold;
  const int n = ont.num_slots();
  PredictionBundle bundle;
  bundle.slots.resize(n);
  for (int i = 0; i < n; ++i) {
    const SlotDef& def = ont.slot(i);
    SlotPrediction& p = bundle.slots[i];
    auto git = gold.gate.find(def.slot_id);
    const std::string gate = git == gold.gate.end() ? "none" : git->second;
    if (def.is_boolean) {
      p.gate.assign(kBoolGateClasses, 0.0);
      p.gate[static_cast<int>(bool_gate_from_string(gate))] = 1.0;
      continue;
    }
    p.gate.assign(kGateClasses, 0.0);
    p.gate[static_cast<int>(gate_from_string(gate))] = 1.0;
    p.start.assign(input_len, 0.0);
    p.end.assign(input_len, 0.0);
    p.refer.assign(n + 1, 0.0);
    auto sit = gold.span.find(def.slot_id);
    if (sit != gold.span.end()) {
      if (sit->second.first >= input_len || sit->second.second >= input_len)
        throw std::runtime_error("oracle_predictions: span of slot '" + def.slot_id +
                                 "' exceeds input length");
      p.start[sit->second.first] = 1.0;
      p.end[sit->second.second] = 1.0;
    } else {
      p.start[0] = 1.0;
      p.end[0] = 1.0;
    }
    auto rit = gold.refer.find(def.slot_id);
    p.refer[rit == gold.refer.end() ? n : ont.slot_index(rit->second)] = 1.0;
  }
  return bundle;
}

PredictionProvider oracle_provider(const Ontology& ont) {
  return [&ont](const DialogTurn& turn, size_t, const EncoderInput& input,
                const DialogState&) { return oracle_predictions(turn, ont, input.size()); };
}

}  // namespace copydst
