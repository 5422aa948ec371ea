#pragma once

#include <map>
#include <string>
#include <vector>

#include "copydst/corpus.hpp"
#include "copydst/ontology.hpp"

namespace copydst {

// Per-slot output distributions for one turn. Boolean slots carry a 4-class
// gate and no span/refer distributions; the others a 5-class gate, start/end
// distributions over input positions, and a refer distribution over the N
// slots plus a trailing "none" entry.
struct SlotPrediction {
  std::vector<double> gate;
  std::vector<double> start;
  std::vector<double> end;
  std::vector<double> refer;
};

struct PredictionBundle {
  std::vector<SlotPrediction> slots;  // ontology order
};

// Argmax view of a bundle, the unit stored in predictions files.
struct SlotDecision {
  std::string gate = "none";
  int start = -1;
  int end = -1;
  std::string refer = "none";  // source slot id or "none"
};

struct TurnDecisions {
  std::string dialog_id;
  int turn = 0;  // 1-based
  std::map<std::string, SlotDecision> slots;
};

// Settings a predictions file was produced under; tracking replays inputs
// with the same assembly.
struct PredictionsHeader {
  int version = 1;
  int max_len = 180;
  bool mask_history = true;
  bool no_history = false;
  bool no_aux = false;
  bool single_copy = false;
  unsigned long long seed = 0;
};

struct PredictionsFile {
  PredictionsHeader header;
  std::vector<TurnDecisions> turns;
};

int argmax(const std::vector<double>& v);

// Argmax decisions for one turn. Start/end argmaxes are taken over
// user-role positions only, matching the span resolution rule.
TurnDecisions decide(const PredictionBundle& bundle, const EncoderInput& input,
                     const Ontology& ont, const std::string& dialog_id, int turn);

// One-hot bundle reproducing a stored decision row exactly.
PredictionBundle bundle_from_decisions(const TurnDecisions& decisions, const Ontology& ont,
                                       int input_len);

void save_predictions(const PredictionsFile& preds, const std::string& path);
PredictionsFile load_predictions(const std::string& path, const Ontology& ont);

// Per-turn tracked states, one JSON line per turn.
struct StatesFile {
  // dialog id -> per-turn slot/value maps, turn order
  std::map<std::string, std::vector<std::map<std::string, std::string>>> states;
};

void save_states(const StatesFile& states, const std::vector<std::string>& dialog_order,
                 const std::string& path);
StatesFile load_states(const std::string& path, const Ontology& ont);

}  // namespace copydst
