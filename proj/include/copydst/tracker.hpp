#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "copydst/corpus.hpp"
#include "copydst/ontology.hpp"
#include "copydst/predictions.hpp"

namespace copydst {

// The tracked dialog state DS_t: only slots with a detected value appear,
// never the literal value "none". Value snapshots are immutable; apply_turn
// returns a new state.
struct DialogState {
  std::map<std::string, std::string> assignments;

  bool filled(const std::string& slot_id) const { return assignments.count(slot_id) > 0; }
};

// Values the system informed in the current turn; rebuilt every turn,
// nothing persists from earlier turns.
struct InformMemory {
  std::map<std::string, std::string> last_informed;

  static InformMemory from_turn(const DialogTurn& turn) { return {turn.system_informs}; }
};

// The two late-fusion indicator vectors: slot informed this turn, slot
// already filled during the dialog.
struct AuxFeatures {
  std::vector<double> inform_vec;
  std::vector<double> ds_vec;
};

AuxFeatures aux_features(const InformMemory& inform_mem, const DialogState& ds,
                         const Ontology& ont);

// Argmax span extraction. Positions outside user and history-user roles are
// masked to probability zero before the argmax; an end before the start
// yields the empty string. Distribution lengths must equal the input length.
std::string resolve_span(const std::vector<double>& start_dist,
                         const std::vector<double>& end_dist, const EncoderInput& input);

// One rule-based state update: every slot with a detected non-none value is
// written, everything else carries over. Refer copies read `ds`, the state
// as of the start of the turn.
DialogState apply_turn(const DialogState& ds, const DialogTurn& turn,
                       const PredictionBundle& preds, const EncoderInput& input,
                       const Ontology& ont);

// Produces the turn's prediction bundle given the assembled input and the
// pre-turn state (the model provider derives aux features from it).
using PredictionProvider =
    std::function<PredictionBundle(const DialogTurn& turn, size_t turn_pos,
                                   const EncoderInput& input, const DialogState& pre_state)>;

// Folds apply_turn over the dialog from the empty state; returns DS_t for
// every turn.
std::vector<DialogState> track_dialog(const Dialog& dialog, const Ontology& ont,
                                      const Tokenizer& tok, const PrepInfo& prep,
                                      const PredictionProvider& provider);

}  // namespace copydst
