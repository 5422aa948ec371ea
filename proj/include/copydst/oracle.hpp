#pragma once

#include "copydst/corpus.hpp"
#include "copydst/ontology.hpp"
#include "copydst/predictions.hpp"
#include "copydst/tracker.hpp"

namespace copydst {

// One-hot prediction bundle reproducing the turn's gold gate/span/refer
// labels exactly. Throws when gold labels are missing. Driving the tracker
// with this provider must reproduce the gold state at every turn.
PredictionBundle oracle_predictions(const DialogTurn& turn, const Ontology& ont, int input_len);

PredictionProvider oracle_provider(const Ontology& ont);

}  // namespace copydst
