#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "copydst/corpus.hpp"
#include "copydst/ontology.hpp"
#include "copydst/predictions.hpp"
#include "copydst/tokenizer.hpp"
#include "copydst/tracker.hpp"

namespace copydst {

// A turn counts as jointly correct iff every ontology slot agrees with the
// gold state: both absent, or both present and normalize-matching. Absence
// is asserted, not skipped.
double joint_goal_accuracy(const std::vector<std::vector<DialogState>>& predicted,
                           const Corpus& gold, const Ontology& ont);

// Per-slot state accuracy under the same agreement rule.
std::map<std::string, double> per_slot_accuracy(
    const std::vector<std::vector<DialogState>>& predicted, const Corpus& gold,
    const Ontology& ont);

std::vector<std::vector<DialogState>> states_for_corpus(const StatesFile& states,
                                                        const Corpus& gold);

struct GateMetrics {
  double joint_acc = 0.0;  // turns with every slot gate correct
  // One-vs-rest over (turn, slot) pairs; classes with zero gold support and
  // zero predictions report 1.0 and are flagged by support == 0.
  std::map<std::string, double> precision, recall, f1;
  std::map<std::string, int> support;
  std::map<std::string, double> per_slot_acc;
};

GateMetrics gate_metrics(const PredictionsFile& preds, const Corpus& gold, const Ontology& ont);

// (slot, canonical value) -> number of train turns whose gold state holds
// that value.
std::map<std::string, std::map<std::string, int>> value_counts(const Corpus& train,
                                                               const Ontology& ont);

struct RecallBucket {
  int total = 0;
  int hits = 0;
  // Recall is undefined on an empty bucket; callers see has_value() == false.
  std::optional<double> recall() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(hits) / total;
  }
};

// Buckets gold state occurrences by training frequency: 0 (OOV), 1-9,
// 10-49, 50+. A hit is a normalize-matching predicted value at that turn.
std::map<std::string, RecallBucket> recall_by_seen_count(
    const std::vector<std::vector<DialogState>>& predicted, const Corpus& gold,
    const std::map<std::string, std::map<std::string, int>>& train_counts, const Ontology& ont);

struct OovReport {
  int unique_pairs = 0;
  int oov_pairs = 0;
  double rate = 0.0;
  int respanned = 0;
};

// Replaces slot values consistently in utterances, informs and gold labels,
// then regenerates span labels under the corpus prep settings. Replacement
// values must be fresh: colliding with an existing training value for the
// slot is an error.
OovReport oov_substitution(Corpus& corpus,
                           const std::map<std::string, std::map<std::string, std::string>>& repl,
                           const Corpus& train, const Ontology& ont, const Tokenizer& tok);

struct EvalRun {
  std::string label;
  double jga = 0.0;
  std::map<std::string, double> per_slot_acc;
  std::optional<GateMetrics> gates;
  std::optional<std::map<std::string, RecallBucket>> recall_buckets;
};

struct EvalReport {
  std::vector<EvalRun> runs;
  double jga_mean = 0.0;
  double jga_stddev = 0.0;  // sample stddev over runs, 0 for a single run
};

EvalReport make_report(std::vector<EvalRun> runs);
std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

}  // namespace copydst
