#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "copydst/ontology.hpp"
#include "copydst/tokenizer.hpp"

namespace copydst {

// Per-token role inside an assembled encoder input.
enum class Role { special, user, system, history_user, history_system };

// Assembled model input: [CLS] user [SEP] system [SEP] history [SEP],
// history laid out most recent turn first, user before system within each
// turn. Length never exceeds max_len; [CLS] sits at position 0.
struct EncoderInput {
  std::vector<Token> tokens;
  std::vector<Role> roles;
  std::vector<int> ids;  // vocabulary ids aligned with tokens
  int max_len = 0;
  int size() const { return static_cast<int>(tokens.size()); }
};

// Gold annotations for one turn. Gate/span/refer maps are sparse in the
// file format; slots not listed carry the gate class "none".
struct GoldLabels {
  std::map<std::string, std::string> gate;                // slot -> gate class name
  std::map<std::string, std::pair<int, int>> span;        // slot -> start,end token index
  std::map<std::string, std::string> refer;               // slot -> source slot
  std::map<std::string, std::string> state;               // cumulative gold state DS_t
};

struct DialogTurn {
  int turn_index = 1;  // 1-based
  std::string user_utterance;
  std::string system_utterance;                     // may be empty at t = 1
  std::map<std::string, std::string> system_informs;
  std::optional<GoldLabels> gold;
};

struct Dialog {
  std::string id;
  std::vector<DialogTurn> turns;
};

// Assembly settings span labels were generated under. Training and
// prediction must reuse them, token positions shift otherwise.
struct PrepInfo {
  int max_len = 180;
  bool mask_history = true;
  bool no_history = false;
};

struct Corpus {
  std::string split;  // train | dev | test
  std::vector<Dialog> dialogs;
  std::optional<PrepInfo> prep;
};

// Replaces every token-level occurrence of each informed value with one
// [UNK] per covered token. Word count is preserved. Only callers dealing
// with past system utterances should apply this.
std::string mask_values(const std::string& system_utterance,
                        const std::vector<std::string>& informed_values);

// History must be ordered most recent first. Oldest whole turns are dropped
// when the sequence would exceed max_len, then history tokens are cut from
// the far end. Throws when the current turn alone does not fit.
EncoderInput build_input(const DialogTurn& turn, const std::vector<const DialogTurn*>& history,
                         const Tokenizer& tok, int max_len, bool mask_history);

// History view of dialog.turns for the turn at index t (0-based), most
// recent first; empty when no_history is set.
std::vector<const DialogTurn*> history_for_turn(const Dialog& dialog, size_t t, bool no_history);

// Decode tokens[start..end] back to text: fragments of one word are merged,
// words joined by single spaces.
std::string decode_span(const EncoderInput& input, int start, int end);

// First token range in input whose decoded text matches any surface form of
// gold_value, scanning the current user utterance left to right and then
// history user utterances from most recent to oldest. Absent when the value
// is not present.
std::optional<std::pair<int, int>> find_span(const EncoderInput& input, const Ontology& ont,
                                             const std::string& slot_id,
                                             const std::string& gold_value);

// Span label generation for one slot of one turn; assembles the input with
// the given settings first. The slot must carry the gate class "span".
std::optional<std::pair<int, int>> generate_span_labels(
    const DialogTurn& turn, const std::vector<const DialogTurn*>& history, const Tokenizer& tok,
    int max_len, bool mask_history, const Ontology& ont, const std::string& slot_id,
    const std::string& gold_value);

struct PrepareStats {
  int turns = 0;
  int span_labels = 0;
  int derived_gates = 0;
  int downgraded = 0;  // span labels that matched nowhere, reset to none
};

// Fills gold.gate (derived from state deltas when absent) and gold.span
// (token positions under the given assembly settings) for a gold-labeled
// corpus. Unmatchable span labels are downgraded to none and counted.
PrepareStats prepare_corpus(Corpus& corpus, const Ontology& ont, const Tokenizer& tok,
                            const PrepInfo& prep);

// All utterance text of a corpus, for vocabulary construction.
std::vector<std::string> corpus_texts(const Corpus& corpus);

Corpus load_corpus(const std::string& path, const Ontology& ont);
void save_corpus(const Corpus& corpus, const std::string& path);

}  // namespace copydst
