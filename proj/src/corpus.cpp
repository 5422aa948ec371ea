#include "copydst/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <omp.h>

#include <json.hpp>

namespace copydst {

using ordered_json = nlohmann::ordered_json;

std::string mask_values(const std::string& system_utterance,
                        const std::vector<std::string>& informed_values) {
  std::vector<std::string> words = basic_tokenize(system_utterance);
  for (const auto& value : informed_values) {
    const std::vector<std::string> vw = basic_tokenize(value);
    if (vw.empty() || words.size() < vw.size()) continue;
    for (size_t i = 0; i + vw.size() <= words.size(); ++i) {
      bool hit = true;
      for (size_t k = 0; k < vw.size(); ++k) {
        if (words[i + k] != vw[k]) {
          hit = false;
          break;
        }
      }
      if (hit)
        for (size_t k = 0; k < vw.size(); ++k) words[i + k] = special::kUnk;
    }
  }
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

static void append_tokens(EncoderInput& input, const std::vector<Token>& toks, Role role,
                          const Tokenizer& tok) {
  for (const auto& t : toks) {
    input.tokens.push_back(t);
    input.roles.push_back(role);
    input.ids.push_back(tok.piece_id(t));
  }
}

static void append_sep(EncoderInput& input, const Tokenizer& tok) {
  Token sep{special::kSep, special::kSep, true};
  input.tokens.push_back(sep);
  input.roles.push_back(Role::special);
  input.ids.push_back(tok.piece_id(sep));
}

EncoderInput build_input(const DialogTurn& turn, const std::vector<const DialogTurn*>& history,
                         const Tokenizer& tok, int max_len, bool mask_history) {
  EncoderInput input;
  input.max_len = max_len;

  const std::vector<Token> user = tok.tokenize(turn.user_utterance);
  const std::vector<Token> sys = tok.tokenize(turn.system_utterance);
  const int frame = 4 + static_cast<int>(user.size() + sys.size());
  if (frame > max_len) {
    std::ostringstream msg;
    msg << "build_input: max_len " << max_len << " below minimal frame " << frame
        << " for turn " << turn.turn_index;
    throw std::runtime_error(msg.str());
  }

  // History blocks, most recent turn first, user utterance before the system
  // utterance that preceded it.
  std::vector<Token> hist_tokens;
  std::vector<Role> hist_roles;
  for (const DialogTurn* h : history) {
    for (const auto& t : tok.tokenize(h->user_utterance)) {
      hist_tokens.push_back(t);
      hist_roles.push_back(Role::history_user);
    }
    std::string sys_text = h->system_utterance;
    if (mask_history) {
      std::vector<std::string> values;
      for (const auto& [slot, value] : h->system_informs) values.push_back(value);
      sys_text = mask_values(sys_text, values);
    }
    for (const auto& t : tok.tokenize(sys_text)) {
      hist_tokens.push_back(t);
      hist_roles.push_back(Role::history_system);
    }
  }
  // Keeping a prefix of the recency-ordered block drops oldest turns first
  // and then cuts the boundary turn from its far end.
  const size_t budget = static_cast<size_t>(max_len - frame);
  if (hist_tokens.size() > budget) {
    hist_tokens.resize(budget);
    hist_roles.resize(budget);
  }

  Token cls{special::kCls, special::kCls, true};
  input.tokens.push_back(cls);
  input.roles.push_back(Role::special);
  input.ids.push_back(tok.piece_id(cls));
  append_tokens(input, user, Role::user, tok);
  append_sep(input, tok);
  append_tokens(input, sys, Role::system, tok);
  append_sep(input, tok);
  for (size_t i = 0; i < hist_tokens.size(); ++i) {
    input.tokens.push_back(hist_tokens[i]);
    input.roles.push_back(hist_roles[i]);
    input.ids.push_back(tok.piece_id(hist_tokens[i]));
  }
  append_sep(input, tok);
  return input;
}

std::vector<const DialogTurn*> history_for_turn(const Dialog& dialog, size_t t, bool no_history) {
  std::vector<const DialogTurn*> history;
  if (no_history) return history;
  for (size_t i = t; i-- > 0;) history.push_back(&dialog.turns[i]);
  return history;
}

std::string decode_span(const EncoderInput& input, int start, int end) {
  std::string out;
  for (int i = start; i <= end; ++i) {
    if (i > start && input.tokens[i].word_begin) out.push_back(' ');
    out += input.tokens[i].surface;
  }
  return out;
}

namespace {

struct WordRange {
  int first = 0;
  int last = 0;
};

// Word ranges of one contiguous same-role run.
std::vector<WordRange> segment_words(const EncoderInput& input, int seg_begin, int seg_end) {
  std::vector<WordRange> words;
  for (int i = seg_begin; i < seg_end; ++i) {
    if (input.tokens[i].word_begin || words.empty()) words.push_back({i, i});
    else words.back().last = i;
  }
  return words;
}

}  // namespace

std::optional<std::pair<int, int>> find_span(const EncoderInput& input, const Ontology& ont,
                                             const std::string& slot_id,
                                             const std::string& gold_value) {
  std::set<std::string> targets;
  size_t max_words = 1;
  for (const auto& surf : ont.surface_forms(slot_id, gold_value)) {
    const std::string canon = canonicalize(surf);
    targets.insert(canon);
    max_words = std::max(max_words, basic_tokenize(canon).size());
  }

  // Contiguous user-role runs appear in the assembled order: current user
  // utterance first, then history user utterances most recent first.
  const int n = input.size();
  int i = 0;
  while (i < n) {
    const Role r = input.roles[i];
    if (r != Role::user && r != Role::history_user) {
      ++i;
      continue;
    }
    int j = i;
    while (j < n && input.roles[j] == r) ++j;
    const std::vector<WordRange> words = segment_words(input, i, j);
    for (size_t w = 0; w < words.size(); ++w) {
      std::string candidate;
      for (size_t k = 0; k < max_words && w + k < words.size(); ++k) {
        if (k) candidate.push_back(' ');
        candidate += decode_span(input, words[w + k].first, words[w + k].last);
        if (targets.count(canonicalize(candidate)))
          return std::make_pair(words[w].first, words[w + k].last);
      }
    }
    i = j;
  }
  return std::nullopt;
}

std::optional<std::pair<int, int>> generate_span_labels(
    const DialogTurn& turn, const std::vector<const DialogTurn*>& history, const Tokenizer& tok,
    int max_len, bool mask_history, const Ontology& ont, const std::string& slot_id,
    const std::string& gold_value) {
  const EncoderInput input = build_input(turn, history, tok, max_len, mask_history);
  return find_span(input, ont, slot_id, gold_value);
}

namespace {

std::string turn_ref(const std::string& dialog_id, int turn_index) {
  return "dialog '" + dialog_id + "' turn " + std::to_string(turn_index);
}

// Gate derivation for a slot whose gold state changed this turn: prefer a
// span in the user input, then the system inform memory, then a value
// already held by another slot.
std::string derive_gate(const Ontology& ont, const DialogTurn& turn, const EncoderInput& input,
                        const std::map<std::string, std::string>& prev_state,
                        const std::string& slot_id, const std::string& value,
                        std::string* refer_source) {
  if (ont.is_boolean(slot_id)) {
    if (value == "true" || value == "false" || value == "dontcare") return value;
    throw std::runtime_error("boolean slot '" + slot_id + "' has non-boolean value '" + value + "'");
  }
  if (canonicalize(value) == "dontcare") return "dontcare";
  if (find_span(input, ont, slot_id, value)) return "span";
  auto inf = turn.system_informs.find(slot_id);
  if (inf != turn.system_informs.end() && ont.normalize_match(slot_id, inf->second, value))
    return "inform";
  const std::string canon = ont.canonical_value(slot_id, value);
  for (const auto& def : ont.slots()) {
    if (def.slot_id == slot_id) continue;
    auto it = prev_state.find(def.slot_id);
    if (it != prev_state.end() && ont.canonical_value(def.slot_id, it->second) == canon) {
      *refer_source = def.slot_id;
      return "refer";
    }
  }
  return "none";
}

PrepareStats prepare_dialog(Dialog& dialog, const Ontology& ont, const Tokenizer& tok,
                            const PrepInfo& prep) {
  PrepareStats stats;
  std::map<std::string, std::string> prev_state;
  for (size_t t = 0; t < dialog.turns.size(); ++t) {
    DialogTurn& turn = dialog.turns[t];
    stats.turns++;
    if (!turn.gold)
      throw std::runtime_error("prepare: missing gold labels in " + turn_ref(dialog.id, turn.turn_index));
    GoldLabels& gold = *turn.gold;
    const auto history = history_for_turn(dialog, t, prep.no_history);
    const EncoderInput input = build_input(turn, history, tok, prep.max_len, prep.mask_history);

    // Derive gates for state changes that carry no explicit gate entry.
    for (const auto& [slot, value] : gold.state) {
      if (gold.gate.count(slot)) continue;
      auto prev = prev_state.find(slot);
      if (prev != prev_state.end() && ont.normalize_match(slot, prev->second, value)) continue;
      std::string refer_source;
      const std::string gate = derive_gate(ont, turn, input, prev_state, slot, value, &refer_source);
      stats.derived_gates++;
      if (gate == "none") {
        stats.downgraded++;
        continue;
      }
      gold.gate[slot] = gate;
      if (gate == "refer") gold.refer[slot] = refer_source;
    }

    // Resolve token positions for every span-gated slot.
    for (auto it = gold.gate.begin(); it != gold.gate.end();) {
      const std::string& slot = it->first;
      if (it->second != "span") {
        ++it;
        continue;
      }
      auto sv = gold.state.find(slot);
      if (sv == gold.state.end())
        throw std::runtime_error("prepare: span gate without state value for slot '" + slot +
                                 "' in " + turn_ref(dialog.id, turn.turn_index));
      const auto pos = find_span(input, ont, slot, sv->second);
      if (!pos) {
        stats.downgraded++;
        gold.span.erase(slot);
        it = gold.gate.erase(it);
        continue;
      }
      gold.span[slot] = *pos;
      stats.span_labels++;
      ++it;
    }

    // Fill missing refer sources from the pre-turn state.
    for (auto& [slot, gate] : gold.gate) {
      if (gate != "refer" || gold.refer.count(slot)) continue;
      auto sv = gold.state.find(slot);
      if (sv == gold.state.end())
        throw std::runtime_error("prepare: refer gate without state value for slot '" + slot +
                                 "' in " + turn_ref(dialog.id, turn.turn_index));
      const std::string canon = ont.canonical_value(slot, sv->second);
      bool found = false;
      for (const auto& def : ont.slots()) {
        if (def.slot_id == slot) continue;
        auto pv = prev_state.find(def.slot_id);
        if (pv != prev_state.end() && ont.canonical_value(def.slot_id, pv->second) == canon) {
          gold.refer[slot] = def.slot_id;
          found = true;
          break;
        }
      }
      if (!found)
        throw std::runtime_error("prepare: no refer source holds value '" + sv->second +
                                 "' for slot '" + slot + "' in " + turn_ref(dialog.id, turn.turn_index));
    }
    prev_state = gold.state;
  }
  return stats;
}

}  // namespace

PrepareStats prepare_corpus(Corpus& corpus, const Ontology& ont, const Tokenizer& tok,
                            const PrepInfo& prep) {
  const int n = static_cast<int>(corpus.dialogs.size());
  std::vector<PrepareStats> per_dialog(n);
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      per_dialog[i] = prepare_dialog(corpus.dialogs[i], ont, tok, prep);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error(error);
  PrepareStats stats;
  for (const auto& s : per_dialog) {
    stats.turns += s.turns;
    stats.span_labels += s.span_labels;
    stats.derived_gates += s.derived_gates;
    stats.downgraded += s.downgraded;
  }
  corpus.prep = prep;
  return stats;
}

std::vector<std::string> corpus_texts(const Corpus& corpus) {
  std::vector<std::string> texts;
  for (const auto& d : corpus.dialogs) {
    for (const auto& t : d.turns) {
      texts.push_back(t.user_utterance);
      texts.push_back(t.system_utterance);
    }
  }
  return texts;
}

namespace {

void validate_slot(const Ontology& ont, const std::string& slot, const std::string& where,
                   const std::string& field) {
  if (!ont.has_slot(slot))
    throw std::runtime_error("corpus: unknown slot '" + slot + "' in " + field + " of " + where);
}

GoldLabels parse_gold(const ordered_json& j, const Ontology& ont, const std::string& where) {
  GoldLabels gold;
  if (j.contains("gate")) {
    for (const auto& [slot, g] : j["gate"].items()) {
      validate_slot(ont, slot, where, "gold.gate");
      const std::string name = g.get<std::string>();
      const bool ok = ont.is_boolean(slot) ? is_bool_gate_name(name)
                                           : (is_gate_name(name));
      if (!ok)
        throw std::runtime_error("corpus: invalid gate class '" + name + "' for slot '" + slot +
                                 "' in " + where);
      gold.gate[slot] = name;
    }
  }
  if (j.contains("span")) {
    for (const auto& [slot, sp] : j["span"].items()) {
      validate_slot(ont, slot, where, "gold.span");
      if (!sp.is_array() || sp.size() != 2)
        throw std::runtime_error("corpus: gold.span for slot '" + slot + "' in " + where +
                                 " must be [start, end]");
      const int s = sp[0].get<int>(), e = sp[1].get<int>();
      if (s < 0 || e < s)
        throw std::runtime_error("corpus: span out of bounds for slot '" + slot + "' in " + where);
      gold.span[slot] = {s, e};
    }
  }
  if (j.contains("refer")) {
    for (const auto& [slot, src] : j["refer"].items()) {
      validate_slot(ont, slot, where, "gold.refer");
      const std::string source = src.get<std::string>();
      validate_slot(ont, source, where, "gold.refer source");
      if (ont.is_boolean(slot))
        throw std::runtime_error("corpus: refer label on boolean slot '" + slot + "' in " + where);
      gold.refer[slot] = source;
    }
  }
  if (j.contains("state")) {
    for (const auto& [slot, v] : j["state"].items()) {
      validate_slot(ont, slot, where, "gold.state");
      gold.state[slot] = v.get<std::string>();
    }
  }
  return gold;
}

}  // namespace

Corpus load_corpus(const std::string& path, const Ontology& ont) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file '" + path + "'");
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("corpus '" + path + "': malformed JSON: " + e.what());
  }
  Corpus corpus;
  corpus.split = j.value("split", "");
  if (j.contains("prep")) {
    PrepInfo p;
    p.max_len = j["prep"].value("max_len", 180);
    p.mask_history = j["prep"].value("mask_history", true);
    p.no_history = j["prep"].value("no_history", false);
    corpus.prep = p;
  }
  std::set<std::string> seen_ids;
  for (const auto& jd : j.value("dialogs", ordered_json::array())) {
    Dialog d;
    d.id = jd.at("id").get<std::string>();
    if (!seen_ids.insert(d.id).second)
      throw std::runtime_error("corpus: duplicate dialog id '" + d.id + "'");
    int t = 1;
    for (const auto& jt : jd.value("turns", ordered_json::array())) {
      DialogTurn turn;
      turn.turn_index = t++;
      const std::string where = turn_ref(d.id, turn.turn_index);
      turn.system_utterance = jt.value("sys", "");
      if (!jt.contains("usr"))
        throw std::runtime_error("corpus: missing 'usr' field in " + where);
      turn.user_utterance = jt["usr"].get<std::string>();
      if (jt.contains("informs")) {
        for (const auto& [slot, v] : jt["informs"].items()) {
          validate_slot(ont, slot, where, "informs");
          turn.system_informs[slot] = v.get<std::string>();
        }
      }
      if (jt.contains("gold") && !jt["gold"].is_null())
        turn.gold = parse_gold(jt["gold"], ont, where);
      d.turns.push_back(std::move(turn));
    }
    corpus.dialogs.push_back(std::move(d));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  ordered_json j;
  j["split"] = corpus.split;
  if (corpus.prep) {
    j["prep"] = {{"max_len", corpus.prep->max_len},
                 {"mask_history", corpus.prep->mask_history},
                 {"no_history", corpus.prep->no_history}};
  }
  j["dialogs"] = ordered_json::array();
  for (const auto& d : corpus.dialogs) {
    ordered_json jd;
    jd["id"] = d.id;
    jd["turns"] = ordered_json::array();
    for (const auto& t : d.turns) {
      ordered_json jt;
      jt["sys"] = t.system_utterance;
      jt["usr"] = t.user_utterance;
      jt["informs"] = ordered_json::object();
      for (const auto& [slot, v] : t.system_informs) jt["informs"][slot] = v;
      if (t.gold) {
        ordered_json jg;
        jg["gate"] = ordered_json::object();
        for (const auto& [slot, g] : t.gold->gate) jg["gate"][slot] = g;
        jg["span"] = ordered_json::object();
        for (const auto& [slot, sp] : t.gold->span)
          jg["span"][slot] = ordered_json::array({sp.first, sp.second});
        jg["refer"] = ordered_json::object();
        for (const auto& [slot, src] : t.gold->refer) jg["refer"][slot] = src;
        jg["state"] = ordered_json::object();
        for (const auto& [slot, v] : t.gold->state) jg["state"][slot] = v;
        jt["gold"] = jg;
      }
      jd["turns"].push_back(jt);
    }
    j["dialogs"].push_back(jd);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file '" + path + "'");
  out << j.dump(1) << "\n";
}

}  // namespace copydst
