#include "copydst/eval.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace copydst {

using ordered_json = nlohmann::ordered_json;

namespace {

bool slot_agrees(const Ontology& ont, const std::string& slot,
                 const std::map<std::string, std::string>& pred,
                 const std::map<std::string, std::string>& gold) {
  auto p = pred.find(slot);
  auto g = gold.find(slot);
  if (p == pred.end() && g == gold.end()) return true;  // absence is asserted
  if (p == pred.end() || g == gold.end()) return false;
  return ont.normalize_match(slot, p->second, g->second);
}

void check_alignment(const std::vector<std::vector<DialogState>>& predicted, const Corpus& gold) {
  if (predicted.size() != gold.dialogs.size())
    throw std::runtime_error("evaluate: predicted dialog count " +
                             std::to_string(predicted.size()) + " does not match gold " +
                             std::to_string(gold.dialogs.size()));
  for (size_t d = 0; d < predicted.size(); ++d) {
    if (predicted[d].size() != gold.dialogs[d].turns.size())
      throw std::runtime_error("evaluate: turn count mismatch in dialog '" + gold.dialogs[d].id +
                               "'");
    for (const auto& turn : gold.dialogs[d].turns)
      if (!turn.gold)
        throw std::runtime_error("evaluate: dialog '" + gold.dialogs[d].id + "' turn " +
                                 std::to_string(turn.turn_index) + " has no gold state");
  }
}

}  // namespace

double joint_goal_accuracy(const std::vector<std::vector<DialogState>>& predicted,
                           const Corpus& gold, const Ontology& ont) {
  check_alignment(predicted, gold);
  long correct = 0, total = 0;
  for (size_t d = 0; d < predicted.size(); ++d) {
    for (size_t t = 0; t < predicted[d].size(); ++t) {
      const auto& pred = predicted[d][t].assignments;
      const auto& gs = gold.dialogs[d].turns[t].gold->state;
      bool ok = true;
      for (const auto& def : ont.slots())
        if (!slot_agrees(ont, def.slot_id, pred, gs)) {
          ok = false;
          break;
        }
      correct += ok ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / total : 0.0;
}

std::map<std::string, double> per_slot_accuracy(
    const std::vector<std::vector<DialogState>>& predicted, const Corpus& gold,
    const Ontology& ont) {
  check_alignment(predicted, gold);
  std::map<std::string, long> correct;
  long total = 0;
  for (size_t d = 0; d < predicted.size(); ++d) {
    for (size_t t = 0; t < predicted[d].size(); ++t) {
      const auto& pred = predicted[d][t].assignments;
      const auto& gs = gold.dialogs[d].turns[t].gold->state;
      for (const auto& def : ont.slots())
        if (slot_agrees(ont, def.slot_id, pred, gs)) correct[def.slot_id]++;
      ++total;
    }
  }
  std::map<std::string, double> acc;
  for (const auto& def : ont.slots())
    acc[def.slot_id] = total ? static_cast<double>(correct[def.slot_id]) / total : 0.0;
  return acc;
}

std::vector<std::vector<DialogState>> states_for_corpus(const StatesFile& states,
                                                        const Corpus& gold) {
  std::vector<std::vector<DialogState>> out;
  out.reserve(gold.dialogs.size());
  for (const auto& dialog : gold.dialogs) {
    auto it = states.states.find(dialog.id);
    if (it == states.states.end())
      throw std::runtime_error("evaluate: no predicted states for dialog '" + dialog.id + "'");
    std::vector<DialogState> per_turn;
    for (const auto& st : it->second) per_turn.push_back(DialogState{st});
    out.push_back(std::move(per_turn));
  }
  return out;
}

GateMetrics gate_metrics(const PredictionsFile& preds, const Corpus& gold, const Ontology& ont) {
  std::map<std::string, std::vector<const TurnDecisions*>> by_dialog;
  for (const auto& t : preds.turns) by_dialog[t.dialog_id].push_back(&t);

  static const std::vector<std::string> kClasses = {"none", "dontcare", "span", "inform",
                                                    "refer", "true",     "false"};
  std::map<std::string, long> tp, fp, fn, gold_count;
  std::map<std::string, long> slot_correct;
  long joint_correct = 0, turns = 0;

  for (const auto& dialog : gold.dialogs) {
    auto it = by_dialog.find(dialog.id);
    if (it == by_dialog.end() || it->second.size() != dialog.turns.size())
      throw std::runtime_error("gate_metrics: predictions do not align with dialog '" +
                               dialog.id + "'");
    for (size_t t = 0; t < dialog.turns.size(); ++t) {
      const DialogTurn& turn = dialog.turns[t];
      if (!turn.gold)
        throw std::runtime_error("gate_metrics: dialog '" + dialog.id + "' turn " +
                                 std::to_string(turn.turn_index) + " has no gold labels");
      const TurnDecisions& dec = *it->second[t];
      ++turns;
      bool all_ok = true;
      for (const auto& def : ont.slots()) {
        auto git = turn.gold->gate.find(def.slot_id);
        const std::string gold_gate = git == turn.gold->gate.end() ? "none" : git->second;
        auto pit = dec.slots.find(def.slot_id);
        const std::string pred_gate = pit == dec.slots.end() ? "none" : pit->second.gate;
        const bool valid_gold = ont.is_boolean(def.slot_id) ? is_bool_gate_name(gold_gate)
                                                            : is_gate_name(gold_gate);
        if (!valid_gold)
          throw std::runtime_error("gate_metrics: unknown gate class '" + gold_gate + "'");
        gold_count[gold_gate]++;
        if (pred_gate == gold_gate) {
          tp[gold_gate]++;
          slot_correct[def.slot_id]++;
        } else {
          fn[gold_gate]++;
          fp[pred_gate]++;
          all_ok = false;
        }
      }
      joint_correct += all_ok ? 1 : 0;
    }
  }

  GateMetrics m;
  m.joint_acc = turns ? static_cast<double>(joint_correct) / turns : 0.0;
  for (const auto& cls : kClasses) {
    const long tpc = tp[cls], fpc = fp[cls], fnc = fn[cls];
    m.support[cls] = static_cast<int>(gold_count[cls]);
    if (gold_count[cls] == 0 && fpc == 0) {
      // Degenerate support: the phenomenon is absent and was never claimed.
      m.precision[cls] = m.recall[cls] = m.f1[cls] = 1.0;
      continue;
    }
    const double prec = tpc + fpc ? static_cast<double>(tpc) / (tpc + fpc) : 0.0;
    const double rec = tpc + fnc ? static_cast<double>(tpc) / (tpc + fnc) : 0.0;
    m.precision[cls] = prec;
    m.recall[cls] = rec;
    m.f1[cls] = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  for (const auto& def : ont.slots())
    m.per_slot_acc[def.slot_id] =
        turns ? static_cast<double>(slot_correct[def.slot_id]) / turns : 0.0;
  return m;
}

std::map<std::string, std::map<std::string, int>> value_counts(const Corpus& train,
                                                               const Ontology& ont) {
  std::map<std::string, std::map<std::string, int>> counts;
  for (const auto& d : train.dialogs)
    for (const auto& t : d.turns) {
      if (!t.gold) continue;
      for (const auto& [slot, value] : t.gold->state)
        counts[slot][ont.canonical_value(slot, value)]++;
    }
  return counts;
}

static std::string bucket_name(int seen) {
  if (seen == 0) return "0";
  if (seen < 10) return "1-9";
  if (seen < 50) return "10-49";
  return "50+";
}

std::map<std::string, RecallBucket> recall_by_seen_count(
    const std::vector<std::vector<DialogState>>& predicted, const Corpus& gold,
    const std::map<std::string, std::map<std::string, int>>& train_counts, const Ontology& ont) {
  check_alignment(predicted, gold);
  std::map<std::string, RecallBucket> buckets;
  for (const auto& name : {"0", "1-9", "10-49", "50+"}) buckets[name];
  for (size_t d = 0; d < predicted.size(); ++d) {
    for (size_t t = 0; t < predicted[d].size(); ++t) {
      const auto& pred = predicted[d][t].assignments;
      for (const auto& [slot, value] : gold.dialogs[d].turns[t].gold->state) {
        const std::string canon = ont.canonical_value(slot, value);
        int seen = 0;
        auto sit = train_counts.find(slot);
        if (sit != train_counts.end()) {
          auto vit = sit->second.find(canon);
          if (vit != sit->second.end()) seen = vit->second;
        }
        RecallBucket& b = buckets[bucket_name(seen)];
        b.total++;
        auto pit = pred.find(slot);
        if (pit != pred.end() && ont.normalize_match(slot, pit->second, value)) b.hits++;
      }
    }
  }
  return buckets;
}

OovReport oov_substitution(Corpus& corpus,
                           const std::map<std::string, std::map<std::string, std::string>>& repl,
                           const Corpus& train, const Ontology& ont, const Tokenizer& tok) {
  const auto train_values = value_counts(train, ont);
  // Fresh replacements only: a collision with a training value defeats the
  // out-of-vocabulary purpose.
  for (const auto& [slot, m] : repl) {
    ont.slot_index(slot);
    for (const auto& [from, to] : m) {
      const std::string canon_to = ont.canonical_value(slot, to);
      auto sit = train_values.find(slot);
      if (sit != train_values.end() && sit->second.count(canon_to))
        throw std::runtime_error("oov_substitution: replacement '" + to + "' for slot '" + slot +
                                 "' collides with an existing training value");
    }
  }

  // Surface rewrite table: any surface form of a replaced value maps to the
  // replacement string.
  std::vector<std::pair<std::vector<std::string>, std::string>> rewrites;
  for (const auto& [slot, m] : repl)
    for (const auto& [from, to] : m)
      for (const auto& surf : ont.surface_forms(slot, from))
        rewrites.push_back({basic_tokenize(surf), to});

  auto rewrite_text = [&rewrites](const std::string& text) {
    std::vector<std::string> words = basic_tokenize(text);
    std::vector<std::string> out;
    size_t i = 0;
    while (i < words.size()) {
      bool matched = false;
      for (const auto& [from_words, to] : rewrites) {
        if (from_words.empty() || i + from_words.size() > words.size()) continue;
        bool hit = true;
        for (size_t k = 0; k < from_words.size(); ++k)
          if (words[i + k] != from_words[k]) {
            hit = false;
            break;
          }
        if (hit) {
          for (const auto& w : basic_tokenize(to)) out.push_back(w);
          i += from_words.size();
          matched = true;
          break;
        }
      }
      if (!matched) out.push_back(words[i++]);
    }
    std::string joined;
    for (size_t k = 0; k < out.size(); ++k) {
      if (k) joined.push_back(' ');
      joined += out[k];
    }
    return joined;
  };

  auto replace_value = [&repl, &ont](const std::string& slot, const std::string& value) {
    auto sit = repl.find(slot);
    if (sit == repl.end()) return value;
    const std::string canon = ont.canonical_value(slot, value);
    for (const auto& [from, to] : sit->second)
      if (ont.canonical_value(slot, from) == canon) return to;
    return value;
  };

  OovReport report;
  for (auto& dialog : corpus.dialogs) {
    for (auto& turn : dialog.turns) {
      turn.user_utterance = rewrite_text(turn.user_utterance);
      turn.system_utterance = rewrite_text(turn.system_utterance);
      for (auto& [slot, value] : turn.system_informs) value = replace_value(slot, value);
      if (turn.gold) {
        for (auto& [slot, value] : turn.gold->state) value = replace_value(slot, value);
        turn.gold->span.clear();  // regenerated below
      }
    }
  }
  const PrepInfo prep = corpus.prep ? *corpus.prep : PrepInfo{};
  const PrepareStats stats = prepare_corpus(corpus, ont, tok, prep);
  report.respanned = stats.span_labels;

  std::set<std::pair<std::string, std::string>> unique_pairs;
  for (const auto& d : corpus.dialogs)
    for (const auto& t : d.turns)
      if (t.gold)
        for (const auto& [slot, value] : t.gold->state)
          unique_pairs.insert({slot, ont.canonical_value(slot, value)});
  report.unique_pairs = static_cast<int>(unique_pairs.size());
  for (const auto& [slot, canon] : unique_pairs) {
    auto sit = train_values.find(slot);
    if (sit == train_values.end() || !sit->second.count(canon)) report.oov_pairs++;
  }
  report.rate = report.unique_pairs
                    ? static_cast<double>(report.oov_pairs) / report.unique_pairs
                    : 0.0;
  return report;
}

EvalReport make_report(std::vector<EvalRun> runs) {
  EvalReport report;
  report.runs = std::move(runs);
  if (report.runs.empty()) return report;
  double sum = 0.0;
  for (const auto& r : report.runs) sum += r.jga;
  report.jga_mean = sum / report.runs.size();
  if (report.runs.size() > 1) {
    double sq = 0.0;
    for (const auto& r : report.runs) {
      const double d = r.jga - report.jga_mean;
      sq += d * d;
    }
    report.jga_stddev = std::sqrt(sq / (report.runs.size() - 1));
  }
  return report;
}

static ordered_json buckets_to_json(const std::map<std::string, RecallBucket>& buckets) {
  ordered_json j = ordered_json::object();
  for (const auto& name : {"0", "1-9", "10-49", "50+"}) {
    auto it = buckets.find(name);
    if (it == buckets.end()) continue;
    ordered_json b;
    b["total"] = it->second.total;
    b["hits"] = it->second.hits;
    const auto r = it->second.recall();
    if (r)
      b["recall"] = *r;
    else
      b["recall"] = nullptr;  // undefined on an empty bucket
    j[name] = b;
  }
  return j;
}

std::string report_to_json(const EvalReport& report) {
  ordered_json j;
  j["runs"] = ordered_json::array();
  for (const auto& r : report.runs) {
    ordered_json jr;
    jr["label"] = r.label;
    jr["jga"] = r.jga;
    ordered_json ps = ordered_json::object();
    for (const auto& [slot, acc] : r.per_slot_acc) ps[slot] = acc;
    jr["per_slot_acc"] = ps;
    if (r.gates) {
      ordered_json jg;
      jg["joint_acc"] = r.gates->joint_acc;
      ordered_json f1 = ordered_json::object(), support = ordered_json::object();
      ordered_json prec = ordered_json::object(), rec = ordered_json::object();
      for (const auto& [cls, v] : r.gates->f1) f1[cls] = v;
      for (const auto& [cls, v] : r.gates->precision) prec[cls] = v;
      for (const auto& [cls, v] : r.gates->recall) rec[cls] = v;
      for (const auto& [cls, v] : r.gates->support) support[cls] = v;
      jg["f1"] = f1;
      jg["precision"] = prec;
      jg["recall"] = rec;
      jg["support"] = support;
      ordered_json psg = ordered_json::object();
      for (const auto& [slot, acc] : r.gates->per_slot_acc) psg[slot] = acc;
      jg["per_slot_acc"] = psg;
      jr["gates"] = jg;
    }
    if (r.recall_buckets) jr["recall_by_seen_count"] = buckets_to_json(*r.recall_buckets);
    j["runs"].push_back(jr);
  }
  j["jga_mean"] = report.jga_mean;
  j["jga_stddev"] = report.jga_stddev;
  return j.dump(2);
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "run                jga";
  const bool any_gates = !report.runs.empty() && report.runs.front().gates.has_value();
  if (any_gates) os << "    gate_joint";
  os << "\n";
  for (const auto& r : report.runs) {
    os << r.label;
    for (size_t i = r.label.size(); i < 16; ++i) os << ' ';
    os << "  " << r.jga;
    if (r.gates) os << "    " << r.gates->joint_acc;
    os << "\n";
  }
  os << "mean              " << report.jga_mean << "\n";
  os << "stddev            " << report.jga_stddev << "\n";
  if (!report.runs.empty() && report.runs.front().recall_buckets) {
    os << "\nrecall by training frequency\n";
    for (const auto& name : {"0", "1-9", "10-49", "50+"}) {
      const auto& buckets = *report.runs.front().recall_buckets;
      auto it = buckets.find(name);
      if (it == buckets.end()) continue;
      os << "  seen " << name;
      for (size_t i = std::string(name).size(); i < 8; ++i) os << ' ';
      const auto rec = it->second.recall();
      if (rec)
        os << *rec;
      else
        os << "n/a";
      os << "  (" << it->second.hits << "/" << it->second.total << ")\n";
    }
  }
  return os.str();
}

}  // namespace copydst
