#include "copydst/synth.hpp"

#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace copydst {

using ordered_json = nlohmann::ordered_json;

TemplateSet load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open template file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  ordered_json j;
  try {
    j = ordered_json::parse(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error("templates '" + path + "': malformed JSON: " + e.what());
  }
  TemplateSet t;
  for (const auto& [name, values] : j.at("pools").items())
    for (const auto& v : values) t.pools[name].push_back(v.get<std::string>());
  t.variant_prob = j.value("variant_prob", 0.25);
  t.raw = j.at("scenarios").dump();
  return t;
}

namespace {

// Portable uniform helpers on top of the standardized mt19937_64 stream.
double rand_u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

size_t rand_index(std::mt19937_64& rng, size_t n) {
  return static_cast<size_t>(rand_u01(rng) * static_cast<double>(n)) % n;
}

size_t weighted_pick(std::mt19937_64& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rand_u01(rng) * total;
  for (size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u <= 0.0) return i;
  }
  return weights.size() - 1;
}

std::string domain_of(const std::string& slot_id) {
  return slot_id.substr(0, slot_id.find('-'));
}

// Placeholder occurrences look like {pool} or {pool:2} for an independent
// second binding of the same pool.
std::vector<std::string> placeholders(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  while ((i = text.find('{', i)) != std::string::npos) {
    const size_t j = text.find('}', i);
    if (j == std::string::npos) break;
    out.push_back(text.substr(i + 1, j - i - 1));
    i = j + 1;
  }
  return out;
}

std::string pool_of(const std::string& placeholder) {
  const size_t c = placeholder.find(':');
  return c == std::string::npos ? placeholder : placeholder.substr(0, c);
}

class Generator {
 public:
  Generator(const SynthSpec& spec, const Ontology& ont, const TemplateSet& templates)
      : spec_(spec), ont_(ont), templates_(templates), rng_(spec.seed) {
    scenarios_ = ordered_json::parse(templates.raw);
    std::set<std::string> domains;
    bool wants_refer = false;
    for (const auto& def : ont.slots()) domains.insert(domain_of(def.slot_id));
    for (const auto& scn : scenarios_)
      for (const auto& turn : scn.at("turns"))
        for (const auto& opt : turn.at("usr_options"))
          for (const auto& act : opt.value("acts", ordered_json::array()))
            if (act.value("gate", "") == "refer") wants_refer = true;
    if (wants_refer && domains.size() < 2)
      throw std::runtime_error(
          "synth: templates require refer chains but the ontology has fewer than 2 domains");
  }

  Corpus generate(SynthReport* report) {
    Corpus corpus;
    corpus.split = spec_.split;
    std::vector<double> weights;
    for (const auto& scn : scenarios_) weights.push_back(scn.value("weight", 1.0));
    for (int i = 0; i < spec_.dialogs; ++i)
      corpus.dialogs.push_back(render_dialog(scenarios_[weighted_pick(rng_, weights)], i));
    if (report) fill_report(corpus, report);
    return corpus;
  }

 private:
  const std::vector<std::string>& pool(const std::string& name) {
    if (spec_.oov) {
      auto oov = templates_.pools.find(name + "_oov");
      if (oov != templates_.pools.end()) return oov->second;
    }
    auto it = templates_.pools.find(name);
    if (it == templates_.pools.end())
      throw std::runtime_error("synth: template references unknown pool '" + name + "'");
    return it->second;
  }

  void bind(std::map<std::string, std::string>& bindings, const std::string& placeholder) {
    if (bindings.count(placeholder)) return;
    const auto& values = pool(pool_of(placeholder));
    // Distinct bindings of one pool get distinct values when possible.
    std::set<std::string> taken;
    for (const auto& [ph, v] : bindings)
      if (pool_of(ph) == pool_of(placeholder)) taken.insert(v);
    for (int attempt = 0;; ++attempt) {
      const std::string& v = values[rand_index(rng_, values.size())];
      if (!taken.count(v) || attempt >= 15) {
        bindings[placeholder] = v;
        return;
      }
    }
  }

  void bind_all(std::map<std::string, std::string>& bindings, const std::string& text) {
    for (const auto& ph : placeholders(text)) bind(bindings, ph);
  }

  // User-side placeholders that feed a span slot may render as one of the
  // value's surface variants; the gold state keeps the canonical form.
  // System-side text renders canonically so inform masking can find it.
  std::string render(const std::string& text, std::map<std::string, std::string>& bindings,
                     const std::map<std::string, std::string>* variant_slots) {
    std::string out;
    size_t i = 0;
    while (i < text.size()) {
      if (text[i] != '{') {
        out.push_back(text[i++]);
        continue;
      }
      const size_t j = text.find('}', i);
      const std::string ph = text.substr(i + 1, j - i - 1);
      bind(bindings, ph);
      std::string value = bindings[ph];
      if (variant_slots) {
        auto vs = variant_slots->find(ph);
        if (vs != variant_slots->end() && rand_u01(rng_) < templates_.variant_prob) {
          const auto forms = ont_.surface_forms(vs->second, value);
          value = forms[rand_index(rng_, forms.size())];
        }
      }
      out += value;
      i = j + 1;
    }
    return out;
  }

  Dialog render_dialog(const ordered_json& scn, int index) {
    Dialog d;
    std::ostringstream id;
    id << spec_.split << "-" << std::setw(4) << std::setfill('0') << index;
    d.id = id.str();
    std::map<std::string, std::string> bindings;
    std::map<std::string, std::string> state;
    int t = 1;
    for (const auto& jturn : scn.at("turns")) {
      DialogTurn turn;
      turn.turn_index = t++;
      turn.system_utterance = render(jturn.value("sys", ""), bindings, nullptr);
      if (jturn.contains("informs"))
        for (const auto& [slot, v] : jturn["informs"].items())
          turn.system_informs[slot] = render(v.get<std::string>(), bindings, nullptr);

      const auto& options = jturn.at("usr_options");
      std::vector<double> w;
      for (const auto& opt : options) w.push_back(opt.value("weight", 1.0));
      const auto& opt = options[weighted_pick(rng_, w)];

      GoldLabels gold;
      std::map<std::string, std::string> variant_slots;  // placeholder -> span slot
      for (const auto& act : opt.value("acts", ordered_json::array())) {
        const std::string slot = act.at("slot").get<std::string>();
        const std::string gate = act.at("gate").get<std::string>();
        ont_.slot_index(slot);
        if (gate == "span") {
          const std::string value_tpl = act.at("value").get<std::string>();
          bind_all(bindings, value_tpl);
          const std::string value = render(value_tpl, bindings, nullptr);
          gold.gate[slot] = "span";
          state[slot] = value;
          for (const auto& ph : placeholders(value_tpl)) variant_slots[ph] = slot;
        } else if (gate == "inform") {
          auto inf = turn.system_informs.find(slot);
          if (inf == turn.system_informs.end())
            throw std::runtime_error("synth: inform act without matching inform in scenario '" +
                                     scn.value("name", "?") + "'");
          gold.gate[slot] = "inform";
          state[slot] = inf->second;
        } else if (gate == "refer") {
          const std::string source = act.at("source").get<std::string>();
          auto sv = state.find(source);
          if (sv == state.end())
            throw std::runtime_error("synth: refer source '" + source +
                                     "' unfilled in scenario '" + scn.value("name", "?") + "'");
          gold.gate[slot] = "refer";
          gold.refer[slot] = source;
          state[slot] = sv->second;
        } else if (gate == "dontcare") {
          gold.gate[slot] = "dontcare";
          state[slot] = "dontcare";
        } else if (gate == "true" || gate == "false") {
          if (!ont_.is_boolean(slot))
            throw std::runtime_error("synth: boolean act on non-boolean slot '" + slot + "'");
          gold.gate[slot] = gate;
          state[slot] = gate;
        } else {
          throw std::runtime_error("synth: unknown act gate '" + gate + "'");
        }
      }
      turn.user_utterance = render(opt.at("usr").get<std::string>(), bindings, &variant_slots);
      gold.state = state;
      turn.gold = gold;
      d.turns.push_back(std::move(turn));
    }
    return d;
  }

  void fill_report(const Corpus& corpus, SynthReport* report) {
    for (const auto& d : corpus.dialogs) {
      for (const auto& turn : d.turns) {
        report->turns++;
        for (const auto& def : ont_.slots()) {
          report->turn_slots++;
          auto it = turn.gold->gate.find(def.slot_id);
          report->gate_counts[it == turn.gold->gate.end() ? "none" : it->second]++;
        }
      }
    }
    int non_none = 0;
    for (const auto& [gate, count] : report->gate_counts)
      if (gate != "none") non_none += count;
    for (const auto& [gate, count] : report->gate_counts) {
      if (gate == "none")
        report->share[gate] = static_cast<double>(count) / report->turn_slots;
      else
        report->share[gate] = non_none ? static_cast<double>(count) / non_none : 0.0;
    }
  }

  SynthSpec spec_;
  const Ontology& ont_;
  const TemplateSet& templates_;
  std::mt19937_64 rng_;
  ordered_json scenarios_;
};

}  // namespace

Corpus synth_corpus(const SynthSpec& spec, const Ontology& ont, const TemplateSet& templates,
                    SynthReport* report) {
  Generator gen(spec, ont, templates);
  return gen.generate(report);
}

}  // namespace copydst
