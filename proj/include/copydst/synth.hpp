#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "copydst/corpus.hpp"
#include "copydst/ontology.hpp"

namespace copydst {

// Scenario templates loaded from a data file; see data/templates.json for
// the shipped set. New dialog phenomena are added there, not in code.
struct TemplateSet {
  std::map<std::string, std::vector<std::string>> pools;
  double variant_prob = 0.25;  // chance a user-side placeholder renders as a surface variant
  std::string raw;             // scenario array, parsed lazily by the generator
};

TemplateSet load_templates(const std::string& path);

struct SynthSpec {
  int dialogs = 200;
  std::uint64_t seed = 7;
  std::string split = "train";
  bool oov = false;  // swap named-entity pools for their *_oov twins
};

struct SynthReport {
  int turns = 0;
  int turn_slots = 0;                       // turns x slots
  std::map<std::string, int> gate_counts;   // over all (turn, slot) pairs
  // Share of none over all pairs; the other classes over non-none pairs.
  std::map<std::string, double> share;
};

// Deterministic templated corpus with all five gate classes, cross-domain
// refer chains, confirm/reject inform follow-ups and boolean slots. Gold
// labels are internally consistent: spans decode to their value and refer
// sources are filled in an earlier turn.
Corpus synth_corpus(const SynthSpec& spec, const Ontology& ont, const TemplateSet& templates,
                    SynthReport* report = nullptr);

}  // namespace copydst
