#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "copydst/corpus.hpp"
#include "copydst/ontology.hpp"
#include "copydst/synth.hpp"
#include "copydst/tokenizer.hpp"

using namespace copydst;

namespace {

Ontology ont() {
  return Ontology({{"restaurant-food", false}, {"restaurant-area", false},
                   {"restaurant-name", false}, {"hotel-parking", true}},
                  {{"restaurant-area", {{"centre", {"center"}}}}});
}

Vocab shared_vocab() {
  return Vocab::build({"cheap hotel in the north and the centre of town",
                       "i want chinese food tonight", "the bedouin is a nice place to dine",
                       "what area would you like ? yes no please [UNK]"});
}

DialogTurn turn_of(const std::string& usr, const std::string& sys) {
  DialogTurn t;
  t.user_utterance = usr;
  t.system_utterance = sys;
  return t;
}

std::string data_path(const std::string& name) {
  return std::string(COPYDST_DATA_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("first turn input is [CLS] user [SEP] [SEP] [SEP]") {
  const Vocab vocab = shared_vocab();
  const Tokenizer tok(&vocab);
  DialogTurn t = turn_of("i want chinese food", "");
  const EncoderInput input = build_input(t, {}, tok, 32, true);
  std::vector<std::string> pieces;
  for (const auto& tk : input.tokens) pieces.push_back(tk.piece);
  CHECK(pieces == std::vector<std::string>{"[CLS]", "i", "want", "chinese", "food", "[SEP]",
                                           "[SEP]", "[SEP]"});
  CHECK(input.roles[0] == Role::special);
  CHECK(input.roles[1] == Role::user);
}

TEST_CASE("history is laid out most recent turn first, user before system") {
  const Vocab vocab = shared_vocab();
  const Tokenizer tok(&vocab);
  DialogTurn t1 = turn_of("no", "");
  DialogTurn t2 = turn_of("yes", "what area ?");
  DialogTurn t3 = turn_of("the centre", "would you like ?");
  const EncoderInput input = build_input(t3, {&t2, &t1}, tok, 64, false);
  std::vector<std::string> pieces;
  for (size_t i = 0; i < input.tokens.size(); ++i)
    if (input.roles[i] == Role::history_user || input.roles[i] == Role::history_system)
      pieces.push_back(input.tokens[i].piece);
  // U2 M2 U1 M1 flattened.
  CHECK(pieces == std::vector<std::string>{"yes", "what", "area", "?", "no"});
}

TEST_CASE("length never exceeds max_len and oldest history goes first") {
  const Vocab vocab = shared_vocab();
  const Tokenizer tok(&vocab);
  DialogTurn old1 = turn_of("i want chinese food tonight", "what area would you like ?");
  DialogTurn old2 = turn_of("cheap hotel in the north", "what area would you like ?");
  DialogTurn cur = turn_of("the centre please", "what area ?");
  for (int max_len = 20; max_len <= 60; ++max_len) {
    const EncoderInput input = build_input(cur, {&old2, &old1}, tok, max_len, true);
    CHECK(input.size() <= max_len);
    CHECK(input.tokens[0].piece == "[CLS]");
    int seps = 0;
    for (const auto& tk : input.tokens) seps += tk.piece == "[SEP]" ? 1 : 0;
    CHECK(seps >= 3);  // the three structural separators survive truncation
  }
  // Current turn + specials must fit.
  CHECK_THROWS(build_input(cur, {}, tok, 6, true));
}

TEST_CASE("mask_values replaces each covered token with one [UNK]") {
  CHECK(mask_values("the bedouin is a nice place", {"the bedouin"}) ==
        "[UNK] [UNK] is a nice place");
  CHECK(mask_values("anything else ?", {}) == "anything else ?");
  CHECK(mask_values("a nice place", {"the bedouin"}) == "a nice place");
  // Token count is invariant.
  std::mt19937_64 rng(5);
  const std::vector<std::string> utts = {"the bedouin is a nice place",
                                         "how about the centre of town ?", "yes no please"};
  const std::vector<std::string> values = {"the bedouin", "centre", "town", "please", "absent"};
  for (int trial = 0; trial < 100; ++trial) {
    const auto& u = utts[rng() % utts.size()];
    std::vector<std::string> vs = {values[rng() % values.size()],
                                   values[rng() % values.size()]};
    CHECK(basic_tokenize(mask_values(u, vs)).size() == basic_tokenize(u).size());
  }
}

TEST_CASE("masking applies to history system utterances only") {
  const Vocab vocab = shared_vocab();
  const Tokenizer tok(&vocab);
  DialogTurn prev = turn_of("yes please", "the bedouin is a nice place");
  prev.system_informs = {{"restaurant-name", "the bedouin"}};
  DialogTurn cur = turn_of("the bedouin please", "the bedouin is a nice place");
  cur.system_informs = {{"restaurant-name", "the bedouin"}};
  const EncoderInput input = build_input(cur, {&prev}, tok, 64, true);
  int unks_hist = 0, unks_cur = 0;
  for (size_t i = 0; i < input.tokens.size(); ++i) {
    if (input.tokens[i].piece != "[UNK]") continue;
    if (input.roles[i] == Role::history_system) ++unks_hist;
    else ++unks_cur;
  }
  CHECK(unks_hist == 2);
  CHECK(unks_cur == 0);  // current-turn text and user text stay intact
}

TEST_CASE("span search prefers the current user utterance, then recent history") {
  const Ontology o = ont();
  const Vocab vocab = shared_vocab();
  const Tokenizer tok(&vocab);
  DialogTurn old_turn = turn_of("cheap hotel in the north", "");
  DialogTurn cur = turn_of("i want chinese food in the north", "what area ?");
  const auto span =
      generate_span_labels(cur, {&old_turn}, tok, 64, true, o, "restaurant-area", "north");
  REQUIRE(span.has_value());
  const EncoderInput input = build_input(cur, {&old_turn}, tok, 64, true);
  CHECK(input.roles[span->first] == Role::user);  // not the history occurrence
  CHECK(decode_span(input, span->first, span->second) == "north");

  // Only in history: found on a history-user token.
  DialogTurn cur2 = turn_of("yes please", "what area ?");
  const auto span2 =
      generate_span_labels(cur2, {&old_turn}, tok, 64, true, o, "restaurant-area", "north");
  REQUIRE(span2.has_value());
  const EncoderInput input2 = build_input(cur2, {&old_turn}, tok, 64, true);
  CHECK(input2.roles[span2->first] == Role::history_user);
}

TEST_CASE("span matching accepts variant surfaces") {
  const Ontology o = ont();
  const Vocab vocab = shared_vocab();
  const Tokenizer tok(&vocab);
  DialogTurn cur = turn_of("somewhere in the center of town", "");
  const auto span = generate_span_labels(cur, {}, tok, 64, true, o, "restaurant-area", "centre");
  REQUIRE(span.has_value());
  const EncoderInput input = build_input(cur, {}, tok, 64, true);
  CHECK(decode_span(input, span->first, span->second) == "center");
  // Absent values yield no span.
  CHECK(!generate_span_labels(cur, {}, tok, 64, true, o, "restaurant-food", "chinese"));
}

TEST_CASE("corpus save/load round-trips and validates") {
  const Ontology o = ont();
  Corpus corpus;
  corpus.split = "train";
  Dialog d;
  d.id = "d1";
  DialogTurn t = turn_of("i want chinese food", "");
  t.gold = GoldLabels{};
  t.gold->gate = {{"restaurant-food", "span"}};
  t.gold->span = {{"restaurant-food", {2, 2}}};
  t.gold->state = {{"restaurant-food", "chinese"}};
  d.turns.push_back(t);
  corpus.dialogs.push_back(d);
  corpus.prep = PrepInfo{48, true, false};

  const std::string path = "test_corpus_roundtrip.json";
  save_corpus(corpus, path);
  const Corpus back = load_corpus(path, o);
  std::remove(path.c_str());
  REQUIRE(back.dialogs.size() == 1);
  CHECK(back.split == "train");
  CHECK(back.prep->max_len == 48);
  CHECK(back.dialogs[0].turns[0].gold->span.at("restaurant-food") == std::make_pair(2, 2));

  // Re-saving the loaded corpus is byte-identical.
  const std::string path2 = "test_corpus_roundtrip2.json";
  save_corpus(back, path2);
  save_corpus(corpus, path);
  std::ifstream f1(path), f2(path2);
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("validation errors name the offending pieces") {
  const Ontology o = ont();
  const std::string path = "test_corpus_invalid.json";
  {
    std::ofstream out(path);
    out << R"({"split":"t","dialogs":[{"id":"d9","turns":[
      {"sys":"","usr":"hi","informs":{"hotel-stars":"3"}}]}]})";
  }
  try {
    load_corpus(path, o);
    CHECK(false);
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("hotel-stars") != std::string::npos);
    CHECK(msg.find("d9") != std::string::npos);
  }
  std::remove(path.c_str());

  // Empty dialog list is a valid corpus.
  {
    std::ofstream out(path);
    out << R"({"split":"t","dialogs":[]})";
  }
  CHECK(load_corpus(path, o).dialogs.empty());
  std::remove(path.c_str());
}

TEST_CASE("prepare derives gates from state deltas when absent") {
  const Ontology o = ont();
  const Vocab vocab = shared_vocab();
  const Tokenizer tok(&vocab);
  Corpus corpus;
  corpus.split = "train";
  Dialog d;
  d.id = "d1";
  DialogTurn t1 = turn_of("i want chinese food in the center", "");
  t1.gold = GoldLabels{};
  t1.gold->state = {{"restaurant-food", "chinese"}, {"restaurant-area", "centre"}};
  DialogTurn t2 = turn_of("yes book it please", "how about the bedouin ?");
  t2.system_informs = {{"restaurant-name", "the bedouin"}};
  t2.gold = GoldLabels{};
  t2.gold->state = {{"restaurant-food", "chinese"},
                    {"restaurant-area", "centre"},
                    {"restaurant-name", "the bedouin"}};
  d.turns = {t1, t2};
  corpus.dialogs.push_back(d);

  const PrepareStats stats = prepare_corpus(corpus, o, tok, {64, true, false});
  CHECK(stats.derived_gates == 3);
  CHECK(stats.downgraded == 0);
  const GoldLabels& g1 = *corpus.dialogs[0].turns[0].gold;
  CHECK(g1.gate.at("restaurant-food") == "span");
  CHECK(g1.gate.at("restaurant-area") == "span");  // matched via variant "center"
  CHECK(g1.span.count("restaurant-area") == 1);
  const GoldLabels& g2 = *corpus.dialogs[0].turns[1].gold;
  CHECK(g2.gate.at("restaurant-name") == "inform");
}

TEST_CASE("unmatchable span labels downgrade to none and are counted") {
  const Ontology o = ont();
  const Vocab vocab = shared_vocab();
  const Tokenizer tok(&vocab);
  Corpus corpus;
  corpus.split = "train";
  Dialog d;
  d.id = "d1";
  DialogTurn t = turn_of("i want food", "");
  t.gold = GoldLabels{};
  t.gold->gate = {{"restaurant-area", "span"}};
  t.gold->state = {{"restaurant-area", "centre"}};
  d.turns.push_back(t);
  corpus.dialogs.push_back(d);
  const PrepareStats stats = prepare_corpus(corpus, o, tok, {64, true, false});
  CHECK(stats.downgraded == 1);
  CHECK(corpus.dialogs[0].turns[0].gold->gate.count("restaurant-area") == 0);
}

TEST_CASE("generated corpora satisfy the span label-consistency property") {
  const Ontology o = Ontology::load(data_path("ontology.json"));
  const TemplateSet tpl = load_templates(data_path("templates.json"));
  SynthSpec spec;
  spec.dialogs = 40;
  spec.seed = 123;
  Corpus corpus = synth_corpus(spec, o, tpl, nullptr);
  const Vocab vocab = Vocab::build(corpus_texts(corpus));
  const Tokenizer tok(&vocab);
  const PrepInfo prep{180, true, false};
  const PrepareStats stats = prepare_corpus(corpus, o, tok, prep);
  CHECK(stats.downgraded == 0);
  int checked = 0;
  for (const auto& dialog : corpus.dialogs) {
    for (size_t t = 0; t < dialog.turns.size(); ++t) {
      const auto& gold = *dialog.turns[t].gold;
      if (gold.span.empty()) continue;
      const EncoderInput input =
          build_input(dialog.turns[t], history_for_turn(dialog, t, false), tok, prep.max_len,
                      prep.mask_history);
      for (const auto& [slot, span] : gold.span) {
        const std::string text = decode_span(input, span.first, span.second);
        CHECK(o.normalize_match(slot, text, gold.state.at(slot)));
        ++checked;
      }
    }
  }
  CHECK(checked > 50);
}
