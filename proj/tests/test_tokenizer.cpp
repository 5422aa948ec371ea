#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "copydst/tokenizer.hpp"

using namespace copydst;

TEST_CASE("basic tokenization lowercases, splits and detaches punctuation") {
  CHECK(basic_tokenize("I'd like Chinese food.") ==
        std::vector<std::string>{"i", "'", "d", "like", "chinese", "food", "."});
  CHECK(basic_tokenize("") == std::vector<std::string>{});
  CHECK(basic_tokenize("CENTRE") == std::vector<std::string>{"centre"});
  CHECK(basic_tokenize("a  ,b") == std::vector<std::string>{"a", ",", "b"});
  CHECK(basic_tokenize("08:15") == std::vector<std::string>{"08", ":", "15"});
}

TEST_CASE("special tokens stay atomic in any case") {
  CHECK(basic_tokenize("[UNK] x [SEP]") == std::vector<std::string>{"[UNK]", "x", "[SEP]"});
  CHECK(basic_tokenize("[unk]") == std::vector<std::string>{"[UNK]"});
  CHECK(basic_tokenize("[CLS]") == std::vector<std::string>{"[CLS]"});
}

TEST_CASE("in-vocabulary words tokenize to themselves") {
  const Vocab vocab = Vocab::build({"i'd like chinese food ."});
  const Tokenizer tok(&vocab);
  const auto pieces = tok.tokenize_pieces("I'd like Chinese food.");
  CHECK(pieces == std::vector<std::string>{"i", "'", "d", "like", "chinese", "food", "."});
}

TEST_CASE("unseen words split greedily into longest known pieces") {
  const Vocab vocab = Vocab::build({"chinese food town"});
  const Tokenizer tok(&vocab);
  // "chinesefood" -> greedy longest prefixes: "chinese" then "food".
  const auto pieces = tok.tokenize_pieces("chinesefood");
  CHECK(pieces == std::vector<std::string>{"chinese", "food"});
  // Unknown characters collapse into one [UNK] fragment per run, and the
  // surface text is preserved for span decoding.
  const auto tokens = tok.tokenize("zzq");
  REQUIRE(tokens.size() == 1);
  CHECK(tokens[0].piece == "[UNK]");
  CHECK(tokens[0].surface == "zzq");
}

TEST_CASE("word fragments carry word_begin flags and surfaces") {
  const Vocab vocab = Vocab::build({"over under o v e r"});
  const Tokenizer tok(&vocab);
  const auto tokens = tok.tokenize("overunder plain");
  REQUIRE(tokens.size() >= 2);
  CHECK(tokens[0].word_begin);
  CHECK(!tokens[1].word_begin);
  std::string merged;
  for (const auto& t : tokens)
    if (t.word_begin && !merged.empty()) merged += " " + t.surface;
    else merged += t.surface;
  CHECK(merged == "overunder plain");
}

TEST_CASE("tokenization is idempotent on its own joined output") {
  const Vocab vocab = Vocab::build({"the golden palace is nice", "cheap food in town"});
  const Tokenizer tok(&vocab);
  std::mt19937_64 rng(77);
  const std::vector<std::string> inputs = {
      "The GOLDEN palace", "cheapfood", "zebra in town!", "[UNK] palace", "a,b.c",
      "goldenzzz nice"};
  for (const auto& text : inputs) {
    const auto once = tok.tokenize_pieces(text);
    std::string joined;
    for (size_t i = 0; i < once.size(); ++i) {
      if (i) joined += " ";
      joined += once[i];
    }
    CHECK(tok.tokenize_pieces(joined) == once);
  }
}

TEST_CASE("vocabulary is deterministic and maps ids both ways") {
  const Vocab a = Vocab::build({"b a c", "a b"});
  const Vocab b = Vocab::build({"b a c", "a b"});
  CHECK(a.pieces() == b.pieces());
  CHECK(a.id("[UNK]") == a.unk_id());
  CHECK(a.id("a") >= 0);
  CHECK(a.id("zz") == -1);
  CHECK(a.piece(a.id("c")) == "c");
}
