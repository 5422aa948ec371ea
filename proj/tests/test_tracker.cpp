#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "copydst/oracle.hpp"
#include "copydst/synth.hpp"
#include "copydst/tracker.hpp"

using namespace copydst;

namespace {

Ontology ont() {
  return Ontology({{"restaurant-name", false}, {"restaurant-area", false},
                   {"taxi-destination", false}, {"hotel-parking", true}},
                  {});
}

Vocab vocab() {
  return Vocab::build({"the bedouin is in the north , book a taxi there please yes no"});
}

EncoderInput input_for(const Tokenizer& tok, const DialogTurn& turn) {
  return build_input(turn, {}, tok, 48, true);
}

PredictionBundle all_none(const Ontology& o, int len) {
  PredictionBundle b;
  b.slots.resize(o.num_slots());
  for (int i = 0; i < o.num_slots(); ++i) {
    auto& p = b.slots[i];
    if (o.slot(i).is_boolean) {
      p.gate.assign(kBoolGateClasses, 0.0);
      p.gate[0] = 1.0;
      continue;
    }
    p.gate.assign(kGateClasses, 0.0);
    p.gate[0] = 1.0;
    p.start.assign(len, 0.0);
    p.start[0] = 1.0;
    p.end.assign(len, 0.0);
    p.end[0] = 1.0;
    p.refer.assign(o.num_slots() + 1, 0.0);
    p.refer[o.num_slots()] = 1.0;
  }
  return b;
}

}  // namespace

TEST_CASE("resolve_span extracts the argmax range and merges words") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  DialogTurn turn;
  turn.user_utterance = "the bedouin is in the north";
  const EncoderInput input = input_for(tok, turn);
  // tokens: [CLS] the bedouin is in the north [SEP] [SEP] [SEP]
  std::vector<double> start(input.size(), 0.0), end(input.size(), 0.0);
  start[5] = 0.9;
  end[6] = 0.9;
  CHECK(resolve_span(start, end, input) == "the north");
  // Point span.
  std::fill(start.begin(), start.end(), 0.0);
  std::fill(end.begin(), end.end(), 0.0);
  start[2] = 1.0;
  end[2] = 1.0;
  CHECK(resolve_span(start, end, input) == "bedouin");
}

TEST_CASE("end before start yields the empty span") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  DialogTurn turn;
  turn.user_utterance = "the bedouin is in the north";
  const EncoderInput input = input_for(tok, turn);
  std::mt19937_64 rng(42);
  int user_lo = 1, user_hi = 6;  // user token positions
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> start(input.size(), 0.0), end(input.size(), 0.0);
    const int s = user_lo + static_cast<int>(rng() % (user_hi - user_lo)) + 1;
    const int e = user_lo + static_cast<int>(rng() % (s - user_lo));
    REQUIRE(e < s);
    start[s] = 1.0;
    end[e] = 1.0;
    // Noise on non-user positions is masked out before the argmax.
    start[0] = 2.0;
    end[input.size() - 1] = 2.0;
    CHECK(resolve_span(start, end, input).empty());
  }
}

TEST_CASE("non-user positions are masked before the argmax") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  DialogTurn turn;
  turn.user_utterance = "yes please";
  turn.system_utterance = "the bedouin is in the north";
  const EncoderInput input = input_for(tok, turn);
  std::vector<double> start(input.size(), 0.0), end(input.size(), 0.0);
  // Peaks on system tokens must not produce a span from the system text.
  int sys_pos = -1;
  for (int i = 0; i < input.size(); ++i)
    if (input.roles[i] == Role::system) sys_pos = i;
  REQUIRE(sys_pos > 0);
  start[sys_pos - 1] = 1.0;
  end[sys_pos] = 1.0;
  const std::string got = resolve_span(start, end, input);
  CHECK(got.find("bedouin") == std::string::npos);
  CHECK_THROWS(resolve_span(std::vector<double>(3, 0.1), end, input));
}

TEST_CASE("apply_turn covers all five gate decisions") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  DialogTurn turn;
  turn.user_utterance = "book a taxi to the north";
  turn.system_informs = {{"restaurant-name", "the bedouin"}};
  const EncoderInput input = input_for(tok, turn);

  DialogState ds;
  ds.assignments["restaurant-name"] = "the bedouin";

  PredictionBundle b = all_none(o, input.size());
  // restaurant-name: inform; restaurant-area: span over "the north";
  // taxi-destination: refer to restaurant-name; hotel-parking: true.
  b.slots[0].gate = {0, 0, 0, 1, 0};
  b.slots[1].gate = {0, 0, 1, 0, 0};
  int north = -1, the = -1;
  for (int i = 0; i < input.size(); ++i) {
    if (input.tokens[i].piece == "the" && input.roles[i] == Role::user && the < 0) the = i;
    if (input.tokens[i].piece == "north") north = i;
  }
  std::fill(b.slots[1].start.begin(), b.slots[1].start.end(), 0.0);
  std::fill(b.slots[1].end.begin(), b.slots[1].end.end(), 0.0);
  b.slots[1].start[north] = 1.0;
  b.slots[1].end[north] = 1.0;
  b.slots[2].gate = {0, 0, 0, 0, 1};
  std::fill(b.slots[2].refer.begin(), b.slots[2].refer.end(), 0.0);
  b.slots[2].refer[0] = 1.0;  // restaurant-name
  b.slots[3].gate = {0, 0, 1, 0};  // true

  const DialogState next = apply_turn(ds, turn, b, input, o);
  CHECK(next.assignments.at("restaurant-name") == "the bedouin");
  CHECK(next.assignments.at("restaurant-area") == "north");
  CHECK(next.assignments.at("taxi-destination") == "the bedouin");
  CHECK(next.assignments.at("hotel-parking") == "true");
  // Input state unchanged (immutable snapshots).
  CHECK(ds.assignments.size() == 1);
}

TEST_CASE("all-none predictions keep the state unchanged") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  DialogTurn turn;
  turn.user_utterance = "yes";
  const EncoderInput input = input_for(tok, turn);
  DialogState ds;
  ds.assignments = {{"restaurant-area", "north"}, {"hotel-parking", "false"}};
  const DialogState next = apply_turn(ds, turn, all_none(o, input.size()), input, o);
  CHECK(next.assignments == ds.assignments);
}

TEST_CASE("empty span, missing inform and unfilled refer leave the slot unchanged") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  DialogTurn turn;
  turn.user_utterance = "yes please";
  const EncoderInput input = input_for(tok, turn);
  DialogState ds;

  PredictionBundle b = all_none(o, input.size());
  // span with end < start decodes empty
  b.slots[1].gate = {0, 0, 1, 0, 0};
  std::fill(b.slots[1].start.begin(), b.slots[1].start.end(), 0.0);
  std::fill(b.slots[1].end.begin(), b.slots[1].end.end(), 0.0);
  b.slots[1].start[2] = 1.0;
  b.slots[1].end[1] = 1.0;
  // inform without a matching inform entry
  b.slots[0].gate = {0, 0, 0, 1, 0};
  // refer to an unfilled source
  b.slots[2].gate = {0, 0, 0, 0, 1};
  std::fill(b.slots[2].refer.begin(), b.slots[2].refer.end(), 0.0);
  b.slots[2].refer[1] = 1.0;

  const DialogState next = apply_turn(ds, turn, b, input, o);
  CHECK(next.assignments.empty());
}

TEST_CASE("refer copies read the pre-turn snapshot") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  DialogTurn turn;
  turn.user_utterance = "the bedouin please and a taxi there";
  const EncoderInput input = input_for(tok, turn);
  DialogState ds;
  ds.assignments["restaurant-name"] = "old name";

  PredictionBundle b = all_none(o, input.size());
  // restaurant-name re-filled by span this turn AND taxi refers to it: the
  // refer copy must see the pre-turn value.
  b.slots[0].gate = {0, 0, 1, 0, 0};
  int pos = -1;
  for (int i = 0; i < input.size(); ++i)
    if (input.tokens[i].piece == "bedouin") pos = i;
  std::fill(b.slots[0].start.begin(), b.slots[0].start.end(), 0.0);
  std::fill(b.slots[0].end.begin(), b.slots[0].end.end(), 0.0);
  b.slots[0].start[pos - 1] = 1.0;
  b.slots[0].end[pos] = 1.0;
  b.slots[2].gate = {0, 0, 0, 0, 1};
  std::fill(b.slots[2].refer.begin(), b.slots[2].refer.end(), 0.0);
  b.slots[2].refer[0] = 1.0;

  const DialogState next = apply_turn(ds, turn, b, input, o);
  CHECK(next.assignments.at("restaurant-name") == "the bedouin");
  CHECK(next.assignments.at("taxi-destination") == "old name");
}

TEST_CASE("dontcare is stored as the reserved value") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  DialogTurn turn;
  turn.user_utterance = "anything";
  const EncoderInput input = input_for(tok, turn);
  PredictionBundle b = all_none(o, input.size());
  b.slots[1].gate = {0, 1, 0, 0, 0};
  b.slots[3].gate = {0, 1, 0, 0};
  const DialogState next = apply_turn(DialogState{}, turn, b, input, o);
  CHECK(next.assignments.at("restaurant-area") == "dontcare");
  CHECK(next.assignments.at("hotel-parking") == "dontcare");
}

TEST_CASE("malformed bundles are schema violations") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  DialogTurn turn;
  turn.user_utterance = "yes";
  const EncoderInput input = input_for(tok, turn);
  PredictionBundle b = all_none(o, input.size());
  // A five-class (refer-capable) gate on a boolean slot.
  b.slots[3].gate = {0, 0, 0, 0, 1};
  CHECK_THROWS(apply_turn(DialogState{}, turn, b, input, o));
  PredictionBundle too_few = all_none(o, input.size());
  too_few.slots.pop_back();
  CHECK_THROWS(apply_turn(DialogState{}, turn, too_few, input, o));
}

TEST_CASE("aux features flag informed and filled slots") {
  const Ontology o = ont();
  InformMemory mem;
  DialogState ds;
  AuxFeatures aux = aux_features(mem, ds, o);
  CHECK(aux.inform_vec == std::vector<double>(4, 0.0));
  CHECK(aux.ds_vec == std::vector<double>(4, 0.0));

  mem.last_informed["restaurant-name"] = "x";
  ds.assignments["taxi-destination"] = "y";
  aux = aux_features(mem, ds, o);
  CHECK(aux.inform_vec == std::vector<double>{1, 0, 0, 0});
  CHECK(aux.ds_vec == std::vector<double>{0, 0, 1, 0});
}

TEST_CASE("monotone carry-over holds for random prediction bundles") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  DialogTurn turn;
  turn.user_utterance = "book a taxi to the north please";
  turn.system_informs = {{"restaurant-name", "the bedouin"}};
  const EncoderInput input = input_for(tok, turn);
  std::mt19937_64 rng(17);
  auto rnd_dist = [&rng](int n) {
    std::vector<double> d(n);
    double sum = 0.0;
    for (auto& x : d) {
      x = (rng() % 1000) + 1;
      sum += x;
    }
    for (auto& x : d) x /= sum;
    return d;
  };
  for (int trial = 0; trial < 200; ++trial) {
    PredictionBundle b;
    b.slots.resize(4);
    for (int i = 0; i < 4; ++i) {
      auto& p = b.slots[i];
      if (o.slot(i).is_boolean) {
        p.gate = rnd_dist(4);
        continue;
      }
      p.gate = rnd_dist(5);
      p.start = rnd_dist(input.size());
      p.end = rnd_dist(input.size());
      p.refer = rnd_dist(5);
    }
    DialogState ds;
    ds.assignments = {{"restaurant-area", "north"}};
    const DialogState next = apply_turn(ds, turn, b, input, o);
    for (int i = 0; i < 4; ++i) {
      const auto& p = b.slots[i];
      const std::string& slot = o.slot(i).slot_id;
      const bool none_gate = argmax(p.gate) == 0;
      if (none_gate) {
        // Untouched slots carry over exactly.
        const bool before = ds.assignments.count(slot) > 0;
        const bool after = next.assignments.count(slot) > 0;
        CHECK(before == after);
        if (before) CHECK(ds.assignments.at(slot) == next.assignments.at(slot));
      }
    }
  }
}

TEST_CASE("oracle tracking over an empty dialog yields no states") {
  const Ontology o = ont();
  const Vocab v = vocab();
  const Tokenizer tok(&v);
  Dialog d;
  d.id = "empty";
  CHECK(track_dialog(d, o, tok, {48, true, false}, oracle_provider(o)).empty());
}
