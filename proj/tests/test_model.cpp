#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "copydst/model.hpp"
#include "copydst/oracle.hpp"
#include "copydst/synth.hpp"
#include "copydst/trainer.hpp"

using namespace copydst;

namespace {

Ontology tiny_ontology() {
  return Ontology(
      {{"restaurant-food", false}, {"restaurant-area", false}, {"taxi-destination", false},
       {"hotel-parking", true}},
      {{"restaurant-area", {{"centre", {"center"}}}}});
}

struct Fixture {
  Ontology ont = tiny_ontology();
  Vocab vocab;
  ModelConfig cfg;

  Fixture() {
    vocab = Vocab::build({"i want cheap chinese food in the centre",
                          "what area would you like ?", "book a taxi to the north please"});
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 24;
    cfg.max_len = 48;
    cfg.dropout = 0.3;
  }

  TrainExample example(const Tokenizer& tok) const {
    DialogTurn turn;
    turn.turn_index = 2;
    turn.user_utterance = "i want cheap chinese food in the centre";
    turn.system_utterance = "what area would you like ?";
    turn.system_informs = {{"restaurant-area", "centre"}};
    DialogTurn prev;
    prev.turn_index = 1;
    prev.user_utterance = "book a taxi to the north please";
    prev.system_utterance = "";

    TrainExample ex;
    ex.input = build_input(turn, {&prev}, tok, cfg.max_len, true);
    DialogState ds;
    ds.assignments["restaurant-area"] = "centre";
    ex.aux = aux_features(InformMemory::from_turn(turn), ds, ont);
    const int n = ont.num_slots();
    ex.gate.assign(n, 0);
    ex.span.assign(n, {-1, -1});
    ex.refer.assign(n, -1);
    // food via span, area via inform, destination via refer, parking true
    ex.gate[0] = static_cast<int>(GateClass::span);
    const auto pos = find_span(ex.input, ont, "restaurant-food", "chinese");
    REQUIRE(pos.has_value());
    ex.span[0] = *pos;
    ex.gate[1] = static_cast<int>(GateClass::inform);
    ex.gate[2] = static_cast<int>(GateClass::refer);
    ex.refer[2] = 1;  // restaurant-area
    ex.gate[3] = static_cast<int>(BoolGateClass::btrue);
    return ex;
  }
};

}  // namespace

TEST_CASE("distributions are normalized and refer has N+1 entries") {
  Fixture f;
  Model model(f.cfg, f.ont, f.vocab);
  model.init_params(3);
  const Tokenizer tok(&f.vocab);
  const TrainExample ex = f.example(tok);
  const PredictionBundle bundle = model.predict(ex.input, ex.aux);
  REQUIRE(bundle.slots.size() == 4);
  for (size_t i = 0; i < bundle.slots.size(); ++i) {
    const auto& p = bundle.slots[i];
    double sum = 0.0;
    for (double v : p.gate) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    if (f.ont.slot(static_cast<int>(i)).is_boolean) {
      CHECK(p.gate.size() == 4);
      CHECK(p.start.empty());
      CHECK(p.refer.empty());
      continue;
    }
    CHECK(p.gate.size() == 5);
    CHECK(p.refer.size() == f.ont.num_slots() + 1);
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (double v : p.start) s1 += v;
    for (double v : p.end) s2 += v;
    for (double v : p.refer) s3 += v;
    CHECK(s1 == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(s2 == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(s3 == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("encode is deterministic in eval mode and shapes follow the input") {
  Fixture f;
  Model model(f.cfg, f.ont, f.vocab);
  model.init_params(11);
  const Tokenizer tok(&f.vocab);
  const TrainExample ex = f.example(tok);
  const PredictionBundle a = model.predict(ex.input, ex.aux);
  const PredictionBundle b = model.predict(ex.input, ex.aux);
  for (size_t i = 0; i < a.slots.size(); ++i) {
    CHECK(a.slots[i].gate == b.slots[i].gate);
    CHECK(a.slots[i].start == b.slots[i].start);
  }
  CHECK(a.slots[0].start.size() == static_cast<size_t>(ex.input.size()));
}

TEST_CASE("joint loss of exact one-hot predictions is zero") {
  Fixture f;
  const Tokenizer tok(&f.vocab);
  TrainExample ex = f.example(tok);
  // Oracle bundle from the same targets.
  DialogTurn turn;
  turn.gold = GoldLabels{};
  turn.gold->gate = {{"restaurant-food", "span"},
                     {"restaurant-area", "inform"},
                     {"taxi-destination", "refer"},
                     {"hotel-parking", "true"}};
  turn.gold->span = {{"restaurant-food", ex.span[0]}};
  turn.gold->refer = {{"taxi-destination", "restaurant-area"}};
  const PredictionBundle bundle = oracle_predictions(turn, f.ont, ex.input.size());
  const LossWeights w{0.8, 0.1, 0.1};
  CHECK(joint_loss(bundle, ex, w) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("uniform gate predictions cost ln(classes)") {
  Fixture f;
  const Tokenizer tok(&f.vocab);
  TrainExample ex = f.example(tok);
  // All-uniform bundle; only the gate loss is active.
  ex.gate = {0, 0, 0, 0};
  ex.span.assign(4, {-1, -1});
  ex.refer.assign(4, -1);
  PredictionBundle bundle;
  bundle.slots.resize(4);
  const int L = ex.input.size();
  for (int i = 0; i < 4; ++i) {
    const bool boolean = f.ont.slot(i).is_boolean;
    bundle.slots[i].gate.assign(boolean ? 4 : 5, boolean ? 0.25 : 0.2);
    if (!boolean) {
      bundle.slots[i].start.assign(L, 1.0 / L);
      bundle.slots[i].end.assign(L, 1.0 / L);
      bundle.slots[i].refer.assign(5, 0.2);
    }
  }
  const LossWeights w{1.0, 0.0, 0.0};
  const double want = (3.0 * std::log(5.0) + std::log(4.0)) / 4.0;
  CHECK(joint_loss(bundle, ex, w) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("perturbing masked span and refer heads leaves the loss unchanged") {
  Fixture f;
  Model model(f.cfg, f.ont, f.vocab);
  model.init_params(29);
  const Tokenizer tok(&f.vocab);
  TrainExample ex = f.example(tok);
  // Make taxi-destination unlabeled for span and refer.
  ex.gate[2] = static_cast<int>(GateClass::none);
  ex.refer[2] = -1;
  const LossWeights w{0.8, 0.1, 0.1};
  const double before = model.forward_loss(ex, w);
  for (Param* p : model.params()) {
    if (p->name.rfind("head.taxi-destination.span_w", 0) == 0 ||
        p->name.rfind("head.taxi-destination.refer_w", 0) == 0)
      for (auto& v : p->w.a) v += 0.37;
  }
  const double after = model.forward_loss(ex, w);
  CHECK(before == after);  // exactly, not approximately
}

TEST_CASE("analytic gradients match central finite differences") {
  Fixture f;
  Model model(f.cfg, f.ont, f.vocab);
  model.init_params(7);
  const Tokenizer tok(&f.vocab);
  const TrainExample ex = f.example(tok);
  const LossWeights w{0.8, 0.1, 0.1};
  const double err = grad_check(model, ex, w, 1e-4);
  CHECK(err < 1e-3);
}

TEST_CASE("grad check rejects dropout mode and bad epsilon") {
  Fixture f;
  Model model(f.cfg, f.ont, f.vocab);
  model.init_params(7);
  const Tokenizer tok(&f.vocab);
  const TrainExample ex = f.example(tok);
  const LossWeights w{0.8, 0.1, 0.1};
  CHECK_THROWS(grad_check(model, ex, w, 1e-4, /*use_dropout=*/true));
  CHECK_THROWS(grad_check(model, ex, w, 1e-2));
}

TEST_CASE("zero-gradient parameters report zero relative error") {
  Fixture f;
  Model model(f.cfg, f.ont, f.vocab);
  model.init_params(7);
  const Tokenizer tok(&f.vocab);
  TrainExample ex = f.example(tok);
  ex.gate[2] = static_cast<int>(GateClass::none);
  ex.refer[2] = -1;
  Grads grads = model.registry().make_grads();
  model.forward_backward(ex, {0.8, 0.1, 0.1}, grads, nullptr);
  for (Param* p : model.params()) {
    if (p->name.rfind("head.taxi-destination.span_w", 0) != 0) continue;
    for (double v : grads[p->idx].a) CHECK(v == 0.0);
  }
}

TEST_CASE("checkpoint round-trips parameters and vocabulary") {
  Fixture f;
  Model model(f.cfg, f.ont, f.vocab);
  model.init_params(99);
  const std::string path = "test_model_roundtrip.ckpt";
  model.save_checkpoint(path, TrainConfig{}.to_json());
  Model::Loaded loaded = Model::load_checkpoint(path, f.ont);
  REQUIRE(loaded.model->params().size() == model.params().size());
  for (size_t i = 0; i < model.params().size(); ++i) {
    CHECK(loaded.model->params()[i]->name == model.params()[i]->name);
    CHECK(loaded.model->params()[i]->w.a == model.params()[i]->w.a);
  }
  const Tokenizer tok(&f.vocab);
  const TrainExample ex = f.example(tok);
  const PredictionBundle a = model.predict(ex.input, ex.aux);
  const PredictionBundle b = loaded.model->predict(ex.input, ex.aux);
  CHECK(a.slots[0].gate == b.slots[0].gate);
  std::remove(path.c_str());
}
