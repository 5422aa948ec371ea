#include "copydst/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <omp.h>

#include <json.hpp>

#include "copydst/eval.hpp"

namespace copydst {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  const double sum = loss_gate + loss_span + loss_refer;
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::runtime_error("config: loss weights must sum to 1, got " + std::to_string(sum));
  for (double r : {loss_gate, loss_span, loss_refer, warmup, dropout, slot_value_dropout})
    if (r < 0.0 || r > 1.0) throw std::runtime_error("config: rates must lie in [0, 1]");
  if (lr <= 0.0) throw std::runtime_error("config: lr must be positive");
  if (epochs < 1 || batch_size < 1) throw std::runtime_error("config: epochs and batch_size must be >= 1");
  if (d_model % n_heads != 0) throw std::runtime_error("config: d_model must be divisible by n_heads");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.d_model = d_model;
  m.n_layers = n_layers;
  m.n_heads = n_heads;
  m.d_ff = d_ff;
  m.max_len = max_len;
  m.dropout = dropout;
  m.no_aux = no_aux;
  m.single_copy = single_copy;
  return m;
}

std::string TrainConfig::to_json() const {
  ordered_json j;
  j["loss_gate"] = loss_gate;
  j["loss_span"] = loss_span;
  j["loss_refer"] = loss_refer;
  j["lr"] = lr;
  j["warmup"] = warmup;
  j["dropout"] = dropout;
  j["slot_value_dropout"] = slot_value_dropout;
  j["max_len"] = max_len;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["patience"] = patience;
  j["seed"] = seed;
  j["d_model"] = d_model;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["d_ff"] = d_ff;
  j["mask_history"] = mask_history;
  j["no_history"] = no_history;
  j["no_aux"] = no_aux;
  j["single_copy"] = single_copy;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("config: malformed JSON: ") + e.what());
  }
  TrainConfig c;
  c.loss_gate = j.value("loss_gate", c.loss_gate);
  c.loss_span = j.value("loss_span", c.loss_span);
  c.loss_refer = j.value("loss_refer", c.loss_refer);
  c.lr = j.value("lr", c.lr);
  c.warmup = j.value("warmup", c.warmup);
  c.dropout = j.value("dropout", c.dropout);
  c.slot_value_dropout = j.value("slot_value_dropout", c.slot_value_dropout);
  c.max_len = j.value("max_len", c.max_len);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.mask_history = j.value("mask_history", c.mask_history);
  c.no_history = j.value("no_history", c.no_history);
  c.no_aux = j.value("no_aux", c.no_aux);
  c.single_copy = j.value("single_copy", c.single_copy);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double rand_u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void check_prepared(const Corpus& corpus, const PrepInfo& prep, const std::string& which) {
  if (!corpus.prep)
    throw std::runtime_error(which + " corpus is not prepared (run prepare first)");
  if (corpus.prep->max_len != prep.max_len || corpus.prep->mask_history != prep.mask_history ||
      corpus.prep->no_history != prep.no_history)
    throw std::runtime_error(which + " corpus was prepared under different assembly settings "
                             "than the training config");
}

}  // namespace

std::vector<TrainExample> make_examples(const Corpus& corpus, const Ontology& ont,
                                        const Tokenizer& tok, const PrepInfo& prep) {
  const int n = ont.num_slots();
  std::vector<TrainExample> examples;
  for (const auto& dialog : corpus.dialogs) {
    std::map<std::string, std::string> prev_state;
    for (size_t t = 0; t < dialog.turns.size(); ++t) {
      const DialogTurn& turn = dialog.turns[t];
      if (!turn.gold)
        throw std::runtime_error("make_examples: dialog '" + dialog.id + "' turn " +
                                 std::to_string(turn.turn_index) + " has no gold labels");
      const GoldLabels& gold = *turn.gold;
      TrainExample ex;
      ex.dialog_id = dialog.id;
      ex.turn = turn.turn_index;
      ex.input = build_input(turn, history_for_turn(dialog, t, prep.no_history), tok,
                             prep.max_len, prep.mask_history);
      DialogState prev;
      prev.assignments = prev_state;
      ex.aux = aux_features(InformMemory::from_turn(turn), prev, ont);
      ex.gate.assign(n, 0);
      ex.span.assign(n, {-1, -1});
      ex.refer.assign(n, -1);
      for (int i = 0; i < n; ++i) {
        const SlotDef& def = ont.slot(i);
        auto git = gold.gate.find(def.slot_id);
        const std::string gate = git == gold.gate.end() ? "none" : git->second;
        if (def.is_boolean) {
          ex.gate[i] = static_cast<int>(bool_gate_from_string(gate));
          continue;
        }
        ex.gate[i] = static_cast<int>(gate_from_string(gate));
        if (gate == "span") {
          auto sit = gold.span.find(def.slot_id);
          if (sit == gold.span.end())
            throw std::runtime_error("make_examples: span gate without positions for slot '" +
                                     def.slot_id + "' in dialog '" + dialog.id +
                                     "' (corpus not prepared?)");
          if (sit->second.second >= ex.input.size())
            throw std::runtime_error("make_examples: span exceeds input length for slot '" +
                                     def.slot_id + "' in dialog '" + dialog.id + "'");
          ex.span[i] = sit->second;
        } else if (gate == "refer") {
          auto rit = gold.refer.find(def.slot_id);
          if (rit == gold.refer.end())
            throw std::runtime_error("make_examples: refer gate without source for slot '" +
                                     def.slot_id + "' in dialog '" + dialog.id + "'");
          ex.refer[i] = ont.slot_index(rit->second);
        }
      }
      prev_state = gold.state;
      examples.push_back(std::move(ex));
    }
  }
  return examples;
}

void collapse_single_copy(Corpus& corpus, const Ontology& ont, const Tokenizer& tok,
                          const PrepInfo& prep) {
  for (auto& dialog : corpus.dialogs) {
    for (size_t t = 0; t < dialog.turns.size(); ++t) {
      DialogTurn& turn = dialog.turns[t];
      if (!turn.gold) continue;
      GoldLabels& gold = *turn.gold;
      bool any = false;
      for (const auto& [slot, gate] : gold.gate)
        if (gate == "inform" || gate == "refer") any = true;
      if (!any) continue;
      const EncoderInput input = build_input(turn, history_for_turn(dialog, t, prep.no_history),
                                             tok, prep.max_len, prep.mask_history);
      for (auto it = gold.gate.begin(); it != gold.gate.end();) {
        if (it->second != "inform" && it->second != "refer") {
          ++it;
          continue;
        }
        const std::string slot = it->first;
        gold.refer.erase(slot);
        auto sv = gold.state.find(slot);
        const auto pos = sv == gold.state.end()
                             ? std::nullopt
                             : find_span(input, ont, slot, sv->second);
        if (pos) {
          it->second = "span";
          gold.span[slot] = *pos;
          ++it;
        } else {
          it = gold.gate.erase(it);
        }
      }
    }
  }
}

double lr_at(int step, int total_steps, double warmup, double lr) {
  const int warm = std::max<int>(1, static_cast<int>(std::llround(warmup * total_steps)));
  if (step <= warm) return lr * step / warm;
  if (total_steps <= warm) return 0.0;
  return lr * (total_steps - step) / static_cast<double>(total_steps - warm);
}

namespace {

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Grads m, v;
  int t = 0;

  explicit Adam(const ParamRegistry& reg) : m(reg.make_grads()), v(reg.make_grads()) {}

  void step(const std::vector<Param*>& params, const Grads& g, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (size_t p = 0; p < params.size(); ++p) {
      Mat& w = params[p]->w;
      for (size_t i = 0; i < w.a.size(); ++i) {
        const double grad = g[p].a[i];
        m[p].a[i] = beta1 * m[p].a[i] + (1.0 - beta1) * grad;
        v[p].a[i] = beta2 * v[p].a[i] + (1.0 - beta2) * grad * grad;
        const double mhat = m[p].a[i] / bc1;
        const double vhat = v[p].a[i] / bc2;
        w.a[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

void apply_slot_value_dropout(TrainExample& ex, double rate, const Vocab& vocab,
                              std::mt19937_64& rng) {
  const int unk = vocab.unk_id();
  for (const auto& [s, e] : ex.span) {
    if (s < 0) continue;
    for (int k = s; k <= e && k < ex.input.size(); ++k)
      if (rand_u01(rng) < rate) ex.input.ids[k] = unk;
  }
}

}  // namespace

std::vector<std::vector<DialogState>> run_model_tracking(const Model& model, const Corpus& corpus,
                                                         const Tokenizer& tok,
                                                         const PrepInfo& prep,
                                                         PredictionsFile* decisions) {
  const Ontology& ont = model.ontology();
  const int nd = static_cast<int>(corpus.dialogs.size());
  std::vector<std::vector<DialogState>> all_states(nd);
  std::vector<std::vector<TurnDecisions>> all_decisions(nd);
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (int di = 0; di < nd; ++di) {
    try {
      const Dialog& dialog = corpus.dialogs[di];
      DialogState ds;
      for (size_t t = 0; t < dialog.turns.size(); ++t) {
        const DialogTurn& turn = dialog.turns[t];
        const EncoderInput input = build_input(turn, history_for_turn(dialog, t, prep.no_history),
                                               tok, prep.max_len, prep.mask_history);
        const AuxFeatures aux = aux_features(InformMemory::from_turn(turn), ds, ont);
        const PredictionBundle bundle = model.predict(input, aux);
        // Route the update through the argmax decisions so that replaying a
        // stored predictions file reproduces these states byte for byte.
        TurnDecisions dec = decide(bundle, input, ont, dialog.id, turn.turn_index);
        const PredictionBundle onehot = bundle_from_decisions(dec, ont, input.size());
        ds = apply_turn(ds, turn, onehot, input, ont);
        all_states[di].push_back(ds);
        if (decisions) all_decisions[di].push_back(std::move(dec));
      }
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error(error);
  if (decisions)
    for (auto& d : all_decisions)
      for (auto& row : d) decisions->turns.push_back(std::move(row));
  return all_states;
}

TrainResult train_model(Model& model, const Corpus& train, const Corpus& dev,
                        const TrainConfig& cfg, const Tokenizer& tok) {
  cfg.validate();
  if (train.dialogs.empty()) throw std::runtime_error("train: train split is empty");
  if (dev.dialogs.empty()) throw std::runtime_error("train: dev split is empty");
  const PrepInfo prep = cfg.prep();
  check_prepared(train, prep, "train");
  check_prepared(dev, prep, "dev");
  const Ontology& ont = model.ontology();

  LossWeights weights{cfg.loss_gate, cfg.loss_span, cfg.loss_refer};
  bool any_refer = false;
  for (const auto& d : train.dialogs)
    for (const auto& t : d.turns)
      if (t.gold)
        for (const auto& [slot, gate] : t.gold->gate)
          if (gate == "refer") any_refer = true;
  // Without refer supervision the refer loss is dropped and its weight
  // moves to the span loss, unless the config already departs from the
  // default split.
  if (!any_refer && cfg.loss_gate == 0.8 && cfg.loss_span == 0.1 && cfg.loss_refer == 0.1)
    weights = {0.8, 0.2, 0.0};

  const std::vector<TrainExample> examples = make_examples(train, ont, tok, prep);
  if (examples.empty()) throw std::runtime_error("train: train split has no turns");

  model.init_params(cfg.seed);
  Adam adam(model.registry());
  const int batches_per_epoch =
      static_cast<int>((examples.size() + cfg.batch_size - 1) / cfg.batch_size);
  const int total_steps = cfg.epochs * batches_per_epoch;

  std::mt19937_64 shuffle_rng(splitmix64(cfg.seed ^ 0x5075ULL));
  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Grads> buffers;
  for (int b = 0; b < cfg.batch_size; ++b) buffers.push_back(model.registry().make_grads());
  Grads total = model.registry().make_grads();

  TrainResult result;
  result.weights = weights;
  std::vector<Mat> best_params;
  int since_best = 0;
  int step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates on the portable uniform helper.
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rand_u01(shuffle_rng) * i) % i;
      std::swap(order[i - 1], order[j]);
    }
    for (size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const int bn = static_cast<int>(std::min<size_t>(cfg.batch_size, order.size() - begin));
      ++step;
      const double lr = lr_at(step, total_steps, cfg.warmup, cfg.lr);
#pragma omp parallel for schedule(static)
      for (int k = 0; k < bn; ++k) {
        ParamRegistry::zero(buffers[k]);
        const size_t idx = order[begin + k];
        // Seeded per (run, epoch, example) so results do not depend on the
        // parallel schedule.
        std::mt19937_64 turn_rng(
            splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(epoch) << 32 ^ idx)));
        if (cfg.slot_value_dropout > 0.0) {
          TrainExample ex = examples[idx];
          apply_slot_value_dropout(ex, cfg.slot_value_dropout, model.vocab(), turn_rng);
          model.forward_backward(ex, weights, buffers[k], &turn_rng);
        } else {
          model.forward_backward(examples[idx], weights, buffers[k], &turn_rng);
        }
      }
      // Deterministic reduction: per-turn buffers summed in batch order.
      ParamRegistry::zero(total);
      for (int k = 0; k < bn; ++k)
        for (size_t p = 0; p < total.size(); ++p)
          for (size_t i = 0; i < total[p].a.size(); ++i) total[p].a[i] += buffers[k][p].a[i];
      const double inv = 1.0 / bn;
      for (auto& m : total)
        for (auto& v : m.a) v *= inv;
      adam.step(model.params(), total, lr);
    }

    const auto dev_states = run_model_tracking(model, dev, tok, prep, nullptr);
    const double jga = joint_goal_accuracy(dev_states, dev, model.ontology());
    result.dev_jga_history.push_back(jga);
    if (best_params.empty() || jga > result.best_dev_jga) {
      result.best_dev_jga = jga;
      result.best_epoch = epoch;
      best_params.clear();
      for (const Param* p : model.params()) best_params.push_back(p->w);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.steps = step;
  if (!best_params.empty()) {
    const auto& params = model.params();
    for (size_t i = 0; i < params.size(); ++i) params[i]->w = best_params[i];
  }
  return result;
}

double grad_check(Model& model, const TrainExample& ex, const LossWeights& w, double eps,
                  bool use_dropout) {
  if (use_dropout)
    throw std::runtime_error("grad_check: dropout must be disabled (eval mode required)");
  if (eps < 1e-6 || eps > 1e-3)
    throw std::runtime_error("grad_check: eps must lie in [1e-6, 1e-3]");

  Grads grads = model.registry().make_grads();
  const double loss0 = model.forward_backward(ex, w, grads, nullptr);
  if (!std::isfinite(loss0)) throw std::runtime_error("grad_check: loss is not finite");

  const auto& params = model.params();
  const int per_tensor =
      std::max<int>(1, static_cast<int>((200 + params.size() - 1) / params.size()));
  std::mt19937_64 rng(0xC0FFEEULL);
  double max_rel = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Mat& w_mat = params[p]->w;
    for (int s = 0; s < per_tensor; ++s) {
      const size_t i = static_cast<size_t>(rand_u01(rng) * w_mat.a.size()) % w_mat.a.size();
      const double saved = w_mat.a[i];
      w_mat.a[i] = saved + eps;
      const double lp = model.forward_loss(ex, w);
      w_mat.a[i] = saved - eps;
      const double lm = model.forward_loss(ex, w);
      w_mat.a[i] = saved;
      const double gn = (lp - lm) / (2.0 * eps);
      const double ga = grads[p].a[i];
      const double rel = std::abs(ga - gn) / std::max({std::abs(ga), std::abs(gn), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace copydst
