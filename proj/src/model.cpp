#include "copydst/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "copydst/kernels.hpp"

namespace copydst {

using ordered_json = nlohmann::ordered_json;

namespace {

double log_sum_exp(const double* z, int n) {
  double mx = z[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(z[i] - mx);
  return mx + std::log(sum);
}

std::vector<double> softmax_vec(const double* z, int n) {
  double mx = z[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
  double sum = 0.0;
  std::vector<double> p(n);
  for (int i = 0; i < n; ++i) {
    p[i] = std::exp(z[i] - mx);
    sum += p[i];
  }
  for (int i = 0; i < n; ++i) p[i] /= sum;
  return p;
}

std::vector<int> role_ints(const EncoderInput& input) {
  std::vector<int> roles(input.roles.size());
  for (size_t i = 0; i < input.roles.size(); ++i)
    roles[i] = Encoder::role_index(input.roles[i]);
  return roles;
}

}  // namespace

Model::Model(const ModelConfig& cfg, const Ontology& ont, const Vocab& vocab)
    : cfg_(cfg), ont_(ont), vocab_(vocab) {
  EncoderConfig ec;
  ec.vocab_size = vocab_.size();
  ec.d_model = cfg_.d_model;
  ec.n_layers = cfg_.n_layers;
  ec.n_heads = cfg_.n_heads;
  ec.d_ff = cfg_.d_ff;
  ec.max_len = cfg_.max_len;
  ec.dropout = cfg_.dropout;
  encoder_ = std::make_unique<Encoder>(ec, reg_);

  const int n = ont_.num_slots();
  const int fused = fused_dim();
  heads_.resize(n);
  for (int i = 0; i < n; ++i) {
    const SlotDef& def = ont_.slot(i);
    SlotHeads& h = heads_[i];
    h.boolean = def.is_boolean;
    const std::string p = "head." + def.slot_id + ".";
    if (def.is_boolean) {
      reg_.add(&h.gate_w, p + "bgate_w", kBoolGateClasses, fused);
      reg_.add(&h.gate_b, p + "bgate_b", 1, kBoolGateClasses);
      continue;
    }
    reg_.add(&h.gate_w, p + "gate_w", kGateClasses, fused);
    reg_.add(&h.gate_b, p + "gate_b", 1, kGateClasses);
    reg_.add(&h.span_w, p + "span_w", 2, cfg_.d_model);
    reg_.add(&h.span_b, p + "span_b", 1, 2);
    reg_.add(&h.refer_w, p + "refer_w", n + 1, fused);
    reg_.add(&h.refer_b, p + "refer_b", 1, n + 1);
  }
}

int Model::fused_dim() const {
  return cfg_.d_model + (cfg_.no_aux ? 0 : 2 * ont_.num_slots());
}

void Model::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  encoder_->init_params(rng);
  constexpr double kStd = 0.05;
  for (auto& h : heads_) {
    init_normal(h.gate_w.w, rng, kStd);
    if (!h.boolean) {
      init_normal(h.span_w.w, rng, kStd);
      init_normal(h.refer_w.w, rng, kStd);
    }
  }
}

std::vector<double> Model::fused_input(const Mat& pooled, const AuxFeatures& aux) const {
  const int d = cfg_.d_model;
  std::vector<double> fused(fused_dim());
  for (int j = 0; j < d; ++j) fused[j] = pooled(0, j);
  if (!cfg_.no_aux) {
    const int n = ont_.num_slots();
    if (static_cast<int>(aux.inform_vec.size()) != n ||
        static_cast<int>(aux.ds_vec.size()) != n)
      throw std::runtime_error("model: aux feature vectors must have one entry per slot");
    for (int j = 0; j < n; ++j) fused[d + j] = aux.inform_vec[j];
    for (int j = 0; j < n; ++j) fused[d + n + j] = aux.ds_vec[j];
  }
  return fused;
}

PredictionBundle Model::predict(const EncoderInput& input, const AuxFeatures& aux) const {
  EncoderCache cache;
  const EncoderOutput out =
      encoder_->forward(input.ids, role_ints(input), /*train=*/false, nullptr, &cache);
  const std::vector<double> fused = fused_input(out.pooled, aux);
  Mat fusedM(1, static_cast<int>(fused.size()));
  fusedM.a = fused;

  const int n = ont_.num_slots();
  const int L = input.size();
  PredictionBundle bundle;
  bundle.slots.resize(n);
  for (int i = 0; i < n; ++i) {
    const SlotHeads& h = heads_[i];
    SlotPrediction& p = bundle.slots[i];
    Mat gz(1, h.gate_w.w.rows);
    kern::matmul_nt(fusedM, h.gate_w.w, gz);
    kern::add_row(gz, h.gate_b.w);
    if (cfg_.single_copy && !h.boolean) {
      // Span-only mode: the copy-mechanism classes are never decoded.
      constexpr double kNegInf = -1e30;
      gz(0, static_cast<int>(GateClass::inform)) = kNegInf;
      gz(0, static_cast<int>(GateClass::refer)) = kNegInf;
    }
    p.gate = softmax_vec(gz.row(0), gz.cols);
    if (h.boolean) continue;

    Mat sz(L, 2);
    kern::matmul_nt(out.token_reps, h.span_w.w, sz);
    kern::add_row(sz, h.span_b.w);
    std::vector<double> alpha(L), beta(L);
    for (int k = 0; k < L; ++k) {
      alpha[k] = sz(k, 0);
      beta[k] = sz(k, 1);
    }
    p.start = softmax_vec(alpha.data(), L);
    p.end = softmax_vec(beta.data(), L);

    Mat rz(1, n + 1);
    kern::matmul_nt(fusedM, h.refer_w.w, rz);
    kern::add_row(rz, h.refer_b.w);
    p.refer = softmax_vec(rz.row(0), n + 1);
  }
  return bundle;
}

double Model::forward_backward(const TrainExample& ex, const LossWeights& w, Grads& grads,
                               std::mt19937_64* dropout_rng) const {
  const int n = ont_.num_slots();
  const int d = cfg_.d_model;
  const int L = ex.input.size();
  if (static_cast<int>(ex.gate.size()) != n)
    throw std::runtime_error("model: gold gate targets must cover every slot");

  EncoderCache cache;
  const EncoderOutput out = encoder_->forward(ex.input.ids, role_ints(ex.input),
                                              dropout_rng != nullptr, dropout_rng, &cache);
  const std::vector<double> fused = fused_input(out.pooled, ex.aux);
  Mat fusedM(1, static_cast<int>(fused.size()));
  fusedM.a = fused;

  int n_span = 0, n_refer = 0;
  for (int i = 0; i < n; ++i) {
    if (ex.span[i].first >= 0) ++n_span;
    if (ex.refer[i] >= 0) ++n_refer;
  }

  double loss = 0.0;
  Mat dfused(1, fusedM.cols);
  Mat dtok(L, d);

  for (int i = 0; i < n; ++i) {
    const SlotHeads& h = heads_[i];
    const int target = ex.gate[i];
    const int classes = h.gate_w.w.rows;
    if (target < 0 || target >= classes)
      throw std::runtime_error("model: gold gate class missing for slot '" +
                               ont_.slot(i).slot_id + "'");
    Mat gz(1, classes);
    kern::matmul_nt(fusedM, h.gate_w.w, gz);
    kern::add_row(gz, h.gate_b.w);
    loss += w.gate / n * (log_sum_exp(gz.row(0), classes) - gz(0, target));
    std::vector<double> p = softmax_vec(gz.row(0), classes);
    Mat dz(1, classes);
    for (int c = 0; c < classes; ++c)
      dz(0, c) = w.gate / n * (p[c] - (c == target ? 1.0 : 0.0));
    kern::matmul_tn(dz, fusedM, grads[h.gate_w.idx], true);
    kern::col_sum(dz, grads[h.gate_b.idx]);
    kern::matmul_nn(dz, h.gate_w.w, dfused, true);

    if (h.boolean) continue;

    if (ex.span[i].first >= 0) {
      Mat sz(L, 2);
      kern::matmul_nt(out.token_reps, h.span_w.w, sz);
      kern::add_row(sz, h.span_b.w);
      std::vector<double> alpha(L), beta(L);
      for (int k = 0; k < L; ++k) {
        alpha[k] = sz(k, 0);
        beta[k] = sz(k, 1);
      }
      const int s = ex.span[i].first, e = ex.span[i].second;
      if (s >= L || e >= L)
        throw std::runtime_error("model: span target outside input for slot '" +
                                 ont_.slot(i).slot_id + "'");
      const double factor = w.span / (2.0 * n_span);
      loss += factor * (log_sum_exp(alpha.data(), L) - alpha[s]);
      loss += factor * (log_sum_exp(beta.data(), L) - beta[e]);
      const std::vector<double> ps = softmax_vec(alpha.data(), L);
      const std::vector<double> pe = softmax_vec(beta.data(), L);
      Mat dsz(L, 2);
      for (int k = 0; k < L; ++k) {
        dsz(k, 0) = factor * (ps[k] - (k == s ? 1.0 : 0.0));
        dsz(k, 1) = factor * (pe[k] - (k == e ? 1.0 : 0.0));
      }
      kern::matmul_tn(dsz, out.token_reps, grads[h.span_w.idx], true);
      kern::col_sum(dsz, grads[h.span_b.idx]);
      kern::matmul_nn(dsz, h.span_w.w, dtok, true);
    }

    if (ex.refer[i] >= 0) {
      const int classes_r = n + 1;
      const int rt = ex.refer[i];
      if (rt >= classes_r)
        throw std::runtime_error("model: refer target out of range for slot '" +
                                 ont_.slot(i).slot_id + "'");
      Mat rz(1, classes_r);
      kern::matmul_nt(fusedM, h.refer_w.w, rz);
      kern::add_row(rz, h.refer_b.w);
      const double factor = w.refer / n_refer;
      loss += factor * (log_sum_exp(rz.row(0), classes_r) - rz(0, rt));
      std::vector<double> pr = softmax_vec(rz.row(0), classes_r);
      Mat drz(1, classes_r);
      for (int c = 0; c < classes_r; ++c)
        drz(0, c) = factor * (pr[c] - (c == rt ? 1.0 : 0.0));
      kern::matmul_tn(drz, fusedM, grads[h.refer_w.idx], true);
      kern::col_sum(drz, grads[h.refer_b.idx]);
      kern::matmul_nn(drz, h.refer_w.w, dfused, true);
    }
  }

  Mat dpooled(1, d);
  for (int j = 0; j < d; ++j) dpooled(0, j) = dfused(0, j);
  encoder_->backward(cache, dtok, dpooled, grads);
  return loss;
}

double Model::forward_loss(const TrainExample& ex, const LossWeights& w) const {
  const AuxFeatures& aux = ex.aux;
  EncoderCache cache;
  const EncoderOutput out =
      encoder_->forward(ex.input.ids, role_ints(ex.input), false, nullptr, &cache);
  const std::vector<double> fused = fused_input(out.pooled, aux);
  Mat fusedM(1, static_cast<int>(fused.size()));
  fusedM.a = fused;

  const int n = ont_.num_slots();
  const int L = ex.input.size();
  int n_span = 0, n_refer = 0;
  for (int i = 0; i < n; ++i) {
    if (ex.span[i].first >= 0) ++n_span;
    if (ex.refer[i] >= 0) ++n_refer;
  }
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const SlotHeads& h = heads_[i];
    const int classes = h.gate_w.w.rows;
    const int target = ex.gate[i];
    if (target < 0 || target >= classes)
      throw std::runtime_error("model: gold gate class missing for slot '" +
                               ont_.slot(i).slot_id + "'");
    Mat gz(1, classes);
    kern::matmul_nt(fusedM, h.gate_w.w, gz);
    kern::add_row(gz, h.gate_b.w);
    loss += w.gate / n * (log_sum_exp(gz.row(0), classes) - gz(0, target));
    if (h.boolean) continue;
    if (ex.span[i].first >= 0) {
      Mat sz(L, 2);
      kern::matmul_nt(out.token_reps, h.span_w.w, sz);
      kern::add_row(sz, h.span_b.w);
      std::vector<double> alpha(L), beta(L);
      for (int k = 0; k < L; ++k) {
        alpha[k] = sz(k, 0);
        beta[k] = sz(k, 1);
      }
      const double factor = w.span / (2.0 * n_span);
      loss += factor * (log_sum_exp(alpha.data(), L) - alpha[ex.span[i].first]);
      loss += factor * (log_sum_exp(beta.data(), L) - beta[ex.span[i].second]);
    }
    if (ex.refer[i] >= 0) {
      Mat rz(1, n + 1);
      kern::matmul_nt(fusedM, h.refer_w.w, rz);
      kern::add_row(rz, h.refer_b.w);
      loss += w.refer / n_refer * (log_sum_exp(rz.row(0), n + 1) - rz(0, ex.refer[i]));
    }
  }
  return loss;
}

PredictionProvider Model::provider() const {
  return [this](const DialogTurn& turn, size_t, const EncoderInput& input,
                const DialogState& pre_state) {
    const AuxFeatures aux =
        aux_features(InformMemory::from_turn(turn), pre_state, ont_);
    return predict(input, aux);
  };
}

double joint_loss(const PredictionBundle& preds, const TrainExample& gold, const LossWeights& w) {
  const int n = static_cast<int>(preds.slots.size());
  if (static_cast<int>(gold.gate.size()) != n)
    throw std::runtime_error("joint_loss: gate targets must cover every slot");
  auto nll = [](double p) { return -std::log(std::max(p, 1e-300)); };

  double l_gate = 0.0;
  for (int i = 0; i < n; ++i) {
    const int t = gold.gate[i];
    if (t < 0 || t >= static_cast<int>(preds.slots[i].gate.size()))
      throw std::runtime_error("joint_loss: gold gate class missing for slot index " +
                               std::to_string(i));
    l_gate += nll(preds.slots[i].gate[t]);
  }
  l_gate /= n;

  double l_span = 0.0;
  int n_span = 0;
  double l_refer = 0.0;
  int n_refer = 0;
  for (int i = 0; i < n; ++i) {
    if (gold.span[i].first >= 0) {
      ++n_span;
      l_span += 0.5 * (nll(preds.slots[i].start[gold.span[i].first]) +
                       nll(preds.slots[i].end[gold.span[i].second]));
    }
    if (gold.refer[i] >= 0) {
      ++n_refer;
      l_refer += nll(preds.slots[i].refer[gold.refer[i]]);
    }
  }
  if (n_span) l_span /= n_span;
  if (n_refer) l_refer /= n_refer;
  return w.gate * l_gate + w.span * l_span + w.refer * l_refer;
}

void Model::save_checkpoint(const std::string& path, const std::string& config_json) const {
  ordered_json j;
  j["version"] = 1;
  j["model"] = {{"d_model", cfg_.d_model},   {"n_layers", cfg_.n_layers},
                {"n_heads", cfg_.n_heads},   {"d_ff", cfg_.d_ff},
                {"max_len", cfg_.max_len},   {"dropout", cfg_.dropout},
                {"no_aux", cfg_.no_aux},     {"single_copy", cfg_.single_copy}};
  j["train_config"] = config_json;
  j["vocab"] = vocab_.pieces();
  ordered_json params = ordered_json::object();
  for (const Param* p : reg_.all()) {
    ordered_json jp;
    jp["shape"] = ordered_json::array({p->w.rows, p->w.cols});
    jp["data"] = p->w.a;
    params[p->name] = jp;
  }
  j["params"] = params;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << j.dump() << "\n";
}

Model::Loaded Model::load_checkpoint(const std::string& path, const Ontology& ont) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint '" + path + "': malformed JSON: " + e.what());
  }
  if (j.value("version", 0) != 1)
    throw std::runtime_error("checkpoint '" + path + "': unsupported version");
  ModelConfig cfg;
  const auto& jm = j.at("model");
  cfg.d_model = jm.at("d_model").get<int>();
  cfg.n_layers = jm.at("n_layers").get<int>();
  cfg.n_heads = jm.at("n_heads").get<int>();
  cfg.d_ff = jm.at("d_ff").get<int>();
  cfg.max_len = jm.at("max_len").get<int>();
  cfg.dropout = jm.at("dropout").get<double>();
  cfg.no_aux = jm.at("no_aux").get<bool>();
  cfg.single_copy = jm.value("single_copy", false);
  Vocab vocab = Vocab::from_pieces(j.at("vocab").get<std::vector<std::string>>());

  Loaded loaded;
  loaded.config_json = j.value("train_config", "");
  loaded.model = std::make_unique<Model>(cfg, ont, vocab);
  const auto& params = j.at("params");
  for (Param* p : loaded.model->reg_.all()) {
    if (!params.contains(p->name))
      throw std::runtime_error("checkpoint '" + path + "': missing tensor '" + p->name +
                               "' (ontology mismatch?)");
    const auto& jp = params[p->name];
    const int rows = jp.at("shape")[0].get<int>(), cols = jp.at("shape")[1].get<int>();
    if (rows != p->w.rows || cols != p->w.cols)
      throw std::runtime_error("checkpoint '" + path + "': tensor '" + p->name +
                               "' has shape mismatch (ontology or config mismatch)");
    p->w.a = jp.at("data").get<std::vector<double>>();
    if (p->w.a.size() != static_cast<size_t>(rows) * cols)
      throw std::runtime_error("checkpoint '" + path + "': tensor '" + p->name +
                               "' has wrong element count");
  }
  return loaded;
}

}  // namespace copydst
