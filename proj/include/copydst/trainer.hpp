#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "copydst/corpus.hpp"
#include "copydst/model.hpp"
#include "copydst/ontology.hpp"
#include "copydst/predictions.hpp"
#include "copydst/tokenizer.hpp"

namespace copydst {

struct TrainConfig {
  double loss_gate = 0.8;
  double loss_span = 0.1;
  double loss_refer = 0.1;
  double lr = 1e-3;       // from-scratch toy scale; the paper's fine-tuning rate is far smaller
  double warmup = 0.1;    // proportion of total steps, then linear decay to zero
  double dropout = 0.3;
  double slot_value_dropout = 0.0;
  int max_len = 180;
  int epochs = 20;
  int batch_size = 16;
  int patience = 5;  // early stopping on dev joint goal accuracy
  std::uint64_t seed = 42;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  // ablation switches
  bool mask_history = true;
  bool no_history = false;
  bool no_aux = false;
  bool single_copy = false;

  void validate() const;
  PrepInfo prep() const { return {max_len, mask_history, no_history}; }
  ModelConfig model_config() const;
  std::string to_json() const;
  static TrainConfig from_json_text(const std::string& text);
  static TrainConfig load(const std::string& path);
};

// Teacher-forced per-turn examples: aux features come from the turn's
// informs and the previous turn's gold state. The corpus must be prepared.
std::vector<TrainExample> make_examples(const Corpus& corpus, const Ontology& ont,
                                        const Tokenizer& tok, const PrepInfo& prep);

// Span-only ablation: inform/refer gold gates are relabeled as span when
// the value occurs in a user utterance and dropped to none otherwise.
void collapse_single_copy(Corpus& corpus, const Ontology& ont, const Tokenizer& tok,
                          const PrepInfo& prep);

// Peak cfg.lr at the end of warmup, linear decay to zero afterwards.
double lr_at(int step, int total_steps, double warmup, double lr);

struct TrainResult {
  int best_epoch = 0;
  double best_dev_jga = 0.0;
  std::vector<double> dev_jga_history;
  int steps = 0;
  LossWeights weights;
};

// Adam over the joint loss with warmup/decay schedule, per-epoch dev JGA
// early stopping, deterministic per-turn gradient reduction. The model must
// be constructed with cfg.model_config(); parameters are (re)initialized
// from cfg.seed.
TrainResult train_model(Model& model, const Corpus& train, const Corpus& dev,
                        const TrainConfig& cfg, const Tokenizer& tok);

// Tracks every dialog with the model provider; optionally records argmax
// decisions. Returns per-dialog per-turn states aligned with corpus.dialogs.
std::vector<std::vector<DialogState>> run_model_tracking(const Model& model, const Corpus& corpus,
                                                         const Tokenizer& tok,
                                                         const PrepInfo& prep,
                                                         PredictionsFile* decisions);

// Max relative error between analytic gradients and central finite
// differences over >= 200 sampled parameters covering every tensor.
// Dropout must be off; eps must lie in [1e-6, 1e-3].
double grad_check(Model& model, const TrainExample& ex, const LossWeights& w, double eps,
                  bool use_dropout = false);

}  // namespace copydst
