#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "copydst/corpus.hpp"
#include "copydst/encoder.hpp"
#include "copydst/ontology.hpp"
#include "copydst/params.hpp"
#include "copydst/predictions.hpp"
#include "copydst/tokenizer.hpp"
#include "copydst/tracker.hpp"

namespace copydst {

struct LossWeights {
  double gate = 0.8;
  double span = 0.1;
  double refer = 0.1;
};

struct ModelConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_len = 180;
  double dropout = 0.3;
  bool no_aux = false;       // ablation: gate/refer heads read the pooled vector only
  bool single_copy = false;  // ablation: gates restricted to none/dontcare/span at inference
};

// One supervised turn. Gate targets cover every slot (class index in the
// slot's own gate space); span/refer targets are -1 for slots not labeled
// span/refer, which masks their loss terms entirely.
struct TrainExample {
  std::string dialog_id;
  int turn = 0;
  EncoderInput input;
  AuxFeatures aux;
  std::vector<int> gate;
  std::vector<std::pair<int, int>> span;
  std::vector<int> refer;
};

// Encoder plus the per-slot classification heads. Gates and refer heads
// consume the pooled representation concatenated with the two auxiliary
// vectors; span heads consume the token representations only.
class Model {
 public:
  Model(const ModelConfig& cfg, const Ontology& ont, const Vocab& vocab);

  void init_params(std::uint64_t seed);

  // Full prediction bundle, eval mode.
  PredictionBundle predict(const EncoderInput& input, const AuxFeatures& aux) const;

  // Joint loss and gradient accumulation for one turn. grads must be
  // aligned with params(); safe to call concurrently with distinct grad
  // buffers. dropout_rng enables output dropout (train mode) when non-null.
  double forward_backward(const TrainExample& ex, const LossWeights& w, Grads& grads,
                          std::mt19937_64* dropout_rng) const;

  // Loss only, eval mode; the independent path grad_check differentiates.
  double forward_loss(const TrainExample& ex, const LossWeights& w) const;

  const std::vector<Param*>& params() const { return reg_.all(); }
  const ParamRegistry& registry() const { return reg_; }
  const ModelConfig& config() const { return cfg_; }
  const Ontology& ontology() const { return ont_; }
  const Vocab& vocab() const { return vocab_; }

  // Prediction provider running this model, deriving aux features from the
  // tracked pre-turn state and the turn's informs.
  PredictionProvider provider() const;

  void save_checkpoint(const std::string& path, const std::string& config_json) const;
  struct Loaded {
    std::unique_ptr<Model> model;
    std::string config_json;
  };
  static Loaded load_checkpoint(const std::string& path, const Ontology& ont);

 private:
  struct SlotHeads {
    bool boolean = false;
    Param gate_w, gate_b;
    Param span_w, span_b;
    Param refer_w, refer_b;
  };

  int fused_dim() const;
  std::vector<double> fused_input(const Mat& pooled, const AuxFeatures& aux) const;

  ModelConfig cfg_;
  Ontology ont_;
  Vocab vocab_;
  ParamRegistry reg_;
  std::unique_ptr<Encoder> encoder_;
  std::vector<SlotHeads> heads_;
};

// Total loss over distributions: weighted sum of the gate cross entropy
// (mean over slots), the span cross entropy (mean over span-labeled slots,
// start and end averaged), and the refer cross entropy (mean over
// refer-labeled slots). Missing gate targets are an error.
double joint_loss(const PredictionBundle& preds, const TrainExample& gold, const LossWeights& w);

}  // namespace copydst
