#pragma once

#include <random>
#include <vector>

#include "copydst/corpus.hpp"
#include "copydst/mat.hpp"
#include "copydst/params.hpp"

namespace copydst {

// Desk-scale stand-in for the pretrained context encoder: learned token and
// segment-role embeddings, fixed sinusoidal positions, a small stack of
// post-norm self-attention blocks, and a tanh pooler over the first
// position. Trained from scratch together with the heads.
struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_len = 180;
  double dropout = 0.3;  // on the encoder outputs only, train mode only
};

// pooled: 1 x d representation of the whole turn; token_reps: one row per
// input token.
struct EncoderOutput {
  Mat pooled;
  Mat token_reps;
};

struct EncoderCache {
  std::vector<int> ids;
  std::vector<int> roles;
  Mat x0;
  struct Layer {
    Mat q, k, v;
    std::vector<Mat> att;  // per head, rows softmaxed
    Mat ctx;
    Mat a1, x1hat, x1;
    std::vector<double> ln1_rstd;
    Mat f_pre, f_act;
    Mat a2, x2hat, x2;
    std::vector<double> ln2_rstd;
  };
  std::vector<Layer> layers;
  Mat pool_pre;   // 1 x d, before tanh
  Mat pool_tanh;  // 1 x d
  Mat drop_tok;   // dropout factors, train mode
  Mat drop_pool;
  bool train = false;
};

class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, ParamRegistry& reg);

  void init_params(std::mt19937_64& rng);

  // Deterministic given parameters, input and (in train mode) the dropout
  // rng state. Unknown role/token ids are the caller's bug, not handled.
  EncoderOutput forward(const std::vector<int>& ids, const std::vector<int>& roles, bool train,
                        std::mt19937_64* dropout_rng, EncoderCache* cache) const;

  // Accumulates parameter gradients into g; d_tokens/d_pooled are gradients
  // w.r.t. the (dropout-applied) outputs.
  void backward(const EncoderCache& cache, const Mat& d_tokens, const Mat& d_pooled,
                Grads& g) const;

  const EncoderConfig& config() const { return cfg_; }

  static int role_index(Role r) { return static_cast<int>(r); }
  static constexpr int kNumRoles = 5;

 private:
  EncoderConfig cfg_;
  Param tok_emb_;   // V x d
  Param role_emb_;  // 5 x d
  struct Layer {
    Param wq, bq, wk, bk, wv, bv, wo, bo;
    Param ln1_g, ln1_b;
    Param w1, b1, w2, b2;
    Param ln2_g, ln2_b;
  };
  std::vector<Layer> layers_;
  Param pool_w_, pool_b_;
  Mat pos_;  // max_len x d, fixed sinusoidal table
};

}  // namespace copydst
