#include "copydst/encoder.hpp"

#include <cassert>
#include <cmath>

#include "copydst/kernels.hpp"

namespace copydst {

namespace {

void layernorm_forward(const Mat& x, const Param& gamma, const Param& beta, Mat& xhat, Mat& out,
                       std::vector<double>& rstd) {
  constexpr double kEps = 1e-5;
  const int rows = x.rows, cols = x.cols;
  xhat = Mat(rows, cols);
  out = Mat(rows, cols);
  rstd.assign(rows, 0.0);
  for (int i = 0; i < rows; ++i) {
    const double* xi = x.row(i);
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += xi[j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double dlt = xi[j] - mean;
      var += dlt * dlt;
    }
    var /= cols;
    const double r = 1.0 / std::sqrt(var + kEps);
    rstd[i] = r;
    for (int j = 0; j < cols; ++j) {
      const double h = (xi[j] - mean) * r;
      xhat(i, j) = h;
      out(i, j) = h * gamma.w.a[j] + beta.w.a[j];
    }
  }
}

void layernorm_backward(const Mat& xhat, const std::vector<double>& rstd, const Param& gamma,
                        const Mat& dout, Mat& dx, Mat& dgamma, Mat& dbeta) {
  const int rows = xhat.rows, cols = xhat.cols;
  dx = Mat(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double sum_dh = 0.0, sum_dh_xhat = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double dh = dout(i, j) * gamma.w.a[j];
      sum_dh += dh;
      sum_dh_xhat += dh * xhat(i, j);
      dgamma.a[j] += dout(i, j) * xhat(i, j);
      dbeta.a[j] += dout(i, j);
    }
    const double m1 = sum_dh / cols;
    const double m2 = sum_dh_xhat / cols;
    for (int j = 0; j < cols; ++j) {
      const double dh = dout(i, j) * gamma.w.a[j];
      dx(i, j) = rstd[i] * (dh - m1 - xhat(i, j) * m2);
    }
  }
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

double gelu_grad(double x) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Mat col_block(const Mat& m, int col0, int width) {
  Mat out(m.rows, width);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < width; ++j) out(i, j) = m(i, col0 + j);
  return out;
}

void set_col_block(Mat& dst, const Mat& block, int col0) {
  for (int i = 0; i < block.rows; ++i)
    for (int j = 0; j < block.cols; ++j) dst(i, col0 + j) = block(i, j);
}

// Linear layer y = x * W^T + b with weight stored as (out x in).
void linear_forward(const Mat& x, const Param& w, const Param& b, Mat& out) {
  out = Mat(x.rows, w.w.rows);
  kern::matmul_nt(x, w.w, out);
  kern::add_row(out, b.w);
}

void linear_backward(const Mat& x, const Param& w, const Param& b, const Mat& dout, Mat& dx,
                     Grads& g, bool accumulate_dx = false) {
  kern::matmul_tn(dout, x, g[w.idx], /*accumulate=*/true);
  kern::col_sum(dout, g[b.idx]);
  if (!accumulate_dx) dx = Mat(dout.rows, w.w.cols);
  kern::matmul_nn(dout, w.w, dx, accumulate_dx);
}

double rand_u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

Encoder::Encoder(const EncoderConfig& cfg, ParamRegistry& reg) : cfg_(cfg) {
  assert(cfg_.d_model % cfg_.n_heads == 0);
  reg.add(&tok_emb_, "encoder.tok_emb", cfg_.vocab_size, cfg_.d_model);
  reg.add(&role_emb_, "encoder.role_emb", kNumRoles, cfg_.d_model);
  layers_.resize(cfg_.n_layers);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    Layer& ly = layers_[l];
    reg.add(&ly.wq, p + "wq", cfg_.d_model, cfg_.d_model);
    reg.add(&ly.bq, p + "bq", 1, cfg_.d_model);
    reg.add(&ly.wk, p + "wk", cfg_.d_model, cfg_.d_model);
    reg.add(&ly.bk, p + "bk", 1, cfg_.d_model);
    reg.add(&ly.wv, p + "wv", cfg_.d_model, cfg_.d_model);
    reg.add(&ly.bv, p + "bv", 1, cfg_.d_model);
    reg.add(&ly.wo, p + "wo", cfg_.d_model, cfg_.d_model);
    reg.add(&ly.bo, p + "bo", 1, cfg_.d_model);
    reg.add(&ly.ln1_g, p + "ln1_g", 1, cfg_.d_model);
    reg.add(&ly.ln1_b, p + "ln1_b", 1, cfg_.d_model);
    reg.add(&ly.w1, p + "w1", cfg_.d_ff, cfg_.d_model);
    reg.add(&ly.b1, p + "b1", 1, cfg_.d_ff);
    reg.add(&ly.w2, p + "w2", cfg_.d_model, cfg_.d_ff);
    reg.add(&ly.b2, p + "b2", 1, cfg_.d_model);
    reg.add(&ly.ln2_g, p + "ln2_g", 1, cfg_.d_model);
    reg.add(&ly.ln2_b, p + "ln2_b", 1, cfg_.d_model);
  }
  reg.add(&pool_w_, "encoder.pool_w", cfg_.d_model, cfg_.d_model);
  reg.add(&pool_b_, "encoder.pool_b", 1, cfg_.d_model);

  pos_ = Mat(cfg_.max_len, cfg_.d_model);
  for (int i = 0; i < cfg_.max_len; ++i) {
    for (int k = 0; 2 * k < cfg_.d_model; ++k) {
      const double omega = std::pow(10000.0, -2.0 * k / cfg_.d_model);
      pos_(i, 2 * k) = std::sin(i * omega);
      if (2 * k + 1 < cfg_.d_model) pos_(i, 2 * k + 1) = std::cos(i * omega);
    }
  }
}

void Encoder::init_params(std::mt19937_64& rng) {
  constexpr double kEmbStd = 0.02;
  constexpr double kLinStd = 0.05;
  init_normal(tok_emb_.w, rng, kEmbStd);
  init_normal(role_emb_.w, rng, kEmbStd);
  for (auto& ly : layers_) {
    init_normal(ly.wq.w, rng, kLinStd);
    init_normal(ly.wk.w, rng, kLinStd);
    init_normal(ly.wv.w, rng, kLinStd);
    init_normal(ly.wo.w, rng, kLinStd);
    init_normal(ly.w1.w, rng, kLinStd);
    init_normal(ly.w2.w, rng, kLinStd);
    for (auto& v : ly.ln1_g.w.a) v = 1.0;
    for (auto& v : ly.ln2_g.w.a) v = 1.0;
  }
  init_normal(pool_w_.w, rng, kLinStd);
}

EncoderOutput Encoder::forward(const std::vector<int>& ids, const std::vector<int>& roles,
                               bool train, std::mt19937_64* dropout_rng,
                               EncoderCache* cache) const {
  const int L = static_cast<int>(ids.size());
  assert(L >= 1 && L <= cfg_.max_len && roles.size() == ids.size());
  const int d = cfg_.d_model;
  const int H = cfg_.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  cache->ids = ids;
  cache->roles = roles;
  cache->train = train && cfg_.dropout > 0.0;
  cache->layers.assign(cfg_.n_layers, {});

  Mat x(L, d);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < d; ++j)
      x(i, j) = tok_emb_.w(ids[i], j) + role_emb_.w(roles[i], j) + pos_(i, j);
  cache->x0 = x;

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const Layer& ly = layers_[l];
    EncoderCache::Layer& lc = cache->layers[l];
    linear_forward(x, ly.wq, ly.bq, lc.q);
    linear_forward(x, ly.wk, ly.bk, lc.k);
    linear_forward(x, ly.wv, ly.bv, lc.v);
    lc.ctx = Mat(L, d);
    lc.att.resize(H);
    for (int h = 0; h < H; ++h) {
      const Mat qh = col_block(lc.q, h * dh, dh);
      const Mat kh = col_block(lc.k, h * dh, dh);
      const Mat vh = col_block(lc.v, h * dh, dh);
      Mat s(L, L);
      kern::matmul_nt(qh, kh, s);
      for (auto& v : s.a) v *= scale;
      kern::softmax_rows(s);
      lc.att[h] = s;
      Mat ctxh(L, dh);
      kern::matmul_nn(s, vh, ctxh);
      set_col_block(lc.ctx, ctxh, h * dh);
    }
    Mat attn;
    linear_forward(lc.ctx, ly.wo, ly.bo, attn);
    lc.a1 = x;
    for (size_t i = 0; i < lc.a1.a.size(); ++i) lc.a1.a[i] += attn.a[i];
    layernorm_forward(lc.a1, ly.ln1_g, ly.ln1_b, lc.x1hat, lc.x1, lc.ln1_rstd);

    linear_forward(lc.x1, ly.w1, ly.b1, lc.f_pre);
    lc.f_act = lc.f_pre;
    for (auto& v : lc.f_act.a) v = gelu(v);
    Mat f_out;
    linear_forward(lc.f_act, ly.w2, ly.b2, f_out);
    lc.a2 = lc.x1;
    for (size_t i = 0; i < lc.a2.a.size(); ++i) lc.a2.a[i] += f_out.a[i];
    layernorm_forward(lc.a2, ly.ln2_g, ly.ln2_b, lc.x2hat, lc.x2, lc.ln2_rstd);
    x = lc.x2;
  }

  Mat xrow0(1, d);
  for (int j = 0; j < d; ++j) xrow0(0, j) = x(0, j);
  linear_forward(xrow0, pool_w_, pool_b_, cache->pool_pre);
  cache->pool_tanh = cache->pool_pre;
  for (auto& v : cache->pool_tanh.a) v = std::tanh(v);

  EncoderOutput out;
  out.token_reps = x;
  out.pooled = cache->pool_tanh;
  if (cache->train) {
    const double keep = 1.0 - cfg_.dropout;
    const double factor = 1.0 / keep;
    cache->drop_tok = Mat(L, d);
    for (auto& v : cache->drop_tok.a) v = rand_u01(*dropout_rng) < keep ? factor : 0.0;
    cache->drop_pool = Mat(1, d);
    for (auto& v : cache->drop_pool.a) v = rand_u01(*dropout_rng) < keep ? factor : 0.0;
    for (size_t i = 0; i < out.token_reps.a.size(); ++i)
      out.token_reps.a[i] *= cache->drop_tok.a[i];
    for (size_t i = 0; i < out.pooled.a.size(); ++i) out.pooled.a[i] *= cache->drop_pool.a[i];
  }
  return out;
}

void Encoder::backward(const EncoderCache& cache, const Mat& d_tokens, const Mat& d_pooled,
                       Grads& g) const {
  const int L = d_tokens.rows;
  const int d = cfg_.d_model;
  const int H = cfg_.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dx = d_tokens;
  Mat dpool = d_pooled;
  if (cache.train) {
    for (size_t i = 0; i < dx.a.size(); ++i) dx.a[i] *= cache.drop_tok.a[i];
    for (size_t i = 0; i < dpool.a.size(); ++i) dpool.a[i] *= cache.drop_pool.a[i];
  }

  // Pooler: tanh(W x[0] + b).
  Mat dpre(1, d);
  for (int j = 0; j < d; ++j) {
    const double t = cache.pool_tanh(0, j);
    dpre(0, j) = dpool(0, j) * (1.0 - t * t);
  }
  const Mat& xfinal = cfg_.n_layers > 0 ? cache.layers.back().x2 : cache.x0;
  Mat xrow0(1, d);
  for (int j = 0; j < d; ++j) xrow0(0, j) = xfinal(0, j);
  Mat dxrow0;
  linear_backward(xrow0, pool_w_, pool_b_, dpre, dxrow0, g);
  for (int j = 0; j < d; ++j) dx(0, j) += dxrow0(0, j);

  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    const Layer& ly = layers_[l];
    const EncoderCache::Layer& lc = cache.layers[l];
    const Mat& x_in = l > 0 ? cache.layers[l - 1].x2 : cache.x0;

    Mat da2, df_out;
    layernorm_backward(lc.x2hat, lc.ln2_rstd, ly.ln2_g, dx, da2, g[ly.ln2_g.idx], g[ly.ln2_b.idx]);
    Mat dx1 = da2;  // residual branch
    df_out = da2;
    Mat df_act;
    linear_backward(lc.f_act, ly.w2, ly.b2, df_out, df_act, g);
    for (size_t i = 0; i < df_act.a.size(); ++i) df_act.a[i] *= gelu_grad(lc.f_pre.a[i]);
    linear_backward(lc.x1, ly.w1, ly.b1, df_act, dx1, g, /*accumulate_dx=*/true);

    Mat da1;
    layernorm_backward(lc.x1hat, lc.ln1_rstd, ly.ln1_g, dx1, da1, g[ly.ln1_g.idx], g[ly.ln1_b.idx]);
    Mat dx_in = da1;  // residual branch
    Mat dctx;
    linear_backward(lc.ctx, ly.wo, ly.bo, da1, dctx, g);

    Mat dq(L, d), dk(L, d), dv(L, d);
    for (int h = 0; h < H; ++h) {
      const Mat qh = col_block(lc.q, h * dh, dh);
      const Mat kh = col_block(lc.k, h * dh, dh);
      const Mat vh = col_block(lc.v, h * dh, dh);
      const Mat dctxh = col_block(dctx, h * dh, dh);
      Mat datt(L, L);
      kern::matmul_nt(dctxh, vh, datt);
      Mat dvh(L, dh);
      kern::matmul_tn(lc.att[h], dctxh, dvh);
      Mat ds(L, L);
      kern::softmax_rows_backward(lc.att[h], datt, ds);
      for (auto& v : ds.a) v *= scale;
      Mat dqh(L, dh), dkh(L, dh);
      kern::matmul_nn(ds, kh, dqh);
      kern::matmul_tn(ds, qh, dkh);
      set_col_block(dq, dqh, h * dh);
      set_col_block(dk, dkh, h * dh);
      set_col_block(dv, dvh, h * dh);
    }
    linear_backward(x_in, ly.wq, ly.bq, dq, dx_in, g, /*accumulate_dx=*/true);
    linear_backward(x_in, ly.wk, ly.bk, dk, dx_in, g, /*accumulate_dx=*/true);
    linear_backward(x_in, ly.wv, ly.bv, dv, dx_in, g, /*accumulate_dx=*/true);
    dx = dx_in;
  }

  Mat& dtok = g[tok_emb_.idx];
  Mat& drole = g[role_emb_.idx];
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < d; ++j) {
      dtok(cache.ids[i], j) += dx(i, j);
      drole(cache.roles[i], j) += dx(i, j);
    }
  }
}

}  // namespace copydst
