#pragma once

// GRU cell, locked-dropout (variational) GRU sequence encoder, additive
// attention pooling, and embedding lookup: the learned building blocks.

#include <optional>
#include <vector>

#include "vqr/rng.hpp"
#include "vqr/tensor.hpp"

namespace vqr::nn {

using ad::Index;

enum class RunMode { train, eval };

/// Xavier-uniform leaf: uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_leaf(Index rows, Index cols, Rng& rng);
/// Xavier-uniform vector treated as a rows x 1 matrix for fan purposes.
Tensor xavier_vec(Index len, Rng& rng);

struct GruParams {
  Tensor w_z, w_r, w_h;  // input -> hidden, E x H
  Tensor u_z, u_r, u_h;  // hidden -> hidden, H x H
  Tensor b_z, b_r, b_h;  // H

  static GruParams init(Index embed_dim, Index hidden_dim, Rng& rng);
  Index embed_dim() const { return w_z.dim(0); }
  Index hidden_dim() const { return w_z.dim(1); }
};

/// One dropout mask pair, sampled once per sequence and reused at every
/// timestep. Entries are 0 or 1/(1-rate) (inverted scaling).
struct LockedMasks {
  std::vector<double> input_mask;   // length E
  std::vector<double> hidden_mask;  // length H
  double rate = 0.0;
};

struct AttentionParams {
  Tensor input_proj;  // D x A, applied to each scored row
  Tensor query_proj;  // Q x A
  Tensor score_vec;   // A

  static AttentionParams init(Index input_dim, Index query_dim, Index attn_dim, Rng& rng);
};

/// y = W^T x + b for a rank-1 x. W is Din x Dout.
Tensor affine(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Single GRU step:
///   z = sigmoid(Wz^T x + Uz^T h + bz), r = sigmoid(Wr^T x + Ur^T h + br),
///   hcand = tanh(Wh^T x + Uh^T (r . h) + bh), out = (1 - z) . h + z . hcand
Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const GruParams& p);

LockedMasks sample_locked_masks(Index embed_dim, Index hidden_dim, double rate, Rng& rng);

/// Plain GRU over a T x E sequence from a zero initial state; returns h_T.
Tensor gru_encode(Tape& tape, const Tensor& seq, const GruParams& p);

/// GRU with locked variational dropout. In train mode one mask pair is drawn
/// per call and applied as x_t . m_x and h_{t-1} . m_h at every step; in eval
/// mode (or at rate 0) it is exactly gru_encode. mask_log, when given,
/// receives the mask pair used at each timestep.
Tensor bayesian_gru_encode(Tape& tape, const Tensor& seq, const GruParams& p, double rate, Rng& rng,
                           RunMode mode, std::vector<LockedMasks>* mask_log = nullptr);

struct AttentionOut {
  Tensor pooled;   // Dv
  Tensor weights;  // N, nonnegative, sums to 1
};

/// Additive attention: score_i = w . tanh(Wk^T k_i + Wq^T q), weights =
/// softmax(scores), pooled = sum_i weights_i v_i. Keys drive the scores;
/// values are what gets pooled.
AttentionOut attention_pool_kv(Tape& tape, const Tensor& keys, const Tensor& values,
                               const Tensor& query, const AttentionParams& p);

/// attention_pool_kv with keys == values.
AttentionOut attention_pool(Tape& tape, const Tensor& values, const Tensor& query,
                            const AttentionParams& p);

/// Row lookup into an embedding table (V x E) -> T x E.
Tensor embed(Tape& tape, const std::vector<int>& token_ids, const Tensor& table);

}  // namespace vqr::nn
