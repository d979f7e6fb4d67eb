#include "vqr/nn.hpp"

#include <cmath>

namespace vqr::nn {

namespace {

// rank-1 v (Din) times Din x Dout matrix -> rank-1 Dout
Tensor matvec(Tape& tape, const Tensor& v, const Tensor& w) {
  Tensor r = ad::reshape(tape, v, {1, v.dim(0)});
  return ad::reshape(tape, ad::matmul(tape, r, w), {w.dim(1)});
}

}  // namespace

Tensor xavier_leaf(Index rows, Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(static_cast<std::size_t>(rows * cols));
  for (auto& x : v) x = rng.uniform(-a, a);
  return Tensor::from_values({rows, cols}, v, true);
}

Tensor xavier_vec(Index len, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(len + 1));
  std::vector<double> v(static_cast<std::size_t>(len));
  for (auto& x : v) x = rng.uniform(-a, a);
  return Tensor::from_values({len}, v, true);
}

GruParams GruParams::init(Index embed_dim, Index hidden_dim, Rng& rng) {
  GruParams p;
  p.w_z = xavier_leaf(embed_dim, hidden_dim, rng);
  p.w_r = xavier_leaf(embed_dim, hidden_dim, rng);
  p.w_h = xavier_leaf(embed_dim, hidden_dim, rng);
  p.u_z = xavier_leaf(hidden_dim, hidden_dim, rng);
  p.u_r = xavier_leaf(hidden_dim, hidden_dim, rng);
  p.u_h = xavier_leaf(hidden_dim, hidden_dim, rng);
  p.b_z = Tensor::zeros({hidden_dim}, true);
  p.b_r = Tensor::zeros({hidden_dim}, true);
  p.b_h = Tensor::zeros({hidden_dim}, true);
  return p;
}

AttentionParams AttentionParams::init(Index input_dim, Index query_dim, Index attn_dim, Rng& rng) {
  AttentionParams p;
  p.input_proj = xavier_leaf(input_dim, attn_dim, rng);
  p.query_proj = xavier_leaf(query_dim, attn_dim, rng);
  p.score_vec = xavier_vec(attn_dim, rng);
  return p;
}

Tensor affine(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 1 || weight.rank() != 2 || x.dim(0) != weight.dim(0))
    throw DimensionError("affine: input " + ad::shape_str(x.shape()) + " does not match weight " +
                         ad::shape_str(weight.shape()));
  return ad::add(tape, matvec(tape, x, weight), bias);
}

Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const GruParams& p) {
  if (x.rank() != 1 || x.dim(0) != p.embed_dim())
    throw DimensionError("gru_cell: input " + ad::shape_str(x.shape()) + " does not match params E=" +
                         std::to_string(p.embed_dim()));
  if (h.rank() != 1 || h.dim(0) != p.hidden_dim())
    throw DimensionError("gru_cell: state " + ad::shape_str(h.shape()) + " does not match params H=" +
                         std::to_string(p.hidden_dim()));
  Tensor z = ad::sigmoid(tape, ad::add(tape, affine(tape, x, p.w_z, p.b_z), matvec(tape, h, p.u_z)));
  Tensor r = ad::sigmoid(tape, ad::add(tape, affine(tape, x, p.w_r, p.b_r), matvec(tape, h, p.u_r)));
  Tensor gated = ad::mul(tape, r, h);
  Tensor cand = ad::tanh(tape, ad::add(tape, affine(tape, x, p.w_h, p.b_h), matvec(tape, gated, p.u_h)));
  Tensor ones = Tensor::constant({p.hidden_dim()}, 1.0);
  Tensor keep = ad::mul(tape, ad::sub(tape, ones, z), h);
  return ad::add(tape, keep, ad::mul(tape, z, cand));
}

LockedMasks sample_locked_masks(Index embed_dim, Index hidden_dim, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ParameterError("sample_locked_masks: rate " + std::to_string(rate) + " outside [0, 1)");
  LockedMasks m;
  m.rate = rate;
  const double keep = 1.0 / (1.0 - rate);
  m.input_mask.resize(static_cast<std::size_t>(embed_dim));
  m.hidden_mask.resize(static_cast<std::size_t>(hidden_dim));
  for (auto& x : m.input_mask) x = rng.bernoulli(rate) ? 0.0 : keep;
  for (auto& x : m.hidden_mask) x = rng.bernoulli(rate) ? 0.0 : keep;
  return m;
}

namespace {

Tensor encode_impl(Tape& tape, const Tensor& seq, const GruParams& p, const LockedMasks* masks,
                   std::vector<LockedMasks>* mask_log) {
  if (seq.rank() != 2 || seq.dim(1) != p.embed_dim())
    throw DimensionError("gru_encode: sequence " + ad::shape_str(seq.shape()) +
                         " does not match params E=" + std::to_string(p.embed_dim()));
  const Index steps = seq.dim(0);
  if (steps < 1) throw InputError("gru_encode: empty sequence");
  Tensor input_mask, hidden_mask;
  if (masks) {
    input_mask = Tensor::from_values({p.embed_dim()}, masks->input_mask);
    hidden_mask = Tensor::from_values({p.hidden_dim()}, masks->hidden_mask);
  }
  Tensor h = Tensor::zeros({p.hidden_dim()});
  for (Index t = 0; t < steps; ++t) {
    Tensor x = ad::row(tape, seq, t);
    if (masks) {
      x = ad::mul(tape, x, input_mask);
      h = ad::mul(tape, h, hidden_mask);
      if (mask_log) mask_log->push_back(*masks);
    }
    h = gru_cell(tape, x, h, p);
  }
  return h;
}

}  // namespace

Tensor gru_encode(Tape& tape, const Tensor& seq, const GruParams& p) {
  return encode_impl(tape, seq, p, nullptr, nullptr);
}

Tensor bayesian_gru_encode(Tape& tape, const Tensor& seq, const GruParams& p, double rate, Rng& rng,
                           RunMode mode, std::vector<LockedMasks>* mask_log) {
  if (rate < 0.0 || rate >= 1.0)
    throw ParameterError("bayesian_gru_encode: rate " + std::to_string(rate) + " outside [0, 1)");
  if (mode == RunMode::eval || rate == 0.0) return encode_impl(tape, seq, p, nullptr, mask_log);
  const LockedMasks masks = sample_locked_masks(p.embed_dim(), p.hidden_dim(), rate, rng);
  return encode_impl(tape, seq, p, &masks, mask_log);
}

AttentionOut attention_pool_kv(Tape& tape, const Tensor& keys, const Tensor& values,
                               const Tensor& query, const AttentionParams& p) {
  if (keys.rank() != 2 || values.rank() != 2 || keys.dim(0) != values.dim(0))
    throw DimensionError("attention_pool: keys " + ad::shape_str(keys.shape()) +
                         " do not align with values " + ad::shape_str(values.shape()));
  const Index n = keys.dim(0);
  if (n < 1) throw InputError("attention_pool: no rows to attend over");
  Tensor projected = ad::matmul(tape, keys, p.input_proj);                       // N x A
  Tensor qrow = ad::reshape(tape, query, {1, query.dim(0)});
  Tensor qproj = ad::reshape(tape, ad::matmul(tape, qrow, p.query_proj), {p.query_proj.dim(1)});
  Tensor scored = ad::tanh(tape, ad::add_rowwise(tape, projected, qproj));       // N x A
  Tensor svec = ad::reshape(tape, p.score_vec, {p.score_vec.dim(0), 1});
  Tensor scores = ad::reshape(tape, ad::matmul(tape, scored, svec), {n});        // N
  AttentionOut out;
  out.weights = ad::softmax(tape, scores, 0);
  Tensor wrow = ad::reshape(tape, out.weights, {1, n});
  out.pooled = ad::reshape(tape, ad::matmul(tape, wrow, values), {values.dim(1)});
  return out;
}

AttentionOut attention_pool(Tape& tape, const Tensor& values, const Tensor& query,
                            const AttentionParams& p) {
  return attention_pool_kv(tape, values, values, query, p);
}

Tensor embed(Tape& tape, const std::vector<int>& token_ids, const Tensor& table) {
  if (token_ids.empty()) throw InputError("embed: empty token sequence");
  return ad::embed_rows(tape, table, token_ids);
}

}  // namespace vqr::nn
