#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "testutil.hpp"
#include "vqr/nn.hpp"

using namespace vqr;
using nn::RunMode;
using testutil::max_rel_fd_error;
using testutil::rand_leaf;
using testutil::weighted_sum;

namespace {

nn::GruParams rand_gru(Rng& rng, ad::Index e, ad::Index h) { return nn::GruParams::init(e, h, rng); }

std::vector<Tensor> gru_param_list(nn::GruParams& p) {
  return {p.w_z, p.w_r, p.w_h, p.u_z, p.u_r, p.u_h, p.b_z, p.b_r, p.b_h};
}

}  // namespace

TEST_CASE("gru_cell zero params zero state gives zero") {
  Rng rng(1);
  nn::GruParams p;
  p.w_z = Tensor::zeros({3, 4}, true);
  p.w_r = Tensor::zeros({3, 4}, true);
  p.w_h = Tensor::zeros({3, 4}, true);
  p.u_z = Tensor::zeros({4, 4}, true);
  p.u_r = Tensor::zeros({4, 4}, true);
  p.u_h = Tensor::zeros({4, 4}, true);
  p.b_z = Tensor::zeros({4}, true);
  p.b_r = Tensor::zeros({4}, true);
  p.b_h = Tensor::zeros({4}, true);
  Tensor x = rand_leaf(rng, {3}, -2, 2, false);
  Tape tape;
  Tensor out = nn::gru_cell(tape, x, Tensor::zeros({4}), p);
  for (double v : out.to_vector()) CHECK(v == 0.0);
}

TEST_CASE("gru_cell saturated update gate carries the state") {
  Rng rng(2);
  nn::GruParams p;
  p.w_z = Tensor::zeros({3, 4}, true);
  p.w_r = Tensor::zeros({3, 4}, true);
  p.w_h = Tensor::zeros({3, 4}, true);
  p.u_z = Tensor::zeros({4, 4}, true);
  p.u_r = Tensor::zeros({4, 4}, true);
  p.u_h = Tensor::zeros({4, 4}, true);
  p.b_z = Tensor::constant({4}, -100.0);
  p.b_r = Tensor::zeros({4}, true);
  p.b_h = Tensor::zeros({4}, true);
  Tensor x = rand_leaf(rng, {3}, -2, 2, false);
  Tensor h = rand_leaf(rng, {4}, -2, 2, false);
  Tape tape;
  Tensor out = nn::gru_cell(tape, x, h, p);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(out[i] - h[i]) < 1e-12);
}

TEST_CASE("gru_cell gradient vs central differences") {
  Rng rng(3);
  nn::GruParams p = rand_gru(rng, 3, 4);
  Tensor x = rand_leaf(rng, {3});
  Tensor h = rand_leaf(rng, {4});
  Tensor coeffs = rand_leaf(rng, {4}, -1, 1, false);
  auto leaves = gru_param_list(p);
  leaves.push_back(x);
  leaves.push_back(h);
  const double err = max_rel_fd_error(
      [&](Tape& t) { return weighted_sum(t, nn::gru_cell(t, x, h, p), coeffs); }, leaves);
  CHECK(err < 1e-4);
}

TEST_CASE("gru_cell dimension mismatch") {
  Rng rng(4);
  nn::GruParams p = rand_gru(rng, 3, 4);
  Tape tape;
  CHECK_THROWS_AS(nn::gru_cell(tape, Tensor::zeros({5}), Tensor::zeros({4}), p), DimensionError);
  CHECK_THROWS_AS(nn::gru_cell(tape, Tensor::zeros({3}), Tensor::zeros({5}), p), DimensionError);
}

TEST_CASE("sample_locked_masks contract") {
  Rng rng(5);
  nn::LockedMasks zero = nn::sample_locked_masks(16, 16, 0.0, rng);
  for (double v : zero.input_mask) CHECK(v == 1.0);
  for (double v : zero.hidden_mask) CHECK(v == 1.0);

  Rng a(42), b(42);
  nn::LockedMasks ma = nn::sample_locked_masks(64, 64, 0.3, a);
  nn::LockedMasks mb = nn::sample_locked_masks(64, 64, 0.3, b);
  CHECK(ma.input_mask == mb.input_mask);
  CHECK(ma.hidden_mask == mb.hidden_mask);

  // entries are 0 or 1/(1-p); zero fraction close to p
  Rng c(7);
  nn::LockedMasks big = nn::sample_locked_masks(5000, 5000, 0.5, c);
  int zeros = 0;
  for (double v : big.input_mask) {
    CHECK((v == 0.0 || v == 2.0));
    zeros += v == 0.0;
  }
  for (double v : big.hidden_mask) zeros += v == 0.0;
  const double frac = static_cast<double>(zeros) / 10000.0;
  CHECK(frac >= 0.48);
  CHECK(frac <= 0.52);

  CHECK_THROWS_AS(nn::sample_locked_masks(4, 4, 1.0, c), ParameterError);
  CHECK_THROWS_AS(nn::sample_locked_masks(4, 4, -0.1, c), ParameterError);
}

TEST_CASE("locked mask expectation preservation") {
  // E[m . x] == x with inverted scaling; Monte Carlo at 1e5 samples
  Rng rng(11);
  const double rate = 0.25;
  const int samples = 100000;
  double acc = 0.0;
  const double x = 1.7;
  for (int i = 0; i < samples; ++i) acc += (rng.bernoulli(rate) ? 0.0 : 1.0 / (1.0 - rate)) * x;
  CHECK(std::abs(acc / samples - x) < 1e-2 * std::max(1.0, x));
}

TEST_CASE("bayesian gru at rate 0 equals plain gru bitwise") {
  Rng rng(13);
  nn::GruParams p = rand_gru(rng, 5, 6);
  Tensor seq = rand_leaf(rng, {7, 5}, -2, 2, false);
  Tape t1, t2;
  Rng mask_rng(99);
  Tensor a = nn::gru_encode(t1, seq, p);
  Tensor b = nn::bayesian_gru_encode(t2, seq, p, 0.0, mask_rng, RunMode::train);
  auto va = a.to_vector(), vb = b.to_vector();
  CHECK(std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0);
}

TEST_CASE("bayesian gru locks one mask pair across all timesteps") {
  Rng rng(17);
  nn::GruParams p = rand_gru(rng, 5, 6);
  Tensor seq = rand_leaf(rng, {9, 5}, -2, 2, false);
  Rng mask_rng(3);
  std::vector<nn::LockedMasks> log;
  Tape tape;
  nn::bayesian_gru_encode(tape, seq, p, 0.4, mask_rng, RunMode::train, &log);
  REQUIRE(log.size() == 9);
  for (std::size_t t = 1; t < log.size(); ++t) {
    CHECK(log[t].input_mask == log[0].input_mask);
    CHECK(log[t].hidden_mask == log[0].hidden_mask);
  }
}

TEST_CASE("bayesian gru eval mode is deterministic and mask free") {
  Rng rng(19);
  nn::GruParams p = rand_gru(rng, 4, 5);
  Tensor seq = rand_leaf(rng, {6, 4}, -2, 2, false);
  Rng r1(1), r2(2);  // different rng state must not matter in eval
  Tape t1, t2;
  Tensor a = nn::bayesian_gru_encode(t1, seq, p, 0.5, r1, RunMode::eval);
  Tensor b = nn::bayesian_gru_encode(t2, seq, p, 0.5, r2, RunMode::eval);
  auto va = a.to_vector(), vb = b.to_vector();
  CHECK(std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0);
}

TEST_CASE("bayesian gru train mode gradient through masks") {
  Rng rng(23);
  nn::GruParams p = rand_gru(rng, 3, 4);
  Tensor seq = rand_leaf(rng, {4, 3});
  Tensor coeffs = rand_leaf(rng, {4}, -1, 1, false);
  auto leaves = gru_param_list(p);
  leaves.push_back(seq);
  // fixed mask draw per evaluation: reseed inside the builder
  const double err = max_rel_fd_error(
      [&](Tape& t) {
        Rng mask_rng(77);
        return weighted_sum(
            t, nn::bayesian_gru_encode(t, seq, p, 0.3, mask_rng, RunMode::train), coeffs);
      },
      leaves);
  CHECK(err < 1e-4);
}

TEST_CASE("empty sequence is rejected") {
  Rng rng(29);
  nn::GruParams p = rand_gru(rng, 3, 4);
  Tape tape;
  // rank-2 tensors cannot have extent 0, so the empty case is the embed path
  CHECK_THROWS_AS(nn::embed(tape, {}, Tensor::zeros({5, 3})), InputError);
}

TEST_CASE("attention over a single row returns it") {
  Rng rng(31);
  nn::AttentionParams p = nn::AttentionParams::init(3, 2, 4, rng);
  Tensor values = rand_leaf(rng, {1, 3}, -2, 2, false);
  Tensor query = rand_leaf(rng, {2}, -2, 2, false);
  Tape tape;
  auto out = nn::attention_pool(tape, values, query, p);
  CHECK(out.weights.numel() == 1);
  CHECK(out.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
  for (int i = 0; i < 3; ++i) CHECK(out.pooled[i] == doctest::Approx(values[i]).epsilon(1e-15));
}

TEST_CASE("attention with zero params pools the mean") {
  Rng rng(37);
  nn::AttentionParams p;
  p.input_proj = Tensor::zeros({3, 4}, true);
  p.query_proj = Tensor::zeros({2, 4}, true);
  p.score_vec = Tensor::zeros({4}, true);
  Tensor values = rand_leaf(rng, {5, 3}, -2, 2, false);
  Tensor query = rand_leaf(rng, {2}, -2, 2, false);
  Tape tape;
  auto out = nn::attention_pool(tape, values, query, p);
  for (int i = 0; i < 5; ++i) CHECK(out.weights[i] == doctest::Approx(0.2).epsilon(1e-12));
  auto m = values.matrix().colwise().mean();
  for (int i = 0; i < 3; ++i) CHECK(out.pooled[i] == doctest::Approx(m(i)).epsilon(1e-12));
}

TEST_CASE("attention crafted two-object case matches direct arithmetic") {
  // hand evaluation with A=1: s_i = tanh(wv . v_i + wq * q)
  nn::AttentionParams p;
  p.input_proj = Tensor::from_values({2, 1}, {1, 0}, true);
  p.query_proj = Tensor::from_values({1, 1}, {2}, true);
  p.score_vec = Tensor::from_values({1}, {1}, true);
  Tensor values = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor query = Tensor::from_values({1}, {1});
  Tape tape;
  auto out = nn::attention_pool(tape, values, query, p);
  const double s1 = std::tanh(1.0 + 2.0), s2 = std::tanh(0.0 + 2.0);
  const double w1 = std::exp(s1) / (std::exp(s1) + std::exp(s2));
  const double w2 = 1.0 - w1;
  CHECK(out.weights[0] == doctest::Approx(w1).epsilon(1e-12));
  CHECK(out.weights[1] == doctest::Approx(w2).epsilon(1e-12));
  CHECK(out.pooled[0] == doctest::Approx(w1).epsilon(1e-12));
  CHECK(out.pooled[1] == doctest::Approx(w2).epsilon(1e-12));
}

TEST_CASE("attention weights form a distribution and gradients check out") {
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    nn::AttentionParams p = nn::AttentionParams::init(4, 3, 5, rng);
    Tensor values = rand_leaf(rng, {6, 4}, -2, 2, false);
    Tensor query = rand_leaf(rng, {3}, -2, 2, false);
    Tape tape;
    auto out = nn::attention_pool(tape, values, query, p);
    double s = 0.0;
    for (int i = 0; i < 6; ++i) {
      CHECK(out.weights[i] >= 0.0);
      s += out.weights[i];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  nn::AttentionParams p = nn::AttentionParams::init(4, 3, 5, rng);
  Tensor values = rand_leaf(rng, {5, 4});
  Tensor query = rand_leaf(rng, {3});
  Tensor coeffs = rand_leaf(rng, {4}, -1, 1, false);
  std::vector<Tensor> leaves{p.input_proj, p.query_proj, p.score_vec, values, query};
  const double err = max_rel_fd_error(
      [&](Tape& t) { return weighted_sum(t, nn::attention_pool(t, values, query, p).pooled, coeffs); },
      leaves);
  CHECK(err < 1e-4);
}

TEST_CASE("attention_pool_kv scores on keys and pools values") {
  Rng rng(43);
  nn::AttentionParams p = nn::AttentionParams::init(3, 2, 4, rng);
  Tensor keys = rand_leaf(rng, {5, 3}, -2, 2, false);
  Tensor values = rand_leaf(rng, {5, 7}, -2, 2, false);
  Tensor query = rand_leaf(rng, {2}, -2, 2, false);
  Tape tape;
  auto kv = nn::attention_pool_kv(tape, keys, values, query, p);
  auto plain = nn::attention_pool(tape, keys, query, p);
  CHECK(kv.pooled.numel() == 7);
  auto wa = kv.weights.to_vector(), wb = plain.weights.to_vector();
  CHECK(std::memcmp(wa.data(), wb.data(), wa.size() * sizeof(double)) == 0);
  CHECK_THROWS_AS(nn::attention_pool_kv(tape, keys, rand_leaf(rng, {4, 7}), query, p), DimensionError);
}

TEST_CASE("embed looks up rows and scatters gradients") {
  Tensor table = Tensor::from_values({3, 2}, {1, 0, 0, 1, 5, 5}, true);
  Tape tape;
  Tensor out = nn::embed(tape, {0}, table);
  CHECK(out.dim(0) == 1);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 0.0);

  Rng rng(47);
  Tensor t2 = rand_leaf(rng, {6, 3});
  Tensor coeffs = rand_leaf(rng, {4, 3}, -1, 1, false);
  const double err = max_rel_fd_error(
      [&](Tape& t) { return weighted_sum(t, nn::embed(t, {5, 1, 1, 0}, t2), coeffs); }, {t2});
  CHECK(err < 1e-4);
  Tape t3;
  CHECK_THROWS_AS(nn::embed(t3, {6}, t2), IndexError);
}
