// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "dualsig/grad_check.hpp"
#include "dualsig/ops.hpp"

using namespace dualsig;

namespace {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool grad = true) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from_data(std::move(shape), std::move(v), grad);
}

using R = CheckReal;

void check_close(std::span<const double> got, std::initializer_list<double> want, double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  std::size_t i = 0;
  for (double w : want) CHECK(got[i++] == doctest::Approx(w).epsilon(tol));
}

}  // namespace

TEST_CASE("matmul identity and known product") {
  auto eye = Tensor<double>::from_data({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  check_close(matmul(eye, m).data(), {1, 2, 3, 4});
  auto ones = Tensor<double>::from_data({2, 1}, {1, 1});
  auto r = matmul(m, ones);
  CHECK(r.shape() == Shape{2, 1});
  check_close(r.data(), {3, 7});
}

TEST_CASE("matmul rejects inner dimension mismatch") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({4, 5});
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("tensor construction validates shape") {
  CHECK_THROWS_AS(Tensor<double>::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>::zeros({0, 3}), ShapeError);
}

TEST_CASE("softmax examples") {
  check_close(softmax(Tensor<double>::from_data({3}, {0, 0, 0}), 0).data(), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  check_close(softmax(Tensor<double>::from_data({2}, {0, std::log(2.0)}), 0).data(), {1.0 / 3, 2.0 / 3});
  CHECK_THROWS_AS(softmax(Tensor<double>::zeros({2, 2}), 2), ShapeError);
}

TEST_CASE("softmax is shift invariant and normalized along any axis") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({3, 4, 5}, rng, 10.0, false);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      auto y = softmax(x, axis);
      std::vector<double> shifted(x.data().begin(), x.data().end());
      for (double& v : shifted) v += 123.25;
      auto ys = softmax(Tensor<double>::from_data(x.shape(), shifted), axis);
      for (std::size_t i = 0; i < y.numel(); ++i) {
        CHECK(y.data()[i] >= 0.0);
        CHECK(std::abs(y.data()[i] - ys.data()[i]) < 1e-12);
      }
      // Sum along the axis.
      const Shape& s = x.shape();
      std::size_t outer = 1, inner = 1;
      for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
      for (std::size_t a = axis + 1; a < 3; ++a) inner *= s[a];
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          double total = 0;
          for (std::size_t j = 0; j < s[axis]; ++j) total += y.data()[(o * s[axis] + j) * inner + in];
          CHECK(std::abs(total - 1.0) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("softmax stays finite and rejects non-finite input") {
  auto big = softmax(Tensor<float>::from_data({2}, {1e30f, -1e30f}), 0);
  CHECK(big.data()[0] == doctest::Approx(1.0f));
  auto bad = Tensor<double>::from_data({2}, {std::numeric_limits<double>::quiet_NaN(), 0.0});
  CHECK_THROWS_AS(softmax(bad, 0), NumericError);
}

TEST_CASE("cross entropy closed forms") {
  std::vector<TokenId> y{1, 0};
  auto uniform2 = Tensor<double>::zeros({2, 2});
  CHECK(cross_entropy(uniform2, y).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  auto uniformV = Tensor<double>::zeros({3, 17});
  std::vector<TokenId> yv{0, 5, 16};
  CHECK(cross_entropy(uniformV, yv).item() == doctest::Approx(std::log(17.0)).epsilon(1e-12));

  auto confident = Tensor<double>::from_data({1, 3}, {0, 60, 0});
  std::vector<TokenId> y1{1};
  CHECK(cross_entropy(confident, y1).item() < 1e-20);

  std::vector<TokenId> bad{2, 0};
  CHECK_THROWS_AS(cross_entropy(uniform2, bad), IndexError);
  std::vector<TokenId> negative{-1, 0};
  CHECK_THROWS_AS(cross_entropy(uniform2, negative), IndexError);
}

TEST_CASE("cross entropy ignore index and empty batch") {
  auto logits = Tensor<double>::from_data({2, 2}, {0, 0, 5, -5});
  std::vector<TokenId> y{0, 9};
  CHECK(cross_entropy(logits, y, TokenId{9}).item() == doctest::Approx(std::log(2.0)));
  std::vector<TokenId> none{9, 9};
  CHECK_THROWS_AS(cross_entropy(logits, none, TokenId{9}), ContractError);
}

TEST_CASE("cross entropy is nonnegative") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto logits = random_tensor({4, 6}, rng, 5.0, false);
    std::vector<TokenId> y(4);
    for (auto& t : y) t = static_cast<TokenId>(rng() % 6);
    CHECK(cross_entropy(logits, y).item() >= 0.0);
  }
}

TEST_CASE("backward of sum of squares is 2x") {
  auto x = Tensor<double>::from_data({3}, {1.5, -2.0, 0.25}, true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    auto loss = sum(mul(x, x));
    tape.backward(loss);
  }
  check_close(x.grad(), {3.0, -4.0, 0.5});
}

TEST_CASE("backward of cross entropy is (softmax - onehot) / n") {
  auto logits = Tensor<double>::from_data({2, 3}, {0.1, 0.2, 0.3, -1.0, 2.0, 0.5}, true);
  std::vector<TokenId> y{2, 0};
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto loss = cross_entropy(logits, y);
  tape.backward(loss);
  auto p = softmax(Tensor<double>::from_data({2, 3}, {0.1, 0.2, 0.3, -1.0, 2.0, 0.5}), 1);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double onehot = static_cast<TokenId>(c) == y[r] ? 1.0 : 0.0;
      CHECK(logits.grad()[r * 3 + c] == doctest::Approx((p.data()[r * 3 + c] - onehot) / 2.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("unused leaf keeps zero gradient; reuse accumulates") {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  auto unused = Tensor<double>::from_data({2}, {5, 5}, true);
  unused.grad_mut();
  Tape<double> tape;
  TapeScope<double> scope(tape);
  // y = sum(x) + sum(x): two paths into x.
  auto y = add(sum(x), sum(x));
  tape.backward(y);
  check_close(x.grad(), {2.0, 2.0});
  check_close(unused.grad(), {0.0, 0.0});
}

TEST_CASE("backward contract errors") {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto v = scale(x, 2.0);
  CHECK_THROWS_AS(tape.backward(v), ContractError);
  auto s = sum(v);
  Tape<double> other;
  CHECK_THROWS_AS(other.backward(s), ContractError);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), ContractError);
}

TEST_CASE("tape records in topological order") {
  auto x = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto y = sum(gelu(matmul(x, x)));
  REQUIRE(tape.size() == 3);
  for (std::size_t i = 0; i < tape.size(); ++i) {
    for (const auto& in : tape.nodes()[i].inputs) {
      if (in.tape_id()) CHECK(*in.tape_id() < i);
    }
  }
  (void)y;
}

TEST_CASE("ops outside a tape are not recorded") {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  auto y = sum(x);
  CHECK_FALSE(y.tape_id().has_value());
  Tape<double> tape;
  TapeScope<double> scope(tape);
  {
    NoGradScope<double> off;
    auto z = sum(x);
    CHECK_FALSE(z.tape_id().has_value());
  }
  CHECK(tape.size() == 0);
}

TEST_CASE("add_bias broadcasts only over the last axis") {
  auto x = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  auto b = Tensor<double>::from_data({2}, {10, 20});
  check_close(add_bias(x, b).data(), {11, 22, 13, 24});
  CHECK_THROWS_AS(add_bias(x, Tensor<double>::zeros({3})), ShapeError);
  CHECK_THROWS_AS(add(x, Tensor<double>::zeros({2})), ShapeError);
}

TEST_CASE("embedding and gather bounds") {
  auto table = Tensor<double>::from_data({3, 2}, {0, 1, 2, 3, 4, 5});
  std::vector<TokenId> ids{2, 0};
  check_close(embedding(table, ids).data(), {4, 5, 0, 1});
  std::vector<TokenId> bad{3};
  CHECK_THROWS_AS(embedding(table, bad), IndexError);
  std::vector<std::size_t> rows{1};
  check_close(gather_rows(table, rows).data(), {2, 3});
  std::vector<std::size_t> bad_rows{7};
  CHECK_THROWS_AS(gather_rows(table, bad_rows), IndexError);
}

TEST_CASE("grad check: linear function is exact") {
  Rng rng(5);
  auto x = random_tensor({7}, rng);
  const double err = grad_check([](const Tensor<double>& t) { return sum(t); }, x, 1e-5);
  CHECK(err < 1e-9);
}

TEST_CASE("grad check: every differentiable op over 100 seeds") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    auto a = random_tensor<R>({3, 4}, rng);
    auto b = random_tensor<R>({4, 5}, rng);
    auto w = random_tensor<R>({3, 5}, rng);
    auto bias = random_tensor<R>({5}, rng);
    auto gamma = random_tensor<R>({5}, rng);
    auto beta = random_tensor<R>({5}, rng);
    auto table = random_tensor<R>({6, 5}, rng);
    std::vector<TokenId> ids{1, 4, 1};
    std::vector<TokenId> y{0, 4, 2};
    std::vector<std::size_t> rows{2, 0, 2};
    std::vector<Tensor<R>> leaves{a, b, w, bias, gamma, beta, table};
    auto f = [&] {
      auto h = add_bias(matmul(a, b), bias);                 // 3x5
      h = add(h, embedding(table, ids));                      // 3x5
      h = layer_norm(h, gamma, beta);
      h = mul(gelu(h), tanh(w));
      auto s = softmax(h, 0);
      h = add(h, scale(s, R(0.7)));
      h = gather_rows(h, rows);
      return add(cross_entropy(h, y), mean(mul(s, s)));
    };
    worst = std::max(worst, grad_check(f, leaves, 1e-5).max_rel_error);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("grad check: cross entropy of a two-layer MLP") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    auto x = random_tensor<R>({4, 6}, rng);
    auto w1 = random_tensor<R>({6, 8}, rng, 0.5);
    auto b1 = random_tensor<R>({8}, rng, 0.1);
    auto w2 = random_tensor<R>({8, 3}, rng, 0.5);
    auto b2 = random_tensor<R>({3}, rng, 0.1);
    std::vector<TokenId> y{0, 2, 1, 2};
    std::vector<Tensor<R>> leaves{x, w1, b1, w2, b2};
    auto f = [&] { return cross_entropy(add_bias(matmul(tanh(add_bias(matmul(x, w1), b1)), w2), b2), y); };
    CHECK(grad_check(f, leaves, 1e-5).max_rel_error < 1e-4);
  }
}

TEST_CASE("grad check: causal attention with padding") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(500 + seed);
    const std::size_t B = 2, L = 4, d = 4;
    auto qkv = random_tensor<R>({B * L, 3 * d}, rng);
    auto proj = random_tensor<R>({B * L, d}, rng);
    std::vector<std::size_t> lengths{4, 2};
    std::vector<Tensor<R>> leaves{qkv};
    auto f = [&] { return sum(mul(causal_attention(qkv, BatchLayout{B, L, lengths}, 2), proj)); };
    CHECK(grad_check(f, leaves, 1e-5).max_rel_error < 1e-4);
  }
}

TEST_CASE("causal attention masks future and padded keys") {
  Rng rng(9);
  const std::size_t L = 5, d = 4;
  auto base = random_tensor({L, 3 * d}, rng, 1.0, false);
  std::vector<std::size_t> full{L};
  auto out = causal_attention(base, BatchLayout{1, L, full}, 2);
  std::vector<double> changed(base.data().begin(), base.data().end());
  for (std::size_t j = 0; j < 3 * d; ++j) changed[4 * 3 * d + j] += 3.0;  // perturb last position
  auto out2 = causal_attention(Tensor<double>::from_data({L, 3 * d}, changed), BatchLayout{1, L, full}, 2);
  for (std::size_t i = 0; i < 4 * d; ++i) CHECK(out.data()[i] == out2.data()[i]);

  std::vector<std::size_t> short_len{3};
  auto masked = causal_attention(Tensor<double>::from_data({L, 3 * d}, changed), BatchLayout{1, L, short_len}, 2);
  // Row 4 is a pad query: it may only see keys 0..2, so it ignores the perturbed key/value.
  auto ref = causal_attention(base, BatchLayout{1, L, short_len}, 2);
  for (std::size_t i = 0; i < 3 * d; ++i) CHECK(masked.data()[i] == ref.data()[i]);
}

TEST_CASE("dropout rate zero is identity; invalid rate rejected") {
  Rng rng(1);
  auto x = Tensor<double>::from_data({3}, {1, 2, 3});
  CHECK(dropout(x, 0.0, rng).same_storage(x));
  CHECK_THROWS_AS(dropout(x, 1.0, rng), ConfigError);
  auto y = dropout(Tensor<double>::filled({1000}, 1.0), 0.5, rng);
  for (double v : y.data()) CHECK((v == 0.0 || v == 2.0));
}
