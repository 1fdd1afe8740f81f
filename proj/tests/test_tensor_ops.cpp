#include <doctest.h>

#include <cmath>

#include "lhgnn/grad_check.hpp"
#include "lhgnn/ops.hpp"
#include "lhgnn/rng.hpp"

using namespace lhgnn;

namespace {

Tensor random_tensor(int64_t r, int64_t c, Rng& rng, bool rg = true, double scale = 1.0) {
  Tensor t(r, c, rg);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = (2.0 * rng.uniform() - 1.0) * scale;
  return t;
}

}  // namespace

TEST_CASE("leaky_relu and tanh basics") {
  Tensor x = Tensor::from_rows(1, 2, {-1.0, 2.0});
  Tensor y = ops::leaky_relu(nullptr, x, 0.01);
  CHECK(y.data()[0] == doctest::Approx(-0.01));
  CHECK(y.data()[1] == doctest::Approx(2.0));

  // d/dx tanh at 0 is exactly 1.
  Tensor t0 = Tensor::scalar(0.0, true);
  Tape tape;
  Tensor out = ops::tanh(&tape, t0);
  tape.backward(out);
  CHECK(t0.grad()[0] == doctest::Approx(1.0));
}

TEST_CASE("l2_normalize hand value") {
  Tensor x = Tensor::from_rows(1, 2, {3.0, 4.0});
  Tensor y = ops::l2_normalize(nullptr, x);
  CHECK(y.data()[0] == doctest::Approx(0.6));
  CHECK(y.data()[1] == doctest::Approx(0.8));
}

TEST_CASE("sum(Wx) gradient has outer-product structure") {
  Tensor w = Tensor::from_rows(2, 2, {1.0, -2.0, 0.5, 3.0}, true);
  Tensor x = Tensor::from_rows(2, 1, {2.0, 3.0});
  Tape tape;
  Tensor loss = ops::sum(&tape, ops::matmul(&tape, w, x));
  tape.backward(loss);
  // d loss / d w_ij = x_j for every row i.
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  CHECK(w.grad()[1] == doctest::Approx(3.0));
  CHECK(w.grad()[2] == doctest::Approx(2.0));
  CHECK(w.grad()[3] == doctest::Approx(3.0));
}

TEST_CASE("loss independent of a leaf leaves a zero gradient") {
  Tensor used = Tensor::from_rows(1, 2, {1.0, 2.0}, true);
  Tensor unused = Tensor::from_rows(1, 2, {5.0, 6.0}, true);
  Tape tape;
  Tensor loss = ops::sum(&tape, used);
  tape.backward(loss);
  CHECK(unused.grad()[0] == 0.0);
  CHECK(unused.grad()[1] == 0.0);
}

TEST_CASE("l2_norm gradient at the origin is the zero vector") {
  Tensor x = Tensor::from_rows(1, 3, {0.0, 0.0, 0.0}, true);
  Tape tape;
  Tensor n = ops::l2_norm(&tape, x);
  tape.backward(n);
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == 0.0);
}

TEST_CASE("shape mismatch reports operation and shapes") {
  Tensor a(2, 3), b(4, 2);
  CHECK_THROWS_AS(ops::matmul(nullptr, a, b), DimensionError);
  try {
    ops::matmul(nullptr, a, b);
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x2") != std::string::npos);
  }
}

TEST_CASE("tape contracts: scalar loss, single consumption") {
  Tensor x = Tensor::from_rows(1, 2, {1.0, 2.0}, true);
  Tape tape;
  Tensor y = ops::scale_by_scalar(&tape, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ContractError);  // non-scalar

  Tape tape2;
  Tensor loss = ops::sum(&tape2, ops::scale_by_scalar(&tape2, x, 2.0));
  tape2.backward(loss);
  CHECK_THROWS_AS(tape2.backward(loss), ContractError);  // consumed
}

TEST_CASE("grad_check on quadratic and constant functions") {
  Tensor w = Tensor::from_rows(1, 2, {1.0, 2.0}, true);
  auto quadratic = [&](Tape* tape) {
    w.zero_grad();
    return ops::sum(tape, ops::hadamard(tape, w, w));
  };
  CHECK(grad_check(quadratic, {w}, 1e-5) < 1e-9);
  // Analytic gradient is 2w.
  Tape tape;
  Tensor loss = quadratic(&tape);
  tape.backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  CHECK(w.grad()[1] == doctest::Approx(4.0));

  Tensor c = Tensor::from_rows(1, 2, {3.0, -1.0}, true);
  auto constant = [&](Tape* tape) {
    c.zero_grad();
    (void)tape;
    return Tensor::scalar(7.5);
  };
  Tape tape2;
  // Constant loss: every gradient is zero, finite differences agree.
  CHECK(grad_check(constant, {c}, 1e-5) == 0.0);
}

TEST_CASE("every op matches central finite differences on randomized shapes") {
  Rng rng(20240811);
  for (int round = 0; round < 3; ++round) {
    const int64_t m = 2 + static_cast<int64_t>(rng.uniform_int(3));
    const int64_t k = 2 + static_cast<int64_t>(rng.uniform_int(3));
    const int64_t n = 2 + static_cast<int64_t>(rng.uniform_int(3));

    Tensor a = random_tensor(m, k, rng);
    Tensor b = random_tensor(k, n, rng);
    Tensor c = random_tensor(m, k, rng);
    Tensor row = random_tensor(1, k, rng);

    auto composite = [&](Tape* tape) {
      a.zero_grad();
      b.zero_grad();
      c.zero_grad();
      row.zero_grad();
      Tensor mm = ops::matmul(tape, a, b);                       // m x n
      Tensor act = ops::tanh(tape, mm);
      Tensor lr = ops::leaky_relu(tape, ops::add(tape, a, row), 0.01);
      Tensor had = ops::hadamard(tape, lr, c);
      Tensor cat = ops::concat_rows(tape, had, c);               // 2m x k
      Tensor norm = ops::l2_normalize(tape, cat);
      Tensor mr = ops::mean_rows(tape, norm);                    // 1 x k
      Tensor rn = ops::rows_l2_norm(tape, act);                  // m x 1
      Tensor hinge = ops::max_with_zero(tape, ops::add_scalar(tape, ops::sub(tape, had, c), 0.3));
      Tensor parts = ops::add(
          tape, ops::add(tape, ops::sum(tape, mr), ops::sum(tape, rn)),
          ops::add(tape, ops::sum(tape, hinge), ops::l2_norm(tape, mm)));
      return ops::scale_by_scalar(tape, parts, 0.7);
    };
    CHECK(grad_check(composite, {a, b, c, row}, 1e-5) < 1e-4);
  }
}

TEST_CASE("matmul transpose flags all match finite differences") {
  Rng rng(7);
  Tensor a = random_tensor(3, 4, rng);
  Tensor b = random_tensor(4, 2, rng);
  Tensor at = random_tensor(4, 3, rng);
  Tensor bt = random_tensor(2, 4, rng);
  auto f = [&](Tape* tape) {
    for (auto* t : {&a, &b, &at, &bt}) t->zero_grad();
    Tensor r1 = ops::matmul(tape, a, b, false, false);
    Tensor r2 = ops::matmul(tape, a, bt, false, true);
    Tensor r3 = ops::matmul(tape, at, b, true, false);
    Tensor r4 = ops::matmul(tape, at, bt, true, true);
    Tensor s = ops::add(tape, ops::add(tape, r1, r2), ops::add(tape, r3, r4));
    return ops::l2_norm(tape, s);
  };
  CHECK(grad_check(f, {a, b, at, bt}, 1e-5) < 1e-4);
}

TEST_CASE("gather and segment ops match finite differences") {
  Rng rng(99);
  Tensor src = random_tensor(6, 3, rng);
  auto idx = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{4, 0, 0, 5, 2});
  auto flat = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{0, 1, 2, 1, 1, 3, 5});
  auto offs = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{0, 3, 4, 7});
  auto f = [&](Tape* tape) {
    src.zero_grad();
    Tensor g = ops::gather_rows(tape, src, idx);
    Tensor sm = ops::segment_mean_rows(tape, src, flat, offs);
    return ops::add(tape, ops::l2_norm(tape, g), ops::sum(tape, sm));
  };
  CHECK(grad_check(f, {src}, 1e-5) < 1e-4);
}

TEST_CASE("fused film aggregation matches finite differences") {
  Rng rng(424242);
  const int64_t n_prev = 7, m = 9, n_tgt = 3, ds = 3, dh = 5;
  Tensor s_path = random_tensor(m, ds, rng);
  Tensor h_prev = random_tensor(n_prev, dh, rng);
  Tensor wg = random_tensor(dh, ds, rng);
  Tensor bg = random_tensor(1, dh, rng, true, 0.4);
  Tensor wb = random_tensor(dh, ds, rng);
  Tensor bb = random_tensor(1, dh, rng, true, 0.4);

  ops::FilmAggregateSpec spec;
  auto u = std::make_shared<std::vector<int64_t>>(m);
  auto seg = std::make_shared<std::vector<int64_t>>(m);
  auto w = std::make_shared<std::vector<double>>(m);
  auto mult = std::make_shared<std::vector<double>>(m);
  for (int64_t p = 0; p < m; ++p) {
    (*u)[p] = static_cast<int64_t>(rng.uniform_int(n_prev));
    (*seg)[p] = p % n_tgt;
    (*mult)[p] = 1.0 + static_cast<double>(rng.uniform_int(3));
    (*w)[p] = (*mult)[p] * std::exp(-0.1 * (1.0 + static_cast<double>(rng.uniform_int(3))));
  }
  spec.u_idx = u;
  spec.seg = seg;
  spec.weight = w;
  spec.mult = mult;
  spec.self_idx = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{1, 3, 6});
  spec.inv_count = std::make_shared<std::vector<double>>(std::vector<double>{0.25, 0.25, 0.2});

  auto f = [&](Tape* tape) {
    for (auto* t : {&s_path, &h_prev, &wg, &bg, &wb, &bb}) t->zero_grad();
    auto out = ops::film_context_aggregate(tape, s_path, h_prev, wg, bg, wb, bb, spec);
    Tensor mix = ops::add(tape, ops::sum(tape, out.context),
                          ops::add(tape, ops::scale_by_scalar(tape, out.gamma_norm_sum, 0.3),
                                   ops::scale_by_scalar(tape, out.beta_norm_sum, 0.7)));
    return mix;
  };
  CHECK(grad_check(f, {s_path, h_prev, wg, bg, wb, bb}, 1e-5) < 1e-4);

  // Identity mode reduces to a decay-weighted mean of raw messages.
  spec.identity_film = true;
  auto fid = [&](Tape* tape) {
    h_prev.zero_grad();
    auto out = ops::film_context_aggregate(tape, Tensor(0, ds), h_prev, wg, bg, wb, bb, spec);
    return ops::sum(tape, out.context);
  };
  CHECK(grad_check(fid, {h_prev}, 1e-5) < 1e-4);
}

TEST_CASE("forward values are deterministic") {
  Rng rng(5);
  Tensor a = random_tensor(4, 4, rng);
  Tensor b = random_tensor(4, 4, rng);
  Tensor r1 = ops::tanh(nullptr, ops::matmul(nullptr, a, b));
  Tensor r2 = ops::tanh(nullptr, ops::matmul(nullptr, a, b));
  for (int64_t i = 0; i < r1.size(); ++i) CHECK(r1.data()[i] == r2.data()[i]);
}
