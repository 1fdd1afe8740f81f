#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "lhgnn/linalg.hpp"
#include "lhgnn/tensor.hpp"

namespace lhgnn::ops {

inline void require(bool ok, const std::string& op, const Tensor& a, const Tensor& b) {
  if (!ok)
    throw DimensionError(op + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

inline bool track(Tape* tape, std::initializer_list<Tensor> inputs) {
  if (!tape) return false;
  for (const auto& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Dense linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(Tape* tape, Tensor a, Tensor b, bool trans_a = false, bool trans_b = false) {
  const int64_t m = trans_a ? a.cols() : a.rows();
  const int64_t k = trans_a ? a.rows() : a.cols();
  const int64_t kb = trans_b ? b.cols() : b.rows();
  const int64_t n = trans_b ? b.rows() : b.cols();
  require(k == kb, "matmul", a, b);

  Tensor out(m, n);
  linalg::gemm(trans_a, trans_b, m, n, k, 1.0, a.data(), a.cols(), b.data(), b.cols(), 0.0,
               out.data(), n);

  if (track(tape, {a, b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out, trans_a, trans_b, m, n, k]() mutable {
      const double* gc = out.grad();
      if (a.requires_grad()) {
        double* ga = a.grad();
        if (!trans_a && !trans_b)  // dA = dC B^T
          linalg::gemm(false, true, m, k, n, 1.0, gc, n, b.data(), b.cols(), 1.0, ga, a.cols());
        else if (!trans_a && trans_b)  // dA = dC B
          linalg::gemm(false, false, m, k, n, 1.0, gc, n, b.data(), b.cols(), 1.0, ga, a.cols());
        else if (trans_a && !trans_b)  // dA = B dC^T
          linalg::gemm(false, true, k, m, n, 1.0, b.data(), b.cols(), gc, n, 1.0, ga, a.cols());
        else  // dA = B^T dC^T
          linalg::gemm(true, true, k, m, n, 1.0, b.data(), b.cols(), gc, n, 1.0, ga, a.cols());
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        if (!trans_a && !trans_b)  // dB = A^T dC
          linalg::gemm(true, false, k, n, m, 1.0, a.data(), a.cols(), gc, n, 1.0, gb, b.cols());
        else if (!trans_a && trans_b)  // dB = dC^T A
          linalg::gemm(true, false, n, k, m, 1.0, gc, n, a.data(), a.cols(), 1.0, gb, b.cols());
        else if (trans_a && !trans_b)  // dB = A dC
          linalg::gemm(false, false, k, n, m, 1.0, a.data(), a.cols(), gc, n, 1.0, gb, b.cols());
        else  // dB = dC^T A^T
          linalg::gemm(true, true, n, k, m, 1.0, gc, n, a.data(), a.cols(), 1.0, gb, b.cols());
      }
    });
  }
  return out;
}

// Elementwise sum; the second operand may be a 1 x n row vector, broadcast
// over the rows of the first.
inline Tensor add(Tape* tape, Tensor a, Tensor b) {
  const bool broadcast = (b.rows() == 1 && a.cols() == b.cols() && a.rows() != 1);
  require(broadcast || (a.rows() == b.rows() && a.cols() == b.cols()), "add", a, b);

  Tensor out(a.rows(), a.cols());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const int64_t n = a.size(), c = a.cols();
  if (broadcast)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i % c];
  else
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];

  if (track(tape, {a, b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out, broadcast, n, c]() mutable {
      const double* go = out.grad();
      if (a.requires_grad()) {
        double* ga = a.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        if (broadcast)
          for (int64_t i = 0; i < n; ++i) gb[i % c] += go[i];
        else
          for (int64_t i = 0; i < n; ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

inline Tensor sub(Tape* tape, Tensor a, Tensor b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  Tensor out(a.rows(), a.cols());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (track(tape, {a, b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out, n]() mutable {
      const double* go = out.grad();
      if (a.requires_grad()) {
        double* ga = a.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        for (int64_t i = 0; i < n; ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

inline Tensor hadamard(Tape* tape, Tensor a, Tensor b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", a, b);
  Tensor out(a.rows(), a.cols());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (track(tape, {a, b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out, n]() mutable {
      const double* go = out.grad();
      if (a.requires_grad()) {
        double* ga = a.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        for (int64_t i = 0; i < n; ++i) gb[i] += go[i] * a.data()[i];
      }
    });
  }
  return out;
}

inline Tensor scale_by_scalar(Tape* tape, Tensor a, double s) {
  Tensor out(a.rows(), a.cols());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, s, n]() mutable {
      const double* go = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * s;
    });
  }
  return out;
}

inline Tensor add_scalar(Tape* tape, Tensor a, double s) {
  Tensor out(a.rows(), a.cols());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + s;
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, n]() mutable {
      const double* go = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

inline Tensor leaky_relu(Tape* tape, Tensor a, double slope = 0.01) {
  Tensor out(a.rows(), a.cols());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) {
    const double x = a.data()[i];
    out.data()[i] = x > 0.0 ? x : slope * x;
  }
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, slope, n]() mutable {
      const double* go = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * (a.data()[i] > 0.0 ? 1.0 : slope);
    });
  }
  return out;
}

inline Tensor tanh(Tape* tape, Tensor a) {
  Tensor out(a.rows(), a.cols());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = std::tanh(a.data()[i]);
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, n]() mutable {
      const double* go = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < n; ++i) {
        const double y = out.data()[i];
        ga[i] += go[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

// Hinge. Subgradient at the kink is 0.
inline Tensor max_with_zero(Tape* tape, Tensor a) {
  Tensor out(a.rows(), a.cols());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = std::max(a.data()[i], 0.0);
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, n]() mutable {
      const double* go = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < n; ++i)
        if (a.data()[i] > 0.0) ga[i] += go[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and norms
// ---------------------------------------------------------------------------

inline Tensor sum(Tape* tape, Tensor a) {
  double acc = 0.0;
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) acc += a.data()[i];
  Tensor out = Tensor::scalar(acc);
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, n]() mutable {
      const double g = out.grad()[0];
      double* ga = a.grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += g;
    });
  }
  return out;
}

// Column means: m x n -> 1 x n.
inline Tensor mean_rows(Tape* tape, Tensor a) {
  const int64_t m = a.rows(), c = a.cols();
  if (m == 0) throw ContractError("mean_rows: empty tensor");
  Tensor out(1, c);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < c; ++j) out.data()[j] += a.at(i, j);
  for (int64_t j = 0; j < c; ++j) out.data()[j] /= static_cast<double>(m);
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, m, c]() mutable {
      const double* go = out.grad();
      double* ga = a.grad();
      const double inv = 1.0 / static_cast<double>(m);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < c; ++j) ga[i * c + j] += go[j] * inv;
    });
  }
  return out;
}

inline Tensor concat_rows(Tape* tape, Tensor a, Tensor b) {
  require(a.cols() == b.cols(), "concat_rows", a, b);
  Tensor out(a.rows() + b.rows(), a.cols());
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  if (track(tape, {a, b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      const double* go = out.grad();
      if (a.requires_grad()) {
        double* ga = a.grad();
        for (int64_t i = 0; i < a.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        for (int64_t i = 0; i < b.size(); ++i) gb[i] += go[a.size() + i];
      }
    });
  }
  return out;
}

// Frobenius norm of the whole tensor, as a scalar. Gradient at the origin is
// the zero vector (the translational distance can vanish when embeddings
// coincide).
inline Tensor l2_norm(Tape* tape, Tensor a) {
  double acc = 0.0;
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) acc += a.data()[i] * a.data()[i];
  const double norm = std::sqrt(acc);
  Tensor out = Tensor::scalar(norm);
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, norm, n]() mutable {
      if (norm == 0.0) return;
      const double g = out.grad()[0] / norm;
      double* ga = a.grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += g * a.data()[i];
    });
  }
  return out;
}

// Per-row Euclidean norms: m x n -> m x 1. Zero rows get zero gradient.
inline Tensor rows_l2_norm(Tape* tape, Tensor a) {
  const int64_t m = a.rows(), c = a.cols();
  Tensor out(m, 1);
  for (int64_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < c; ++j) acc += a.at(i, j) * a.at(i, j);
    out.data()[i] = std::sqrt(acc);
  }
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, m, c]() mutable {
      const double* go = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < m; ++i) {
        const double norm = out.data()[i];
        if (norm == 0.0) continue;
        const double g = go[i] / norm;
        for (int64_t j = 0; j < c; ++j) ga[i * c + j] += g * a.at(i, j);
      }
    });
  }
  return out;
}

// Row-wise L2 normalization; zero rows pass through unchanged.
inline Tensor l2_normalize(Tape* tape, Tensor a) {
  const int64_t m = a.rows(), c = a.cols();
  Tensor out(m, c);
  auto norms = std::make_shared<std::vector<double>>(m);
  for (int64_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < c; ++j) acc += a.at(i, j) * a.at(i, j);
    const double norm = std::sqrt(acc);
    (*norms)[i] = norm;
    if (norm > 0.0)
      for (int64_t j = 0; j < c; ++j) out.at(i, j) = a.at(i, j) / norm;
  }
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, norms, m, c]() mutable {
      const double* go = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < m; ++i) {
        const double norm = (*norms)[i];
        if (norm == 0.0) continue;
        double dot = 0.0;
        for (int64_t j = 0; j < c; ++j) dot += go[i * c + j] * out.at(i, j);
        for (int64_t j = 0; j < c; ++j)
          ga[i * c + j] += (go[i * c + j] - out.at(i, j) * dot) / norm;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index plumbing for batched graph computation
// ---------------------------------------------------------------------------

using IndexVec = std::shared_ptr<const std::vector<int64_t>>;
using WeightVec = std::shared_ptr<const std::vector<double>>;

inline Tensor gather_rows(Tape* tape, Tensor a, IndexVec idx) {
  const int64_t m = static_cast<int64_t>(idx->size()), c = a.cols();
  Tensor out(m, c);
  for (int64_t i = 0; i < m; ++i)
    std::copy(a.data() + (*idx)[i] * c, a.data() + ((*idx)[i] + 1) * c, out.data() + i * c);
  if (track(tape, {a})) {
    out.set_requires_grad(true);
    tape->record([a, out, idx, m, c]() mutable {
      const double* go = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < m; ++i) {
        double* dst = ga + (*idx)[i] * c;
        const double* src = go + i * c;
        for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// Segment means over gathered rows: out[t] = mean of src rows flat[offsets[t]
// .. offsets[t+1]). Used to pool node semantics along each path.
inline Tensor segment_mean_rows(Tape* tape, Tensor src, IndexVec flat, IndexVec offsets) {
  const int64_t n_seg = static_cast<int64_t>(offsets->size()) - 1;
  const int64_t c = src.cols();
  Tensor out(n_seg, c);
  for (int64_t t = 0; t < n_seg; ++t) {
    const int64_t lo = (*offsets)[t], hi = (*offsets)[t + 1];
    if (lo == hi) continue;
    double* dst = out.data() + t * c;
    for (int64_t j = lo; j < hi; ++j) {
      const double* row = src.data() + (*flat)[j] * c;
      for (int64_t k = 0; k < c; ++k) dst[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(hi - lo);
    for (int64_t k = 0; k < c; ++k) dst[k] *= inv;
  }
  if (track(tape, {src})) {
    out.set_requires_grad(true);
    tape->record([src, out, flat, offsets, n_seg, c]() mutable {
      const double* go = out.grad();
      double* gs = src.grad();
      for (int64_t t = 0; t < n_seg; ++t) {
        const int64_t lo = (*offsets)[t], hi = (*offsets)[t + 1];
        if (lo == hi) continue;
        const double inv = 1.0 / static_cast<double>(hi - lo);
        for (int64_t j = lo; j < hi; ++j) {
          double* dst = gs + (*flat)[j] * c;
          const double* g = go + t * c;
          for (int64_t k = 0; k < c; ++k) dst[k] += g[k] * inv;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fused FiLM personalization + decay-weighted context aggregation
// ---------------------------------------------------------------------------
//
// For every sampled path p (target slot seg[p], context row u_idx[p]):
//   gamma_p = LeakyReLU(W_gamma s_p + b_gamma)
//   beta_p  = LeakyReLU(W_beta  s_p + b_beta)
//   msg_p   = (gamma_p + 1) (.) h_u + beta_p
// and per target t:
//   ctx[t] = (h_self[t] + sum_p weight[p] msg_p) * inv_count[t]
// where weight[p] already folds the decay e^{-lambda L} and the multiplicity
// of structurally identical paths, and inv_count averages over the full path
// set including the self-loop.
//
// The op also returns the FiLM penalty ingredients: sums over paths (with
// multiplicity) of ||gamma_p|| and ||beta_p||.
//
// Per-path activations are never materialized for the whole batch: the
// forward streams over fixed-size chunks, and the backward recomputes each
// chunk. This bounds memory at a few hundred MB even when the active path
// set approaches 10^6 at the input feature dimension.

struct FilmAggregateSpec {
  IndexVec u_idx;       // m: row of h_prev supplying the raw message
  IndexVec seg;         // m: target slot in [0, n_tgt)
  WeightVec weight;     // m: multiplicity * exp(-lambda L)
  WeightVec mult;       // m: multiplicity (for the penalty sums)
  IndexVec self_idx;    // n_tgt: row of h_prev supplying the self-loop message
  WeightVec inv_count;  // n_tgt: 1 / |P_v| including the self-loop
  bool identity_film = false;  // ablation: gamma = beta = 0 frozen
  double slope = 0.01;
};

struct FilmAggregateOut {
  Tensor context;         // n_tgt x d_h
  Tensor gamma_norm_sum;  // scalar
  Tensor beta_norm_sum;   // scalar
  double mean_gamma_norm = 0.0;  // per-path means, reporting only
  double mean_beta_norm = 0.0;
};

namespace detail {
#ifndef LHGNN_FILM_CHUNK
#define LHGNN_FILM_CHUNK 1024
#endif
constexpr int64_t kFilmChunk = LHGNN_FILM_CHUNK;

// Post-activation gamma/beta for one chunk of paths; buffers are fully
// overwritten (callers size them once and reuse across chunks).
inline void film_chunk_forward(const Tensor& s_path, const Tensor& w_gamma,
                               const Tensor& b_gamma, const Tensor& w_beta, const Tensor& b_beta,
                               double slope, int64_t lo, int64_t hi, std::vector<double>& gbuf,
                               std::vector<double>& bbuf) {
  const int64_t c = hi - lo, dh = w_gamma.rows(), ds = s_path.cols();
  if (static_cast<int64_t>(gbuf.size()) < c * dh) {
    gbuf.resize(c * dh);
    bbuf.resize(c * dh);
  }
  linalg::gemm(false, true, c, dh, ds, 1.0, s_path.data() + lo * ds, ds, w_gamma.data(), ds, 0.0,
               gbuf.data(), dh);
  linalg::gemm(false, true, c, dh, ds, 1.0, s_path.data() + lo * ds, ds, w_beta.data(), ds, 0.0,
               bbuf.data(), dh);
  const double* bg = b_gamma.data();
  const double* bb = b_beta.data();
  for (int64_t i = 0; i < c; ++i) {
    double* grow = gbuf.data() + i * dh;
    double* brow = bbuf.data() + i * dh;
#pragma omp simd
    for (int64_t j = 0; j < dh; ++j) {
      const double g = grow[j] + bg[j];
      grow[j] = g > 0.0 ? g : slope * g;  // post-activation gamma
      const double b = brow[j] + bb[j];
      brow[j] = b > 0.0 ? b : slope * b;
    }
  }
}
}  // namespace detail

inline FilmAggregateOut film_context_aggregate(Tape* tape, Tensor s_path, Tensor h_prev,
                                               Tensor w_gamma, Tensor b_gamma, Tensor w_beta,
                                               Tensor b_beta, const FilmAggregateSpec& spec) {
  const int64_t m = static_cast<int64_t>(spec.u_idx->size());
  const int64_t dh = h_prev.cols();
  const int64_t n_tgt = static_cast<int64_t>(spec.self_idx->size());
  if (!spec.identity_film) {
    require(w_gamma.cols() == s_path.cols(), "film_aggregate", w_gamma, s_path);
    if (s_path.rows() != m)
      throw DimensionError("film_aggregate: " + std::to_string(m) + " paths but " +
                           std::to_string(s_path.rows()) + " path embeddings");
  }

  FilmAggregateOut out;
  out.context = Tensor(n_tgt, dh);
  double gamma_sum = 0.0, beta_sum = 0.0, mult_total = 0.0;

  double* ctx = out.context.data();
  for (int64_t t = 0; t < n_tgt; ++t) {
    const double* hs = h_prev.data() + (*spec.self_idx)[t] * dh;
    std::copy(hs, hs + dh, ctx + t * dh);
  }

  std::vector<double> gbuf, bbuf;
  for (int64_t lo = 0; lo < m; lo += detail::kFilmChunk) {
    const int64_t hi = std::min(m, lo + detail::kFilmChunk);
    if (!spec.identity_film)
      detail::film_chunk_forward(s_path, w_gamma, b_gamma, w_beta, b_beta, spec.slope, lo, hi,
                                 gbuf, bbuf);
    for (int64_t p = lo; p < hi; ++p) {
      const double w = (*spec.weight)[p];
      const double* hu = h_prev.data() + (*spec.u_idx)[p] * dh;
      double* dst = ctx + (*spec.seg)[p] * dh;
      if (spec.identity_film) {
        for (int64_t j = 0; j < dh; ++j) dst[j] += w * hu[j];
      } else {
        const double* gp = gbuf.data() + (p - lo) * dh;
        const double* bp = bbuf.data() + (p - lo) * dh;
        double gn = 0.0, bn = 0.0;
#pragma omp simd reduction(+ : gn, bn)
        for (int64_t j = 0; j < dh; ++j) {
          dst[j] += w * ((gp[j] + 1.0) * hu[j] + bp[j]);
          gn += gp[j] * gp[j];
          bn += bp[j] * bp[j];
        }
        const double cnt = (*spec.mult)[p];
        gamma_sum += cnt * std::sqrt(gn);
        beta_sum += cnt * std::sqrt(bn);
        mult_total += cnt;
      }
    }
  }
  for (int64_t t = 0; t < n_tgt; ++t) {
    const double inv = (*spec.inv_count)[t];
    for (int64_t j = 0; j < dh; ++j) ctx[t * dh + j] *= inv;
  }

  out.gamma_norm_sum = Tensor::scalar(gamma_sum);
  out.beta_norm_sum = Tensor::scalar(beta_sum);
  if (mult_total > 0.0) {
    out.mean_gamma_norm = gamma_sum / mult_total;
    out.mean_beta_norm = beta_sum / mult_total;
  }

  if (track(tape, {s_path, h_prev, w_gamma, b_gamma, w_beta, b_beta})) {
    out.context.set_requires_grad(true);
    if (!spec.identity_film) {
      out.gamma_norm_sum.set_requires_grad(true);
      out.beta_norm_sum.set_requires_grad(true);
    }
    Tensor context = out.context, gns = out.gamma_norm_sum, bns = out.beta_norm_sum;
    tape->record([s_path, h_prev, w_gamma, b_gamma, w_beta, b_beta, spec, context, gns, bns, m,
                  dh, n_tgt]() mutable {
      const double* dctx = context.grad();
      const double dgs = gns.has_grad() ? gns.grad()[0] : 0.0;
      const double dbs = bns.has_grad() ? bns.grad()[0] : 0.0;
      const double slope = spec.slope;
      const int64_t ds = s_path.cols();

      if (h_prev.requires_grad()) {
        double* gh = h_prev.grad();
        for (int64_t t = 0; t < n_tgt; ++t) {
          const double inv = (*spec.inv_count)[t];
          double* dst = gh + (*spec.self_idx)[t] * dh;
          const double* src = dctx + t * dh;
          for (int64_t j = 0; j < dh; ++j) dst[j] += inv * src[j];
        }
      }

      const bool need_h_grad = h_prev.requires_grad();
      const bool need_norm_grad = dgs != 0.0 || dbs != 0.0;
      std::vector<double> gbuf, bbuf, dgammab, dbetab, bias_g, bias_b;
      if (!spec.identity_film) {
        const int64_t c0 = std::min(m, detail::kFilmChunk);
        dgammab.resize(c0 * dh);
        dbetab.resize(c0 * dh);
        bias_g.assign(dh, 0.0);
        bias_b.assign(dh, 0.0);
      }
      for (int64_t lo = 0; lo < m; lo += detail::kFilmChunk) {
        const int64_t hi = std::min(m, lo + detail::kFilmChunk);
        const int64_t c = hi - lo;
        if (!spec.identity_film)
          detail::film_chunk_forward(s_path, w_gamma, b_gamma, w_beta, b_beta, slope, lo, hi,
                                     gbuf, bbuf);
        for (int64_t p = lo; p < hi; ++p) {
          const int64_t t = (*spec.seg)[p];
          const double w = (*spec.weight)[p] * (*spec.inv_count)[t];
          const double* g = dctx + t * dh;
          const double* hu = h_prev.data() + (*spec.u_idx)[p] * dh;
          if (spec.identity_film) {
            if (need_h_grad) {
              double* dh_u = h_prev.grad() + (*spec.u_idx)[p] * dh;
              for (int64_t j = 0; j < dh; ++j) dh_u[j] += w * g[j];
            }
            continue;
          }
          const double* gp = gbuf.data() + (p - lo) * dh;
          const double* bp = bbuf.data() + (p - lo) * dh;
          double* dgp = dgammab.data() + (p - lo) * dh;
          double* dbp = dbetab.data() + (p - lo) * dh;

          double gcoef = 0.0, bcoef = 0.0;
          if (need_norm_grad) {
            double gn = 0.0, bn = 0.0;
#pragma omp simd reduction(+ : gn, bn)
            for (int64_t j = 0; j < dh; ++j) {
              gn += gp[j] * gp[j];
              bn += bp[j] * bp[j];
            }
            const double cnt = (*spec.mult)[p];
            gcoef = gn > 0.0 ? dgs * cnt / std::sqrt(gn) : 0.0;
            bcoef = bn > 0.0 ? dbs * cnt / std::sqrt(bn) : 0.0;
          }

          // One fused pass: adjoint of the modulation plus the norm terms,
          // through the activation (gamma > 0 iff its pre-activation is).
#pragma omp simd
          for (int64_t j = 0; j < dh; ++j) {
            const double wg = w * g[j];
            double dg = wg * hu[j] + gcoef * gp[j];
            double db = wg + bcoef * bp[j];
            if (gp[j] <= 0.0) dg *= slope;
            if (bp[j] <= 0.0) db *= slope;
            dgp[j] = dg;
            dbp[j] = db;
            bias_g[j] += dg;
            bias_b[j] += db;
          }
          if (need_h_grad) {
            double* dh_u = h_prev.grad() + (*spec.u_idx)[p] * dh;
#pragma omp simd
            for (int64_t j = 0; j < dh; ++j) dh_u[j] += w * g[j] * (gp[j] + 1.0);
          }
        }
        if (spec.identity_film) continue;

        if (w_gamma.requires_grad())
          linalg::gemm(true, false, dh, ds, c, 1.0, dgammab.data(), dh, s_path.data() + lo * ds,
                       ds, 1.0, w_gamma.grad(), ds);
        if (w_beta.requires_grad())
          linalg::gemm(true, false, dh, ds, c, 1.0, dbetab.data(), dh, s_path.data() + lo * ds,
                       ds, 1.0, w_beta.grad(), ds);
        if (s_path.requires_grad()) {
          double* gs = s_path.grad() + lo * ds;
          linalg::gemm(false, false, c, ds, dh, 1.0, dgammab.data(), dh, w_gamma.data(), ds, 1.0,
                       gs, ds);
          linalg::gemm(false, false, c, ds, dh, 1.0, dbetab.data(), dh, w_beta.data(), ds, 1.0,
                       gs, ds);
        }
      }
      if (!spec.identity_film) {
        if (b_gamma.requires_grad()) {
          double* gb = b_gamma.grad();
          for (int64_t j = 0; j < dh; ++j) gb[j] += bias_g[j];
        }
        if (b_beta.requires_grad()) {
          double* gb = b_beta.grad();
          for (int64_t j = 0; j < dh; ++j) gb[j] += bias_b[j];
        }
      }
    });
  }
  return out;
}

}  // namespace lhgnn::ops
