#pragma once

#include <cmath>
#include <vector>

#include "lhgnn/model.hpp"
#include "lhgnn/ops.hpp"

namespace lhgnn {

// Pairwise link encoding, batched over rows: s_ab = tanh(S_b W^T + S_a U^T + b).
// Asymmetric in (a,b) unless W == U.
inline Tensor encode_link(Tape* tape, const ModelParams& params, Tensor s_a, Tensor s_b) {
  Tensor wb = ops::matmul(tape, s_b, params.w_link, false, true);
  Tensor ua = ops::matmul(tape, s_a, params.u_link, false, true);
  return ops::tanh(tape, ops::add(tape, ops::add(tape, wb, ua), params.b_link));
}

// Translational distance rows: d_i = ||h_x + s_xy - h_y||_2.
inline Tensor translation_distance(Tape* tape, Tensor h_x, Tensor h_y, Tensor s_xy) {
  return ops::rows_l2_norm(tape, ops::add(tape, ops::sub(tape, h_x, h_y), s_xy));
}

inline Tensor translation_distance(Tape* tape, Tensor h_x, Tensor h_y) {
  return ops::rows_l2_norm(tape, ops::sub(tape, h_x, h_y));
}

// Candidate-link score used by the ranking evaluation; higher is better and
// 0 is a perfect translation.
inline double score_link(const double* h_x, const double* h_y, const double* s_xy, int64_t d) {
  double acc = 0.0;
  for (int64_t j = 0; j < d; ++j) {
    const double r = h_x[j] + (s_xy ? s_xy[j] : 0.0) - h_y[j];
    acc += r * r;
  }
  return -std::sqrt(acc);
}

// Single-pair link encoding against raw rows (evaluation path, no tape).
inline void encode_link_row(const ModelParams& params, const double* s_a, const double* s_b,
                            double* out) {
  const int64_t dh = params.w_link.rows(), ds = params.w_link.cols();
  for (int64_t i = 0; i < dh; ++i) {
    double acc = params.b_link.data()[i];
    const double* w = params.w_link.data() + i * ds;
    const double* u = params.u_link.data() + i * ds;
    for (int64_t j = 0; j < ds; ++j) acc += w[j] * s_b[j] + u[j] * s_a[j];
    out[i] = std::tanh(acc);
  }
}

// Triplet margin loss, Eq-style: mean over the batch of
// max(d(a,b) - d(a,c) + alpha, 0), with the pairwise encoding applied to the
// negative pair as well. Under kNoLinkEncoder / kNeither the pairwise terms
// are zero in training and testing alike.
inline Tensor task_loss(Tape* tape, const ModelParams& params, const ForwardOut& fwd,
                        const BatchPlan& plan, const std::vector<Triplet>& triplets, double alpha,
                        Variant variant) {
  if (triplets.empty()) throw ContractError("task_loss: empty triplet batch");
  const int64_t t = static_cast<int64_t>(triplets.size());

  auto ia = std::make_shared<std::vector<int64_t>>(t);
  auto ib = std::make_shared<std::vector<int64_t>>(t);
  auto ic = std::make_shared<std::vector<int64_t>>(t);
  auto sa = std::make_shared<std::vector<int64_t>>(t);
  auto sb = std::make_shared<std::vector<int64_t>>(t);
  auto sc = std::make_shared<std::vector<int64_t>>(t);
  for (int64_t i = 0; i < t; ++i) {
    (*ia)[i] = plan.final_row(triplets[i].a);
    (*ib)[i] = plan.final_row(triplets[i].b);
    (*ic)[i] = plan.final_row(triplets[i].c);
    (*sa)[i] = plan.semantic_row(triplets[i].a);
    (*sb)[i] = plan.semantic_row(triplets[i].b);
    (*sc)[i] = plan.semantic_row(triplets[i].c);
  }

  Tensor h_a = ops::gather_rows(tape, fwd.h_final(), ia);
  Tensor h_b = ops::gather_rows(tape, fwd.h_final(), ib);
  Tensor h_c = ops::gather_rows(tape, fwd.h_final(), ic);

  Tensor d_ab, d_ac;
  if (uses_link_encoder(variant)) {
    Tensor s_a = ops::gather_rows(tape, fwd.s_final(), sa);
    Tensor s_b = ops::gather_rows(tape, fwd.s_final(), sb);
    Tensor s_c = ops::gather_rows(tape, fwd.s_final(), sc);
    d_ab = translation_distance(tape, h_a, h_b, encode_link(tape, params, s_a, s_b));
    d_ac = translation_distance(tape, h_a, h_c, encode_link(tape, params, s_a, s_c));
  } else {
    d_ab = translation_distance(tape, h_a, h_b);
    d_ac = translation_distance(tape, h_a, h_c);
  }

  Tensor hinge = ops::max_with_zero(tape, ops::add_scalar(tape, ops::sub(tape, d_ab, d_ac), alpha));
  return ops::scale_by_scalar(tape, ops::sum(tape, hinge), 1.0 / static_cast<double>(t));
}

// FiLM search-space penalty: sum over layers and batch-realized paths of
// ||gamma_p|| + ||beta_p||. The per-layer sums come out of the aggregation op.
inline Tensor film_reg(Tape* tape, const ForwardOut& fwd) {
  Tensor total = Tensor::scalar(0.0);
  for (size_t l = 0; l < fwd.gamma_norm_sum.size(); ++l) {
    total = ops::add(tape, total, fwd.gamma_norm_sum[l]);
    total = ops::add(tape, total, fwd.beta_norm_sum[l]);
  }
  return total;
}

inline Tensor total_loss(Tape* tape, Tensor task, Tensor film, double mu) {
  if (mu < 0.0) throw ConfigError("total_loss: mu must be >= 0");
  if (mu == 0.0) return task;
  return ops::add(tape, task, ops::scale_by_scalar(tape, film, mu));
}

}  // namespace lhgnn
