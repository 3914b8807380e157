#pragma once

#include <cstdint>

#include "dasf/types.hpp"

namespace dasf {

// Zero-mean stationary Gaussian model over shared latent sources s ~ N(0, I):
//   y(t) = mix_y s(t) + n_y(t),  v(t) = mix_v s(t) + n_v(t),  d(t) = mix_d s(t) + n_d(t).
// v (a second network-wide signal) and d (a low-dimensional target) are optional;
// leave the corresponding matrices empty. Noise covariances must be symmetric
// positive definite.
struct SignalModel {
  Matrix mix_y;    // M x S
  Matrix noise_y;  // M x M
  Matrix mix_v;    // M x S or empty
  Matrix noise_v;  // M x M or empty
  Matrix mix_d;    // D x S or empty
  Matrix noise_d;  // D x D or empty

  bool has_v() const { return mix_v.size() > 0; }
  bool has_d() const { return mix_d.size() > 0; }
  void validate() const;
};

// Second-order statistics consumed by the solvers. Empty fields are unused by the
// problem at hand. B/A/Gamma are deterministic problem data carried alongside the
// covariances so that localized instances stay self-contained: B is a steering-type
// matrix, A its response target, and Gamma the metric of quadratic-norm terms
// (identity at network scope, a Gram matrix after compression).
struct StatisticsSet {
  Matrix R_yy;
  Matrix R_vv;
  Matrix R_yv;
  Matrix R_yd;
  Matrix R_dd;
  Matrix B;
  Matrix A;
  Matrix Gamma;
};

struct SampleBatch {
  Matrix y;  // N x M
  Matrix v;  // N x M or empty
  Matrix d;  // N x D or empty
  Index size() const { return y.rows(); }
};

// Closed-form covariances of the model; exactly symmetric. Throws on a noise
// covariance that is not positive definite.
StatisticsSet exact_statistics(const SignalModel& m);

// N i.i.d. samples, deterministic for a fixed (model, N, seed).
SampleBatch sample_batch(const SignalModel& m, int N, std::uint64_t seed);

// Plain sample averages (the model is zero-mean, so no mean subtraction), with
// square blocks symmetrized.
StatisticsSet estimate_statistics(const SampleBatch& batch);

}  // namespace dasf
