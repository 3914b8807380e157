#include "dasf/signals.hpp"

#include <Eigen/Cholesky>
#include <random>

namespace dasf {

namespace {

Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

Matrix chol_factor(const Matrix& cov, const char* what) {
  if (cov.rows() != cov.cols()) throw Error(std::string(what) + ": covariance not square");
  if (!cov.isApprox(cov.transpose(), 1e-12)) throw Error(std::string(what) + ": covariance not symmetric");
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(std::string(what) + ": covariance not positive definite");
  return llt.matrixL();
}

Matrix gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = normal(rng);
  return out;
}

}  // namespace

void SignalModel::validate() const {
  if (mix_y.size() == 0) throw Error("signal model: mix_y required");
  const Index S = mix_y.cols();
  if (noise_y.rows() != mix_y.rows() || noise_y.cols() != mix_y.rows())
    throw Error("signal model: noise_y shape mismatch");
  if (has_v()) {
    if (mix_v.rows() != mix_y.rows() || mix_v.cols() != S) throw Error("signal model: mix_v shape mismatch");
    if (noise_v.rows() != mix_v.rows() || noise_v.cols() != mix_v.rows())
      throw Error("signal model: noise_v shape mismatch");
  }
  if (has_d()) {
    if (mix_d.cols() != S) throw Error("signal model: mix_d shape mismatch");
    if (noise_d.rows() != mix_d.rows() || noise_d.cols() != mix_d.rows())
      throw Error("signal model: noise_d shape mismatch");
  }
}

StatisticsSet exact_statistics(const SignalModel& m) {
  m.validate();
  chol_factor(m.noise_y, "exact statistics (y)");  // positive definiteness gate
  StatisticsSet s;
  s.R_yy = symmetrized(m.mix_y * m.mix_y.transpose() + m.noise_y);
  if (m.has_v()) {
    chol_factor(m.noise_v, "exact statistics (v)");
    s.R_vv = symmetrized(m.mix_v * m.mix_v.transpose() + m.noise_v);
    s.R_yv = m.mix_y * m.mix_v.transpose();
  }
  if (m.has_d()) {
    chol_factor(m.noise_d, "exact statistics (d)");
    s.R_yd = m.mix_y * m.mix_d.transpose();
    s.R_dd = symmetrized(m.mix_d * m.mix_d.transpose() + m.noise_d);
  }
  return s;
}

SampleBatch sample_batch(const SignalModel& m, int N, std::uint64_t seed) {
  m.validate();
  if (N <= 0) throw Error("sample batch: N must be positive");
  const int S = static_cast<int>(m.mix_y.cols());
  const int M = static_cast<int>(m.mix_y.rows());
  const Matrix Ly = chol_factor(m.noise_y, "sample batch (y)");
  Matrix Lv, Ld;
  if (m.has_v()) Lv = chol_factor(m.noise_v, "sample batch (v)");
  if (m.has_d()) Ld = chol_factor(m.noise_d, "sample batch (d)");

  std::mt19937_64 rng(seed);
  const Matrix latents = gaussian(N, S, rng);  // one row per sample
  SampleBatch b;
  b.y = latents * m.mix_y.transpose() + gaussian(N, M, rng) * Ly.transpose();
  if (m.has_v()) b.v = latents * m.mix_v.transpose() + gaussian(N, M, rng) * Lv.transpose();
  if (m.has_d()) {
    const int D = static_cast<int>(m.mix_d.rows());
    b.d = latents * m.mix_d.transpose() + gaussian(N, D, rng) * Ld.transpose();
  }
  return b;
}

StatisticsSet estimate_statistics(const SampleBatch& batch) {
  if (batch.y.size() == 0) throw Error("estimate: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.y.rows());
  StatisticsSet s;
  s.R_yy = symmetrized(inv_n * (batch.y.transpose() * batch.y));
  if (batch.v.size() > 0) {
    s.R_vv = symmetrized(inv_n * (batch.v.transpose() * batch.v));
    s.R_yv = inv_n * (batch.y.transpose() * batch.v);
  }
  if (batch.d.size() > 0) {
    s.R_yd = inv_n * (batch.y.transpose() * batch.d);
    s.R_dd = symmetrized(inv_n * (batch.d.transpose() * batch.d));
  }
  return s;
}

}  // namespace dasf
