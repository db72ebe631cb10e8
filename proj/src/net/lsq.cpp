#include "hmac/net.hpp"

#include <cmath>

namespace hmac::net {

namespace {

constexpr double kRankTolerance = 1e-12;

void validate(const LsqProblem& prob) {
  if (prob.design.rows() < 1 || prob.design.cols() < 1) {
    throw std::invalid_argument("solve_lsq: design matrix must be at least 1x1");
  }
  if (prob.target.size() != prob.design.rows()) {
    throw std::invalid_argument("solve_lsq: target length does not match design rows");
  }
  if (!(prob.damping >= 0.0)) throw std::invalid_argument("solve_lsq: damping must be >= 0");
  if (!(prob.clip_gamma > 0.0)) throw std::invalid_argument("solve_lsq: clip_gamma must be > 0");
  if (!prob.design.allFinite() || !prob.target.allFinite()) {
    throw NumericalError("solve_lsq: non-finite problem data");
  }
}

Eigen::VectorXd clip(Eigen::VectorXd a, double gamma) {
  const double norm = a.norm();
  if (norm > gamma) a *= gamma / norm;
  return a;
}

Eigen::MatrixXd solve_normal(const Eigen::MatrixXd& normal, const Eigen::MatrixXd& rhs,
                             double damping) {
  Eigen::MatrixXd lhs = normal;
  lhs.diagonal().array() += damping;
  if (damping == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lhs, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    const double bottom = eig.eigenvalues().minCoeff();
    if (!(top > 0.0) || bottom <= kRankTolerance * top) {
      throw RankDeficientError("solve_lsq: normal equations are singular and damping is 0");
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(lhs);
  if (llt.info() != Eigen::Success) {
    throw RankDeficientError("solve_lsq: normal matrix is not positive definite");
  }
  return llt.solve(rhs);
}

}  // namespace

Eigen::VectorXd solve_lsq(const LsqProblem& prob) {
  validate(prob);
  const Eigen::MatrixXd normal = prob.design.transpose() * prob.design;
  const Eigen::VectorXd rhs = prob.design.transpose() * prob.target;
  return solve_normal(normal, rhs, prob.damping).col(0);
}

Eigen::VectorXd solve_lsq_clipped(const LsqProblem& prob) {
  return clip(solve_lsq(prob), prob.clip_gamma);
}

Eigen::MatrixXd fit_axis_coefficients(const Eigen::MatrixXd& features,
                                      const Eigen::MatrixXd& targets, double damping,
                                      double clip_gamma) {
  if (features.cols() != targets.cols()) {
    throw std::invalid_argument("fit_axis_coefficients: sample count mismatch");
  }
  if (features.cols() < 1 || features.rows() < 1) {
    throw std::invalid_argument("fit_axis_coefficients: empty problem");
  }
  if (!(clip_gamma > 0.0)) throw std::invalid_argument("fit_axis_coefficients: clip_gamma <= 0");
  if (!(damping >= 0.0)) throw std::invalid_argument("fit_axis_coefficients: damping < 0");
  if (!features.allFinite() || !targets.allFinite()) {
    throw NumericalError("fit_axis_coefficients: non-finite data");
  }
  // Same design for every axis: factor once, solve one right-hand side per axis.
  const Eigen::MatrixXd normal = features * features.transpose();
  const Eigen::MatrixXd rhs = features * targets.transpose();
  Eigen::MatrixXd coeffs = solve_normal(normal, rhs, damping);
  for (Eigen::Index j = 0; j < coeffs.cols(); ++j) coeffs.col(j) = clip(coeffs.col(j), clip_gamma);
  return coeffs;
}

}  // namespace hmac::net
