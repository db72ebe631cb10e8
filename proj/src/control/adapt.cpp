#include "hmac/control.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace hmac::control {

namespace {

bool symmetric(const Eigen::MatrixXd& m, double tol) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

bool positive_definite(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double mean_diag(const Eigen::MatrixXd& m) { return m.diagonal().mean(); }

// Rows of Phi depend on the layout: 9 columns for the manageable-only state.
void check_dims(const AdaptState& a, const Eigen::MatrixXd& phi, const char* who) {
  const int n = a.size();
  if (n != kCoeffs && n != kManageableCoeffs) {
    throw std::invalid_argument(std::string(who) + ": coefficient vector must have 9 or 15 entries");
  }
  if (phi.rows() != 3 || phi.cols() != n) {
    throw std::invalid_argument(std::string(who) + ": Phi must be 3 x " + std::to_string(n));
  }
}

}  // namespace

std::vector<std::string> GainSet::validate() const {
  if (!symmetric(K, 1e-12) || !positive_definite(K)) {
    throw std::invalid_argument("GainSet: K must be symmetric positive definite");
  }
  if (!symmetric(R, 1e-12) || !positive_definite(R)) {
    throw std::invalid_argument("GainSet: R must be symmetric positive definite");
  }
  if (!Lambda_track.allFinite() || !positive_definite(0.5 * (Lambda_track + Lambda_track.transpose()))) {
    throw std::invalid_argument("GainSet: Lambda_track must be positive definite");
  }
  if (Q_m.rows() != kManageableCoeffs || Q_m.cols() != kManageableCoeffs ||
      Q_r.rows() != kLatentCoeffs || Q_r.cols() != kLatentCoeffs) {
    throw std::invalid_argument("GainSet: Q_m must be 9 x 9 and Q_r 6 x 6");
  }
  if (!symmetric(Q_m, 1e-12) || min_eigenvalue(Q_m) < -1e-12 || !symmetric(Q_r, 1e-12) ||
      min_eigenvalue(Q_r) < -1e-12) {
    throw std::invalid_argument("GainSet: Q_m and Q_r must be symmetric positive semidefinite");
  }
  if (!(lambda_m > 0.0) || !(lambda_r > 0.0)) {
    throw std::invalid_argument("GainSet: lambda_m and lambda_r must be > 0");
  }
  if (!(p0 > 0.0)) throw std::invalid_argument("GainSet: p0 must be > 0");

  std::vector<std::string> warnings;
  if (mean_diag(Q_r) >= mean_diag(Q_m)) {
    warnings.push_back("Q_r >= Q_m: the latent channel is expected to adapt more slowly");
  }
  if (lambda_r >= lambda_m) {
    warnings.push_back("lambda_r >= lambda_m: the latent channel is expected to forget more slowly");
  }
  return warnings;
}

void PidGains::validate() const {
  if (!Kp.allFinite() || !Kd.allFinite() || !Ki.allFinite()) {
    throw std::invalid_argument("PidGains: gains must be finite");
  }
  if (!(integrator_limit >= 0.0)) throw std::invalid_argument("PidGains: integrator_limit must be >= 0");
}

AdaptState AdaptState::initial(int n_coeffs, double p0) {
  if (n_coeffs != kCoeffs && n_coeffs != kManageableCoeffs) {
    throw std::invalid_argument("AdaptState: size must be 9 or 15");
  }
  AdaptState a;
  a.a_hat = Eigen::VectorXd::Zero(n_coeffs);
  a.P = p0 * Eigen::MatrixXd::Identity(n_coeffs, n_coeffs);
  return a;
}

bool AdaptState::valid() const {
  return a_hat.allFinite() && P.allFinite() && P.rows() == a_hat.size() && symmetric(P, 1e-9) &&
         positive_definite(P);
}

TrackingSignals tracking_signals(const sim::RobotState& state, const sim::TrajectoryRef& ref,
                                 const Mat3& lambda_track) {
  TrackingSignals sig;
  sig.q_tilde = state.p - ref.q_d;
  sig.q_tilde_dot = state.v - ref.qd_dot;
  sig.s = sig.q_tilde_dot + lambda_track * sig.q_tilde;
  sig.q_r_dot = ref.qd_dot - lambda_track * sig.q_tilde;
  sig.q_r_ddot = ref.qd_ddot - lambda_track * sig.q_tilde_dot;
  return sig;
}

PhiMatrix compose_phi(const Vec3& phi_m_out, const Eigen::Vector2d& phi_r_out) {
  PhiMatrix phi = PhiMatrix::Zero();
  for (int j = 0; j < 3; ++j) {
    phi.block<1, 3>(j, 3 * j) = phi_m_out.transpose();
    phi.block<1, 2>(j, kManageableCoeffs + 2 * j) = phi_r_out.transpose();
  }
  return phi;
}

Eigen::MatrixXd compose_phi_manageable(const Vec3& phi_m_out) {
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(3, kManageableCoeffs);
  for (int j = 0; j < 3; ++j) phi.block<1, 3>(j, 3 * j) = phi_m_out.transpose();
  return phi;
}

Eigen::MatrixXd feature_matrix(const net::Mlp& phi_m, const net::Mlp* phi_r, const NnInput& x,
                               bool* finite, double scale_m, double scale_r) {
  const Eigen::VectorXd fm = scale_m * net::forward(phi_m, x);
  if (fm.size() != 3) throw std::invalid_argument("feature_matrix: phi_m must have 3 outputs");
  bool ok = fm.allFinite();
  Eigen::MatrixXd phi;
  if (phi_r == nullptr) {
    phi = compose_phi_manageable(fm);
  } else {
    const Eigen::VectorXd fr = scale_r * net::forward(*phi_r, x);
    if (fr.size() != 2) throw std::invalid_argument("feature_matrix: phi_r must have 2 outputs");
    ok = ok && fr.allFinite();
    phi = compose_phi(fm, fr);
  }
  if (finite != nullptr) *finite = ok;
  return phi;
}

Vec3 composite_law(const TrackingSignals& sig, const Eigen::MatrixXd& phi,
                   const Eigen::VectorXd& a_hat, const GainSet& gains,
                   const sim::SimParams& params) {
  if (phi.rows() != 3 || phi.cols() != a_hat.size()) {
    throw std::invalid_argument("composite_law: Phi / a_hat shape mismatch");
  }
  // Explicit ordered sums: extra all-zero columns leave the result bitwise unchanged.
  Vec3 learned;
  for (int j = 0; j < 3; ++j) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < a_hat.size(); ++c) acc += phi(j, c) * a_hat(c);
    learned(j) = acc;
  }
  const double m = params.mass;
  return m * sig.q_r_ddot - m * params.gravity - gains.K * sig.s - learned;
}

namespace {

Vec3 learned_control(const sim::RobotState& state, const sim::TrajectoryRef& ref,
                     const net::Mlp& phi_m, const net::Mlp* phi_r, const AdaptState& adapt,
                     const GainSet& gains, const sim::SimParams& params, bool* fallback) {
  const TrackingSignals sig = tracking_signals(state, ref, gains.Lambda_track);
  bool ok = true;
  const Eigen::MatrixXd phi = feature_matrix(phi_m, phi_r, state.nn_input(), &ok);
  if (fallback != nullptr) *fallback = !ok;
  if (!ok) {
    return composite_law(sig, Eigen::MatrixXd::Zero(3, adapt.size()), adapt.a_hat, gains, params);
  }
  return composite_law(sig, phi, adapt.a_hat, gains, params);
}

}  // namespace

Vec3 hmac_control(const sim::RobotState& state, const sim::TrajectoryRef& ref,
                  const net::Mlp& phi_m, const net::Mlp& phi_r, const AdaptState& adapt,
                  const GainSet& gains, const sim::SimParams& params, bool* fallback) {
  if (adapt.size() != kCoeffs) throw std::invalid_argument("hmac_control: a_hat must have 15 entries");
  return learned_control(state, ref, phi_m, &phi_r, adapt, gains, params, fallback);
}

Vec3 nf_control(const sim::RobotState& state, const sim::TrajectoryRef& ref,
                const net::Mlp& phi_m, const AdaptState& adapt, const GainSet& gains,
                const sim::SimParams& params, bool* fallback) {
  if (adapt.size() != kManageableCoeffs) {
    throw std::invalid_argument("nf_control: a_hat must have 9 entries");
  }
  return learned_control(state, ref, phi_m, nullptr, adapt, gains, params, fallback);
}

AdaptState adapt_update(const AdaptState& adapt, const Eigen::MatrixXd& phi, const Vec3& s,
                        const Vec3& y, const GainSet& gains, double dt) {
  return adapt_update(adapt, phi, phi, s, y, gains, dt);
}

AdaptState adapt_update(const AdaptState& adapt, const Eigen::MatrixXd& phi_track,
                        const Eigen::MatrixXd& phi_meas, const Vec3& s, const Vec3& y,
                        const GainSet& gains, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("adapt_update: dt must be > 0");
  check_dims(adapt, phi_track, "adapt_update");
  check_dims(adapt, phi_meas, "adapt_update");
  const int n = adapt.size();
  const Eigen::VectorXd& a = adapt.a_hat;
  const Eigen::MatrixXd& P = adapt.P;
  const Mat3 r_inv = gains.R.llt().solve(Mat3::Identity());

  auto lambda_of = [&](int i) { return i < kManageableCoeffs ? gains.lambda_m : gains.lambda_r; };
  auto q_of = [&](int i, int k) {
    if (i < kManageableCoeffs && k < kManageableCoeffs) return gains.Q_m(i, k);
    if (i >= kManageableCoeffs && k >= kManageableCoeffs) {
      return gains.Q_r(i - kManageableCoeffs, k - kManageableCoeffs);
    }
    return 0.0;
  };

  // All sums run over coefficients in index order so that padding the
  // manageable-only layout with zero latent columns changes nothing.
  Vec3 err;
  for (int j = 0; j < 3; ++j) {
    double acc = 0.0;
    for (int c = 0; c < n; ++c) acc += phi_meas(j, c) * a(c);
    err(j) = acc - y(j);
  }
  Vec3 r_err;
  for (int j = 0; j < 3; ++j) {
    r_err(j) = r_inv(j, 0) * err(0) + r_inv(j, 1) * err(1) + r_inv(j, 2) * err(2);
  }
  auto p_phi_t = [&](const Eigen::MatrixXd& phi) {
    Eigen::MatrixXd b(n, 3);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (int c = 0; c < n; ++c) acc += P(i, c) * phi(j, c);
        b(i, j) = acc;
      }
    }
    return b;
  };
  const Eigen::MatrixXd b_meas = p_phi_t(phi_meas);
  const Eigen::MatrixXd b_track = &phi_meas == &phi_track ? b_meas : p_phi_t(phi_track);

  Eigen::MatrixXd br(n, 3);  // P Phi^T R^-1
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) {
      br(i, j) = b_meas(i, 0) * r_inv(0, j) + b_meas(i, 1) * r_inv(1, j) + b_meas(i, 2) * r_inv(2, j);
    }
  }

  AdaptState next = adapt;
  next.floor_triggered = false;
  next.rejected = false;
  for (int i = 0; i < n; ++i) {
    double da = -lambda_of(i) * a(i);
    for (int j = 0; j < 3; ++j) da -= b_meas(i, j) * r_err(j);
    for (int j = 0; j < 3; ++j) da += b_track(i, j) * s(j);
    next.a_hat(i) = a(i) + dt * da;
  }
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      double corr = 0.0;
      for (int j = 0; j < 3; ++j) corr += br(i, j) * b_meas(k, j);
      const double dp = -2.0 * lambda_of(i) * P(i, k) + q_of(i, k) - corr;
      next.P(i, k) = P(i, k) + dt * dp;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int k = i + 1; k < n; ++k) {
      const double m = 0.5 * (next.P(i, k) + next.P(k, i));
      next.P(i, k) = m;
      next.P(k, i) = m;
    }
  }
  if (!next.a_hat.allFinite() || !next.P.allFinite()) {
    AdaptState kept = adapt;
    kept.rejected = true;
    kept.floor_triggered = false;
    return kept;
  }
  const Eigen::MatrixXd shifted =
      next.P - kEigenFloor * Eigen::MatrixXd::Identity(n, n);
  if (!positive_definite(shifted)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(next.P);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(kEigenFloor);
    next.P = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    next.P = 0.5 * (next.P + next.P.transpose()).eval();
    next.floor_triggered = true;
  }
  return next;
}

}  // namespace hmac::control
