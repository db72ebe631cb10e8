#include <doctest.h>

#include "hmac/net.hpp"
#include "oracles.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace hmac;
using namespace hmac::net;

TEST_CASE("zero network outputs zero") {
  Mlp net({11, 30, 40, 30, 3});
  std::mt19937_64 rng(3);
  const Eigen::VectorXd out = forward(net, oracle::random_vector(rng, 11));
  CHECK(out.size() == 3);
  CHECK(out.norm() == 0.0);
}

TEST_CASE("representation shapes") {
  const Mlp phi_m = Mlp::he_uniform({11, 30, 40, 30, 3}, 1);
  const Mlp phi_r = Mlp::he_uniform({11, 20, 10, 2}, 2);
  CHECK(forward(phi_m, Eigen::VectorXd::Ones(11)).size() == 3);
  CHECK(forward(phi_r, Eigen::VectorXd::Ones(11)).size() == 2);
  CHECK_THROWS_AS(forward(phi_m, Eigen::VectorXd::Ones(10)), std::invalid_argument);
}

TEST_CASE("hand-computed 2-2-1 network") {
  Mlp net({2, 2, 1});
  net.layers()[0].weight << 1.0, -2.0, 0.5, 0.25;
  net.layers()[0].bias << 0.5, -1.0;
  net.layers()[1].weight << 3.0, -1.5;
  net.layers()[1].bias << 0.1;
  // x = (1, 0.25): z1 = (1 - 0.5 + 0.5, 0.5 + 0.0625 - 1) = (1, -0.4375) -> relu (1, 0)
  // y = 3 * 1 - 1.5 * 0 + 0.1
  CHECK(forward(net, Eigen::Vector2d(1.0, 0.25))(0) == doctest::Approx(3.1).epsilon(1e-12));
  // x = (-1, 2): z1 = (-1 - 4 + 0.5, -0.5 + 0.5 - 1) = (-4.5, -1) -> 0
  CHECK(std::abs(forward(net, Eigen::Vector2d(-1.0, 2.0))(0) - 0.1) <= 1e-12);
}

TEST_CASE("backward matches central finite differences on random nets") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Mlp net = oracle::random_net(rng, 4, 16);
    const Eigen::VectorXd x = oracle::random_vector(rng, net.input_dim());
    const Eigen::VectorXd up = oracle::random_vector(rng, net.output_dim());
    const Gradients g = backward(net, x, up);
    CHECK(oracle::max_relative_error(g.flatten(), oracle::finite_difference_gradient(net, x, up)) <
          1e-5);
  }
}

TEST_CASE("zero upstream gives zero gradients") {
  const Mlp net = Mlp::he_uniform({5, 7, 3}, 9);
  const Gradients g = backward(net, Eigen::VectorXd::Ones(5), Eigen::VectorXd::Zero(3));
  CHECK(g.flatten().norm() == 0.0);
  CHECK(g.input.norm() == 0.0);
}

TEST_CASE("linear net gradient is 2 (Wx - y) x^T") {
  std::mt19937_64 rng(5);
  Mlp net({4, 3});
  net.layers()[0].weight = oracle::random_matrix(rng, 3, 4);
  const Eigen::VectorXd x = oracle::random_vector(rng, 4);
  const Eigen::VectorXd y = oracle::random_vector(rng, 3);
  const Eigen::VectorXd r = net.layers()[0].weight * x - y;
  const Gradients g = backward(net, x, 2.0 * r);
  const Eigen::MatrixXd expected = 2.0 * r * x.transpose();
  CHECK((g.layers[0].weight - expected).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("parallel batch kernel agrees with the serial reference") {
  std::mt19937_64 rng(17);
  const Mlp net = Mlp::he_uniform({11, 30, 40, 30, 3}, 4);
  for (int n : {1, 63, 64, 65, 300}) {
    const Eigen::MatrixXd x = oracle::random_matrix(rng, 11, n);
    const Eigen::MatrixXd up = oracle::random_matrix(rng, 3, n);
    const Gradients fast = backward_batch(net, x, up);
    const Gradients ref = backward_batch_serial(net, x, up);
    const double scale = std::max(1.0, ref.flatten().cwiseAbs().maxCoeff());
    CHECK((fast.flatten() - ref.flatten()).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    CHECK((fast.input - ref.input).cwiseAbs().maxCoeff() <= 1e-12);
    // Forward batch equals per-column forward.
    const Eigen::MatrixXd fb = forward_batch(net, x);
    for (int j = 0; j < n; j += 17) CHECK((fb.col(j) - forward(net, x.col(j))).norm() <= 1e-12);
  }
}

TEST_CASE("sgd_step edge cases") {
  const Mlp net = Mlp::he_uniform({3, 4, 2}, 21, 100.0);
  Gradients g = backward(net, Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(2));
  CHECK(sgd_step(net, g, 0.0).parameters() == net.parameters());
  CHECK(sgd_step(net, Gradients::zeros_like(net), 0.1).parameters() == net.parameters());
  CHECK_THROWS_AS(sgd_step(net, g, -0.1), std::invalid_argument);
  g.layers[1].bias(0) = NAN;
  CHECK_THROWS_AS(sgd_step(net, g, 0.1), NumericalError);
}

TEST_CASE("sgd on a quadratic bowl decreases the loss monotonically") {
  std::mt19937_64 rng(8);
  Mlp net({4, 2}, 100.0);
  const Eigen::MatrixXd w_true = oracle::random_matrix(rng, 2, 4);
  const Eigen::MatrixXd xs = oracle::random_matrix(rng, 4, 32);
  const Eigen::MatrixXd ys = w_true * xs;
  auto loss = [&](const Mlp& m) { return (forward_batch(m, xs) - ys).squaredNorm(); };
  double prev = loss(net);
  for (int step = 0; step < 100; ++step) {
    const Eigen::MatrixXd up = 2.0 * (forward_batch(net, xs) - ys);
    net = sgd_step(net, backward_batch(net, xs, up), 1e-3);
    const double cur = loss(net);
    REQUIRE(cur < prev);
    prev = cur;
  }
}

TEST_CASE("spectral normalization") {
  Mlp net({2, 2}, 1.0);
  net.layers()[0].weight << 2.0, 0.0, 0.0, 0.5;
  const Mlp out = spectral_normalize(net);
  CHECK(std::abs(out.layers()[0].weight(0, 0) - 1.0) <= 1e-12);
  CHECK(std::abs(out.layers()[0].weight(1, 1) - 0.25) <= 1e-12);
  CHECK(out.layers()[0].weight(0, 1) == 0.0);

  Mlp small({3, 3}, 1.0);
  small.layers()[0].weight << 0.5, 0.1, 0.0, -0.2, 0.4, 0.1, 0.0, 0.3, 0.6;
  REQUIRE(oracle::sigma_max(small.layers()[0].weight) <= 1.0);
  CHECK(spectral_normalize(small).parameters() == small.parameters());

  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    Mlp big({40, 30}, 2.0);
    big.layers()[0].weight = oracle::random_matrix(rng, 30, 40);
    const Mlp n = spectral_normalize(big);
    const double s = oracle::sigma_max(n.layers()[0].weight);
    CHECK(s <= 2.0 + 1e-6);
    CHECK(s >= 2.0 - 1e-6);
  }
}

TEST_CASE("sgd steps keep every layer within the spectral bound") {
  std::mt19937_64 rng(4);
  Mlp net = Mlp::he_uniform({11, 30, 40, 30, 3}, 7, 1.5);
  for (int step = 0; step < 20; ++step) {
    const Eigen::MatrixXd x = oracle::random_matrix(rng, 11, 50);
    const Eigen::MatrixXd up = oracle::random_matrix(rng, 3, 50, 5.0);
    net = sgd_step(net, backward_batch(net, x, up), 0.05);
    for (const auto& layer : net.layers()) CHECK(oracle::sigma_max(layer.weight) <= 1.5 + 1e-6);
  }
}

TEST_CASE("anchored step with huge weight stays at the anchor") {
  const Mlp net = Mlp::he_uniform({3, 5, 2}, 3, 100.0);
  const Eigen::VectorXd anchor = net.parameters();
  const Gradients g = backward(net, Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(2));
  const Mlp moved = sgd_step_anchored(net, g, 0.1, anchor, 1e9);
  CHECK((moved.parameters() - anchor).cwiseAbs().maxCoeff() < 1e-9);
  const Mlp plain = sgd_step_anchored(net, g, 0.1, anchor, 0.0);
  CHECK(plain.parameters() == sgd_step(net, g, 0.1).parameters());
}

TEST_CASE("least squares examples") {
  LsqProblem p;
  p.design = Eigen::Matrix2d::Identity();
  p.target = Eigen::Vector2d(3.0, 4.0);
  p.damping = 0.0;
  p.clip_gamma = 10.0;
  CHECK((solve_lsq_clipped(p) - Eigen::Vector2d(3.0, 4.0)).norm() <= 1e-14);
  p.clip_gamma = 1.0;
  const Eigen::VectorXd clipped = solve_lsq_clipped(p);
  CHECK((clipped - Eigen::Vector2d(0.6, 0.8)).norm() <= 1e-14);
  CHECK(std::abs(clipped.norm() - 1.0) <= 1e-12);
}

TEST_CASE("least squares matches the pseudoinverse oracle and is optimal") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    LsqProblem p;
    p.design = oracle::random_matrix(rng, 20, 3);
    p.target = oracle::random_vector(rng, 20);
    p.damping = trial % 2 == 0 ? 0.0 : 1e-6;
    p.clip_gamma = 1e6;
    const Eigen::VectorXd a = solve_lsq(p);
    const Eigen::VectorXd ref = oracle::damped_pinv_solve(p.design, p.target, p.damping);
    CHECK((a - ref).norm() <= 1e-8 * ref.norm());
    const Eigen::VectorXd kkt =
        p.design.transpose() * (p.design * a - p.target) + p.damping * a;
    CHECK(kkt.cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("undamped rank-deficient least squares is rejected") {
  LsqProblem p;
  p.design = Eigen::MatrixXd(3, 2);
  p.design << 1, 2, 2, 4, 3, 6;
  p.target = Eigen::Vector3d(1, 2, 3);
  p.damping = 0.0;
  CHECK_THROWS_AS(solve_lsq(p), RankDeficientError);
  p.damping = 1e-6;
  CHECK(solve_lsq(p).allFinite());
}

TEST_CASE("per-axis coefficient fit") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd f = oracle::random_matrix(rng, 3, 50);
  Eigen::MatrixXd a_true(3, 3);
  a_true << 1, 0, -1, 0.5, 2, 0, -0.3, 0.1, 0.7;
  const Eigen::MatrixXd y = a_true.transpose() * f;
  const Eigen::MatrixXd a = fit_axis_coefficients(f, y, 0.0, 100.0);
  CHECK((a - a_true).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::MatrixXd c = fit_axis_coefficients(f, y, 0.0, 0.5);
  for (int j = 0; j < 3; ++j) CHECK(c.col(j).norm() <= 0.5 + 1e-12);
}

TEST_CASE("model file round trip is exact") {
  Mlp net = Mlp::he_uniform({11, 20, 10, 2}, 77, 2.0);
  net.layers()[1].bias(3) = 1.0 / 3.0;
  net.metadata["channel"] = "latent";
  net.metadata["note"] = "two words";
  const Mlp back = from_text(to_text(net));
  CHECK(back.dims() == net.dims());
  CHECK(back.parameters() == net.parameters());
  CHECK(back.spectral_bound() == net.spectral_bound());
  CHECK(back.metadata == net.metadata);

  const std::string path = (std::filesystem::temp_directory_path() / "hmac_test_model.txt").string();
  save_mlp(path, net);
  CHECK(load_mlp(path).parameters() == net.parameters());
  std::filesystem::remove(path);
}

TEST_CASE("malformed model files are rejected with line numbers") {
  const Mlp net = Mlp::he_uniform({2, 3, 1}, 1);
  std::string text = to_text(net);
  const std::string truncated = text.substr(0, text.find("layer 1"));
  try {
    (void)from_text(truncated);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 9);
  }
  std::string wrong_version = text;
  wrong_version.replace(wrong_version.find(" 1\n"), 3, " 7\n");
  CHECK_THROWS_AS(from_text(wrong_version), ParseError);
}
