// Serial vs OpenMP kernels: batched backprop and per-condition collection.

#include "hmac/net.hpp"
#include "hmac/pipeline.hpp"
#include "hmac/train.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

double max_rel_diff(const hmac::net::Gradients& a, const hmac::net::Gradients& b) {
  const Eigen::VectorXd x = a.flatten(), y = b.flatten();
  return (x - y).cwiseAbs().maxCoeff() / std::max(1e-300, y.cwiseAbs().maxCoeff());
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  const int reps = quick ? 2 : 5;
  int failures = 0;
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %10s %10s %8s %12s\n", "kernel", "serial_s", "omp_s", "speedup", "max_rel_diff");

  const hmac::net::Mlp net = hmac::net::Mlp::he_uniform(hmac::train::kPhiMDims, 7);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int cols : quick ? std::vector<int>{256, 2048} : std::vector<int>{256, 2048, 16384}) {
    Eigen::MatrixXd in(hmac::kInputDim, cols), up(3, cols);
    for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = nd(rng);
    for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = nd(rng);
    hmac::net::Gradients gs, gp;
    const double ts = best_of(reps, [&] { gs = hmac::net::backward_batch_serial(net, in, up); });
    const double tp = best_of(reps, [&] { gp = hmac::net::backward_batch(net, in, up); });
    const double diff = max_rel_diff(gp, gs);
    if (!(diff < 1e-10)) ++failures;
    char name[64];
    std::snprintf(name, sizeof name, "backward_batch n=%d", cols);
    std::printf("%-28s %10.5f %10.5f %8.2f %12.3g\n", name, ts, tp, ts / tp, diff);
  }

  hmac::pipeline::CollectionPlan plan;
  plan.duration_s = quick ? 2.0 : 20.0;
  for (int k = 0; k < 3; ++k) {
    hmac::sim::DisturbanceCondition c;
    c.cond_id = k;
    c.wm.mean = hmac::Vec3(0.8 * k, 0.0, 0.0);
    plan.conditions.push_back(c);
  }
  std::vector<hmac::train::Dataset> serial(3), parallel;
  const double ts = best_of(reps, [&] {
    for (std::size_t i = 0; i < plan.conditions.size(); ++i) {
      hmac::pipeline::BuildOptions opt;
      opt.noise_sigma = plan.noise_sigma;
      opt.seed = hmac::derive_seed(5, static_cast<std::uint64_t>(plan.conditions[i].cond_id), 2);
      serial[i] = hmac::pipeline::build_dataset(hmac::pipeline::collect(plan, i, 5), plan.params,
                                                plan.conditions[i].cond_id, opt);
    }
  });
  const double tp = best_of(reps, [&] { parallel = hmac::pipeline::collect_all(plan, 5); });
  bool same = parallel.size() == serial.size();
  for (std::size_t i = 0; same && i < serial.size(); ++i) {
    same = hmac::pipeline::dataset_to_csv(serial[i]) == hmac::pipeline::dataset_to_csv(parallel[i]);
  }
  if (!same) ++failures;
  std::printf("%-28s %10.5f %10.5f %8.2f %12s\n", "collect_all (3 conditions)", ts, tp, ts / tp,
              same ? "identical" : "DIFFERENT");

  if (failures) {
    std::printf("FAIL: %d kernel(s) disagree with the serial reference\n", failures);
    return 1;
  }
  std::printf("ok\n");
  return 0;
}
