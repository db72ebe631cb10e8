#pragma once

// Small dense ReLU networks trained from scratch, with spectral
// normalization and clipped damped least squares for the linear heads.

#include "hmac/common.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hmac::net {

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

class Mlp {
 public:
  Mlp() = default;

  /// Zero-initialized network. Hidden layers use ReLU, the last layer is linear.
  explicit Mlp(std::vector<int> dims, double spectral_bound = 2.0);

  /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
  static Mlp he_uniform(std::vector<int> dims, std::uint64_t seed, double spectral_bound = 2.0);

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_params() const;

  double spectral_bound() const { return spectral_bound_; }
  void set_spectral_bound(double bound);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Flattened parameters: per layer, weight (column-major) then bias.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);

  bool finite() const;

  /// Free-form key/value pairs persisted in the model file header.
  std::map<std::string, std::string> metadata;

  /// Warm-start vectors for the power iteration, one per layer (may be empty).
  std::vector<Eigen::VectorXd> power_vectors;

 private:
  std::vector<int> dims_;
  std::vector<Layer> layers_;
  double spectral_bound_ = 2.0;
};

/// Parameter-shaped gradient plus gradient with respect to the inputs
/// (one column per sample).
struct Gradients {
  std::vector<Layer> layers;
  Eigen::MatrixXd input;
  double loss = 0.0;

  static Gradients zeros_like(const Mlp& net);
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
  bool finite() const;
  Eigen::VectorXd flatten() const;
};

Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& x);

/// Column-per-sample batch forward.
Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& inputs);

/// Reverse-mode gradient of <upstream, net(x)> for one sample. ReLU'(0) = 0.
Gradients backward(const Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& upstream);

/// Summed gradient over the columns of `inputs`, upstream column j paired
/// with input column j. Columns are split into fixed-size chunks processed
/// in parallel and reduced in chunk order, so the result does not depend on
/// the number of threads.
Gradients backward_batch(const Mlp& net, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& upstream);

/// Reference for backward_batch: one backward() per column, summed in order.
Gradients backward_batch_serial(const Mlp& net, const Eigen::MatrixXd& inputs,
                                const Eigen::MatrixXd& upstream);

inline constexpr int kBatchChunk = 64;

/// theta <- theta - lr * grad, then spectral_normalize. lr = 0 is allowed.
Mlp sgd_step(const Mlp& net, const Gradients& grads, double lr);

/// Gradient step on loss + weight * ||theta - anchor||^2, where the quadratic
/// term is taken implicitly (proximal step) so arbitrarily large weights are
/// stable; then spectral_normalize.
Mlp sgd_step_anchored(const Mlp& net, const Gradients& grads, double lr,
                      const Eigen::VectorXd& anchor, double weight);

/// Rescale every layer with sigma_max(W) > bound to sigma_max = bound.
Mlp spectral_normalize(const Mlp& net);

/// Largest singular value by power iteration on W^T W. `warm` is used as the
/// starting vector when its size matches and is updated on return.
double largest_singular_value(const Eigen::MatrixXd& w, Eigen::VectorXd* warm = nullptr);

// ---------------------------------------------------------------------------
// Least squares

struct LsqProblem {
  Eigen::MatrixXd design;  // n x d
  Eigen::VectorXd target;  // n
  double damping = 1e-6;
  double clip_gamma = 10.0;
};

/// argmin ||y - Phi a||^2 + damping ||a||^2 without clipping.
Eigen::VectorXd solve_lsq(const LsqProblem& prob);

/// solve_lsq, then rescaled to norm clip_gamma when it exceeds it.
Eigen::VectorXd solve_lsq_clipped(const LsqProblem& prob);

/// Per-axis coefficients for features (d x n) and targets (3 x n): column j
/// of the result is the clipped solution for axis j.
Eigen::MatrixXd fit_axis_coefficients(const Eigen::MatrixXd& features,
                                      const Eigen::MatrixXd& targets, double damping,
                                      double clip_gamma);

// ---------------------------------------------------------------------------
// Model files

inline constexpr int kModelFormatVersion = 1;

std::string to_text(const Mlp& net);
Mlp from_text(const std::string& text);
void save_mlp(const std::string& path, const Mlp& net);
Mlp load_mlp(const std::string& path);

}  // namespace hmac::net
