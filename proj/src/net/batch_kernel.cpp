#include "hmac/net.hpp"

#include <exception>
#include <vector>

namespace hmac::net {

namespace {

// Gradient of one contiguous chunk of columns using dense matrix products.
void chunk_gradient(const Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& upstream,
                    Eigen::Index begin, Eigen::Index count, Gradients& out,
                    Eigen::MatrixXd& input_grad) {
  const auto& layers = net.layers();
  const std::size_t n_layers = layers.size();
  std::vector<Eigen::MatrixXd> acts(n_layers + 1);
  std::vector<Eigen::MatrixXd> pre(n_layers);
  acts[0] = inputs.middleCols(begin, count);
  for (std::size_t l = 0; l < n_layers; ++l) {
    pre[l] = layers[l].weight * acts[l];
    pre[l].colwise() += layers[l].bias;
    acts[l + 1] = (l + 1 < n_layers) ? Eigen::MatrixXd(pre[l].cwiseMax(0.0)) : pre[l];
  }
  out = Gradients::zeros_like(net);
  Eigen::MatrixXd delta = upstream.middleCols(begin, count);
  for (std::size_t l = n_layers; l-- > 0;) {
    out.layers[l].weight.noalias() = delta * acts[l].transpose();
    out.layers[l].bias = delta.rowwise().sum();
    Eigen::MatrixXd back = layers[l].weight.transpose() * delta;
    if (l > 0) back = (pre[l - 1].array() > 0.0).select(back, 0.0);
    delta = std::move(back);
  }
  input_grad.middleCols(begin, count) = delta;
}

}  // namespace

Gradients backward_batch(const Mlp& net, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& upstream) {
  if (inputs.rows() != net.input_dim()) {
    throw std::invalid_argument("backward_batch: input rows do not match network input dim");
  }
  if (upstream.rows() != net.output_dim() || upstream.cols() != inputs.cols()) {
    throw std::invalid_argument("backward_batch: upstream shape mismatch");
  }
  const Eigen::Index n = inputs.cols();
  const Eigen::Index n_chunks = (n + kBatchChunk - 1) / kBatchChunk;
  Gradients total = Gradients::zeros_like(net);
  total.input.resize(net.input_dim(), n);
  if (n == 0) return total;

  std::vector<Gradients> partial(static_cast<std::size_t>(n_chunks));
  std::exception_ptr failure;
#pragma omp parallel for schedule(static) if (n_chunks > 1)
  for (Eigen::Index c = 0; c < n_chunks; ++c) {
    try {
      const Eigen::Index begin = c * kBatchChunk;
      const Eigen::Index count = std::min<Eigen::Index>(kBatchChunk, n - begin);
      chunk_gradient(net, inputs, upstream, begin, count, partial[static_cast<std::size_t>(c)],
                     total.input);
    } catch (...) {
#pragma omp critical(hmac_backward_batch)
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (auto& g : partial) total += g;
  return total;
}

}  // namespace hmac::net
