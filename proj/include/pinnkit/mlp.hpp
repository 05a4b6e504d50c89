#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pinnkit/error.hpp"
#include "pinnkit/ops.hpp"
#include "pinnkit/random.hpp"
#include "pinnkit/tensor.hpp"

namespace pinnkit {

enum class Activation { swish, tanh };

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // 1 x out
};

/// Parameters of a fully connected network. The activation is applied
/// between layers but not after the last one.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::swish;

  std::size_t input_dim() const { return layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.back().weight.rows(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }
};

/// Glorot-uniform weights, zero biases. `dims` lists every layer width,
/// input first.
inline MlpParams mlp_init(const std::vector<std::size_t>& dims, std::uint64_t seed,
                          Activation activation = Activation::swish) {
  if (dims.size() < 2) throw ContractError("mlp_init: need at least 2 layer widths");
  for (auto d : dims) {
    if (d == 0) throw ContractError("mlp_init: zero layer width");
  }
  std::mt19937_64 rng(seed);
  MlpParams p;
  p.activation = activation;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const std::size_t in = dims[i - 1], out = dims[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (auto& v : w) v = (2.0 * uniform01(rng) - 1.0) * bound;
    p.layers.push_back({Tensor(out, in, std::move(w)).requires_grad(),
                        Tensor::zeros(1, out).requires_grad()});
  }
  return p;
}

inline Tensor activate(const Tensor& z, Activation a) {
  return a == Activation::swish ? swish(z) : tanh(z);
}

/// Forward pass for a batch of row samples X (N x d).
inline Tensor mlp_forward(const MlpParams& params, const Tensor& x) {
  if (params.layers.empty()) throw ContractError("mlp_forward: empty network");
  if (x.cols() != params.input_dim()) {
    throw DimensionError("mlp_forward: input has " + std::to_string(x.cols()) +
                         " columns, network expects " +
                         std::to_string(params.input_dim()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    h = add_row(matmul(h, transpose(l.weight)), l.bias);
    if (i + 1 < params.layers.size()) h = activate(h, params.activation);
  }
  return h;
}

}  // namespace pinnkit
