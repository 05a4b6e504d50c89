#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "pinnkit/error.hpp"
#include "pinnkit/expr.hpp"
#include "pinnkit/mlp.hpp"
#include "pinnkit/ops.hpp"
#include "pinnkit/tensor.hpp"

namespace pinnkit {

struct QuadRule {
  std::vector<double> nodes;    // increasing, in (-1, 1)
  std::vector<double> weights;  // positive, summing to 2
  std::size_t degree() const { return nodes.size(); }
};

/// n-point Gauss-Legendre rule on [-1, 1], exact for polynomials of degree
/// up to 2n - 1.
inline QuadRule gauss_legendre(int n) {
  if (n < 1 || n > 64) throw ContractError("gauss_legendre: need 1 <= n <= 64, got " + std::to_string(n));
  const auto un = static_cast<std::size_t>(n);
  QuadRule rule{std::vector<double>(un), std::vector<double>(un)};
  // P_n and P_n' at x by the three-term recurrence.
  auto legendre = [n](double x) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    return std::pair{p1, n * (x * p1 - p0) / (x * x - 1.0)};
  };
  for (std::size_t i = 0; i < (un + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre(x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = legendre(x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[un - 1 - i] = x;
    rule.nodes[i] = -x;
    rule.weights[i] = rule.weights[un - 1 - i] = w;
  }
  if (un % 2 == 1) rule.nodes[un / 2] = 0.0;
  return rule;
}

/// A function sampled at the quadrature abscissae under `symbol`. `net` is
/// set when the function is a network whose parameters should train.
struct Binding {
  std::string symbol;
  std::function<Tensor(const Tensor& s)> fn;
  std::shared_ptr<MlpParams> net;
};

/// Binds output column `output` of a one-input network.
inline Binding bind_net(std::string symbol, std::shared_ptr<MlpParams> net, std::size_t output = 0) {
  if (net->input_dim() != 1) throw DimensionError("bind_net: network must take one input");
  auto fn = [net, output](const Tensor& s) { return column(mlp_forward(*net, s), output); };
  return Binding{std::move(symbol), std::move(fn), std::move(net)};
}

/// Integral from a constant lower limit to a per-sample upper limit:
/// output(x) = integral_{lower}^{x} integrand(s, x, bound functions of s) ds.
struct IntegralSpec {
  std::string output;
  Expr integrand;
  std::vector<Binding> bindings;
  int degree = 10;
  double lower = 0.0;
  std::string upper_symbol = "x";
  std::string dummy_symbol = "s";
};

/// Evaluates `spec` at each row of x (N x 1). The N x n abscissa grid is
/// flattened so bound functions see a single batch.
inline Tensor integrate_variable_upper(const IntegralSpec& spec, const Tensor& x) {
  if (x.cols() != 1) throw DimensionError("integrate_variable_upper: x must be N x 1, got " + x.shape_str());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (x[i] < spec.lower) {
      throw DomainError("integrate_variable_upper: upper limit " + std::to_string(x[i]) +
                        " below lower limit " + std::to_string(spec.lower));
    }
  }
  const QuadRule rule = gauss_legendre(spec.degree);
  const std::size_t n = rule.degree(), rows = x.rows();
  std::vector<double> shifted(n);
  for (std::size_t k = 0; k < n; ++k) shifted[k] = rule.nodes[k] + 1.0;
  const Tensor half = scale(x - spec.lower, 0.5);
  const Tensor s = matmul(half, Tensor(1, n, shifted)) + spec.lower;
  const Tensor w = matmul(half, Tensor(1, n, rule.weights));

  Env env;
  env[VarKey(spec.dummy_symbol, {})] = reshape(s, rows * n, 1);
  env[VarKey(spec.upper_symbol, {})] = reshape(broadcast_cols(x, n), rows * n, 1);
  for (const auto& b : spec.bindings) {
    env[VarKey(b.symbol, {})] = b.fn(env.at(VarKey(spec.dummy_symbol, {})));
  }
  const Tensor values = reshape(eval(spec.integrand, env, rows * n), rows, n);
  return row_sum(values * w);
}

}  // namespace pinnkit
