#pragma once

#include <cstddef>
#include <cstdint>

#include "pinnkit/error.hpp"
#include "pinnkit/expr.hpp"
#include "pinnkit/geometry.hpp"
#include "pinnkit/graph.hpp"
#include "pinnkit/ops.hpp"

namespace pinnkit {

/// sum(area * integrand) over a batch, i.e. measure times the sample mean.
inline Tensor weighted_integral(const Expr& integrand, const Env& env, const Tensor& area) {
  return sum(eval(integrand, env, area.rows()) * area);
}

/// Monte Carlo estimate of the integral of `integrand` over a 1-D domain,
/// differentiable through the pipeline's trainable parameters.
inline Tensor monte_carlo_functional(const Expr& integrand, const Geometry& g,
                                     const Pipeline& pipeline, std::size_t n,
                                     std::uint64_t seed) {
  if (g.dim() != 1) throw DimensionError("monte_carlo_functional: geometry must be 1-D");
  SampleBatch batch = g.sample_interior(n, seed, std::nullopt, pipeline.symbols);
  const Env env = evaluate(pipeline, batch);
  return weighted_integral(integrand, env, batch.area);
}

}  // namespace pinnkit
