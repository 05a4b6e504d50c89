#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pinnkit/error.hpp"
#include "pinnkit/functional.hpp"
#include "pinnkit/geometry.hpp"
#include "pinnkit/grad.hpp"
#include "pinnkit/graph.hpp"
#include "pinnkit/ops.hpp"
#include "pinnkit/random.hpp"
#include "pinnkit/tensor.hpp"

namespace pinnkit {

struct TrainConfig {
  std::size_t max_iter = 1000;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  /// Redraw non-fixed domains every this many iterations; 0 keeps the
  /// first draw for the whole run.
  std::size_t resample_every = 1;
  std::size_t log_every = 100;
  /// Step size at optimizer step k is lr * lr_decay^(k / lr_decay_steps).
  double lr_decay = 1.0;
  std::size_t lr_decay_steps = 1000;

  double lr_at(long step) const {
    return lr * std::pow(lr_decay, static_cast<double>(step) / static_cast<double>(lr_decay_steps));
  }

  void validate() const {
    if (max_iter < 1) throw ContractError("TrainConfig: max_iter must be >= 1");
    if (!(lr > 0)) throw ContractError("TrainConfig: lr must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
      throw ContractError("TrainConfig: betas must lie in [0, 1)");
    }
    if (log_every < 1) throw ContractError("TrainConfig: log_every must be >= 1");
    if (!(lr_decay > 0 && lr_decay <= 1) || lr_decay_steps < 1) {
      throw ContractError("TrainConfig: lr_decay must lie in (0, 1] with lr_decay_steps >= 1");
    }
  }
};

struct LossReport {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> per_domain;
  std::vector<std::pair<std::string, double>> parameters_of_interest;

  double domain(const std::string& name) const {
    for (const auto& [n, v] : per_domain)
      if (n == name) return v;
    throw ContractError("LossReport: no domain '" + name + "'");
  }
  double parameter(const std::string& name) const {
    for (const auto& [n, v] : parameters_of_interest)
      if (n == name) return v;
    throw ContractError("LossReport: no parameter '" + name + "'");
  }
};

// ============================================================================
// Loss
// ============================================================================

/// sigma * sum_j lambda_j * area_j * rho(pred_j - target_j), rho = square or abs.
inline Tensor domain_loss(LossKind kind, const Tensor& pred, const Tensor& target,
                          const Tensor& lambda, const Tensor& area, double sigma) {
  const std::size_t n = pred.rows();
  for (const Tensor* t : {&target, &lambda, &area}) {
    if (t->rows() != n || t->cols() != 1 || pred.cols() != 1) {
      throw DimensionError("domain_loss: expected N x 1 columns, got " + pred.shape_str() +
                           " and " + t->shape_str());
    }
  }
  const Tensor r = pred - target;
  const Tensor rho = kind == LossKind::square ? square(r) : abs(r);
  return scale(sum(lambda * area * rho), sigma);
}

namespace detail {

inline Tensor resolve_target(const DataNode& data, const VarKey& key, const Target& target,
                             const Env& env, const SampleBatch& batch) {
  const std::size_t n = batch.size();
  if (const auto* v = std::get_if<double>(&target)) return Tensor::filled(n, 1, *v);
  if (const auto* e = std::get_if<Expr>(&target)) {
    NoGradGuard off;
    Env coords;
    for (const auto& s : data.symbols) coords[VarKey(s, {})] = env.at(VarKey(s, {})).detach();
    return eval(*e, coords, n).detach();
  }
  const auto& col = std::get<ColumnRef>(target).name;
  auto it = batch.columns.find(col);
  if (it == batch.columns.end()) {
    throw ContractError(data.name + ": target of " + key.str() + " reads missing column '" + col + "'");
  }
  return it->second;
}

}  // namespace detail

/// One domain's contribution: residual fits of every constraint, or the
/// weighted functional for functional domains.
inline Tensor domain_term(const DataNode& data, const Pipeline& pipeline, const SampleBatch& batch) {
  const Env env = evaluate(pipeline, batch);
  if (data.functional) return scale(weighted_integral(*data.functional, env, batch.area), data.sigma);

  Tensor lambda = Tensor::filled(batch.size(), 1, 1.0);
  if (data.lambda_column) {
    auto it = batch.columns.find(*data.lambda_column);
    if (it == batch.columns.end()) {
      throw ContractError(data.name + ": missing lambda column '" + *data.lambda_column + "'");
    }
    lambda = it->second;
  }
  Tensor total;
  for (const auto& [key, target] : data.constraints) {
    auto it = env.find(key);
    if (it == env.end()) {
      throw UnreachableTargetError(data.name + ": pipeline did not produce '" + key.str() + "'");
    }
    const Tensor t = detail::resolve_target(data, key, target, env, batch);
    const Tensor term = domain_loss(data.loss, it->second, t, lambda, batch.area, data.sigma);
    total = total.defined() ? total + term : term;
  }
  return total.defined() ? total : Tensor::scalar(0.0);
}

/// A data node paired with its pipeline and current batch.
struct DomainView {
  const DataNode* data;
  const Pipeline* pipeline;
  const SampleBatch* batch;
};

struct LossTerms {
  Tensor total;
  LossReport report;
};

/// Sum of all domain terms, in domain order.
inline LossTerms total_loss(const std::vector<DomainView>& domains) {
  if (domains.empty()) throw ContractError("total_loss: no domains");
  LossTerms out;
  for (const auto& d : domains) {
    Tensor term;
    try {
      term = domain_term(*d.data, *d.pipeline, *d.batch);
    } catch (Error& e) {
      e.add_context(d.data->name);
      throw;
    }
    out.report.per_domain.emplace_back(d.data->name, term.item());
    out.report.total += term.item();
    out.total = out.total.defined() ? out.total + term : term;
  }
  return out;
}

// ============================================================================
// Adam
// ============================================================================

struct AdamState {
  long step = 0;
  std::vector<std::vector<double>> m, v;
};

/// One bias-corrected Adam update. Parameters are replaced by fresh leaves.
inline void adam_step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
                      AdamState& state, const TrainConfig& cfg, long iteration = 0) {
  if (grads.size() != params.size()) throw DimensionError("adam_step: one gradient per parameter");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor->size(), 0.0);
      state.v.emplace_back(p.tensor->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].tensor->size() || state.m[i].size() != grads[i].size()) {
      throw DimensionError("adam_step: shape mismatch for " + params[i].name);
    }
    for (double g : grads[i].values()) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradientError("non-finite gradient for " + params[i].name, iteration);
      }
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double lr = cfg.lr_at(state.step - 1);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    auto w = p.to_vector();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto g = grads[i].values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
    p = Tensor(p.rows(), p.cols(), std::move(w)).requires_grad();
  }
}

// ============================================================================
// Training loop
// ============================================================================

/// Mutable view of a run handed to callbacks.
struct TrainContext {
  std::vector<DataNode>& data;
  std::vector<Pipeline>& pipelines;
  std::vector<SampleBatch>& batches;
  const std::vector<CompNode>& nodes;
  const TrainConfig& config;

  std::size_t domain_index(const std::string& name) const {
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data[i].name == name) return i;
    throw ContractError("no data node named '" + name + "'");
  }
};

struct Callback {
  std::function<void(TrainContext&)> on_train_start;
  std::function<void(const std::string& domain, const SampleBatch&)> on_sample;
  std::function<void(std::size_t iter, const LossReport&, TrainContext&)> on_iteration_end;
  std::function<void(TrainContext&)> on_train_end;
};

struct TrainResult {
  std::vector<std::pair<std::size_t, LossReport>> history;
  LossReport final;
  AdamState optimizer;
};

namespace detail {

inline std::vector<std::pair<std::string, double>> parameter_values(const std::vector<CompNode>& nodes) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& n : nodes)
    if (n.kind() == NodeKind::parameter) out.emplace_back(n.name(), n.value());
  return out;
}

}  // namespace detail

/// Minimizes the summed domain losses with Adam. Iteration i evaluates the
/// loss at the current parameters, then steps; history[i] holds that loss.
inline TrainResult train(std::vector<DataNode>& data, const std::vector<CompNode>& nodes,
                         const TrainConfig& cfg, const std::vector<Callback>& callbacks = {},
                         AdamState initial_state = {}) {
  cfg.validate();
  if (data.empty()) throw ContractError("train: no data nodes");
  std::vector<Pipeline> pipelines;
  for (const auto& d : data) pipelines.push_back(build_pipeline(d, nodes));
  std::vector<SampleBatch> base(data.size()), batches(data.size());
  TrainContext ctx{data, pipelines, batches, nodes, cfg};

  const auto params = trainable_parameters(nodes);
  TrainResult result;
  result.optimizer = std::move(initial_state);

  for (const auto& cb : callbacks)
    if (cb.on_train_start) cb.on_train_start(ctx);

  for (std::size_t iter = 0; iter < cfg.max_iter; ++iter) {
    for (std::size_t d = 0; d < data.size(); ++d) {
      const bool due = iter == 0 || (!data[d].fixed && cfg.resample_every > 0 &&
                                     iter % cfg.resample_every == 0);
      if (due) {
        const auto seed = mix_seed(mix_seed(cfg.seed, d), iter);
        base[d] = data[d].sampler(data[d].count, seed);
        for (const auto& cb : callbacks)
          if (cb.on_sample) cb.on_sample(data[d].name, base[d]);
      }
      batches[d] = data[d].extra.size() ? concat(base[d], data[d].extra) : base[d];
    }

    std::vector<DomainView> views;
    for (std::size_t d = 0; d < data.size(); ++d) views.push_back({&data[d], &pipelines[d], &batches[d]});
    auto terms = total_loss(views);
    terms.report.parameters_of_interest = detail::parameter_values(nodes);
    if (!std::isfinite(terms.report.total)) {
      throw NonFiniteGradientError("non-finite loss", static_cast<long>(iter));
    }
    if (!params.empty()) {
      std::vector<Tensor> wrt;
      for (const auto& p : params) wrt.push_back(*p.tensor);
      const auto grads = grad(terms.total, wrt);
      adam_step(params, grads, result.optimizer, cfg, static_cast<long>(iter));
    }
    if (iter % cfg.log_every == 0 || iter + 1 == cfg.max_iter) {
      result.history.emplace_back(iter, terms.report);
    }
    result.final = terms.report;
    for (const auto& cb : callbacks)
      if (cb.on_iteration_end) cb.on_iteration_end(iter, terms.report, ctx);
  }
  result.final.parameters_of_interest = detail::parameter_values(nodes);

  for (const auto& cb : callbacks)
    if (cb.on_train_end) cb.on_train_end(ctx);
  return result;
}

// ============================================================================
// Adaptive resampling
// ============================================================================

/// Indices of the k largest values, largest first; ties keep index order.
inline std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  if (k > values.size()) throw ContractError("top_k_indices: k exceeds candidate count");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  idx.resize(k);
  return idx;
}

struct ResampleRecord {
  std::size_t iter;
  SampleBatch candidates;
  std::vector<double> magnitudes;
  std::vector<std::size_t> selected;
};

/// Every `every` iterations, draws m fresh points for `domain`, ranks them
/// by |residual_key| and appends the top k to the domain's kept points.
/// Each invocation is appended to `log` when given.
inline Callback adaptive_resample(std::string domain, std::size_t m, std::size_t k,
                                  VarKey residual_key, std::size_t every,
                                  std::shared_ptr<std::vector<ResampleRecord>> log = nullptr) {
  if (k > m) throw ContractError("adaptive_resample: k must not exceed m");
  if (every < 1) throw ContractError("adaptive_resample: every must be >= 1");
  Callback cb;
  cb.on_iteration_end = [=](std::size_t iter, const LossReport&, TrainContext& ctx) {
    if ((iter + 1) % every != 0) return;
    const std::size_t d = ctx.domain_index(domain);
    auto& node = ctx.data[d];
    const auto seed = mix_seed(mix_seed(ctx.config.seed, 0x5eed0000u + d), iter);
    SampleBatch cand = node.sampler(m, seed);
    std::vector<double> mags(cand.size());
    {
      const Env env = evaluate(ctx.pipelines[d], cand);
      auto it = env.find(residual_key);
      if (it == env.end()) {
        throw UnreachableTargetError(domain + ": no '" + residual_key.str() + "' to rank by");
      }
      for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = std::abs(it->second[i]);
    }
    auto chosen = top_k_indices(mags, std::min(k, cand.size()));
    node.extra = concat(node.extra, select(cand, chosen));
    if (log) log->push_back({iter, std::move(cand), std::move(mags), std::move(chosen)});
  };
  return cb;
}

}  // namespace pinnkit
