#pragma once

// The four bundled problems as ready-to-train configurations, shared by
// the command-line tool and the acceptance checks.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pinnkit/checkpoint.hpp"
#include "pinnkit/error.hpp"
#include "pinnkit/functional.hpp"
#include "pinnkit/geometry.hpp"
#include "pinnkit/graph.hpp"
#include "pinnkit/solver.hpp"

namespace pinnkit::examples {

struct Options {
  std::optional<std::size_t> iters;
  std::uint64_t seed = 1;
  std::optional<LossKind> loss;
  std::optional<double> lr;
  std::optional<std::size_t> resample_every;
  /// Checkpoint to start from instead of the example's own initialization.
  std::optional<std::filesystem::path> checkpoint;
  /// Directory for intermediate files (the minimal-surface pretraining).
  std::filesystem::path out = ".";
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct Result {
  std::string name;
  TrainResult train;
  std::vector<CompNode> nodes;
  std::vector<std::pair<std::string, double>> metrics;
  /// File name -> contents, written next to train_log.csv.
  std::map<std::string, Table> tables;

  double metric(const std::string& key) const {
    for (const auto& [k, v] : metrics)
      if (k == key) return v;
    throw ContractError("no metric '" + key + "'");
  }
};

/// Data and computation nodes plus hooks around training.
struct Setup {
  std::vector<DataNode> data;
  std::vector<CompNode> nodes;
  TrainConfig config;
  std::vector<Callback> callbacks;
  /// Runs before the main training loop (e.g. pretraining).
  std::function<void(Setup&)> prepare;
  /// Fills metrics and tables after training.
  std::function<void(Setup&, Result&)> finish;
  /// Optimizer state to continue from.
  AdamState optimizer;
};

// ============================================================================
// Helpers
// ============================================================================

/// Appends constant coordinate columns to a batch.
inline SampleBatch with_constants(SampleBatch b, const std::vector<std::pair<std::string, double>>& extra) {
  const std::size_t n = b.size(), d = b.points.cols(), e = extra.size();
  std::vector<double> v(n * (d + e));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) v[i * (d + e) + j] = b.points(i, j);
    for (std::size_t j = 0; j < e; ++j) v[i * (d + e) + d + j] = extra[j].second;
  }
  b.points = Tensor(n, d + e, std::move(v));
  if (b.normals.defined()) b.normals = Tensor{};
  for (const auto& [name, value] : extra) b.symbols.push_back(name);
  return b;
}

/// Evaluates column `out` of a network on the rows of `points` without
/// recording a graph.
inline std::vector<double> predict(const MlpParams& net, const Tensor& points, std::size_t out = 0) {
  NoGradGuard off;
  const Tensor u = mlp_forward(net, points);
  std::vector<double> v(u.rows());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(i, out);
  return v;
}

inline Tensor grid2(double a0, double a1, double b0, double b1, std::size_t n) {
  std::vector<double> v;
  v.reserve(n * n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      v.push_back(a0 + (a1 - a0) * static_cast<double>(i) / static_cast<double>(n - 1));
      v.push_back(b0 + (b1 - b0) * static_cast<double>(j) / static_cast<double>(n - 1));
    }
  }
  return Tensor(n * n, 2, std::move(v));
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

inline void apply_overrides(TrainConfig& cfg, const Options& o) {
  if (o.iters) cfg.max_iter = *o.iters;
  if (o.lr) cfg.lr = *o.lr;
  if (o.resample_every) cfg.resample_every = *o.resample_every;
  cfg.seed = o.seed;
}

/// The composite of the letters I, D, R and L used by dump-geometry.
inline Geometry letters_composite() {
  auto I = Geometry::polygon({{0, 0}, {3, 0}, {3, 1}, {2, 1}, {2, 4}, {3, 4},
                              {3, 5}, {0, 5}, {0, 4}, {1, 4}, {1, 1}, {0, 1}});
  auto D = Geometry::polygon({{4, 0}, {7, 0}, {8, 1}, {8, 4}, {7, 5}, {4, 5}}) -
           Geometry::polygon({{5, 1}, {7, 1}, {7, 4}, {5, 4}});
  auto R = Geometry::polygon({{9, 0}, {10, 0}, {10, 2}, {11, 2}, {12, 0}, {13, 0},
                              {12, 2}, {13, 3}, {13, 4}, {12, 5}, {9, 5}}) -
           Geometry::rectangle({10, 3}, {12, 4});
  auto L = Geometry::polygon({{14, 0}, {17, 0}, {17, 1}, {15, 1}, {15, 5}, {14, 5}});
  return I + D + R + L;
}

// ============================================================================
// Inverse wave: recover c in u_tt = c^2 u_xx from noisy observations
// ============================================================================

inline constexpr double kWaveSpeed = 1.54;

inline double wave_exact(double x, double t) {
  return std::sin(x) * (std::sin(kWaveSpeed * t) + std::cos(kWaveSpeed * t));
}

inline Setup inverse_wave(const Options& o) {
  Setup s;
  const double L = std::numbers::pi, T = 2.0;
  const auto box = Geometry::rectangle({0, 0}, {L, T});
  auto net = std::make_shared<MlpParams>(mlp_init({2, 20, 20, 20, 1}, mix_seed(o.seed, 101), Activation::tanh));
  s.nodes = {CompNode::net("net", net, {"x", "t"}, {"u"}), CompNode::parameter("c", 1.0),
             CompNode::pde("wave", "wave_residual", "diff(u,t,2) - c^2*diff(u,x,2)")};

  DataNode obs;
  obs.name = "obs";
  obs.symbols = {"x", "t"};
  obs.count = 62;
  obs.fixed = true;
  obs.loss = o.loss.value_or(LossKind::l1);
  obs.sampler = [box](std::size_t n, std::uint64_t seed) {
    auto b = box.sample_interior(n, seed, std::nullopt, {"x", "t"});
    std::vector<double> u(n), outlier(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) u[i] = wave_exact(b.points(i, 0), b.points(i, 1));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(mix_seed(seed, 7));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < std::min<std::size_t>(10, n); ++k) {
      u[idx[k]] = 3.0;
      outlier[idx[k]] = 1.0;
    }
    b.columns["u_obs"] = Tensor::column(u);
    b.columns["outlier"] = Tensor::column(outlier);
    return b;
  };
  obs.constraints[VarKey("u", {})] = ColumnRef{"u_obs"};

  DataNode interior;
  interior.name = "interior";
  interior.symbols = {"x", "t"};
  interior.count = 200;
  interior.sampler = [box](std::size_t n, std::uint64_t seed) {
    return box.sample_interior(n, seed, std::nullopt, {"x", "t"});
  };
  interior.constraints[VarKey("wave_residual", {})] = 0.0;

  s.data = {obs, interior};
  s.config.max_iter = 6000;
  s.config.lr = 2e-3;
  s.config.log_every = 1;
  apply_overrides(s.config, o);

  auto observed = std::make_shared<SampleBatch>();
  s.callbacks.push_back(Callback{nullptr,
                                 [observed](const std::string& d, const SampleBatch& b) {
                                   if (d == "obs") *observed = b;
                                 },
                                 nullptr, nullptr});
  s.finish = [net, L, T, observed](Setup& st, Result& r) {
    const double c = st.nodes[1].value();
    const Tensor g = grid2(0, L, 0, T, 101);
    const auto u = predict(*net, g);
    Table pred{{"x", "t", "u_pred", "u_exact"}, {}};
    double max_err = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double ex = wave_exact(g(i, 0), g(i, 1));
      max_err = std::max(max_err, std::abs(u[i] - ex));
      pred.rows.push_back({g(i, 0), g(i, 1), u[i], ex});
    }
    Table obs_t{{"x", "t", "u_obs", "outlier"}, {}};
    for (std::size_t i = 0; i < observed->size(); ++i) {
      obs_t.rows.push_back({observed->points(i, 0), observed->points(i, 1),
                            observed->columns.at("u_obs")[i], observed->columns.at("outlier")[i]});
    }
    r.tables["predictions.csv"] = std::move(pred);
    r.tables["observations.csv"] = std::move(obs_t);
    r.metrics = {{"c_estimate", c}, {"abs_c_error", std::abs(c - kWaveSpeed)}, {"max_abs_error", max_err}};
  };
  return s;
}

// ============================================================================
// Allen-Cahn with periodic boundaries and adaptive resampling
// ============================================================================

inline constexpr const char* kAllenCahnResidual = "diff(u,t)-0.0001*diff(u,x,2)+5*u^3-5*u";

struct AllenCahnState {
  std::shared_ptr<std::vector<ResampleRecord>> log = std::make_shared<std::vector<ResampleRecord>>();
  double residual_at_100 = std::nan("");
  std::vector<std::pair<std::size_t, double>> residual_trace;
};

inline Setup allen_cahn(const Options& o, std::shared_ptr<AllenCahnState> state = nullptr) {
  if (!state) state = std::make_shared<AllenCahnState>();
  Setup s;
  // Coordinates are ordered (t, x).
  const auto box = Geometry::rectangle({0, -1}, {1, 1});
  auto net = std::make_shared<MlpParams>(mlp_init({2, 32, 32, 32, 1}, mix_seed(o.seed, 202), Activation::tanh));
  s.nodes = {CompNode::net("net", net, {"t", "x"}, {"u"}),
             CompNode::pde("allen_cahn", "ac_residual", kAllenCahnResidual),
             CompNode::net("left", net, {"t", "xl"}, {"ul"}),
             CompNode::net("right", net, {"t", "xr"}, {"ur"}),
             CompNode::difference("ul", "ur"),
             CompNode::pde("slope_match", "periodic_dx", "diff(ul,xl) - diff(ur,xr)")};

  DataNode interior;
  interior.name = "interior";
  interior.symbols = {"t", "x"};
  interior.count = 400;
  interior.sampler = [box](std::size_t n, std::uint64_t seed) {
    return box.sample_interior(n, seed, std::nullopt, {"t", "x"});
  };
  interior.constraints[VarKey("ac_residual", {})] = 0.0;

  DataNode initial;
  initial.name = "initial";
  initial.symbols = {"t", "x"};
  initial.count = 200;
  initial.sigma = 100.0;
  initial.sampler = [box](std::size_t n, std::uint64_t seed) {
    return box.sample_boundary(n, seed, Predicate::parse("t < 0.000001"), {"t", "x"});
  };
  initial.constraints[VarKey("u", {})] = Expr::parse("x^2*cos(pi*x)");

  DataNode periodic;
  periodic.name = "periodic";
  periodic.symbols = {"t", "xl", "xr"};
  periodic.count = 100;
  periodic.sigma = 10.0;
  periodic.sampler = [](std::size_t n, std::uint64_t seed) {
    auto b = Geometry::interval(0, 1).sample_interior(n, seed, std::nullopt, {"t"});
    b.sdf = Tensor{};
    return with_constants(std::move(b), {{"xl", -1.0}, {"xr", 1.0}});
  };
  periodic.constraints[difference_key("ul", "ur")] = 0.0;
  periodic.constraints[VarKey("periodic_dx", {})] = 0.0;

  s.data = {interior, initial, periodic};
  s.config.max_iter = 5000;
  s.config.lr = 1e-2;
  s.config.lr_decay = 0.5;
  s.config.log_every = 1;
  apply_overrides(s.config, o);

  s.callbacks.push_back(adaptive_resample("interior", 2000, 300, VarKey("ac_residual", {}), 500, state->log));

  // Mean |residual| on a fixed grid, tracked for the reduction check.
  const Tensor eval_grid = grid2(0.01, 0.99, -0.99, 0.99, 41);
  auto residual_probe = [eval_grid](const Pipeline& p) {
    SampleBatch b;
    b.symbols = {"t", "x"};
    b.points = eval_grid;
    b.area = Tensor::filled(eval_grid.rows(), 1, 1.0);
    const Env env = evaluate(p, b);
    double m = 0;
    for (double v : env.at(VarKey("ac_residual", {})).to_vector()) m += std::abs(v);
    return m / static_cast<double>(eval_grid.rows());
  };
  Callback probe;
  probe.on_iteration_end = [state, residual_probe](std::size_t iter, const LossReport&, TrainContext& ctx) {
    const bool last = iter + 1 == ctx.config.max_iter;
    if (iter == 100 || iter % 500 == 0 || last) {
      const double m = residual_probe(ctx.pipelines[0]);
      state->residual_trace.emplace_back(iter, m);
      if (iter == 100) state->residual_at_100 = m;
    }
  };
  s.callbacks.push_back(probe);

  s.finish = [net, state](Setup&, Result& r) {
    const Tensor g = grid2(0, 1, -1, 1, 101);
    const auto u = predict(*net, g);
    Table pred{{"t", "x", "u_pred"}, {}};
    for (std::size_t i = 0; i < u.size(); ++i) pred.rows.push_back({g(i, 0), g(i, 1), u[i]});
    r.tables["predictions.csv"] = std::move(pred);

    Table res{{"iter", "x", "t"}, {}};
    for (const auto& rec : *state->log) {
      for (auto i : rec.selected) {
        res.rows.push_back({static_cast<double>(rec.iter), rec.candidates.points(i, 1), rec.candidates.points(i, 0)});
      }
    }
    r.tables["resampled_points.csv"] = std::move(res);

    // Periodic mismatch on a t grid.
    const auto ts = linspace(0, 1, 101);
    std::vector<double> left, right;
    for (double t : ts) {
      left.insert(left.end(), {t, -1.0});
      right.insert(right.end(), {t, 1.0});
    }
    const auto ul = predict(*net, Tensor(ts.size(), 2, left));
    const auto ur = predict(*net, Tensor(ts.size(), 2, right));
    double gap = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) gap += std::abs(ul[i] - ur[i]);
    gap /= static_cast<double>(ts.size());

    const double final_res = state->residual_trace.empty() ? std::nan("") : state->residual_trace.back().second;
    r.metrics = {{"residual_at_100", state->residual_at_100},
                 {"residual_final", final_res},
                 {"residual_ratio", final_res / state->residual_at_100},
                 {"periodic_gap", gap},
                 {"resample_rounds", static_cast<double>(state->log->size())}};
  };
  return s;
}

// ============================================================================
// Volterra integro-differential equation y' + y = int_0^x e^{s-x} y(s) ds
// ============================================================================

inline double volterra_exact(double x) { return std::exp(-x) * std::cosh(x); }

inline Setup volterra(const Options& o) {
  Setup s;
  const auto line = Geometry::interval(0, 5);
  auto net = std::make_shared<MlpParams>(mlp_init({1, 20, 20, 1}, mix_seed(o.seed, 303), Activation::tanh));
  IntegralSpec rhs;
  rhs.output = "rhs";
  rhs.integrand = Expr::parse("exp(s-x)*fs");
  rhs.bindings.push_back(bind_net("fs", net));
  rhs.degree = 10;
  s.nodes = {CompNode::net("net", net, {"x"}, {"f"}), CompNode::pde("lhs", "lhs", "diff(f,x) + f"),
             CompNode::integral("rhs", rhs), CompNode::difference("lhs", "rhs")};

  DataNode interior;
  interior.name = "interior";
  interior.symbols = {"x"};
  interior.count = 100;
  interior.sampler = [line](std::size_t n, std::uint64_t seed) { return line.sample_interior(n, seed); };
  interior.constraints[difference_key("lhs", "rhs")] = 0.0;

  DataNode initial;
  initial.name = "initial";
  initial.symbols = {"x"};
  initial.count = 10;
  initial.sigma = 10.0;
  initial.sampler = [line](std::size_t n, std::uint64_t seed) {
    return line.sample_boundary(n, seed, Predicate::parse("x < 2.5"));
  };
  initial.constraints[VarKey("f", {})] = 1.0;

  s.data = {interior, initial};
  s.config.max_iter = 3000;
  s.config.lr = 2e-3;
  s.config.log_every = 1;
  apply_overrides(s.config, o);

  s.finish = [net](Setup&, Result& r) {
    const auto xs = linspace(0, 5, 501);
    const auto y = predict(*net, Tensor::column(xs));
    Table pred{{"x", "y_pred", "y_exact"}, {}};
    double max_err = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double ex = volterra_exact(xs[i]);
      max_err = std::max(max_err, std::abs(y[i] - ex));
      pred.rows.push_back({xs[i], y[i], ex});
    }
    r.tables["predictions.csv"] = std::move(pred);
    r.metrics = {{"max_abs_error", max_err}};
  };
  return s;
}

// ============================================================================
// Minimal surface of revolution through (-1, cosh -1) and (0.5, cosh 0.5)
// ============================================================================

inline constexpr double kSurfaceLo = -1.0, kSurfaceHi = 0.5;
inline constexpr const char* kSurfaceIntegrand = "u*sqrt(diff(u,x)^2+1)";

inline double catenoid_area() {
  auto F = [](double x) { return x / 2 + std::sinh(2 * x) / 4; };
  return F(kSurfaceHi) - F(kSurfaceLo);
}

/// Fits the straight segment between the two end points.
inline void pretrain_chord(const std::shared_ptr<MlpParams>& net, std::uint64_t seed, std::size_t iters) {
  const double y0 = std::cosh(kSurfaceLo), y1 = std::cosh(kSurfaceHi);
  const double slope = (y1 - y0) / (kSurfaceHi - kSurfaceLo);
  std::vector<CompNode> nodes{CompNode::net("net", net, {"x"}, {"u"})};
  DataNode chord;
  chord.name = "chord";
  chord.symbols = {"x"};
  chord.count = 100;
  chord.sampler = [](std::size_t n, std::uint64_t s) {
    return Geometry::interval(kSurfaceLo, kSurfaceHi).sample_interior(n, s);
  };
  chord.constraints[VarKey("u", {})] =
      Expr::binary(BinaryOp::add, Expr::number(y0),
                   Expr::binary(BinaryOp::mul, Expr::number(slope),
                                Expr::binary(BinaryOp::sub, Expr::symbol(VarKey("x", {})), Expr::number(kSurfaceLo))));
  std::vector<DataNode> data{chord};
  TrainConfig cfg;
  cfg.max_iter = iters;
  cfg.lr = 5e-3;
  cfg.seed = mix_seed(seed, 1);
  cfg.log_every = iters;
  train(data, nodes, cfg);
}

inline Setup minimal_surface(const Options& o) {
  Setup s;
  const auto line = Geometry::interval(kSurfaceLo, kSurfaceHi);
  auto net = std::make_shared<MlpParams>(mlp_init({1, 20, 20, 1}, mix_seed(o.seed, 404), Activation::tanh));
  s.nodes = {CompNode::net("net", net, {"x"}, {"u"})};

  DataNode area;
  area.name = "area";
  area.symbols = {"x"};
  area.count = 256;
  area.functional = Expr::parse(kSurfaceIntegrand);
  area.sampler = [line](std::size_t n, std::uint64_t seed) { return line.sample_interior(n, seed); };

  DataNode ends;
  ends.name = "endpoints";
  ends.symbols = {"x"};
  ends.count = 2;
  ends.sigma = 2000.0;
  // Both end points on every draw, each with unit weight.
  ends.sampler = [](std::size_t, std::uint64_t) {
    SampleBatch b;
    b.symbols = {"x"};
    b.points = Tensor(2, 1, {kSurfaceLo, kSurfaceHi});
    b.area = Tensor::filled(2, 1, 1.0);
    return b;
  };
  ends.constraints[VarKey("u", {})] = Expr::parse("cosh(x)");

  s.data = {area, ends};
  s.config.max_iter = 100000;
  s.config.lr = 2e-3;
  s.config.lr_decay = 0.97;
  s.config.log_every = 1;
  apply_overrides(s.config, o);

  auto start = std::make_shared<std::vector<double>>();
  const auto out = o.out;
  const auto checkpoint = o.checkpoint;
  const auto seed = o.seed;
  s.prepare = [net, start, out, checkpoint, seed](Setup& st) {
    const auto params = trainable_parameters(st.nodes);
    std::filesystem::path from;
    if (checkpoint) {
      from = *checkpoint;
    } else {
      pretrain_chord(net, seed, 2000);
      std::filesystem::create_directories(out);
      from = out / "pretrained.json";
      checkpoint_save(from, params);
    }
    checkpoint_load(from, params);
    *start = predict(*net, Tensor::column(linspace(kSurfaceLo, kSurfaceHi, 301)));
  };
  s.finish = [net, start, line, seed](Setup& st, Result& r) {
    const auto xs = linspace(kSurfaceLo, kSurfaceHi, 301);
    const auto u = predict(*net, Tensor::column(xs));
    Table pred{{"x", "u_start", "u_pred", "u_exact"}, {}};
    double max_err = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      max_err = std::max(max_err, std::abs(u[i] - std::cosh(xs[i])));
      pred.rows.push_back({xs[i], (*start)[i], u[i], std::cosh(xs[i])});
    }
    r.tables["predictions.csv"] = std::move(pred);
    const Pipeline p = build_pipeline(st.data[0], st.nodes);
    const double mc_area =
        monte_carlo_functional(Expr::parse(kSurfaceIntegrand), line, p, 100000, mix_seed(seed, 99)).item();
    const double exact = catenoid_area();
    r.metrics = {{"max_abs_error", max_err},
                 {"area_mc", mc_area},
                 {"area_exact", exact},
                 {"area_rel_error", std::abs(mc_area - exact) / exact},
                 {"endpoint_error_lo", std::abs(u.front() - std::cosh(kSurfaceLo))},
                 {"endpoint_error_hi", std::abs(u.back() - std::cosh(kSurfaceHi))}};
  };
  return s;
}

// ============================================================================
// Registry and artifacts
// ============================================================================

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> n{"inverse-wave", "allen-cahn", "volterra", "minimal-surface"};
  return n;
}

inline Setup make(const std::string& name, const Options& o) {
  if (name == "inverse-wave") return inverse_wave(o);
  if (name == "allen-cahn") return allen_cahn(o);
  if (name == "volterra") return volterra(o);
  if (name == "minimal-surface") return minimal_surface(o);
  throw ContractError("unknown example '" + name + "'");
}

inline Result run(Setup s, const std::string& name) {
  if (s.prepare) s.prepare(s);
  Result r;
  r.name = name;
  r.train = train(s.data, s.nodes, s.config, s.callbacks, s.optimizer);
  r.nodes = s.nodes;
  if (s.finish) s.finish(s, r);
  return r;
}

inline Result run(const std::string& name, const Options& o) {
  Setup s = make(name, o);
  // minimal-surface consumes the checkpoint in its own prepare step.
  if (o.checkpoint && !s.prepare) checkpoint_load(*o.checkpoint, trainable_parameters(s.nodes), &s.optimizer);
  return run(std::move(s), name);
}

inline std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

/// Writes `content` to `path` through a temporary file and a rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ContractError("cannot write " + tmp.string());
    out << content;
    if (!out) throw ContractError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string to_csv(const Table& t) {
  std::string s;
  for (std::size_t j = 0; j < t.header.size(); ++j) s += (j ? "," : "") + t.header[j];
  s += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) s += (j ? "," : "") + format_double(row[j]);
    s += '\n';
  }
  return s;
}

/// iter,total_loss,<domain>_loss...,<parameter>...
inline Table train_log(const TrainResult& r) {
  Table t{{"iter", "total_loss"}, {}};
  if (r.history.empty()) return t;
  for (const auto& [name, v] : r.history.front().second.per_domain) t.header.push_back(name + "_loss");
  for (const auto& [name, v] : r.history.front().second.parameters_of_interest) t.header.push_back(name);
  for (const auto& [iter, rep] : r.history) {
    std::vector<double> row{static_cast<double>(iter), rep.total};
    for (const auto& [name, v] : rep.per_domain) row.push_back(v);
    for (const auto& [name, v] : rep.parameters_of_interest) row.push_back(v);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void write_artifacts(const Result& r, const std::filesystem::path& dir,
                            const std::optional<std::filesystem::path>& save) {
  std::filesystem::create_directories(dir);
  write_atomic(dir / "train_log.csv", to_csv(train_log(r.train)));
  for (const auto& [file, table] : r.tables) write_atomic(dir / file, to_csv(table));
  checkpoint_save(save.value_or(dir / "checkpoint.json"), trainable_parameters(r.nodes), &r.train.optimizer);
}

}  // namespace pinnkit::examples
