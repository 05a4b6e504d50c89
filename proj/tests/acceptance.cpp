// Acceptance gates. Prints one PASS/FAIL line per criterion; pass ids on the
// command line to run a subset.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fd_oracle.hpp"
#include "pinnkit/examples.hpp"
#include "pinnkit/grad.hpp"
#include "pinnkit/quadrature.hpp"

namespace {

using namespace pinnkit;
using pinnkit::testing::central_gradient;
using pinnkit::testing::random_tensor;
using pinnkit::testing::relative_error;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("pinnkit-acceptance-" + std::to_string(getpid())) / name;
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

Outcome autodiff_oracle() {
  Outcome o;
  double worst_param = 0, worst_d1 = 0, worst_d2 = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(5000 + trial);
    const std::size_t d = 1 + rng() % 3, depth = 1 + rng() % 3, rows = 5;
    std::vector<std::size_t> dims{d};
    for (std::size_t l = 0; l < depth; ++l) dims.push_back(2 + rng() % 49);
    dims.push_back(1);
    const auto act = rng() % 2 ? Activation::tanh : Activation::swish;
    MlpParams params = mlp_init(dims, rng(), act);
    std::vector<Tensor> xs;
    for (std::size_t j = 0; j < d; ++j) xs.push_back(random_tensor(rows, 1, rng, -1.5, 1.5));
    const Tensor w = random_tensor(rows, 1, rng);
    auto loss_of = [&](const MlpParams& p, const std::vector<Tensor>& in) {
      const Tensor u = mlp_forward(p, hcat(in));
      return mean(w * sin(u) + square(u));
    };

    std::vector<Tensor> leaves;
    for (const auto& l : params.layers) {
      leaves.push_back(l.weight);
      leaves.push_back(l.bias);
    }
    const auto grads = grad(loss_of(params, xs), leaves);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      auto f = [&](const Tensor& v) {
        NoGradGuard off;
        MlpParams q = params;
        auto& l = q.layers[k / 2];
        (k % 2 == 0 ? l.weight : l.bias) = v;
        return loss_of(q, xs).item();
      };
      worst_param = std::max(worst_param, relative_error(grads[k].to_vector(), central_gradient(f, leaves[k].detach())));
    }

    std::vector<Tensor> leaves_x;
    for (const auto& x : xs) leaves_x.push_back(x.requires_grad());
    const Tensor u = mlp_forward(params, hcat(leaves_x));
    for (std::size_t j = 0; j < d; ++j) {
      const auto d1 = input_derivative(u, leaves_x[j], 1).to_vector();
      const auto d2 = input_derivative(u, leaves_x[j], 2).to_vector();
      NoGradGuard off;
      auto shifted = [&](double h) {
        auto in = xs;
        in[j] = xs[j] + Tensor::filled(rows, 1, h);
        return mlp_forward(params, in.size() == 1 ? in[0] : hcat(in)).to_vector();
      };
      const double h1 = 1e-5, h2 = 1e-4;
      const auto p1 = shifted(h1), m1 = shifted(-h1), p2 = shifted(h2), m2 = shifted(-h2), c = shifted(0);
      std::vector<double> fd1(rows), fd2(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        fd1[i] = (p1[i] - m1[i]) / (2 * h1);
        fd2[i] = (p2[i] - 2 * c[i] + m2[i]) / (h2 * h2);
      }
      worst_d1 = std::max(worst_d1, relative_error(d1, fd1));
      worst_d2 = std::max(worst_d2, relative_error(d2, fd2));
    }
  }
  o.require(worst_param < 1e-6, "parameter gradients");
  o.require(worst_d1 < 1e-4 && worst_d2 < 1e-4, "input derivatives");
  o.detail << "max rel err: params " << worst_param << ", d1 " << worst_d1 << ", d2 " << worst_d2;
  return o;
}

// ---------------------------------------------------------------------------

Outcome quadrature_gl10() {
  Outcome o;
  const auto r = gauss_legendre(10);
  double worst = 0;
  for (int k = 0; k <= 19; ++k) {
    double q = 0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) q += r.weights[i] * std::pow(r.nodes[i], k);
    worst = std::max(worst, std::abs(q - (k % 2 ? 0.0 : 2.0 / (k + 1))));
  }
  o.require(worst < 1e-12, "monomial exactness");
  o.detail << "max abs err over t^0..t^19: " << worst;
  return o;
}

// ---------------------------------------------------------------------------

double total(const Tensor& t) {
  double s = 0;
  for (std::size_t i = 0; i < t.rows(); ++i) s += t[i];
  return s;
}

Geometry random_primitive(std::mt19937_64& rng) {
  const double cx = uniform(rng, -1, 1), cy = uniform(rng, -1, 1);
  switch (rng() % 3) {
    case 0: return Geometry::circle({cx, cy}, uniform(rng, 0.3, 1.2));
    case 1:
      return Geometry::rectangle({cx - uniform(rng, 0.2, 1), cy - uniform(rng, 0.2, 1)},
                                 {cx + uniform(rng, 0.2, 1), cy + uniform(rng, 0.2, 1)});
    default: {
      const double r = uniform(rng, 0.4, 1.2);
      return Geometry::polygon({{cx - r, cy - r}, {cx + r, cy - r}, {cx, cy + r}});
    }
  }
}

Outcome geometry_suite() {
  Outcome o;
  const auto I = Geometry::polygon({{0, 0}, {3, 0}, {3, 1}, {2, 1}, {2, 4}, {3, 4},
                                    {3, 5}, {0, 5}, {0, 4}, {1, 4}, {1, 1}, {0, 1}});
  const double h = std::sqrt(0.75);

  // Outward normals: a small step along n leaves the domain, against n enters it.
  const std::vector<Geometry> shapes{Geometry::rectangle({0, 0}, {2, 1}), Geometry::circle({1, -1}, 0.7), I,
                                     Geometry::rectangle({0, 0}, {4, 4}) - Geometry::circle({2, 2}, 1),
                                     Geometry::circle({0, 0}, 1) & Geometry::circle({1, 0}, 1),
                                     Geometry::circle({0, 0}, 1) + Geometry::circle({1, 0}, 1),
                                     examples::letters_composite()};
  std::size_t bad = 0, checked = 0;
  const double eps = 1e-6;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const auto b = shapes[s].sample_boundary(2000, 100 + s);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double x = b.points(i, 0), y = b.points(i, 1), nx = b.normals(i, 0), ny = b.normals(i, 1);
      ++checked;
      const bool unit = std::abs(std::hypot(nx, ny) - 1) < 1e-12;
      const bool out = shapes[s].sdf(std::vector<double>{x + eps * nx, y + eps * ny}) < 0;
      const bool in = shapes[s].sdf(std::vector<double>{x - eps * nx, y - eps * ny}) > 0;
      if (!(unit && out && in)) ++bad;
    }
  }
  o.require(bad == 0, "normal outwardness");
  o.detail << "normals " << checked - bad << "/" << checked << " outward; ";

  // Measures at N = 1e4 against closed forms.
  struct Measure {
    const char* what;
    double estimate, exact;
  };
  const std::size_t n = 10000;
  const auto D = Geometry::polygon({{4, 0}, {7, 0}, {8, 1}, {8, 4}, {7, 5}, {4, 5}}) -
                 Geometry::polygon({{5, 1}, {7, 1}, {7, 4}, {5, 4}});
  const std::vector<Measure> measures{
      {"square area", total(Geometry::rectangle({0, 0}, {1, 1}).sample_interior(n, 1).area), 1.0},
      {"disk area", total(Geometry::circle({0, 0}, 1).sample_interior(n, 2).area), std::numbers::pi},
      {"circle length", total(Geometry::circle({0, 0}, 1).sample_boundary(n, 3).area), 2 * std::numbers::pi},
      {"I area", total(I.sample_interior(n, 4).area), 9.0},
      {"I perimeter", total(I.sample_boundary(n, 5).area), 20.0},
      {"D area", total(D.sample_interior(n, 6).area), 13.0},
      {"holed square area", total(shapes[3].sample_interior(n, 7).area), 16.0 - std::numbers::pi},
      {"lens area", total(shapes[4].sample_interior(n, 8).area), 2 * std::acos(0.5) - h},
      {"interval length", total(Geometry::interval(0, 5).sample_interior(n, 9).area), 5.0}};
  double worst = 0;
  for (const auto& m : measures) {
    const double rel = std::abs(m.estimate - m.exact) / m.exact;
    worst = std::max(worst, rel);
    if (rel >= 0.02) o.require(false, m.what);
  }
  o.detail << "worst measure rel err " << worst << "; ";

  // CSG sign oracle.
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_primitive(rng), b = random_primitive(rng);
    const Geometry composites[] = {a + b, a & b, a - b};
    for (int i = 0; i < 200; ++i) {
      for (int j = 0; j < 200; ++j) {
        const std::vector<double> p{-2.5 + 5.0 * (i + 0.5) / 200, -2.5 + 5.0 * (j + 0.5) / 200};
        const double sa = a.sdf(p), sb = b.sdf(p);
        if (sa == 0.0 || sb == 0.0) continue;
        const bool ia = sa > 0, ib = sb > 0;
        mismatches += (composites[0].sdf(p) > 0) != (ia || ib);
        mismatches += (composites[1].sdf(p) > 0) != (ia && ib);
        mismatches += (composites[2].sdf(p) > 0) != (ia && !ib);
      }
    }
  }
  o.require(mismatches == 0, "CSG sign oracle");
  o.detail << "CSG sign mismatches " << mismatches << " over 10 composites";
  return o;
}

// ---------------------------------------------------------------------------

struct ToyNode {
  std::string out;
  std::vector<std::string> needs;
};

bool oracle_covers(const std::vector<ToyNode>& nodes, unsigned mask, const std::set<std::string>& targets) {
  const std::set<std::string> coords{"x", "t"};
  std::set<std::string> have;
  auto ok = [&](const std::string& k) {
    const auto v = VarKey::parse(k);
    if (v.partials.empty()) return coords.count(k) > 0 || have.count(k) > 0;
    if (!have.count(v.base)) return false;
    for (const auto& p : v.partials)
      if (!coords.count(p)) return false;
    return true;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!(mask >> i & 1u) || have.count(nodes[i].out)) continue;
      bool ready = true;
      for (const auto& k : nodes[i].needs) ready = ready && ok(k);
      if (ready) {
        have.insert(nodes[i].out);
        changed = true;
      }
    }
  }
  for (const auto& t : targets)
    if (!ok(t)) return false;
  return true;
}

Outcome pipeline_cases() {
  Outcome o;
  std::mt19937_64 rng(31337);
  std::size_t solvable = 0, wrong = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    std::vector<ToyNode> toys;
    std::vector<CompNode> nodes;
    for (std::size_t i = 0; i < n; ++i) {
      ToyNode t{"k" + std::to_string(rng() % (n + 1)), {}};
      std::string src = "x";
      const std::size_t deps = rng() % 3;
      for (std::size_t d = 0; d < deps; ++d) {
        const std::string k = "k" + std::to_string(rng() % (n + 1));
        const int flavor = static_cast<int>(rng() % 4);
        const std::string key = flavor == 0 ? k + "__x" : flavor == 1 ? k + "__y" : k;
        t.needs.push_back(key);
        src += " + " + key;
      }
      toys.push_back(t);
      nodes.push_back(CompNode::pde("n" + std::to_string(i), VarKey(t.out, {}), src));
    }
    // Targets are mostly keys some node produces, so many cases are solvable.
    std::set<std::string> targets{toys[rng() % n].out};
    if (rng() % 2) targets.insert(toys[rng() % n].out + "__t");
    if (rng() % 4 == 0) targets.insert("k" + std::to_string(n));
    std::set<VarKey> tkeys;
    for (const auto& t : targets) tkeys.insert(VarKey::parse(t));

    bool any = false;
    for (unsigned m = 0; m < (1u << n); ++m) any = any || oracle_covers(toys, m, targets);
    Pipeline p;
    try {
      p = build_pipeline({"x", "t"}, tkeys, nodes);
    } catch (const Error&) {
      wrong += any;
      continue;
    }
    if (!any) {
      ++wrong;
      continue;
    }
    ++solvable;
    unsigned chosen = 0;
    for (const auto& name : p.node_names()) chosen |= 1u << std::stoul(name.substr(1));
    bool ok = oracle_covers(toys, chosen, targets);
    for (std::size_t i = 0; i < n; ++i)
      if (chosen >> i & 1u) ok = ok && !oracle_covers(toys, chosen & ~(1u << i), targets);
    std::set<std::string> have{"x", "t"};
    for (const auto& node : p.nodes) {
      for (const auto& k : node.requires_keys()) ok = ok && have.count(k.base) > 0;
      for (const auto& k : node.produces()) have.insert(k.str());
    }
    const Pipeline again = build_pipeline({"x", "t"}, tkeys, nodes);
    ok = ok && again.node_names() == p.node_names() && again.plan.size() == p.plan.size();
    for (std::size_t i = 0; ok && i < p.plan.size(); ++i) {
      ok = again.plan[i].size() == p.plan[i].size();
      for (std::size_t j = 0; ok && j < p.plan[i].size(); ++j) ok = again.plan[i][j].key == p.plan[i][j].key;
    }
    wrong += !ok;
  }
  o.require(wrong == 0, "pipeline oracle");
  o.require(solvable >= 50, "generator produced too few solvable cases");
  o.detail << "200 cases, " << solvable << " solvable, " << wrong << " disagreements";
  return o;
}

// ---------------------------------------------------------------------------

Outcome inverse_wave() {
  Outcome o;
  examples::Options opts;
  opts.out = scratch_dir("inverse-wave");
  opts.loss = LossKind::l1;
  const auto l1 = examples::run("inverse-wave", opts);
  opts.loss = LossKind::square;
  const auto sq = examples::run("inverse-wave", opts);
  const double e1 = l1.metric("abs_c_error"), es = sq.metric("abs_c_error");
  const double m1 = l1.metric("max_abs_error"), ms = sq.metric("max_abs_error");
  o.require(e1 <= 0.05, "l1 |c - 1.54| <= 0.05");
  o.require(es > 0.1, "square |c - 1.54| > 0.1");
  o.require(ms > 5 * m1, "square max error > 5x l1");
  o.detail << "l1: c=" << l1.metric("c_estimate") << " max_err=" << m1 << "; square: c=" << sq.metric("c_estimate")
           << " max_err=" << ms;
  return o;
}

Outcome volterra() {
  Outcome o;
  examples::Options opts;
  opts.out = scratch_dir("volterra");
  const auto r = examples::run("volterra", opts);
  o.require(r.metric("max_abs_error") < 1e-2, "max error < 1e-2");
  o.detail << "max |y - exp(-x)cosh(x)| = " << r.metric("max_abs_error");
  return o;
}

Outcome minimal_surface() {
  Outcome o;
  examples::Options opts;
  opts.out = scratch_dir("minimal-surface");
  const auto r = examples::run("minimal-surface", opts);
  o.require(std::filesystem::exists(opts.out / "pretrained.json"), "pretrained checkpoint");
  o.require(r.metric("max_abs_error") < 5e-2, "max |u - cosh| < 5e-2");
  o.require(r.metric("area_rel_error") < 0.02, "area within 2%");
  o.require(r.metric("endpoint_error_lo") < 1e-3 && r.metric("endpoint_error_hi") < 1e-3, "endpoints < 1e-3");
  o.detail << "max_err=" << r.metric("max_abs_error") << " area=" << r.metric("area_mc") << " vs "
           << r.metric("area_exact") << " endpoints=" << r.metric("endpoint_error_lo") << ","
           << r.metric("endpoint_error_hi");
  return o;
}

// Residual of the Allen-Cahn equation by finite differences of the network.
std::vector<double> fd_allen_cahn_residual(const MlpParams& net, const Tensor& tx) {
  NoGradGuard off;
  const std::size_t n = tx.rows();
  auto at = [&](double dt, double dx) {
    std::vector<double> v(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      v[2 * i] = tx(i, 0) + dt;
      v[2 * i + 1] = tx(i, 1) + dx;
    }
    return mlp_forward(net, Tensor(n, 2, std::move(v))).to_vector();
  };
  const double h1 = 1e-5, h2 = 1e-4;
  const auto u = at(0, 0), tp = at(h1, 0), tm = at(-h1, 0), xp = at(0, h2), xm = at(0, -h2);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ut = (tp[i] - tm[i]) / (2 * h1);
    const double uxx = (xp[i] - 2 * u[i] + xm[i]) / (h2 * h2);
    r[i] = ut - 1e-4 * uxx + 5 * u[i] * u[i] * u[i] - 5 * u[i];
  }
  return r;
}

Outcome allen_cahn() {
  Outcome o;
  examples::Options opts;
  opts.out = scratch_dir("allen-cahn");
  auto state = std::make_shared<examples::AllenCahnState>();
  auto setup = examples::allen_cahn(opts, state);
  const auto net = setup.nodes[0].as<CompNode::Net>().params;

  // (a) Every invocation: the recorded ranking matches an independent
  // residual, and the selection equals a brute-force top-k.
  std::size_t invocations = 0, seen = 0, selection_errors = 0;
  double worst_mag = 0;
  Callback oracle;
  oracle.on_iteration_end = [&](std::size_t, const LossReport&, TrainContext&) {
    for (; seen < state->log->size(); ++seen) {
      const auto& rec = (*state->log)[seen];
      ++invocations;
      const auto fd = fd_allen_cahn_residual(*net, rec.candidates.points);
      for (std::size_t i = 0; i < fd.size(); ++i) {
        worst_mag = std::max(worst_mag, std::abs(std::abs(fd[i]) - rec.magnitudes[i]) / std::max(1.0, std::abs(fd[i])));
      }
      std::vector<std::size_t> order(rec.magnitudes.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rec.magnitudes[a] != rec.magnitudes[b] ? rec.magnitudes[a] > rec.magnitudes[b] : a < b;
      });
      order.resize(rec.selected.size());
      if (std::set<std::size_t>(order.begin(), order.end()) !=
          std::set<std::size_t>(rec.selected.begin(), rec.selected.end())) {
        ++selection_errors;
      }
    }
  };
  setup.callbacks.push_back(oracle);
  const auto r = examples::run(std::move(setup), "allen-cahn");

  o.require(invocations >= 1 && selection_errors == 0 && worst_mag < 1e-4, "(a) top-k oracle");
  o.require(r.metric("residual_ratio") <= 0.1, "(b) residual reduced 10x");
  o.require(r.metric("periodic_gap") < 0.05, "(c) periodic gap < 0.05");
  o.detail << "(a) " << invocations << " invocations, " << selection_errors << " mismatches, residual agreement "
           << worst_mag << "; (b) " << r.metric("residual_at_100") << " -> " << r.metric("residual_final")
           << " ratio " << r.metric("residual_ratio") << "; (c) gap " << r.metric("periodic_gap");
  return o;
}

Outcome determinism() {
  Outcome o;
  for (const char* name : {"volterra", "inverse-wave"}) {
    examples::Options opts;
    opts.out = scratch_dir(std::string("determinism-") + name);
    opts.seed = 7;
    const auto a = examples::to_csv(examples::train_log(examples::run(name, opts).train));
    const auto b = examples::to_csv(examples::train_log(examples::run(name, opts).train));
    o.require(a == b, std::string(name) + " train_log.csv differs");
    o.detail << name << " " << std::count(a.begin(), a.end(), '\n') << " log lines identical=" << (a == b) << "; ";
  }
  return o;
}

struct Criterion {
  const char* id;
  std::function<Outcome()> run;
  double seconds;  // runtime budget, 0 for none
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{{"autodiff", autodiff_oracle, 30},
                                   {"quadrature", quadrature_gl10, 1},
                                   {"geometry", geometry_suite, 60},
                                   {"pipeline", pipeline_cases, 30},
                                   {"inverse-wave", inverse_wave, 600},
                                   {"volterra", volterra, 300},
                                   {"minimal-surface", minimal_surface, 300},
                                   {"allen-cahn", allen_cahn, 600},
                                   {"determinism", determinism, 0}};
  std::set<std::string> wanted(argv + 1, argv + argc);
  for (const auto& w : wanted) {
    if (std::none_of(all.begin(), all.end(), [&](const Criterion& c) { return w == c.id; })) {
      std::cerr << "unknown criterion '" << w << "'\n";
      return 2;
    }
  }
  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.seconds > 0 && secs > c.seconds) {
      out.pass = false;
      out.detail << " [failed: over the " << c.seconds << " s budget]";
    }
    std::printf("%s %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", c.id, out.detail.str().c_str(), secs);
    std::fflush(stdout);
    failures += !out.pass;
  }
  std::error_code ec;
  std::filesystem::remove_all(std::filesystem::temp_directory_path() / ("pinnkit-acceptance-" + std::to_string(getpid())), ec);
  return failures == 0 ? 0 : 1;
}
