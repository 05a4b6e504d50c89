#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pinnkit/error.hpp"
#include "pinnkit/expr.hpp"
#include "pinnkit/geometry.hpp"
#include "pinnkit/grad.hpp"
#include "pinnkit/mlp.hpp"
#include "pinnkit/ops.hpp"
#include "pinnkit/quadrature.hpp"
#include "pinnkit/tensor.hpp"

namespace pinnkit {

// ============================================================================
// Data nodes
// ============================================================================

enum class LossKind { square, l1 };

/// Target read from an observation column attached to the sample batch.
struct ColumnRef {
  std::string name;
  friend bool operator==(const ColumnRef&, const ColumnRef&) = default;
};

using Target = std::variant<double, Expr, ColumnRef>;

/// A source of sample points plus the values each output should take there.
struct DataNode {
  std::string name;
  std::vector<std::string> symbols;
  std::function<SampleBatch(std::size_t count, std::uint64_t seed)> sampler;
  std::map<VarKey, Target> constraints;
  /// Optional per-point weight column in the batch; 1 when absent.
  std::optional<std::string> lambda_column;
  double sigma = 1.0;
  LossKind loss = LossKind::square;
  std::size_t count = 1;
  /// Sample once and reuse instead of drawing every resample.
  bool fixed = false;
  /// When set, the domain contributes sigma * sum(area * functional) to the
  /// loss instead of a residual fit; constraints are ignored.
  std::optional<Expr> functional;
  /// Points appended by adaptive resampling; kept across resamples.
  SampleBatch extra;

  /// Keys the pipeline must produce.
  std::set<VarKey> target_keys() const {
    std::set<VarKey> out;
    if (functional) {
      for (const auto& k : free_keys(*functional)) {
        if (std::find(symbols.begin(), symbols.end(), k.str()) == symbols.end()) out.insert(k);
      }
      return out;
    }
    for (const auto& [k, t] : constraints) out.insert(k);
    return out;
  }

  void validate() const {
    if (count < 1) throw ContractError(name + ": count must be >= 1");
    if (!sampler) throw ContractError(name + ": no sampler");
    for (const auto& [k, t] : constraints) {
      if (const auto* e = std::get_if<Expr>(&t)) {
        for (const auto& s : free_keys(*e)) {
          if (s.is_derivative() ||
              std::find(symbols.begin(), symbols.end(), s.base) == symbols.end()) {
            throw ContractError(name + ": target of " + k.str() + " uses '" + s.str() +
                                "', which is not a coordinate");
          }
        }
      }
    }
  }
};

// ============================================================================
// Computation nodes
// ============================================================================

enum class NodeKind { net, parameter, pde, difference, integral };

inline const char* kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::net: return "net";
    case NodeKind::parameter: return "parameter";
    case NodeKind::pde: return "pde";
    case NodeKind::difference: return "difference";
    case NodeKind::integral: return "integral";
  }
  return "?";
}

/// A trainable tensor and a stable name for logs and checkpoints.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

/// Output key of difference(T, S).
inline VarKey difference_key(const VarKey& t, const VarKey& s) {
  return VarKey("difference_" + t.str() + "_" + s.str(), {});
}

/// A pipeline stage. Copies share trainable state, so a node list can be
/// copied into several pipelines and still train one set of parameters.
class CompNode {
 public:
  struct Net {
    std::shared_ptr<MlpParams> params;
    std::vector<VarKey> inputs;
    std::vector<VarKey> outputs;
  };
  struct Parameter {
    std::shared_ptr<Tensor> value;  // 1 x 1 leaf
  };
  struct Pde {
    std::vector<std::pair<VarKey, Expr>> equations;
  };
  struct Difference {
    VarKey t, s;
  };
  struct Integral {
    IntegralSpec spec;
  };

  static CompNode net(std::string name, std::shared_ptr<MlpParams> params,
                      std::vector<VarKey> inputs, std::vector<VarKey> outputs) {
    if (!params || params->layers.empty()) throw ContractError(name + ": empty network");
    if (inputs.size() != params->input_dim() || outputs.size() != params->output_dim()) {
      throw DimensionError(name + ": network is " + std::to_string(params->input_dim()) + "->" +
                           std::to_string(params->output_dim()) + " but node maps " +
                           std::to_string(inputs.size()) + "->" + std::to_string(outputs.size()));
    }
    return CompNode(std::move(name), Net{std::move(params), std::move(inputs), std::move(outputs)});
  }

  static CompNode parameter(std::string name, double initial) {
    auto v = std::make_shared<Tensor>(Tensor::scalar(initial).requires_grad());
    return CompNode(std::move(name), Parameter{std::move(v)});
  }

  static CompNode pde(std::string name, std::vector<std::pair<VarKey, Expr>> equations) {
    if (equations.empty()) throw ContractError(name + ": pde node needs an equation");
    return CompNode(std::move(name), Pde{std::move(equations)});
  }

  static CompNode pde(std::string name, VarKey output, std::string_view source) {
    return pde(std::move(name), {{std::move(output), Expr::parse(source)}});
  }

  static CompNode difference(VarKey t, VarKey s) {
    auto name = difference_key(t, s).str();
    return CompNode(std::move(name), Difference{std::move(t), std::move(s)});
  }

  static CompNode integral(std::string name, IntegralSpec spec) {
    std::set<std::string> allowed{spec.dummy_symbol, spec.upper_symbol};
    for (const auto& b : spec.bindings) allowed.insert(b.symbol);
    for (const auto& k : free_keys(spec.integrand)) {
      if (k.is_derivative() || !allowed.count(k.base)) {
        throw ContractError(name + ": integrand uses unbound symbol '" + k.str() + "'");
      }
    }
    gauss_legendre(spec.degree);
    return CompNode(std::move(name), Integral{std::move(spec)});
  }

  const std::string& name() const { return name_; }

  NodeKind kind() const { return static_cast<NodeKind>(body_.index()); }

  template <class T>
  const T& as() const { return std::get<T>(body_); }

  bool trainable() const { return kind() == NodeKind::net || kind() == NodeKind::parameter; }

  std::set<VarKey> requires_keys() const {
    std::set<VarKey> out;
    std::visit(
        [&](const auto& b) {
          using B = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<B, Net>) {
            out.insert(b.inputs.begin(), b.inputs.end());
          } else if constexpr (std::is_same_v<B, Pde>) {
            for (const auto& [k, e] : b.equations) collect_keys(e, out);
          } else if constexpr (std::is_same_v<B, Difference>) {
            out.insert(b.t);
            out.insert(b.s);
          } else if constexpr (std::is_same_v<B, Integral>) {
            out.insert(VarKey(b.spec.upper_symbol, {}));
          }
        },
        body_);
    return out;
  }

  std::vector<VarKey> produces() const {
    return std::visit(
        [&](const auto& b) -> std::vector<VarKey> {
          using B = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<B, Net>) {
            return b.outputs;
          } else if constexpr (std::is_same_v<B, Parameter>) {
            return {VarKey(name_, {})};
          } else if constexpr (std::is_same_v<B, Pde>) {
            std::vector<VarKey> out;
            for (const auto& [k, e] : b.equations) out.push_back(k);
            return out;
          } else if constexpr (std::is_same_v<B, Difference>) {
            return {difference_key(b.t, b.s)};
          } else {
            return {VarKey(b.spec.output, {})};
          }
        },
        body_);
  }

  /// Trainable tensors in layer order (weight, then bias).
  std::vector<ParamRef> parameters() const {
    std::vector<ParamRef> out;
    auto add_net = [&](const std::string& prefix, MlpParams& p) {
      for (std::size_t i = 0; i < p.layers.size(); ++i) {
        out.push_back({prefix + ".layer" + std::to_string(i) + ".W", &p.layers[i].weight});
        out.push_back({prefix + ".layer" + std::to_string(i) + ".b", &p.layers[i].bias});
      }
    };
    if (const auto* n = std::get_if<Net>(&body_)) add_net(name_, *n->params);
    if (const auto* p = std::get_if<Parameter>(&body_)) out.push_back({name_, p->value.get()});
    if (const auto* g = std::get_if<Integral>(&body_)) {
      for (const auto& b : g->spec.bindings) {
        if (b.net) add_net(name_ + "." + b.symbol, *b.net);
      }
    }
    return out;
  }

  /// Current value of a parameter node.
  double value() const { return std::get<Parameter>(body_).value->item(); }

  /// Computes this node's outputs from `env` and stores them there.
  void evaluate(Env& env, std::size_t rows) const {
    auto lookup = [&](const VarKey& k) -> const Tensor& {
      auto it = env.find(k);
      if (it == env.end()) throw UnresolvedSymbolError("missing input '" + k.str() + "'");
      return it->second;
    };
    std::visit(
        [&](const auto& b) {
          using B = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<B, Net>) {
            std::vector<Tensor> cols;
            for (const auto& k : b.inputs) cols.push_back(lookup(k));
            const Tensor out = mlp_forward(*b.params, cols.size() == 1 ? cols[0] : hcat(cols));
            if (b.outputs.size() == 1) {
              env[b.outputs[0]] = out;
            } else {
              for (std::size_t j = 0; j < b.outputs.size(); ++j) env[b.outputs[j]] = column(out, j);
            }
          } else if constexpr (std::is_same_v<B, Parameter>) {
            env[VarKey(name_, {})] = expand(*b.value, rows, 1);
          } else if constexpr (std::is_same_v<B, Pde>) {
            for (const auto& [k, e] : b.equations) env[k] = eval(e, env, rows);
          } else if constexpr (std::is_same_v<B, Difference>) {
            env[difference_key(b.t, b.s)] = lookup(b.t) - lookup(b.s);
          } else {
            env[VarKey(b.spec.output, {})] =
                integrate_variable_upper(b.spec, lookup(VarKey(b.spec.upper_symbol, {})));
          }
        },
        body_);
  }

 private:
  using Body = std::variant<Net, Parameter, Pde, Difference, Integral>;
  CompNode(std::string name, Body body) : name_(std::move(name)), body_(std::move(body)) {}

  std::string name_;
  Body body_;
};

/// Every trainable tensor across `nodes`, in registration order then layer
/// order. Networks shared between nodes appear once.
inline std::vector<ParamRef> trainable_parameters(const std::vector<CompNode>& nodes) {
  std::vector<ParamRef> out;
  std::set<const Tensor*> seen;
  for (const auto& n : nodes) {
    for (auto& p : n.parameters()) {
      if (seen.insert(p.tensor).second) out.push_back(p);
    }
  }
  return out;
}

// ============================================================================
// Pipeline construction
// ============================================================================

/// One derivative computed after its owning node: key = d(from)/d(by).
struct DerivStep {
  VarKey key;
  VarKey from;
  std::string by;
  friend bool operator==(const DerivStep&, const DerivStep&) = default;
};

struct Pipeline {
  std::vector<std::string> symbols;
  std::set<VarKey> targets;
  std::vector<CompNode> nodes;
  /// plan[i] runs right after nodes[i].
  std::vector<std::vector<DerivStep>> plan;
  /// Registered nodes left out of the minimal cover.
  std::vector<std::string> excluded;

  std::vector<std::string> node_names() const {
    std::vector<std::string> out;
    for (const auto& n : nodes) out.push_back(n.name());
    return out;
  }
};

namespace detail {

struct Coverage {
  std::set<VarKey> coords;
  std::map<VarKey, std::size_t> producer;  // key -> node index

  bool available(const VarKey& k) const {
    if (!k.is_derivative()) return coords.count(k) || producer.count(k);
    if (!producer.count(VarKey(k.base, {}))) return false;
    return std::all_of(k.partials.begin(), k.partials.end(),
                       [&](const std::string& p) { return coords.count(VarKey(p, {})) > 0; });
  }
};

/// Forward chaining over the subset `active`, in registration order.
/// Returns the firing order and the resulting coverage.
inline std::pair<std::vector<std::size_t>, Coverage> chain(
    const std::vector<CompNode>& nodes, const std::vector<std::set<VarKey>>& reqs,
    const std::vector<bool>& active, const std::set<VarKey>& coords) {
  Coverage cov{coords, {}};
  std::vector<std::size_t> order;
  std::vector<bool> fired(nodes.size(), false);
  for (bool progress = true; progress;) {
    progress = false;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!active[i] || fired[i]) continue;
      if (!std::all_of(reqs[i].begin(), reqs[i].end(),
                       [&](const VarKey& k) { return cov.available(k); }))
        continue;
      fired[i] = true;
      order.push_back(i);
      for (const auto& k : nodes[i].produces()) cov.producer.emplace(k, i);
      progress = true;
      break;  // restart so ties resolve to the earliest registered node
    }
  }
  return {order, cov};
}

inline bool covers(const Coverage& cov, const std::set<VarKey>& targets) {
  return std::all_of(targets.begin(), targets.end(),
                     [&](const VarKey& k) { return cov.available(k); });
}

/// Explains why `targets` cannot be covered: a cycle among the producers
/// involved, or the first key nothing can supply.
[[noreturn]] inline void diagnose(const std::vector<CompNode>& nodes,
                                  const std::vector<std::set<VarKey>>& reqs,
                                  const Coverage& cov, const std::set<VarKey>& targets) {
  std::map<VarKey, std::vector<std::size_t>> producers;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (const auto& k : nodes[i].produces()) producers[k].push_back(i);

  auto missing_base = [&](const VarKey& k) -> std::optional<VarKey> {
    if (cov.available(k)) return std::nullopt;
    return VarKey(k.base, {});
  };

  // Depth-first walk over unmet requirements; a grey node reached again is a cycle.
  std::vector<int> color(nodes.size(), 0);
  std::vector<std::size_t> stack;
  std::optional<VarKey> unreachable;
  std::function<void(std::size_t)> visit = [&](std::size_t i) {
    color[i] = 1;
    stack.push_back(i);
    for (const auto& k : reqs[i]) {
      auto base = missing_base(k);
      if (!base) continue;
      auto it = producers.find(*base);
      const bool bad_partial =
          std::any_of(k.partials.begin(), k.partials.end(),
                      [&](const std::string& p) { return !cov.coords.count(VarKey(p, {})); });
      if (it == producers.end() || bad_partial) {
        if (!unreachable) unreachable = k;
        if (it == producers.end()) continue;
      }
      for (auto j : it->second) {
        if (color[j] == 1) {
          std::string cycle;
          auto from = std::find(stack.begin(), stack.end(), j);
          for (auto p = from; p != stack.end(); ++p) cycle += nodes[*p].name() + " -> ";
          throw CycleError("dependency cycle: " + cycle + nodes[j].name());
        }
        if (color[j] == 0) visit(j);
      }
    }
    stack.pop_back();
    color[i] = 2;
  };

  for (const auto& t : targets) {
    auto base = missing_base(t);
    if (!base) continue;
    auto it = producers.find(*base);
    if (it == producers.end()) {
      throw UnreachableTargetError("no node produces '" + t.str() + "'");
    }
    for (auto j : it->second)
      if (color[j] == 0) visit(j);
    if (t.is_derivative()) {
      for (const auto& p : t.partials) {
        if (!cov.coords.count(VarKey(p, {}))) {
          throw UnreachableTargetError("cannot produce '" + t.str() + "': '" + p +
                                       "' is not a coordinate");
        }
      }
    }
    throw UnreachableTargetError("cannot produce '" + t.str() + "'" +
                                 (unreachable ? ": nothing supplies '" + unreachable->str() + "'"
                                              : std::string()));
  }
  throw UnreachableTargetError("targets cannot be covered");
}

}  // namespace detail

/// Builds the smallest node subset (in the sense that dropping any member
/// breaks coverage) that produces every target from the coordinates, in
/// topological order with registration order breaking ties.
inline Pipeline build_pipeline(const std::vector<std::string>& symbols,
                               const std::set<VarKey>& targets,
                               const std::vector<CompNode>& nodes) {
  std::set<std::string> names;
  for (const auto& n : nodes) {
    if (!names.insert(n.name()).second) throw ContractError("duplicate node name '" + n.name() + "'");
  }
  std::set<VarKey> coords;
  for (const auto& s : symbols) coords.insert(VarKey(s, {}));
  std::vector<std::set<VarKey>> reqs;
  for (const auto& n : nodes) reqs.push_back(n.requires_keys());

  std::vector<bool> active(nodes.size(), true);
  auto [order, cov] = detail::chain(nodes, reqs, active, coords);
  if (!detail::covers(cov, targets)) detail::diagnose(nodes, reqs, cov, targets);

  // Only fired nodes can matter; then drop the latest-registered node
  // whose removal keeps coverage, until none can go.
  std::fill(active.begin(), active.end(), false);
  for (auto i : order) active[i] = true;
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (!active[i]) continue;
    active[i] = false;
    if (!detail::covers(detail::chain(nodes, reqs, active, coords).second, targets)) active[i] = true;
  }
  std::tie(order, cov) = detail::chain(nodes, reqs, active, coords);

  Pipeline p;
  p.symbols = symbols;
  p.targets = targets;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!active[i]) p.excluded.push_back(nodes[i].name());

  // Every derivative key needed by a pipeline node or a target, with its
  // lower-order ancestors, grouped under the node producing the base.
  std::set<VarKey> needed;
  auto need = [&](VarKey k) {
    while (k.is_derivative()) {
      needed.insert(k);
      k = k.parent();
    }
  };
  for (auto i : order)
    for (const auto& k : reqs[i]) need(k);
  for (const auto& k : targets) need(k);

  std::map<std::size_t, std::vector<DerivStep>> steps;
  for (const auto& k : needed) {
    const VarKey base(k.base, {});
    auto it = cov.producer.find(base);
    if (it == cov.producer.end()) continue;
    steps[it->second].push_back({k, k.parent(), k.partials.back()});
  }
  for (auto i : order) {
    p.nodes.push_back(nodes[i]);
    auto s = steps[i];
    std::stable_sort(s.begin(), s.end(), [](const DerivStep& a, const DerivStep& b) {
      return a.key.order() < b.key.order();
    });
    p.plan.push_back(std::move(s));
  }
  return p;
}

inline Pipeline build_pipeline(const DataNode& data, const std::vector<CompNode>& nodes) {
  data.validate();
  try {
    return build_pipeline(data.symbols, data.target_keys(), nodes);
  } catch (Error& e) {
    e.add_context(data.name);
    throw;
  }
}

/// Runs the pipeline on `batch`. Coordinates enter as gradient-tracked
/// leaves so the derivative plan can differentiate through every node.
inline Env evaluate(const Pipeline& p, const SampleBatch& batch) {
  Env env;
  const std::size_t rows = batch.size();
  for (const auto& s : p.symbols) {
    auto it = std::find(batch.symbols.begin(), batch.symbols.end(), s);
    if (it == batch.symbols.end()) {
      throw DimensionError("batch has no coordinate '" + s + "'");
    }
    const auto j = static_cast<std::size_t>(it - batch.symbols.begin());
    env[VarKey(s, {})] = batch.coordinate(j).requires_grad();
  }
  for (std::size_t i = 0; i < p.nodes.size(); ++i) {
    const auto& node = p.nodes[i];
    try {
      node.evaluate(env, rows);
      for (const auto& step : p.plan[i]) {
        env[step.key] = input_derivative(env.at(step.from), env.at(VarKey(step.by, {})), 1);
      }
    } catch (Error& e) {
      e.add_context(node.name());
      throw;
    }
  }
  return env;
}

/// Graphviz rendering: coordinates, nodes, and key-labelled edges from
/// producer to consumer, ending at the loss.
inline std::string to_dot(const Pipeline& p, const std::string& title = "pipeline") {
  std::ostringstream os;
  auto quote = [](const std::string& s) { return "\"" + s + "\""; };
  os << "digraph " << quote(title) << " {\n  rankdir=LR;\n";
  for (const auto& name : p.excluded) os << "  // excluded: " << name << "\n";
  std::map<VarKey, std::string> source;
  for (const auto& s : p.symbols) {
    os << "  " << quote("coord:" + s) << " [shape=ellipse,label=" << quote(s) << "];\n";
    source[VarKey(s, {})] = "coord:" + s;
  }
  auto origin = [&](const VarKey& k) -> std::string {
    auto it = source.find(k);
    if (it != source.end()) return it->second;
    it = source.find(VarKey(k.base, {}));
    return it == source.end() ? std::string("?") : it->second;
  };
  for (const auto& n : p.nodes) {
    os << "  " << quote(n.name()) << " [shape=box,label=" << quote(n.name() + "\\n(" + kind_name(n.kind()) + ")")
       << "];\n";
    for (const auto& k : n.requires_keys()) {
      os << "  " << quote(origin(k)) << " -> " << quote(n.name()) << " [label=" << quote(k.str())
         << "];\n";
    }
    for (const auto& k : n.produces()) source[k] = n.name();
  }
  os << "  \"loss\" [shape=doublecircle];\n";
  for (const auto& k : p.targets) {
    os << "  " << quote(origin(k)) << " -> \"loss\" [label=" << quote(k.str()) << "];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace pinnkit
