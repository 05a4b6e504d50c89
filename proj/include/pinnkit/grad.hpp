#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pinnkit/error.hpp"
#include "pinnkit/ops.hpp"
#include "pinnkit/tensor.hpp"

namespace pinnkit {

/// Reverse-mode gradient of a 1x1 `output` with respect to each tensor in
/// `wrt`. Tensors that `output` does not depend on get a zero gradient of
/// their own shape. With `create_graph` the backward arithmetic is recorded,
/// so the returned gradients can be differentiated again.
inline std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt,
                                bool create_graph = false) {
  if (!output.is_scalar()) {
    throw ContractError("grad: output must be 1x1, got " + output.shape_str());
  }
  std::vector<Tensor> result;
  result.reserve(wrt.size());
  auto zeros_like = [](const Tensor& t) { return Tensor::zeros(t.rows(), t.cols()); };
  if (!output.tracks_grad()) {
    for (const auto& w : wrt) result.push_back(zeros_like(w));
    return result;
  }

  using detail::Node;
  std::unordered_set<const Node*> targets;
  for (const auto& w : wrt) {
    if (w.tracks_grad()) targets.insert(w.node().get());
  }

  // Collect the reachable subgraph.
  std::vector<Node*> order;
  std::unordered_set<const Node*> seen{output.node().get()};
  std::vector<Node*> stack{output.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p.tracks_grad() && seen.insert(p.node().get()).second) {
        stack.push_back(p.node().get());
      }
    }
  }
  // Ascending id is a topological order (parents first).
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id < b->id; });

  // A node matters only if some target is reachable from it.
  std::unordered_set<const Node*> relevant;
  for (const Node* n : order) {
    bool r = targets.count(n) > 0;
    for (const auto& p : n->parents) {
      if (p.tracks_grad() && relevant.count(p.node().get())) r = true;
    }
    if (r) relevant.insert(n);
  }

  if (Tape* tape = Tape::active(); tape && create_graph) tape->begin_generation();
  GradModeGuard mode(create_graph);

  std::unordered_map<const Node*, Tensor> grads;
  grads.emplace(output.node().get(), Tensor::scalar(1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!relevant.count(n) || !n->backward) continue;
    auto g = grads.find(n);
    if (g == grads.end()) continue;
    std::vector<bool> need(n->parents.size(), false);
    bool any = false;
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      const auto& p = n->parents[i];
      need[i] = p.tracks_grad() && relevant.count(p.node().get()) > 0;
      any = any || need[i];
    }
    if (!any) continue;
    const Tensor upstream = g->second;
    // Interior gradients are no longer needed once propagated.
    if (!targets.count(n)) grads.erase(g);
    auto contributions = n->backward(upstream, need);
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      if (!need[i]) continue;
      const Node* pn = n->parents[i].node().get();
      auto [slot, inserted] = grads.try_emplace(pn, contributions[i]);
      if (!inserted) slot->second = add(slot->second, contributions[i]);
    }
  }

  for (const auto& w : wrt) {
    if (!w.tracks_grad()) {
      result.push_back(zeros_like(w));
      continue;
    }
    auto g = grads.find(w.node().get());
    result.push_back(g == grads.end() ? zeros_like(w) : g->second);
  }
  return result;
}

inline std::vector<Tensor> grad(const Tensor& output, std::initializer_list<Tensor> wrt,
                                bool create_graph = false) {
  return grad(output, std::span<const Tensor>(wrt.begin(), wrt.size()), create_graph);
}

/// Per-sample derivative d^order u / dx^order for column tensors whose rows
/// are independent samples. Each step differentiates sum(u) with respect to
/// x, which yields the row-wise derivative exactly because row i of u
/// depends only on row i of x.
inline Tensor input_derivative(const Tensor& u, const Tensor& x, int order) {
  if (order < 0) throw ContractError("input_derivative: negative order");
  if (order == 0) return u;
  if (!x.tracks_grad()) {
    throw ContractError("input_derivative: x does not track gradients");
  }
  if (u.rows() != x.rows() || u.cols() != 1 || x.cols() != 1) {
    throw DimensionError("input_derivative: expected matching Nx1 columns, got " +
                         u.shape_str() + " and " + x.shape_str());
  }
  Tensor d = u;
  for (int k = 0; k < order; ++k) {
    if (!d.tracks_grad()) return Tensor::zeros(x.rows(), 1);
    d = grad(sum(d), {x}, /*create_graph=*/true).front();
  }
  return d;
}

}  // namespace pinnkit
