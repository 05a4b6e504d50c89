#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "pinnkit/error.hpp"

namespace pinnkit {

class Tensor;

namespace detail {

/// One recorded operation. Parents are the grad-tracked inputs; the backward
/// closure maps the upstream gradient to one contribution per parent and is
/// written in terms of Tensor ops, so it records onto the tape again when
/// grad mode is on (reverse-over-reverse).
struct Node {
  using Backward = std::function<std::vector<Tensor>(
      const Tensor& upstream, const std::vector<bool>& need)>;

  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<Tensor> parents;
  Backward backward;
};

inline std::uint64_t next_node_id() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Scoped override of grad recording for the current thread.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : prev_(detail::grad_mode_flag()) {
    detail::grad_mode_flag() = enabled;
  }
  ~GradModeGuard() { detail::grad_mode_flag() = prev_; }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

/// Dense row-major float64 matrix. Values are immutable once constructed;
/// every operation returns a fresh Tensor. A tensor that requires grad holds
/// a reference to the node that produced it.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows),
        cols_(cols),
        data_(std::make_shared<const std::vector<double>>(std::move(values))) {
    if (data_->size() != rows_ * cols_) {
      throw DimensionError("tensor data length " +
                           std::to_string(data_->size()) +
                           " does not match shape " + std::to_string(rows_) +
                           "x" + std::to_string(cols_));
    }
  }

  static Tensor filled(std::size_t rows, std::size_t cols, double value) {
    return Tensor(rows, cols, std::vector<double>(rows * cols, value));
  }
  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return filled(rows, cols, 0.0);
  }
  static Tensor scalar(double value) { return Tensor(1, 1, {value}); }
  static Tensor column(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(n, 1, std::move(values));
  }

  /// Leaf tensor sharing this tensor's values, tracked for differentiation.
  Tensor requires_grad() const {
    Tensor t = detach();
    t.node_ = std::make_shared<detail::Node>();
    t.node_->id = detail::next_node_id();
    return t;
  }

  /// Same values, no grad record.
  Tensor detach() const {
    Tensor t;
    t.rows_ = rows_;
    t.cols_ = cols_;
    t.data_ = data_;
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  bool tracks_grad() const { return node_ != nullptr; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  std::span<const double> values() const {
    if (!data_) return {};
    return {data_->data(), data_->size()};
  }
  double operator()(std::size_t r, std::size_t c) const {
    return (*data_)[r * cols_ + c];
  }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double item() const {
    if (!is_scalar()) {
      throw ContractError("item() on non-scalar tensor of shape " +
                          shape_str());
    }
    return (*data_)[0];
  }
  std::vector<double> to_vector() const {
    return data_ ? *data_ : std::vector<double>{};
  }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  /// Builds the result of an operation, recording a node when grad mode is
  /// on and at least one input is tracked.
  static Tensor make_result(Tensor value, const char* op,
                            std::vector<Tensor> inputs,
                            detail::Node::Backward backward);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::shared_ptr<const std::vector<double>> data_;
  std::shared_ptr<detail::Node> node_;
};

// ============================================================================
// Tape
// ============================================================================

/// Ordered record of the nodes created while the tape is active on this
/// thread. Training does not need one; it exists to inspect the recorded
/// graph (construction order, nested generations).
class Tape {
 public:
  Tape() : prev_(active()) { active() = this; }
  ~Tape() { active() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape*& active() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

  void record(const std::shared_ptr<detail::Node>& node) {
    entries_.push_back({node, generation_});
  }
  void begin_generation() { ++generation_; }
  std::size_t generation() const { return generation_; }
  std::size_t size() const { return entries_.size(); }

  /// Ops recorded during generation `g` that are still alive.
  std::size_t count_in_generation(std::size_t g) const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += (e.generation == g && !e.node.expired());
    return n;
  }

  /// True when every recorded node's parents were created before it.
  bool is_topologically_ordered() const {
    std::uint64_t last_id = 0;
    for (const auto& e : entries_) {
      auto n = e.node.lock();
      if (!n) continue;
      if (n->id <= last_id) return false;
      last_id = n->id;
      for (const auto& p : n->parents) {
        if (p.node() && p.node()->id >= n->id) return false;
      }
    }
    return true;
  }

 private:
  struct Entry {
    std::weak_ptr<detail::Node> node;
    std::size_t generation;
  };
  Tape* prev_;
  std::vector<Entry> entries_;
  std::size_t generation_ = 0;
};

inline Tensor Tensor::make_result(Tensor value, const char* op,
                                  std::vector<Tensor> inputs,
                                  detail::Node::Backward backward) {
  Tensor out = value.detach();
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.tracks_grad();
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->op = op;
  node->parents = std::move(inputs);
  node->backward = std::move(backward);
  node->id = detail::next_node_id();
  out.node_ = std::move(node);
  if (Tape* tape = Tape::active()) tape->record(out.node_);
  return out;
}

/// Checks that ids strictly decrease along every parent edge reachable from
/// `root`, i.e. construction order is a valid topological order.
inline bool graph_is_topologically_ordered(const Tensor& root) {
  if (!root.tracks_grad()) return true;
  std::vector<const detail::Node*> stack{root.node().get()};
  std::unordered_set<const detail::Node*> seen{root.node().get()};
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    for (const auto& p : n->parents) {
      if (!p.tracks_grad()) continue;
      if (p.node()->id >= n->id) return false;
      if (seen.insert(p.node().get()).second) stack.push_back(p.node().get());
    }
  }
  return true;
}

}  // namespace pinnkit
