#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "pinnkit/error.hpp"
#include "pinnkit/tensor.hpp"

// Differentiable operations on Tensor. Every backward rule is itself built
// from these operations, so gradients computed with grad mode on are
// differentiable again.

namespace pinnkit {

Tensor sum(const Tensor& a);
Tensor expand(const Tensor& scalar, std::size_t rows, std::size_t cols);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);

namespace detail {

inline void require_defined(const Tensor& a, const char* op) {
  if (!a.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

// Gradient arriving at a broadcast operand: summed back down to 1x1.
inline Tensor reduce_to(const Tensor& g, const Tensor& operand) {
  if (operand.same_shape(g)) return g;
  return sum(g);
}

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor(a.rows(), a.cols(), std::move(out));
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_defined(a, op);
  require_defined(b, op);
  const auto av = a.values();
  const auto bv = b.values();
  if (a.same_shape(b)) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
    return Tensor(a.rows(), a.cols(), std::move(out));
  }
  if (b.is_scalar()) {
    std::vector<double> out(a.size());
    const double s = bv[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], s);
    return Tensor(a.rows(), a.cols(), std::move(out));
  }
  if (a.is_scalar()) {
    std::vector<double> out(b.size());
    const double s = av[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(s, bv[i]);
    return Tensor(b.rows(), b.cols(), std::move(out));
  }
  throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                       " vs " + b.shape_str());
}

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;

}  // namespace detail

// ============================================================================
// Elementwise binary
// ============================================================================

inline Tensor add(const Tensor& a, const Tensor& b) {
  auto v = detail::map_binary(a, b, "add", [](double x, double y) { return x + y; });
  return Tensor::make_result(
      v, "add", {a, b}, [a, b](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{detail::reduce_to(g, a),
                                   detail::reduce_to(g, b)};
      });
}

Tensor neg(const Tensor& a);

inline Tensor sub(const Tensor& a, const Tensor& b) {
  auto v = detail::map_binary(a, b, "sub", [](double x, double y) { return x - y; });
  return Tensor::make_result(
      v, "sub", {a, b}, [a, b](const Tensor& g, const std::vector<bool>& need) {
        return std::vector<Tensor>{
            detail::reduce_to(g, a),
            need[1] ? detail::reduce_to(neg(g), b) : Tensor{}};
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  auto v = detail::map_binary(a, b, "mul", [](double x, double y) { return x * y; });
  return Tensor::make_result(
      v, "mul", {a, b}, [a, b](const Tensor& g, const std::vector<bool>& need) {
        return std::vector<Tensor>{
            need[0] ? detail::reduce_to(mul(g, b), a) : Tensor{},
            need[1] ? detail::reduce_to(mul(g, a), b) : Tensor{}};
      });
}

Tensor square(const Tensor& a);

inline Tensor div(const Tensor& a, const Tensor& b) {
  for (double d : b.values()) {
    if (d == 0.0) throw NumericError("div: division by zero");
  }
  auto v = detail::map_binary(a, b, "div", [](double x, double y) { return x / y; });
  return Tensor::make_result(
      v, "div", {a, b}, [a, b](const Tensor& g, const std::vector<bool>& need) {
        return std::vector<Tensor>{
            need[0] ? detail::reduce_to(div(g, b), a) : Tensor{},
            need[1] ? detail::reduce_to(neg(mul(g, div(a, square(b)))), b)
                    : Tensor{}};
      });
}

// ============================================================================
// Elementwise unary
// ============================================================================

inline Tensor neg(const Tensor& a) {
  detail::require_defined(a, "neg");
  auto v = detail::map_unary(a, [](double x) { return -x; });
  return Tensor::make_result(v, "neg", {a},
                             [](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{neg(g)};
                             });
}

inline Tensor scale(const Tensor& a, double k) {
  detail::require_defined(a, "scale");
  auto v = detail::map_unary(a, [k](double x) { return k * x; });
  return Tensor::make_result(v, "scale", {a},
                             [k](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{scale(g, k)};
                             });
}

/// Sign with zero at zero; not differentiable (constant result).
inline Tensor sign(const Tensor& a) {
  return detail::map_unary(
      a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor cos(const Tensor& a);
Tensor cosh(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sigmoid(const Tensor& a);

inline Tensor sin(const Tensor& a) {
  auto v = detail::map_unary(a, [](double x) { return std::sin(x); });
  return Tensor::make_result(v, "sin", {a},
                             [a](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{mul(g, cos(a))};
                             });
}

inline Tensor cos(const Tensor& a) {
  auto v = detail::map_unary(a, [](double x) { return std::cos(x); });
  return Tensor::make_result(v, "cos", {a},
                             [a](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{neg(mul(g, sin(a)))};
                             });
}

inline Tensor exp(const Tensor& a) {
  auto v = detail::map_unary(a, [](double x) { return std::exp(x); });
  return Tensor::make_result(
      v, "exp", {a}, [a, v](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{mul(g, grad_enabled() ? exp(a) : v)};
      });
}

inline Tensor sinh(const Tensor& a) {
  auto v = detail::map_unary(a, [](double x) { return std::sinh(x); });
  return Tensor::make_result(v, "sinh", {a},
                             [a](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{mul(g, cosh(a))};
                             });
}

inline Tensor cosh(const Tensor& a) {
  auto v = detail::map_unary(a, [](double x) { return std::cosh(x); });
  return Tensor::make_result(v, "cosh", {a},
                             [a](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{mul(g, sinh(a))};
                             });
}

inline Tensor tanh(const Tensor& a) {
  auto v = detail::map_unary(a, [](double x) { return std::tanh(x); });
  return Tensor::make_result(
      v, "tanh", {a}, [a, v](const Tensor& g, const std::vector<bool>&) {
        const Tensor t = grad_enabled() ? tanh(a) : v;
        return std::vector<Tensor>{mul(g, sub(Tensor::scalar(1.0), square(t)))};
      });
}

inline Tensor sqrt(const Tensor& a) {
  for (double x : a.values()) {
    if (x < 0.0) throw NumericError("sqrt: negative argument");
  }
  auto v = detail::map_unary(a, [](double x) { return std::sqrt(x); });
  return Tensor::make_result(
      v, "sqrt", {a}, [a, v](const Tensor& g, const std::vector<bool>&) {
        const Tensor r = grad_enabled() ? sqrt(a) : v;
        return std::vector<Tensor>{div(g, scale(r, 2.0))};
      });
}

/// |a|; the subgradient at exactly 0 is 0.
inline Tensor abs(const Tensor& a) {
  auto v = detail::map_unary(a, [](double x) { return std::abs(x); });
  return Tensor::make_result(v, "abs", {a},
                             [a](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{mul(g, sign(a))};
                             });
}

namespace detail {
inline double logistic(double x) {
  // Split by sign to avoid overflow in exp for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace detail

inline Tensor sigmoid(const Tensor& a) {
  auto v = detail::map_unary(a, detail::logistic);
  return Tensor::make_result(
      v, "sigmoid", {a}, [a, v](const Tensor& g, const std::vector<bool>&) {
        const Tensor s = grad_enabled() ? sigmoid(a) : v;
        return std::vector<Tensor>{mul(g, mul(s, sub(Tensor::scalar(1.0), s)))};
      });
}

/// swish(x) = x * sigmoid(x).
inline Tensor swish(const Tensor& a) {
  auto v = detail::map_unary(a, [](double x) { return x * detail::logistic(x); });
  return Tensor::make_result(
      v, "swish", {a}, [a](const Tensor& g, const std::vector<bool>&) {
        // d/dx = s * (1 + x * (1 - s))
        if (!grad_enabled()) {
          auto d = detail::map_unary(a, [](double x) {
            const double s = detail::logistic(x);
            return s * (1.0 + x * (1.0 - s));
          });
          return std::vector<Tensor>{mul(g, d)};
        }
        const Tensor s = sigmoid(a);
        const Tensor d =
            mul(s, add(Tensor::scalar(1.0), mul(a, sub(Tensor::scalar(1.0), s))));
        return std::vector<Tensor>{mul(g, d)};
      });
}

inline Tensor square(const Tensor& a) {
  auto v = detail::map_unary(a, [](double x) { return x * x; });
  return Tensor::make_result(v, "square", {a},
                             [a](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{scale(mul(g, a), 2.0)};
                             });
}

/// a^p for a constant exponent. Non-integer p requires a >= 0.
inline Tensor pow(const Tensor& a, double p) {
  if (p == 1.0) return a;
  const bool integral = std::floor(p) == p;
  if (!integral) {
    for (double x : a.values()) {
      if (x < 0.0) throw NumericError("pow: negative base with non-integer exponent");
    }
  }
  if (p < 0.0) {
    for (double x : a.values()) {
      if (x == 0.0) throw NumericError("pow: zero base with negative exponent");
    }
  }
  auto v = detail::map_unary(a, [p](double x) { return std::pow(x, p); });
  return Tensor::make_result(
      v, "pow", {a}, [a, p](const Tensor& g, const std::vector<bool>&) {
        if (p == 2.0) return std::vector<Tensor>{scale(mul(g, a), 2.0)};
        return std::vector<Tensor>{mul(g, scale(pow(a, p - 1.0), p))};
      });
}

// ============================================================================
// Linear algebra and shape
// ============================================================================

inline Tensor transpose(const Tensor& a) {
  detail::require_defined(a, "transpose");
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[c * a.rows() + r] = in[r * a.cols() + c];
  return Tensor::make_result(Tensor(a.cols(), a.rows(), std::move(out)), "transpose",
                             {a}, [](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{transpose(g)};
                             });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_defined(a, "matmul");
  detail::require_defined(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() +
                         " * " + b.shape_str());
  }
  std::vector<double> out(a.rows() * b.cols());
  Eigen::Map<detail::RowMajor> res(out.data(), a.rows(), b.cols());
  if (a.size() > 0 && b.size() > 0) {
    res.noalias() = detail::ConstMap(a.values().data(), a.rows(), a.cols()) *
                    detail::ConstMap(b.values().data(), b.rows(), b.cols());
  } else {
    res.setZero();
  }
  return Tensor::make_result(
      Tensor(a.rows(), b.cols(), std::move(out)), "matmul", {a, b},
      [a, b](const Tensor& g, const std::vector<bool>& need) {
        return std::vector<Tensor>{
            need[0] ? matmul(g, transpose(b)) : Tensor{},
            need[1] ? matmul(transpose(a), g) : Tensor{}};
      });
}

/// Broadcasts a 1x1 tensor to rows x cols.
inline Tensor expand(const Tensor& s, std::size_t rows, std::size_t cols) {
  if (!s.is_scalar()) throw DimensionError("expand: source must be 1x1, got " + s.shape_str());
  return Tensor::make_result(Tensor::filled(rows, cols, s[0]), "expand", {s},
                             [](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{sum(g)};
                             });
}

inline Tensor sum(const Tensor& a) {
  detail::require_defined(a, "sum");
  if (a.size() == 0) throw DimensionError("sum: empty tensor " + a.shape_str());
  double s = 0.0;
  for (double x : a.values()) s += x;
  const auto r = a.rows(), c = a.cols();
  return Tensor::make_result(Tensor::scalar(s), "sum", {a},
                             [r, c](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{expand(g, r, c)};
                             });
}

inline Tensor mean(const Tensor& a) {
  detail::require_defined(a, "mean");
  if (a.size() == 0) throw DimensionError("mean: empty tensor " + a.shape_str());
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor col_sum(const Tensor& a);
Tensor row_sum(const Tensor& a);

/// Repeats a 1xC row over `rows` rows.
inline Tensor broadcast_rows(const Tensor& a, std::size_t rows) {
  if (a.rows() != 1) throw DimensionError("broadcast_rows: expected 1xC, got " + a.shape_str());
  std::vector<double> out(rows * a.cols());
  const auto in = a.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[r * a.cols() + c] = in[c];
  return Tensor::make_result(Tensor(rows, a.cols(), std::move(out)), "broadcast_rows",
                             {a}, [](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{col_sum(g)};
                             });
}

/// Repeats an Nx1 column over `cols` columns.
inline Tensor broadcast_cols(const Tensor& a, std::size_t cols) {
  if (a.cols() != 1) throw DimensionError("broadcast_cols: expected Nx1, got " + a.shape_str());
  std::vector<double> out(a.rows() * cols);
  const auto in = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[r];
  return Tensor::make_result(Tensor(a.rows(), cols, std::move(out)), "broadcast_cols",
                             {a}, [](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{row_sum(g)};
                             });
}

/// Column sums, 1xC.
inline Tensor col_sum(const Tensor& a) {
  std::vector<double> out(a.cols(), 0.0);
  const auto in = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += in[r * a.cols() + c];
  const auto rows = a.rows();
  return Tensor::make_result(Tensor(1, a.cols(), std::move(out)), "col_sum", {a},
                             [rows](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{broadcast_rows(g, rows)};
                             });
}

/// Row sums, Nx1.
inline Tensor row_sum(const Tensor& a) {
  std::vector<double> out(a.rows(), 0.0);
  const auto in = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[r] += in[r * a.cols() + c];
  const auto cols = a.cols();
  return Tensor::make_result(Tensor(a.rows(), 1, std::move(out)), "row_sum", {a},
                             [cols](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{broadcast_cols(g, cols)};
                             });
}

/// a (NxC) + b (1xC) with b repeated over rows.
inline Tensor add_row(const Tensor& a, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw DimensionError("add_row: " + a.shape_str() + " + " + b.shape_str());
  }
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      out[r * a.cols() + c] = av[r * a.cols() + c] + bv[c];
  return Tensor::make_result(Tensor(a.rows(), a.cols(), std::move(out)), "add_row",
                             {a, b}, [](const Tensor& g, const std::vector<bool>& need) {
                               return std::vector<Tensor>{
                                   g, need[1] ? col_sum(g) : Tensor{}};
                             });
}

Tensor pad_cols(const Tensor& a, std::size_t total_cols, std::size_t offset);

/// Columns [begin, end) of a.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin >= end || end > a.cols()) {
    throw DimensionError("slice_cols: bad range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") of " + a.shape_str());
  }
  const std::size_t w = end - begin;
  std::vector<double> out(a.rows() * w);
  const auto in = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = in[r * a.cols() + begin + c];
  const auto total = a.cols();
  return Tensor::make_result(Tensor(a.rows(), w, std::move(out)), "slice_cols", {a},
                             [total, begin](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{pad_cols(g, total, begin)};
                             });
}

inline Tensor column(const Tensor& a, std::size_t j) { return slice_cols(a, j, j + 1); }

/// Places a into a zero matrix with `total_cols` columns at column `offset`.
inline Tensor pad_cols(const Tensor& a, std::size_t total_cols, std::size_t offset) {
  if (offset + a.cols() > total_cols) throw DimensionError("pad_cols: out of range");
  std::vector<double> out(a.rows() * total_cols, 0.0);
  const auto in = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      out[r * total_cols + offset + c] = in[r * a.cols() + c];
  const auto w = a.cols();
  return Tensor::make_result(Tensor(a.rows(), total_cols, std::move(out)), "pad_cols",
                             {a}, [offset, w](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{slice_cols(g, offset, offset + w)};
                             });
}

/// Horizontal concatenation of tensors with equal row counts.
inline Tensor hcat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("hcat: no inputs");
  if (parts.size() == 1) return parts.front();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("hcat: row counts disagree");
    cols += p.cols();
  }
  std::vector<double> out(rows * cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto in = p.values();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < p.cols(); ++c) out[r * cols + off + c] = in[r * p.cols() + c];
    off += p.cols();
  }
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.cols());
  return Tensor::make_result(
      Tensor(rows, cols, std::move(out)), "hcat", parts,
      [widths](const Tensor& g, const std::vector<bool>& need) {
        std::vector<Tensor> grads;
        std::size_t o = 0;
        for (std::size_t i = 0; i < widths.size(); ++i) {
          grads.push_back(need[i] ? slice_cols(g, o, o + widths[i]) : Tensor{});
          o += widths[i];
        }
        return grads;
      });
}

/// Same row-major values viewed with a different shape.
inline Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.size()) {
    throw DimensionError("reshape: " + a.shape_str() + " to " + std::to_string(rows) +
                         "x" + std::to_string(cols));
  }
  const auto r0 = a.rows(), c0 = a.cols();
  return Tensor::make_result(Tensor(rows, cols, a.to_vector()), "reshape", {a},
                             [r0, c0](const Tensor& g, const std::vector<bool>&) {
                               return std::vector<Tensor>{reshape(g, r0, c0)};
                             });
}

// ============================================================================
// Operators
// ============================================================================

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double k, const Tensor& a) { return scale(a, k); }
inline Tensor operator*(const Tensor& a, double k) { return scale(a, k); }
inline Tensor operator+(const Tensor& a, double k) { return add(a, Tensor::scalar(k)); }
inline Tensor operator-(const Tensor& a, double k) { return sub(a, Tensor::scalar(k)); }

}  // namespace pinnkit
