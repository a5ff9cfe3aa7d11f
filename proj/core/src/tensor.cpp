#include "gapfill/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace gapfill {

namespace {

std::atomic<bool> g_finite_checks{true};

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_finite(const char* op, std::span<const double> v) {
  if (!g_finite_checks.load(std::memory_order_relaxed)) return;
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

void require_defined(const char* op, const Tensor& t) {
  if (!t.defined()) shape_error(op, "undefined tensor");
}

void require_rank2(const char* op, const Tensor& t) {
  require_defined(op, t);
  if (t.rank() != 2) shape_error(op, "expected rank-2 tensor, got shape " + shape_str(t.shape()));
}

bool grad_needed(const Tensor& t) {
  return t.node()->requires_grad || t.node()->backprop != nullptr || !t.node()->parents.empty();
}

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

// Attaches graph edges when any input participates in differentiation.
Tensor finish_op(const char* op, std::shared_ptr<TensorNode> out,
                 std::vector<Tensor> inputs,
                 std::function<void(TensorNode&)> backprop) {
  check_finite(op, out->value);
  bool track = false;
  for (const auto& t : inputs) track = track || grad_needed(t);
  if (track) {
    out->parents.reserve(inputs.size());
    for (auto& t : inputs) out->parents.push_back(t.node());
    out->backprop = std::move(backprop);
  }
  return Tensor(std::move(out));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void set_finite_checks(bool on) { g_finite_checks.store(on, std::memory_order_relaxed); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

void TensorNode::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match data length " +
                                std::to_string(data.size()));
  }
  check_finite("Tensor", data);
  node_ = make_node(std::move(shape), std::move(data));
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> d(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::vector<double> d(shape_numel(shape), v);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> d(shape_numel(shape));
  for (double& x : d) x = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

const Shape& Tensor::shape() const {
  require_defined("shape", *this);
  return node_->shape;
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double Tensor::item() const {
  require_defined("item", *this);
  if (numel() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

std::span<const double> Tensor::data() const {
  require_defined("data", *this);
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  require_defined("mutable_data", *this);
  return node_->value;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
  require_defined("grad", *this);
  if (!has_grad()) throw std::runtime_error("grad: no gradient populated for tensor '" + node_->name + "'");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  require_defined("mutable_grad", *this);
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor& Tensor::set_name(std::string name) {
  require_defined("set_name", *this);
  node_->name = std::move(name);
  return *this;
}

const std::string& Tensor::name() const {
  require_defined("name", *this);
  return node_->name;
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    shape_error("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> c(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    const double* arow = pa + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = arow[l];
      if (ail == 0.0) continue;
      const double* brow = pb + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
    }
  }
  auto out = make_node({m, n}, std::move(c));
  auto an = a.node(), bn = b.node();
  return finish_op("matmul", std::move(out), {a, b}, [an, bn, m, k, n](TensorNode& self) {
    const double* g = self.grad.data();
    if (an->requires_grad || an->backprop || !an->parents.empty()) {
      an->ensure_grad();
      double* da = an->grad.data();
      const double* pb = bn->value.data();
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
          double acc = 0.0;
          const double* grow = g + i * n;
          const double* brow = pb + l * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          da[i * k + l] += acc;
        }
      }
    }
    if (bn->requires_grad || bn->backprop || !bn->parents.empty()) {
      bn->ensure_grad();
      double* db = bn->grad.data();
      const double* pa = an->value.data();
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        const double* grow = g + i * n;
        for (std::size_t l = 0; l < k; ++l) {
          const double ail = arow[l];
          if (ail == 0.0) continue;
          double* brow = db + l * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += ail * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2("transpose", a);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> t(r * c);
  auto av = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = av[i * c + j];
  auto out = make_node({c, r}, std::move(t));
  auto an = a.node();
  return finish_op("transpose", std::move(out), {a}, [an, r, c](TensorNode& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) an->grad[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined("reshape", a);
  if (shape_numel(shape) != a.numel()) {
    shape_error("reshape", "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> v(a.data().begin(), a.data().end());
  auto out = make_node(std::move(shape), std::move(v));
  auto an = a.node();
  return finish_op("reshape", std::move(out), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

namespace {

Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b,
                          double (*fwd)(double, double),
                          void (*bwd)(double ga, double av, double bv, double& da, double& db)) {
  require_defined(op, a);
  require_defined(op, b);
  if (a.shape() != b.shape()) {
    shape_error(op, "shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> v(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(av[i], bv[i]);
  auto out = make_node(a.shape(), std::move(v));
  auto an = a.node(), bn = b.node();
  return finish_op(op, std::move(out), {a, b}, [an, bn, bwd](TensorNode& self) {
    const bool na = an->requires_grad || an->backprop || !an->parents.empty();
    const bool nb = bn->requires_grad || bn->backprop || !bn->parents.empty();
    if (na) an->ensure_grad();
    if (nb) bn->ensure_grad();
    double sink = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double& da = na ? an->grad[i] : sink;
      double& db = nb ? bn->grad[i] : sink;
      bwd(self.grad[i], an->value[i], bn->value[i], da, db);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double& da, double& db) {
        da += g;
        db += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double& da, double& db) {
        da += g;
        db -= g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double x, double y, double& da, double& db) {
        da += g * y;
        db += g * x;
      });
}

Tensor scale(const Tensor& a, double s) {
  require_defined("scale", a);
  std::vector<double> v(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * s;
  auto out = make_node(a.shape(), std::move(v));
  auto an = a.node();
  return finish_op("scale", std::move(out), {a}, [an, s](TensorNode& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  require_defined("add_scalar", a);
  std::vector<double> v(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + s;
  auto out = make_node(a.shape(), std::move(v));
  auto an = a.node();
  return finish_op("add_scalar", std::move(out), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require_rank2("add_rowvec", m);
  require_defined("add_rowvec", v);
  if (v.rank() != 1 || v.dim(0) != m.dim(1)) {
    shape_error("add_rowvec", "vector shape " + shape_str(v.shape()) + " incompatible with matrix " +
                                  shape_str(m.shape()));
  }
  const std::size_t r = m.dim(0), c = m.dim(1);
  std::vector<double> out_v(r * c);
  auto mv = m.data(), vv = v.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out_v[i * c + j] = mv[i * c + j] + vv[j];
  auto out = make_node({r, c}, std::move(out_v));
  auto mn = m.node(), vn = v.node();
  return finish_op("add_rowvec", std::move(out), {m, v}, [mn, vn, r, c](TensorNode& self) {
    if (mn->requires_grad || mn->backprop || !mn->parents.empty()) {
      mn->ensure_grad();
      for (std::size_t i = 0; i < r * c; ++i) mn->grad[i] += self.grad[i];
    }
    if (vn->requires_grad || vn->backprop || !vn->parents.empty()) {
      vn->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) vn->grad[j] += self.grad[i * c + j];
    }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1 for rank-2 tensors");
  for (const auto& p : parts) require_rank2("concat", p);
  const std::size_t fixed = parts[0].dim(1 - axis);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(1 - axis) != fixed) {
      shape_error("concat", "inconsistent shapes along fixed axis");
    }
    total += p.dim(axis);
  }
  Shape out_shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<double> v(total * fixed);
  if (axis == 0) {
    std::size_t row = 0;
    for (const auto& p : parts) {
      std::copy(p.data().begin(), p.data().end(), v.begin() + static_cast<std::ptrdiff_t>(row * fixed));
      row += p.dim(0);
    }
  } else {
    std::size_t col = 0;
    for (const auto& p : parts) {
      const std::size_t pc = p.dim(1);
      auto pv = p.data();
      for (std::size_t i = 0; i < fixed; ++i)
        for (std::size_t j = 0; j < pc; ++j) v[i * total + col + j] = pv[i * pc + j];
      col += pc;
    }
  }
  auto out = make_node(std::move(out_shape), std::move(v));
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  std::vector<std::shared_ptr<TensorNode>> nodes;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    sizes.push_back(p.dim(axis));
  }
  return finish_op("concat", std::move(out), std::move(inputs),
                   [nodes, sizes, axis, fixed, total](TensorNode& self) {
                     std::size_t off = 0;
                     for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                       auto& n = nodes[pi];
                       const std::size_t ext = sizes[pi];
                       if (n->requires_grad || n->backprop || !n->parents.empty()) {
                         n->ensure_grad();
                         if (axis == 0) {
                           for (std::size_t i = 0; i < ext * fixed; ++i)
                             n->grad[i] += self.grad[off * fixed + i];
                         } else {
                           for (std::size_t i = 0; i < fixed; ++i)
                             for (std::size_t j = 0; j < ext; ++j)
                               n->grad[i * ext + j] += self.grad[i * total + off + j];
                         }
                       }
                       off += ext;
                     }
                   });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require_rank2("slice", a);
  if (axis > 1) throw std::invalid_argument("slice: axis must be 0 or 1");
  if (begin >= end || end > a.dim(axis)) {
    shape_error("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") out of bounds for axis extent " + std::to_string(a.dim(axis)));
  }
  const std::size_t r = a.dim(0), c = a.dim(1);
  const std::size_t ext = end - begin;
  Shape out_shape = axis == 0 ? Shape{ext, c} : Shape{r, ext};
  std::vector<double> v(shape_numel(out_shape));
  auto av = a.data();
  if (axis == 0) {
    std::copy(av.begin() + static_cast<std::ptrdiff_t>(begin * c),
              av.begin() + static_cast<std::ptrdiff_t>(end * c), v.begin());
  } else {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < ext; ++j) v[i * ext + j] = av[i * c + begin + j];
  }
  auto out = make_node(std::move(out_shape), std::move(v));
  auto an = a.node();
  return finish_op("slice", std::move(out), {a}, [an, axis, begin, r, c, ext](TensorNode& self) {
    an->ensure_grad();
    if (axis == 0) {
      for (std::size_t i = 0; i < ext * c; ++i) an->grad[begin * c + i] += self.grad[i];
    } else {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < ext; ++j) an->grad[i * c + begin + j] += self.grad[i * ext + j];
    }
  });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  require_defined("softmax", a);
  if (a.rank() == 1) {
    if (axis != 0) throw std::invalid_argument("softmax: axis out of range for rank-1 tensor");
  } else if (a.rank() == 2) {
    if (axis > 1) throw std::invalid_argument("softmax: axis out of range");
  } else {
    shape_error("softmax", "expected rank-1 or rank-2 tensor");
  }
  // Treat rank-1 as a single row; axis-0 on rank-2 works on the transposed
  // layout via strides.
  const bool rank1 = a.rank() == 1;
  const std::size_t rows = rank1 ? 1 : (axis == 1 ? a.dim(0) : a.dim(1));
  const std::size_t cols = rank1 ? a.dim(0) : (axis == 1 ? a.dim(1) : a.dim(0));
  const std::size_t row_stride = rank1 ? cols : (axis == 1 ? cols : 1);
  const std::size_t col_stride = rank1 ? 1 : (axis == 1 ? 1 : a.dim(1));

  std::vector<double> v(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t base = i * row_stride;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, av[base + j * col_stride]);
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = std::exp(av[base + j * col_stride] - mx);
      v[base + j * col_stride] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < cols; ++j) v[base + j * col_stride] /= denom;
  }
  auto out = make_node(a.shape(), std::move(v));
  auto an = a.node();
  return finish_op("softmax", std::move(out), {a},
                   [an, rows, cols, row_stride, col_stride](TensorNode& self) {
                     an->ensure_grad();
                     for (std::size_t i = 0; i < rows; ++i) {
                       const std::size_t base = i * row_stride;
                       double dot = 0.0;
                       for (std::size_t j = 0; j < cols; ++j) {
                         const std::size_t idx = base + j * col_stride;
                         dot += self.grad[idx] * self.value[idx];
                       }
                       for (std::size_t j = 0; j < cols; ++j) {
                         const std::size_t idx = base + j * col_stride;
                         an->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
                       }
                     }
                   });
}

Tensor gelu(const Tensor& a) {
  require_defined("gelu", a);
  std::vector<double> v(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = av[i];
    v[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  auto out = make_node(a.shape(), std::move(v));
  auto an = a.node();
  return finish_op("gelu", std::move(out), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = an->value[i];
      const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      an->grad[i] += self.grad[i] * (phi + x * pdf);
    }
  });
}

Tensor elem_log(const Tensor& a) {
  require_defined("elem_log", a);
  std::vector<double> v(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (av[i] <= 0.0) throw std::domain_error("elem_log: non-positive input");
    v[i] = std::log(av[i]);
  }
  auto out = make_node(a.shape(), std::move(v));
  auto an = a.node();
  return finish_op("elem_log", std::move(out), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] / an->value[i];
  });
}

Tensor sum(const Tensor& a) {
  require_defined("sum", a);
  double s = 0.0;
  for (double x : a.data()) s += x;
  auto out = make_node({1}, {s});
  auto an = a.node();
  return finish_op("sum", std::move(out), {a}, [an](TensorNode& self) {
    an->ensure_grad();
    const double g = self.grad[0];
    for (double& d : an->grad) d += g;
  });
}

Tensor mean(const Tensor& a) {
  require_defined("mean", a);
  if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (double x : a.data()) s += x;
  const double inv_n = 1.0 / static_cast<double>(a.numel());
  auto out = make_node({1}, {s * inv_n});
  auto an = a.node();
  return finish_op("mean", std::move(out), {a}, [an, inv_n](TensorNode& self) {
    an->ensure_grad();
    const double g = self.grad[0] * inv_n;
    for (double& d : an->grad) d += g;
  });
}

Tensor dropout(const Tensor& a, double p, Rng& rng, bool training) {
  require_defined("dropout", a);
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return a;
  const double scale_v = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(a.numel());
  std::vector<double> v(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    (*mask)[i] = rng.bernoulli(1.0 - p) ? scale_v : 0.0;
    v[i] = av[i] * (*mask)[i];
  }
  auto out = make_node(a.shape(), std::move(v));
  auto an = a.node();
  return finish_op("dropout", std::move(out), {a}, [an, mask](TensorNode& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor lookup_rows(const Tensor& table, std::span<const std::size_t> rows) {
  require_rank2("lookup_rows", table);
  const std::size_t r = table.dim(0), c = table.dim(1);
  std::vector<double> v(rows.size() * c);
  auto tv = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= r) throw std::out_of_range("lookup_rows: row index out of range");
    std::copy(tv.begin() + static_cast<std::ptrdiff_t>(rows[i] * c),
              tv.begin() + static_cast<std::ptrdiff_t>((rows[i] + 1) * c),
              v.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  auto out = make_node({rows.size(), c}, std::move(v));
  auto tn = table.node();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return finish_op("lookup_rows", std::move(out), {table}, [tn, idx, c](TensorNode& self) {
    tn->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) tn->grad[idx[i] * c + j] += self.grad[i * c + j];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank2("layer_norm", x);
  const std::size_t n = x.dim(0), f = x.dim(1);
  if (gamma.rank() != 1 || gamma.dim(0) != f || beta.rank() != 1 || beta.dim(0) != f) {
    shape_error("layer_norm", "gamma/beta must have shape {features}");
  }
  std::vector<double> v(n * f);
  auto xh = std::make_shared<std::vector<double>>(n * f);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  auto xv = x.data();
  auto gv = gamma.data(), bv = beta.data();
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < f; ++j) mu += xv[i * f + j];
    mu /= static_cast<double>(f);
    double var = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      const double d = xv[i * f + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(f);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < f; ++j) {
      const double h = (xv[i * f + j] - mu) * is;
      (*xh)[i * f + j] = h;
      v[i * f + j] = gv[j] * h + bv[j];
    }
  }
  auto out = make_node({n, f}, std::move(v));
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return finish_op("layer_norm", std::move(out), {x, gamma, beta},
                   [xn, gn, bn, xh, inv_std, n, f](TensorNode& self) {
                     const bool need_x = xn->requires_grad || xn->backprop || !xn->parents.empty();
                     if (gn->requires_grad || gn->backprop || !gn->parents.empty()) {
                       gn->ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < f; ++j)
                           gn->grad[j] += self.grad[i * f + j] * (*xh)[i * f + j];
                     }
                     if (bn->requires_grad || bn->backprop || !bn->parents.empty()) {
                       bn->ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < f; ++j) bn->grad[j] += self.grad[i * f + j];
                     }
                     if (!need_x) return;
                     xn->ensure_grad();
                     for (std::size_t i = 0; i < n; ++i) {
                       double mean_dh = 0.0, mean_dh_h = 0.0;
                       for (std::size_t j = 0; j < f; ++j) {
                         const double dh = self.grad[i * f + j] * gn->value[j];
                         mean_dh += dh;
                         mean_dh_h += dh * (*xh)[i * f + j];
                       }
                       mean_dh /= static_cast<double>(f);
                       mean_dh_h /= static_cast<double>(f);
                       for (std::size_t j = 0; j < f; ++j) {
                         const double dh = self.grad[i * f + j] * gn->value[j];
                         xn->grad[i * f + j] +=
                             (*inv_std)[i] * (dh - mean_dh - (*xh)[i * f + j] * mean_dh_h);
                       }
                     }
                   });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training) {
  require_rank2("batch_norm", x);
  const std::size_t n = x.dim(0), f = x.dim(1);
  if (gamma.rank() != 1 || gamma.dim(0) != f || beta.rank() != 1 || beta.dim(0) != f) {
    shape_error("batch_norm", "gamma/beta must have shape {features}");
  }
  if (training && n < 2) {
    throw std::invalid_argument("batch_norm: training requires batch size >= 2, got " + std::to_string(n));
  }
  if (state.running_mean.size() != f) {
    state.running_mean.assign(f, 0.0);
    state.running_var.assign(f, 1.0);
  }
  auto xv = x.data();
  auto gv = gamma.data(), bv = beta.data();
  std::vector<double> v(n * f);
  auto xh = std::make_shared<std::vector<double>>(n * f);
  auto inv_std = std::make_shared<std::vector<double>>(f);

  std::vector<double> mu(f, 0.0), var(f, 0.0);
  if (training) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) mu[j] += xv[i * f + j];
    for (std::size_t j = 0; j < f; ++j) mu[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        const double d = xv[i * f + j] - mu[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(n);
    // Unbiased variance feeds the running estimate, population variance the
    // normalization.
    const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
    for (std::size_t j = 0; j < f; ++j) {
      state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mu[j];
      state.running_var[j] =
          (1.0 - state.momentum) * state.running_var[j] + state.momentum * var[j] * unbias;
    }
    state.updates++;
  } else {
    mu = state.running_mean;
    var = state.running_var;
  }
  for (std::size_t j = 0; j < f; ++j) (*inv_std)[j] = 1.0 / std::sqrt(var[j] + state.eps);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const double h = (xv[i * f + j] - mu[j]) * (*inv_std)[j];
      (*xh)[i * f + j] = h;
      v[i * f + j] = gv[j] * h + bv[j];
    }
  auto out = make_node({n, f}, std::move(v));
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return finish_op("batch_norm", std::move(out), {x, gamma, beta},
                   [xn, gn, bn, xh, inv_std, n, f, training](TensorNode& self) {
                     if (gn->requires_grad || gn->backprop || !gn->parents.empty()) {
                       gn->ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < f; ++j)
                           gn->grad[j] += self.grad[i * f + j] * (*xh)[i * f + j];
                     }
                     if (bn->requires_grad || bn->backprop || !bn->parents.empty()) {
                       bn->ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < f; ++j) bn->grad[j] += self.grad[i * f + j];
                     }
                     if (!(xn->requires_grad || xn->backprop || !xn->parents.empty())) return;
                     xn->ensure_grad();
                     if (!training) {
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < f; ++j)
                           xn->grad[i * f + j] += self.grad[i * f + j] * gn->value[j] * (*inv_std)[j];
                       return;
                     }
                     for (std::size_t j = 0; j < f; ++j) {
                       double mean_dh = 0.0, mean_dh_h = 0.0;
                       for (std::size_t i = 0; i < n; ++i) {
                         const double dh = self.grad[i * f + j] * gn->value[j];
                         mean_dh += dh;
                         mean_dh_h += dh * (*xh)[i * f + j];
                       }
                       mean_dh /= static_cast<double>(n);
                       mean_dh_h /= static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double dh = self.grad[i * f + j] * gn->value[j];
                         xn->grad[i * f + j] +=
                             (*inv_std)[j] * (dh - mean_dh - (*xh)[i * f + j] * mean_dh_h);
                       }
                     }
                   });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  // Iterative post-order DFS over parents.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& fr = stack.back();
    if (fr.next_parent < fr.node->parents.size()) {
      TensorNode* p = fr.node->parents[fr.next_parent++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(fr.node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
  // Consume the graph: drop edges so interior nodes can be freed while leaf
  // gradients stay behind.
  for (TensorNode* n : order) {
    n->backprop = nullptr;
    n->parents.clear();
  }
}

}  // namespace gapfill
