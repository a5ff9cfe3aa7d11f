#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gapfill/rng.hpp"

namespace gapfill {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Toggle NaN/Inf detection on op outputs (checked mode). Enabled by default;
/// a failed check throws std::runtime_error naming the op.
void set_finite_checks(bool on);
bool finite_checks_enabled();

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until touched by backward()
  bool requires_grad = false;
  std::string name;

  // Graph edges, populated by ops when grads are required. backprop reads
  // this node's grad and accumulates into the parents' grads. Cleared after
  // backward() so each forward pass rebuilds the graph (define-by-run).
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  void ensure_grad();
};

/// Dense row-major f64 tensor with reverse-mode autodiff. Value-semantic
/// handle over a shared node; copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t numel() const;
  bool requires_grad() const;
  double item() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor& set_name(std::string name);
  const std::string& name() const;

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// ---- primitive ops -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// [r x c] plus a length-c row vector, broadcast over rows (bias add).
Tensor add_rowvec(const Tensor& m, const Tensor& v);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor gelu(const Tensor& a);  // exact-erf form: x * Phi(x)
Tensor elem_log(const Tensor& a);
Tensor sum(const Tensor& a);   // -> shape {1}
Tensor mean(const Tensor& a);  // -> shape {1}
// Train-time inverted dropout (keep-prob scaling); identity at eval.
Tensor dropout(const Tensor& a, double p, Rng& rng, bool training);
// Embedding-style row gather from a [r x c] table.
Tensor lookup_rows(const Tensor& table, std::span<const std::size_t> rows);
// Per-row normalization of [n x f] with learnable gamma/beta of shape {f}.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  std::uint64_t updates = 0;
};

// Per-feature normalization of [n x f] over the batch dimension. Training
// mode requires n >= 2, normalizes with batch statistics and updates the
// running stats; eval mode normalizes with the running stats.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training);

/// matmul(x, w) + b convenience.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

/// Reverse pass from a scalar loss. Populates grad on every requires_grad
/// leaf reachable from the loss, then resets the traversed graph edges.
void backward(const Tensor& loss);

}  // namespace gapfill
