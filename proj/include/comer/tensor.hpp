// Dense tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a shared handle to a node on an implicit tape. Every op records
// its parents and a local backward rule when at least one input requires a
// gradient and recording is enabled (see NoGradGuard). backward() walks the
// nodes reachable from a scalar loss in reverse topological order, each node
// exactly once, and accumulates into leaf gradients.
//
// Tensors are rank 0 (scalar), 1 or 2. Model code uses 2-D row vectors
// [1 x d] and row-major matrices [rows x cols]; there is no broadcasting.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace comer {

using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace num {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t numel_of(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double value);
  /// Row vector of shape [1 x n].
  static Tensor row(std::vector<double> data);
  /// Leaf tensor that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  /// Leading dimension for matrices, 1 for row-less shapes.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  /// Writable storage. Reserved for optimizer updates and perturbation
  /// in gradient checks; never call while a graph using it is alive.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Accumulated gradient; all zeros when nothing has been accumulated.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Identity of the underlying node, for graph bookkeeping and tests.
  const void* id() const { return node_.get(); }

 private:
  friend struct Access;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

enum class Unary { kTanh, kSigmoid, kRelu };
enum class Binary { kAdd, kSub, kMul };

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor elementwise(const Tensor& x, Unary f);
Tensor elementwise(const Tensor& a, const Tensor& b, Binary f);
inline Tensor tanh(const Tensor& x) { return elementwise(x, Unary::kTanh); }
inline Tensor sigmoid(const Tensor& x) { return elementwise(x, Unary::kSigmoid); }
/// relu'(0) is 0.
inline Tensor relu(const Tensor& x) { return elementwise(x, Unary::kRelu); }
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Binary::kAdd); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, Binary::kSub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Binary::kMul); }
Tensor scale(const Tensor& x, double factor);

/// Softmax over all entries, computed with max subtraction.
Tensor softmax(const Tensor& v);
Tensor concat(std::span<const Tensor> xs, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> xs, std::size_t axis);
/// Identity forward; contributes nothing to upstream gradients.
Tensor stop_gradient(const Tensor& x);
/// Inverted dropout. Eval mode and p == 0 return x itself.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng);
/// -log softmax(logits)[target], fused.
Tensor cross_entropy(const Tensor& logits, std::size_t target);
Tensor sum(const Tensor& x);
/// Sum of scalar tensors.
Tensor add_scalars(std::span<const Tensor> xs);
/// Row i of a matrix as [1 x cols].
Tensor row(const Tensor& m, std::size_t i);
/// Mean of the rows of a matrix, [1 x cols].
Tensor mean_rows(const Tensor& m);

void backward(const Tensor& loss);

/// Softmax of plain values, same numerics as the op.
std::vector<double> softmax_values(std::span<const double> logits);

}  // namespace num
}  // namespace comer
