#include "comer/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace comer::num {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct Access {
  static const NodePtr& node(const Tensor& t) {
    if (!t.node_) throw std::logic_error("use of an undefined tensor");
    return t.node_;
  }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }
};

namespace {

thread_local bool g_grad_enabled = true;

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.size() > 2) throw ShapeError("tensors have rank at most 2, got " + to_string(shape));
  if (numel_of(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     to_string(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

// Creates an op result. Parents and the backward rule are only kept when
// recording is on and some parent needs a gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
                   std::function<void(Node&)> rule) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->leaf = false;
  if (g_grad_enabled) {
    bool any = std::any_of(parents.begin(), parents.end(),
                           [](const NodePtr& p) { return p->requires_grad; });
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward = std::move(rule);
    }
  }
  return Access::wrap(std::move(n));
}

void require_same_shape(const Node& a, const Node& b, const char* op) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape) + " vs " +
                     to_string(b.shape));
  }
}

void require_matrix(const Node& a, const char* op) {
  if (a.shape.size() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(a.shape));
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? " x " : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  return Tensor(make_leaf(std::move(shape), std::move(data), false));
}

Tensor Tensor::zeros(Shape shape) {
  auto n = numel_of(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

Tensor Tensor::row(std::vector<double> data) {
  auto n = data.size();
  return constant({1, n}, std::move(data));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  return Tensor(make_leaf(std::move(shape), std::move(data), true));
}

const Shape& Tensor::shape() const { return Access::node(*this)->shape; }
std::size_t Tensor::numel() const { return Access::node(*this)->value.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.empty()) return 1;
  return s.back();
}

std::span<const double> Tensor::data() const { return Access::node(*this)->value; }
std::span<double> Tensor::mutable_data() { return Access::node(*this)->value; }
std::vector<double> Tensor::to_vector() const { return Access::node(*this)->value; }

double Tensor::item() const {
  const auto& v = Access::node(*this)->value;
  if (v.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return v[0];
}

double Tensor::at(std::size_t i) const { return Access::node(*this)->value.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
  return Access::node(*this)->value.at(r * cols() + c);
}

bool Tensor::requires_grad() const { return Access::node(*this)->requires_grad; }
bool Tensor::has_grad() const { return !Access::node(*this)->grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& n = Access::node(*this);
  if (n->grad.empty()) return std::vector<double>(n->value.size(), 0.0);
  return n->grad;
}

std::span<double> Tensor::mutable_grad() { return Access::node(*this)->ensure_grad(); }

void Tensor::zero_grad() {
  auto& g = Access::node(*this)->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& an = Access::node(a);
  const auto& bn = Access::node(b);
  if (an->shape.size() != 2 || bn->shape.size() != 2 || an->shape[1] != bn->shape[0]) {
    throw ShapeError("matmul: incompatible shapes " + to_string(an->shape) + " and " +
                     to_string(bn->shape));
  }
  const auto m = an->shape[0], k = an->shape[1], n = bn->shape[1];
  std::vector<double> out(m * n);
  MapR(out.data(), m, n).noalias() = CMapR(an->value.data(), m, k) * CMapR(bn->value.data(), k, n);
  return make_result({m, n}, std::move(out), {an, bn}, [m, k, n](Node& self) {
    auto& a_node = *self.parents[0];
    auto& b_node = *self.parents[1];
    CMapR dc(self.grad.data(), m, n);
    if (a_node.requires_grad) {
      MapR(a_node.ensure_grad().data(), m, k).noalias() +=
          dc * CMapR(b_node.value.data(), k, n).transpose();
    }
    if (b_node.requires_grad) {
      MapR(b_node.ensure_grad().data(), k, n).noalias() +=
          CMapR(a_node.value.data(), m, k).transpose() * dc;
    }
  });
}

Tensor transpose(const Tensor& a) {
  const auto& an = Access::node(a);
  require_matrix(*an, "transpose");
  const auto r = an->shape[0], c = an->shape[1];
  std::vector<double> out(r * c);
  MapR(out.data(), c, r) = CMapR(an->value.data(), r, c).transpose();
  return make_result({c, r}, std::move(out), {an}, [r, c](Node& self) {
    auto& p = *self.parents[0];
    MapR(p.ensure_grad().data(), r, c) += CMapR(self.grad.data(), c, r).transpose();
  });
}

Tensor elementwise(const Tensor& x, Unary f) {
  const auto& xn = Access::node(x);
  std::vector<double> out(xn->value.size());
  switch (f) {
    case Unary::kTanh:
      std::transform(xn->value.begin(), xn->value.end(), out.begin(),
                     [](double v) { return std::tanh(v); });
      break;
    case Unary::kSigmoid:
      std::transform(xn->value.begin(), xn->value.end(), out.begin(), sigmoid_scalar);
      break;
    case Unary::kRelu:
      std::transform(xn->value.begin(), xn->value.end(), out.begin(),
                     [](double v) { return v > 0.0 ? v : 0.0; });
      break;
  }
  return make_result(xn->shape, std::move(out), {xn}, [f](Node& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    const auto& y = self.value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double local = 0.0;
      switch (f) {
        case Unary::kTanh: local = 1.0 - y[i] * y[i]; break;
        case Unary::kSigmoid: local = y[i] * (1.0 - y[i]); break;
        case Unary::kRelu: local = p.value[i] > 0.0 ? 1.0 : 0.0; break;
      }
      g[i] += self.grad[i] * local;
    }
  });
}

Tensor elementwise(const Tensor& a, const Tensor& b, Binary f) {
  const auto& an = Access::node(a);
  const auto& bn = Access::node(b);
  require_same_shape(*an, *bn, "elementwise");
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (f) {
      case Binary::kAdd: out[i] = an->value[i] + bn->value[i]; break;
      case Binary::kSub: out[i] = an->value[i] - bn->value[i]; break;
      case Binary::kMul: out[i] = an->value[i] * bn->value[i]; break;
    }
  }
  return make_result(an->shape, std::move(out), {an, bn}, [f](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += f == Binary::kMul ? g[i] * pb.value[i] : g[i];
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (f) {
          case Binary::kAdd: gb[i] += g[i]; break;
          case Binary::kSub: gb[i] -= g[i]; break;
          case Binary::kMul: gb[i] += g[i] * pa.value[i]; break;
        }
      }
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  const auto& xn = Access::node(x);
  std::vector<double> out(xn->value);
  for (auto& v : out) v *= factor;
  return make_result(xn->shape, std::move(out), {xn}, [factor](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

std::vector<double> softmax_values(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax: empty input");
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

Tensor softmax(const Tensor& v) {
  const auto& vn = Access::node(v);
  auto out = softmax_values(vn->value);
  return make_result(vn->shape, std::move(out), {vn}, [](Node& self) {
    const auto& y = self.value;
    const auto& gy = self.grad;
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += gy[i] * y[i];
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < y.size(); ++i) g[i] += y[i] * (gy[i] - dot);
  });
}

Tensor concat(std::span<const Tensor> xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  std::vector<NodePtr> nodes;
  nodes.reserve(xs.size());
  for (const auto& x : xs) nodes.push_back(Access::node(x));
  const auto rank = nodes[0]->shape.size();
  if (rank == 0 || axis >= rank) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " invalid for shape " +
                     to_string(nodes[0]->shape));
  }
  for (const auto& n : nodes) {
    bool ok = n->shape.size() == rank;
    for (std::size_t d = 0; ok && d < rank; ++d) {
      if (d != axis && n->shape[d] != nodes[0]->shape[d]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: incompatible shapes " + to_string(nodes[0]->shape) + " and " +
                       to_string(n->shape) + " along axis " + std::to_string(axis));
    }
  }

  Shape out_shape = nodes[0]->shape;
  out_shape[axis] = 0;
  for (const auto& n : nodes) out_shape[axis] += n->shape[axis];
  std::vector<double> out;
  out.reserve(numel_of(out_shape));

  // Row-major: concatenation along the leading axis (or a rank-1 axis) is a
  // plain append; along columns each output row interleaves the inputs.
  const bool append = rank == 1 || axis == 0;
  if (append) {
    for (const auto& n : nodes) out.insert(out.end(), n->value.begin(), n->value.end());
  } else {
    const auto rows = out_shape[0];
    for (std::size_t r = 0; r < rows; ++r) {
      for (const auto& n : nodes) {
        const auto c = n->shape[1];
        out.insert(out.end(), n->value.begin() + r * c, n->value.begin() + (r + 1) * c);
      }
    }
  }

  return make_result(std::move(out_shape), std::move(out), std::move(nodes), [append](Node& self) {
    if (append) {
      std::size_t offset = 0;
      for (auto& p : self.parents) {
        const auto len = p->value.size();
        if (p->requires_grad) {
          auto& g = p->ensure_grad();
          for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
        }
        offset += len;
      }
      return;
    }
    const auto rows = self.shape[0];
    const auto width = self.shape[1];
    std::size_t col = 0;
    for (auto& p : self.parents) {
      const auto c = p->shape[1];
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < c; ++j) g[r * c + j] += self.grad[r * width + col + j];
        }
      }
      col += c;
    }
  });
}

Tensor concat(std::initializer_list<Tensor> xs, std::size_t axis) {
  return concat(std::span<const Tensor>(xs.begin(), xs.size()), axis);
}

Tensor stop_gradient(const Tensor& x) {
  const auto& xn = Access::node(x);
  return Tensor::constant(xn->shape, xn->value);
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(p));
  }
  if (mode == Mode::kEval || p == 0.0) return x;
  const auto& xn = Access::node(x);
  const double keep_scale = 1.0 / (1.0 - p);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> mask(xn->value.size());
  std::vector<double> out(xn->value.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = uniform(rng) < p ? 0.0 : keep_scale;
    out[i] = xn->value[i] * mask[i];
  }
  return make_result(xn->shape, std::move(out), {xn}, [mask = std::move(mask)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  const auto& ln = Access::node(logits);
  if (target >= ln->value.size()) {
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) +
                            " out of range for " + std::to_string(ln->value.size()) + " logits");
  }
  auto probs = softmax_values(ln->value);
  double mx = *std::max_element(ln->value.begin(), ln->value.end());
  double total = 0.0;
  for (double v : ln->value) total += std::exp(v - mx);
  double loss = mx + std::log(total) - ln->value[target];
  return make_result({}, {loss}, {ln}, [probs = std::move(probs), target](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += up * (probs[i] - (i == target ? 1.0 : 0.0));
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto& xn = Access::node(x);
  double total = std::accumulate(xn->value.begin(), xn->value.end(), 0.0);
  return make_result({}, {total}, {xn}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor add_scalars(std::span<const Tensor> xs) {
  std::vector<NodePtr> nodes;
  double total = 0.0;
  for (const auto& x : xs) {
    const auto& n = Access::node(x);
    if (n->value.size() != 1) throw ShapeError("add_scalars: non-scalar " + to_string(n->shape));
    total += n->value[0];
    nodes.push_back(n);
  }
  return make_result({}, {total}, std::move(nodes), [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->ensure_grad()[0] += self.grad[0];
    }
  });
}

Tensor row(const Tensor& m, std::size_t i) {
  const auto& mn = Access::node(m);
  require_matrix(*mn, "row");
  const auto rows = mn->shape[0], cols = mn->shape[1];
  if (i >= rows) {
    throw ShapeError("row: index " + std::to_string(i) + " out of range for " + to_string(mn->shape));
  }
  std::vector<double> out(mn->value.begin() + i * cols, mn->value.begin() + (i + 1) * cols);
  return make_result({1, cols}, std::move(out), {mn}, [i, cols](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t j = 0; j < cols; ++j) g[i * cols + j] += self.grad[j];
  });
}

Tensor mean_rows(const Tensor& m) {
  const auto& mn = Access::node(m);
  require_matrix(*mn, "mean_rows");
  const auto rows = mn->shape[0], cols = mn->shape[1];
  if (rows == 0) throw ShapeError("mean_rows: no rows");
  std::vector<double> out(cols);
  MapR(out.data(), 1, cols) = CMapR(mn->value.data(), rows, cols).colwise().mean();
  return make_result({1, cols}, std::move(out), {mn}, [rows, cols](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += inv * self.grad[j];
    }
  });
}

void backward(const Tensor& loss) {
  const auto& root = Access::node(loss);
  if (root->value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + to_string(root->shape));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order over recorded nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->leaf && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->grad.empty() && node->backward) node->backward(*node);
  }
  // Intermediate gradients are consumed; only leaves keep theirs.
  for (Node* node : order) {
    if (node->leaf) continue;
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

}  // namespace comer::num
