#include "mdsf/tensor.hpp"

#include "mdsf/errors.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

namespace mdsf {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

void Node::accumulate(const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  }
}

std::shared_ptr<detail::Node> new_node(Shape shape, Eigen::VectorXd values, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->id = detail::next_node_id();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor(Shape shape, bool requires_grad) {
  check_shape(shape);
  const Index n = mdsf::numel(shape);
  node_ = new_node(std::move(shape), Eigen::VectorXd::Zero(n), requires_grad);
}

Tensor::Tensor(Shape shape, Eigen::VectorXd values, bool requires_grad) {
  check_shape(shape);
  if (mdsf::numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_ = new_node(std::move(shape), std::move(values), requires_grad);
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values, bool requires_grad)
    : Tensor(std::move(shape),
             Eigen::Map<const Eigen::VectorXd>(values.begin(), static_cast<Index>(values.size())),
             requires_grad) {}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Shape{1}, Eigen::VectorXd::Constant(1, v), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const Index n = mdsf::numel(shape);
  return Tensor(std::move(shape), Eigen::VectorXd::Constant(n, v), requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

static const detail::Node& deref(const std::shared_ptr<detail::Node>& n) {
  if (!n) throw UsageError("operation on an undefined tensor");
  return *n;
}

const Shape& Tensor::shape() const { return deref(node_).shape; }

Index Tensor::size(Index axis) const {
  const Shape& s = shape();
  if (axis < 0) axis += static_cast<Index>(s.size());
  if (axis < 0 || axis >= static_cast<Index>(s.size())) {
    throw ConfigError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

Index Tensor::numel() const { return deref(node_).value.size(); }

const Eigen::VectorXd& Tensor::value() const { return deref(node_).value; }

Eigen::VectorXd& Tensor::mutable_value() {
  deref(node_);
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
  return value()[0];
}

double Tensor::at(std::initializer_list<Index> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank does not match " + to_string(s));
  Index flat = 0;
  std::size_t i = 0;
  for (Index v : index) {
    if (v < 0 || v >= s[i]) throw DimensionError("index out of range for " + to_string(s));
    flat = flat * s[i] + v;
    ++i;
  }
  return value()[flat];
}

bool Tensor::requires_grad() const { return deref(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  deref(node_);
  if (!node_->is_leaf()) throw UsageError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return deref(node_).is_leaf(); }

bool Tensor::has_grad() const { return deref(node_).grad.size() != 0; }

Eigen::VectorXd Tensor::grad() const {
  const auto& n = deref(node_);
  if (n.grad.size() == 0) return Eigen::VectorXd::Zero(n.value.size());
  return n.grad;
}

void Tensor::zero_grad() {
  deref(node_);
  node_->grad.resize(0);
}

void Tensor::backward() const { mdsf::backward(*this); }

Tensor Tensor::detach() const { return Tensor(shape(), value(), false); }

std::uint64_t Tensor::id() const { return deref(node_).id; }

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined()) return tape;
  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tape::backward() const {
  if (nodes_.empty()) throw UsageError("backward on an empty tape");
  const auto& root = nodes_.back();
  if (root->value.size() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + to_string(root->shape));
  }
  if (!root->requires_grad) {
    throw UsageError("backward on a loss that does not depend on any requires_grad tensor");
  }
  for (const auto& n : nodes_) {
    if (!n->is_leaf()) n->grad.resize(0);
  }
  root->accumulate(Eigen::VectorXd::Ones(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const auto& n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(n->grad);
  }
}

void backward(const Tensor& loss) { Tape::record(loss).backward(); }

Tensor make_result(Shape shape, Eigen::VectorXd value, const char* op,
                   const std::vector<Tensor>& inputs, detail::BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->id = detail::next_node_id();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled()) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const auto& t : inputs) node->inputs.push_back(t.node());
      node->backward = std::move(fn);
    }
  }
  return Tensor::from_node(std::move(node));
}

Tensor make_result(Shape shape, Eigen::VectorXd value, const char* op,
                   std::initializer_list<Tensor> inputs, detail::BackwardFn fn) {
  return make_result(std::move(shape), std::move(value), op, std::vector<Tensor>(inputs), std::move(fn));
}

}  // namespace mdsf
