#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mdsf {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

using BackwardFn = std::function<void(const Eigen::VectorXd& grad_out)>;

// One vertex of the define-by-run graph. Inputs always carry smaller ids than
// the node that consumes them.
struct Node {
  std::uint64_t id = 0;
  Shape shape;
  Eigen::VectorXd value;
  Eigen::VectorXd grad;  // empty until something is accumulated
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  void accumulate(const Eigen::Ref<const Eigen::VectorXd>& g);
  bool is_leaf() const { return inputs.empty(); }
};

std::uint64_t next_node_id();

}  // namespace detail

/// Dense row-major N-D array of doubles that optionally participates in
/// reverse-mode differentiation.
///
/// Copies share the underlying storage and graph node, so a parameter tensor
/// held by a layer and the same tensor captured by a loss refer to one value.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Eigen::VectorXd values, bool requires_grad = false);
  Tensor(Shape shape, std::initializer_list<double> values, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  Index rank() const { return static_cast<Index>(shape().size()); }
  Index size(Index axis) const;
  Index numel() const;

  const Eigen::VectorXd& value() const;
  /// In-place access to the values. Only meaningful on leaves (parameters,
  /// inputs); edits to interior nodes are not seen by recorded backward passes.
  Eigen::VectorXd& mutable_value();
  double item() const;
  double at(std::initializer_list<Index> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const;
  bool has_grad() const;
  /// dLoss/dThis from the last backward pass; zeros when nothing was accumulated.
  Eigen::VectorXd grad() const;
  void zero_grad();

  void backward() const;
  Tensor detach() const;

  std::uint64_t id() const;
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Whether newly created op results record backward closures on this thread.
bool grad_enabled();

/// RAII scope that disables graph recording on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Topologically ordered record of the graph reachable from a root tensor.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::span<const std::shared_ptr<detail::Node>> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds the root with 1 and propagates in reverse order. Interior grads are
  /// reset first; leaf grads accumulate and must be zeroed by the caller.
  void backward() const;

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

void backward(const Tensor& loss);

/// Builds an op result. When no input requires grad (or recording is
/// disabled) the result is a constant and `fn` is dropped.
Tensor make_result(Shape shape, Eigen::VectorXd value, const char* op,
                   std::initializer_list<Tensor> inputs, detail::BackwardFn fn);
Tensor make_result(Shape shape, Eigen::VectorXd value, const char* op,
                   const std::vector<Tensor>& inputs, detail::BackwardFn fn);

}  // namespace mdsf
