#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "shppo/param_store.hpp"
#include "shppo/tensor.hpp"

namespace shppo {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode recording of primitive ops. Nodes are appended in evaluation
/// order, so the node list is already topologically sorted.
///
/// Leaves come in three kinds: constants (no gradient), trainable parameters
/// (gradient accumulated into the owning ParamStore on backward), and frozen
/// parameters (read from a ParamStore without copying, no gradient).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(ParamStore& store, const std::string& name);
  Var frozen(const ParamStore& store, const std::string& name);

  /// Appends an op result. `backward` is only kept (and only called) when at
  /// least one input requires a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const;
  const Tensor& value(Var v) const { return value(v.id); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }

  /// Gradient buffer of a node during backward; allocated as zeros on first use.
  Tensor& grad(std::size_t id);
  /// Gradient after backward. Empty tensor when the node received none.
  const Tensor& grad_of(Var v) const { return nodes_[v.id].grad; }

  /// Propagates d(loss)/d(node) to every node and adds parameter gradients to
  /// their ParamStore entries. The loss must hold exactly one element.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  /// Ops with non-differentiable points (relu, clipping, min/max) report how
  /// far their inputs sit from the nearest such point. Gradient checks use the
  /// smallest reported distance to reject samples where finite differences
  /// would straddle a kink.
  void note_kink_distance(double d) { kink_margin_ = d < kink_margin_ ? d : kink_margin_; }
  double kink_margin() const { return kink_margin_; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor* param_grad = nullptr;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  double kink_margin_ = 1e300;
};

}  // namespace shppo
