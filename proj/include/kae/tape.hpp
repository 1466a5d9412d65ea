#pragma once

#include <functional>
#include <vector>

#include "kae/tensor.hpp"

namespace kae {

// Records applied operations in topological order and replays their
// backward rules in reverse. A tape and the tensors it created belong to a
// single worker; distinct workers own distinct tapes.
//
// With recording=false the ops compute values only (evaluation mode).
class Tape {
 public:
  bool recording = true;

  // out = op(a) x op(b); op per transpose flag. Rank-2 operands.
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b,
                   bool trans_a = false, bool trans_b = false);

  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr div(const TensorPtr& a, const TensorPtr& b);
  TensorPtr emax(const TensorPtr& a, const TensorPtr& b);  // ties go to a
  TensorPtr scale(const TensorPtr& a, double c);
  TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& v);  // [BxM] + [M]

  TensorPtr tanh(const TensorPtr& a);
  TensorPtr relu(const TensorPtr& a);
  TensorPtr square(const TensorPtr& a);
  TensorPtr cos(const TensorPtr& a);

  TensorPtr sum(const TensorPtr& a);
  TensorPtr mean(const TensorPtr& a);
  TensorPtr max(const TensorPtr& a);      // gradient to the first argmax
  TensorPtr sq_norm(const TensorPtr& a);  // sum of squares of all entries

  TensorPtr row_sqnorm(const TensorPtr& a);      // [BxS] -> [B]
  TensorPtr row_max(const TensorPtr& a);         // [BxS] -> [B], first argmax
  TensorPtr column(const TensorPtr& a, std::size_t j);  // [BxS] -> [B]
  TensorPtr entry(const TensorPtr& a, std::size_t i);   // flat element -> scalar

  // Structured materializations; gradients reach only the banded/block
  // parameters, so masked entries stay exactly zero forever.
  TensorPtr tridiagonal_matrix(const TensorPtr& diag, const TensorPtr& lower,
                               const TensorPtr& upper);
  TensorPtr jordan_matrix(const TensorPtr& a, const TensorPtr& b);

  // Seeds d(loss)/d(loss) = 1 and sweeps the recorded operations once in
  // reverse, accumulating into .grad of every reachable requires_grad
  // tensor. The loss must be scalar.
  void backward(const TensorPtr& loss);

  void clear() { nodes_.clear(); }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    TensorPtr out;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;

  TensorPtr unary(const TensorPtr& a, std::vector<std::size_t> out_shape,
                  const std::function<void(const Tensor&, Tensor&)>& fwd,
                  const std::function<void(Tensor&, const Tensor&)>& bwd);
  void record(const TensorPtr& out, std::function<void()> back);
};

}  // namespace kae
