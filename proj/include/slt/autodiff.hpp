#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "slt/tensor.hpp"

namespace slt::ad {

// Handle into a Tape. Cheap to copy; valid only for the tape that made it.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over Tensor-valued nodes. Ops append nodes in
// topological order; backward() walks the tape in reverse. One tape per
// forward pass; gradients accumulate in node-local buffers and are pulled
// out by the caller (see nn::Graph).
class Tape {
 public:
  Var leaf(Tensor value);            // gradient tracked
  Var constant(Tensor value);        // gradient buffer exists but nothing flows out

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  Tensor& grad(Var v) { return nodes_[v.id].grad; }
  int64_t size() const { return static_cast<int64_t>(nodes_.size()); }

  // Seeds d(root)/d(root) = 1 and sweeps the tape. Root must be scalar.
  void backward(Var root);

  // --- elementwise / linear algebra -------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                 // Hadamard
  Var scale(Var a, double s);
  Var matmul(Var a, Var b);              // [m x k] . [k x n]
  Var matmul_nt(Var a, Var b);           // [m x k] . [n x k]^T
  Var add_row(Var x, Var bias);          // bias rank-1 [n], broadcast over rows
  Var mul_col(Var x, Var col);           // col [m x 1], broadcast over columns

  // --- nonlinearities ----------------------------------------------------
  Var sigmoid(Var a);
  Var gelu(Var a);                       // exact erf form
  Var exp_elem(Var a);
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

  // --- shape plumbing ----------------------------------------------------
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, int64_t c0, int64_t c1);
  Var gather_rows(Var a, std::vector<int64_t> idx);
  Var mean_rows(Var a, int64_t r0, int64_t r1);   // -> [1 x d]
  Var pick(Var a, int64_t r, int64_t c);          // -> scalar
  Var sum_all(Var a);                             // -> scalar

  // --- structured ops ----------------------------------------------------
  Var conv1d(Var x, Var w, Var b, int64_t kernel, int64_t stride);

  // Forward: row-wise one-hot at the argmax (ties -> lowest index).
  // Backward: straight-through, gradient passes unchanged.
  Var st_onehot_rows(Var soft);

  // Scalar node with a caller-supplied exact gradient wrt one parent.
  // Used by losses whose gradient comes from a dedicated recursion (CTC).
  Var scalar_with_grad(Var parent, double value, Tensor grad_wrt_parent);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, int32_t)> backward;  // (tape, self id)
    bool track = true;
  };

  Var emit(Tensor value, std::function<void(Tape&, int32_t)> bw,
           bool track = true);
  const Node& node(int32_t id) const { return nodes_[id]; }
  Node& node(int32_t id) { return nodes_[id]; }

  std::vector<Node> nodes_;
};

}  // namespace slt::ad
