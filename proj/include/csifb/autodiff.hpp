// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "csifb/quantizer.hpp"
#include "csifb/tensor.hpp"

namespace csifb::ad {

enum class op : std::uint8_t {
  input,
  matmul,        // (m,k)(k,n) -> (m,n)
  bmatmul,       // (B,m,k)(B,k,n) -> (B,m,n)
  bmatmul_tb,    // (B,m,k)(B,n,k) -> (B,m,n), second operand transposed
  add,           // same shape
  add_bias,      // (m,n) + (n,) broadcast over rows
  mul,           // elementwise, same shape
  scale,         // x * constant
  tanh_fn,
  relu_fn,
  softmax,       // along last dim
  layer_norm,    // along last dim, with gain and offset vectors
  concat_cols,   // (m,p)|(m,q) -> (m,p+q)
  split_heads,   // (B*T, H*d) -> (B*H, T, d)
  merge_heads,   // (B*H, T, d) -> (B*T, H*d)
  reshape,
  transpose,     // 2-D
  sum_squares,   // scalar
  mean_square,   // scalar
  quantize_st,   // quantize-reconstruct forward, identity backward
};

struct node {
  op kind = op::input;
  int a = -1, b = -1, c = -1;
  tensor val;
  tensor grad;          // allocated on demand during backward
  double x = 0.0;       // scale factor or layer-norm epsilon
  int i0 = 0, i1 = 0, i2 = 0;  // batch/heads/bits parameters
  bool needs_grad = false;
};

// Dynamic tape. Operations evaluate eagerly; backward replays the tape in
// reverse, accumulating into the gradients of every node that (transitively)
// depends on a trainable input. A graph instance is single-use per forward
// pass; training code rebuilds it each step.
class graph {
 public:
  int input(tensor t, bool trainable = true) {
    node n;
    n.kind = op::input;
    n.val = std::move(t);
    n.needs_grad = trainable;
    return push(std::move(n));
  }
  int constant(tensor t) { return input(std::move(t), false); }

  const tensor& value(int id) const { return at(id).val; }
  const tensor& gradient(int id) const {
    const node& n = at(id);
    if (n.grad.numel() == 0)
      throw std::logic_error("gradient: none accumulated for this node");
    return n.grad;
  }
  double scalar(int id) const {
    const tensor& t = at(id).val;
    if (t.numel() != 1) throw std::invalid_argument("scalar: node is not a scalar");
    return t.v[0];
  }
  std::size_t size() const { return nodes_.size(); }

  int matmul(int a, int b) {
    const tensor& A = at(a).val;
    const tensor& B = at(b).val;
    require(A.rank() == 2 && B.rank() == 2, "matmul: operands must be rank 2");
    require(A.shape[1] == B.shape[0], "matmul: inner dimensions disagree");
    node n = binary(op::matmul, a, b, tensor::raw({A.shape[0], B.shape[1]}));
    n.val.mat().noalias() = A.mat() * B.mat();
    return push(std::move(n));
  }

  int bmatmul(int a, int b) {
    const tensor& A = at(a).val;
    const tensor& B = at(b).val;
    require(A.rank() == 3 && B.rank() == 3, "bmatmul: operands must be rank 3");
    require(A.shape[0] == B.shape[0], "bmatmul: batch sizes disagree");
    require(A.shape[2] == B.shape[1], "bmatmul: inner dimensions disagree");
    node n = binary(op::bmatmul, a, b, tensor::raw({A.shape[0], A.shape[1], B.shape[2]}));
    for (std::size_t i = 0; i < A.shape[0]; ++i)
      n.val.slice(i).noalias() = A.slice(i) * B.slice(i);
    return push(std::move(n));
  }

  int bmatmul_tb(int a, int b) {
    const tensor& A = at(a).val;
    const tensor& B = at(b).val;
    require(A.rank() == 3 && B.rank() == 3, "bmatmul_tb: operands must be rank 3");
    require(A.shape[0] == B.shape[0], "bmatmul_tb: batch sizes disagree");
    require(A.shape[2] == B.shape[2], "bmatmul_tb: inner dimensions disagree");
    node n = binary(op::bmatmul_tb, a, b, tensor::raw({A.shape[0], A.shape[1], B.shape[1]}));
    for (std::size_t i = 0; i < A.shape[0]; ++i)
      n.val.slice(i).noalias() = A.slice(i) * B.slice(i).transpose();
    return push(std::move(n));
  }

  int add(int a, int b) {
    const tensor& A = at(a).val;
    const tensor& B = at(b).val;
    require(A.same_shape(B), "add: shapes disagree");
    node n = binary(op::add, a, b, tensor::raw(A.shape));
    as_array(n.val) = as_array(A) + as_array(B);
    return push(std::move(n));
  }

  int add_bias(int a, int b) {
    const tensor& A = at(a).val;
    const tensor& B = at(b).val;
    require(A.rank() == 2, "add_bias: first operand must be rank 2");
    require(B.rank() == 1 && B.shape[0] == A.shape[1],
            "add_bias: bias length must match columns");
    node n = binary(op::add_bias, a, b, tensor::raw(A.shape));
    const std::size_t rows = A.shape[0], cols = A.shape[1];
    const cadview bias(B.v.data(), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
      adview(n.val.v.data() + r * cols, static_cast<Eigen::Index>(cols)) =
          cadview(A.v.data() + r * cols, static_cast<Eigen::Index>(cols)) + bias;
    return push(std::move(n));
  }

  int mul(int a, int b) {
    const tensor& A = at(a).val;
    const tensor& B = at(b).val;
    require(A.same_shape(B), "mul: shapes disagree");
    node n = binary(op::mul, a, b, tensor::raw(A.shape));
    as_array(n.val) = as_array(A) * as_array(B);
    return push(std::move(n));
  }

  int scale(int a, double s) {
    const tensor& A = at(a).val;
    node n = unary(op::scale, a, tensor::raw(A.shape));
    n.x = s;
    as_array(n.val) = s * as_array(A);
    return push(std::move(n));
  }

  int sub(int a, int b) { return add(a, scale(b, -1.0)); }

  // tanh through the vectorized exp kernel: plain std::tanh stays scalar for
  // doubles and dominates the feed-forward layers otherwise. Exact at the
  // saturated ends, within a few ulp elsewhere.
  int tanh_fn(int a) {
    const tensor& A = at(a).val;
    node n = unary(op::tanh_fn, a, tensor::raw(A.shape));
    as_array(n.val) = 1.0 - 2.0 / ((2.0 * as_array(A)).exp() + 1.0);
    return push(std::move(n));
  }

  int relu_fn(int a) {
    const tensor& A = at(a).val;
    node n = unary(op::relu_fn, a, tensor::raw(A.shape));
    as_array(n.val) = as_array(A).max(0.0);
    return push(std::move(n));
  }

  int softmax(int a) {
    const tensor& A = at(a).val;
    require(A.rank() >= 1, "softmax: operand must have rank >= 1");
    node n = unary(op::softmax, a, tensor::raw(A.shape));
    const std::size_t cols = A.shape.back(), rows = A.numel() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      const cadview x(A.v.data() + r * cols, static_cast<Eigen::Index>(cols));
      adview y(n.val.v.data() + r * cols, static_cast<Eigen::Index>(cols));
      y = (x - x.maxCoeff()).exp();
      y /= y.sum();
    }
    return push(std::move(n));
  }

  int layer_norm(int a, int gain, int offset, double eps = 1e-5) {
    const tensor& A = at(a).val;
    const tensor& G = at(gain).val;
    const tensor& B = at(offset).val;
    require(A.rank() >= 1, "layer_norm: operand must have rank >= 1");
    const std::size_t cols = A.shape.back();
    require(G.rank() == 1 && G.shape[0] == cols, "layer_norm: gain length must match last dim");
    require(B.rank() == 1 && B.shape[0] == cols, "layer_norm: offset length must match last dim");
    require(eps > 0.0, "layer_norm: eps must be positive");
    node n;
    n.kind = op::layer_norm;
    n.a = a;
    n.b = gain;
    n.c = offset;
    n.x = eps;
    n.needs_grad = at(a).needs_grad || at(gain).needs_grad || at(offset).needs_grad;
    n.val = tensor::raw(A.shape);
    const std::size_t rows = A.numel() / cols;
    const cadview g(G.v.data(), static_cast<Eigen::Index>(cols));
    const cadview b(B.v.data(), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      const cadview x(A.v.data() + r * cols, static_cast<Eigen::Index>(cols));
      adview y(n.val.v.data() + r * cols, static_cast<Eigen::Index>(cols));
      const double mu = x.mean();
      const double var = (x - mu).square().mean();
      const double inv = 1.0 / std::sqrt(var + eps);
      y = g * ((x - mu) * inv) + b;
    }
    return push(std::move(n));
  }

  int concat_cols(int a, int b) {
    const tensor& A = at(a).val;
    const tensor& B = at(b).val;
    require(A.rank() == 2 && B.rank() == 2, "concat_cols: operands must be rank 2");
    require(A.shape[0] == B.shape[0], "concat_cols: row counts disagree");
    node n = binary(op::concat_cols, a, b, tensor::raw({A.shape[0], A.shape[1] + B.shape[1]}));
    const std::size_t p = A.shape[1], q = B.shape[1];
    for (std::size_t r = 0; r < A.shape[0]; ++r) {
      std::copy(A.v.data() + r * p, A.v.data() + (r + 1) * p, n.val.v.data() + r * (p + q));
      std::copy(B.v.data() + r * q, B.v.data() + (r + 1) * q, n.val.v.data() + r * (p + q) + p);
    }
    return push(std::move(n));
  }

  // (B*T, H*d) -> (B*H, T, d): rows regrouped so each attention head sees its
  // own T x d block.
  int split_heads(int a, int batch, int tokens, int heads) {
    const tensor& A = at(a).val;
    require(A.rank() == 2, "split_heads: operand must be rank 2");
    require(batch > 0 && tokens > 0 && heads > 0, "split_heads: sizes must be positive");
    require(A.shape[0] == static_cast<std::size_t>(batch) * static_cast<std::size_t>(tokens),
            "split_heads: rows must equal batch * tokens");
    require(A.shape[1] % static_cast<std::size_t>(heads) == 0,
            "split_heads: width must divide by heads");
    const std::size_t d = A.shape[1] / static_cast<std::size_t>(heads);
    node n = unary(op::split_heads, a,
                   tensor::raw({static_cast<std::size_t>(batch) * heads,
                                static_cast<std::size_t>(tokens), d}));
    n.i0 = batch;
    n.i1 = tokens;
    n.i2 = heads;
    tensor& out = n.val;
    for_each_head_run(batch, tokens, heads, d, [&](std::size_t f, std::size_t q) {
      for (std::size_t k = 0; k < d; ++k) out.v[q + k] = A.v[f + k];
    });
    return push(std::move(n));
  }

  int merge_heads(int a, int batch, int tokens, int heads) {
    const tensor& A = at(a).val;
    require(A.rank() == 3, "merge_heads: operand must be rank 3");
    require(A.shape[0] == static_cast<std::size_t>(batch) * static_cast<std::size_t>(heads),
            "merge_heads: leading dim must equal batch * heads");
    require(A.shape[1] == static_cast<std::size_t>(tokens), "merge_heads: token count disagrees");
    const std::size_t d = A.shape[2];
    node n = unary(op::merge_heads, a,
                   tensor::raw({static_cast<std::size_t>(batch) * tokens,
                                static_cast<std::size_t>(heads) * d}));
    n.i0 = batch;
    n.i1 = tokens;
    n.i2 = heads;
    tensor& out = n.val;
    for_each_head_run(batch, tokens, heads, d, [&](std::size_t f, std::size_t q) {
      for (std::size_t k = 0; k < d; ++k) out.v[f + k] = A.v[q + k];
    });
    return push(std::move(n));
  }

  int reshape(int a, std::vector<std::size_t> shape) {
    const tensor& A = at(a).val;
    require(tensor::count(shape) == A.numel(), "reshape: element count must be unchanged");
    node n = unary(op::reshape, a, tensor(std::move(shape), A.v));
    return push(std::move(n));
  }

  int transpose(int a) {
    const tensor& A = at(a).val;
    require(A.rank() == 2, "transpose: operand must be rank 2");
    node n = unary(op::transpose, a, tensor::raw({A.shape[1], A.shape[0]}));
    n.val.mat().noalias() = A.mat().transpose();
    return push(std::move(n));
  }

  int sum_squares(int a) {
    const tensor& A = at(a).val;
    node n = unary(op::sum_squares, a, tensor({std::size_t{1}}));
    n.val.v[0] = as_array(A).square().sum();
    return push(std::move(n));
  }

  int mean_square(int a) {
    const tensor& A = at(a).val;
    require(A.numel() > 0, "mean_square: operand is empty");
    node n = unary(op::mean_square, a, tensor({std::size_t{1}}));
    n.val.v[0] = as_array(A).square().sum() / static_cast<double>(A.numel());
    return push(std::move(n));
  }

  // Forward quantizes to cell centers; backward passes gradients through
  // unchanged (straight-through), which keeps the quantizer trainable-through
  // while the forward path sees true quantized values.
  int quantize_st(int a, int bits) {
    const tensor& A = at(a).val;
    quantizer_levels(bits);
    node n = unary(op::quantize_st, a, tensor::raw(A.shape));
    n.i0 = bits;
    for (std::size_t i = 0; i < A.numel(); ++i) n.val.v[i] = quantize_value(A.v[i], bits);
    return push(std::move(n));
  }

  // With release_buffers, every interior node's value and gradient are freed
  // as soon as its backward step finishes: consumers sit later on the tape and
  // have already run, so only inputs (whose gradients the caller reads) and
  // the still-pending frontier stay resident. Read any forward values you need
  // before calling backward in this mode.
  void backward(int loss, bool release_buffers = false) {
    node& top = at_mut(loss);
    if (top.val.numel() != 1)
      throw std::invalid_argument("backward: loss node must be scalar");
    if (!std::isfinite(top.val.v[0]))
      throw std::runtime_error("backward: loss is not finite");
    if (!top.needs_grad)
      throw std::invalid_argument("backward: loss does not depend on a trainable input");
    grad_of(loss).v[0] = 1.0;
    for (int i = loss; i >= 0; --i) {
      node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.grad.numel() == 0 || n.kind == op::input) continue;
      accumulate(n);
      if (release_buffers) {
        n.val = tensor();
        n.grad = tensor();
      }
    }
  }

 private:
  std::vector<node> nodes_;

  using adview = Eigen::Map<Eigen::ArrayXd>;
  using cadview = Eigen::Map<const Eigen::ArrayXd>;
  static adview as_array(tensor& t) {
    return adview(t.v.data(), static_cast<Eigen::Index>(t.numel()));
  }
  static cadview as_array(const tensor& t) {
    return cadview(t.v.data(), static_cast<Eigen::Index>(t.numel()));
  }

  static void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  }

  const node& at(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw std::out_of_range("graph: bad node id");
    return nodes_[static_cast<std::size_t>(id)];
  }
  node& at_mut(int id) { return const_cast<node&>(at(id)); }

  int push(node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  node unary(op k, int a, tensor val) {
    node n;
    n.kind = k;
    n.a = a;
    n.needs_grad = at(a).needs_grad;
    n.val = std::move(val);
    return n;
  }
  node binary(op k, int a, int b, tensor val) {
    node n;
    n.kind = k;
    n.a = a;
    n.b = b;
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    n.val = std::move(val);
    return n;
  }

  tensor& grad_of(int id) {
    node& n = at_mut(id);
    if (n.grad.numel() == 0) n.grad = tensor(n.val.shape);
    return n.grad;
  }
  bool wants(int id) const { return id >= 0 && at(id).needs_grad; }

  // Index map shared by head split/merge and their backward passes:
  // flat[(b*T + t), h*d + k] corresponds to cube[(b*H + h), t, k]. `fn` gets
  // (flat_index, cube_index) for each matched run of d contiguous values.
  template <typename Fn>
  static void for_each_head_run(int batch, int tokens, int heads, std::size_t d,
                                Fn&& fn) {
    const std::size_t hd = static_cast<std::size_t>(heads) * d;
    for (int b = 0; b < batch; ++b)
      for (int h = 0; h < heads; ++h)
        for (int t = 0; t < tokens; ++t) {
          const std::size_t f =
              (static_cast<std::size_t>(b) * tokens + t) * hd + static_cast<std::size_t>(h) * d;
          const std::size_t q = ((static_cast<std::size_t>(b) * heads + h) * tokens + t) * d;
          fn(f, q);
        }
  }

  void accumulate(node& n) {
    const tensor& dy = n.grad;
    switch (n.kind) {
      case op::input:
        break;
      case op::matmul: {
        const node& A = at(n.a);
        const node& B = at(n.b);
        if (wants(n.a)) grad_of(n.a).mat().noalias() += dy.mat() * B.val.mat().transpose();
        if (wants(n.b)) grad_of(n.b).mat().noalias() += A.val.mat().transpose() * dy.mat();
        break;
      }
      case op::bmatmul: {
        const node& A = at(n.a);
        const node& B = at(n.b);
        const std::size_t nb = A.val.shape[0];
        if (wants(n.a)) {
          tensor& da = grad_of(n.a);
          for (std::size_t i = 0; i < nb; ++i)
            da.slice(i).noalias() += dy.slice(i) * B.val.slice(i).transpose();
        }
        if (wants(n.b)) {
          tensor& db = grad_of(n.b);
          for (std::size_t i = 0; i < nb; ++i)
            db.slice(i).noalias() += A.val.slice(i).transpose() * dy.slice(i);
        }
        break;
      }
      case op::bmatmul_tb: {
        const node& A = at(n.a);
        const node& B = at(n.b);
        const std::size_t nb = A.val.shape[0];
        if (wants(n.a)) {
          tensor& da = grad_of(n.a);
          for (std::size_t i = 0; i < nb; ++i)
            da.slice(i).noalias() += dy.slice(i) * B.val.slice(i);
        }
        if (wants(n.b)) {
          tensor& db = grad_of(n.b);
          for (std::size_t i = 0; i < nb; ++i)
            db.slice(i).noalias() += dy.slice(i).transpose() * A.val.slice(i);
        }
        break;
      }
      case op::add: {
        if (wants(n.a)) as_array(grad_of(n.a)) += as_array(dy);
        if (wants(n.b)) as_array(grad_of(n.b)) += as_array(dy);
        break;
      }
      case op::add_bias: {
        const std::size_t cols = n.val.shape[1];
        if (wants(n.a)) as_array(grad_of(n.a)) += as_array(dy);
        if (wants(n.b)) {
          tensor& db = grad_of(n.b);
          Eigen::Map<Eigen::RowVectorXd>(db.v.data(), static_cast<Eigen::Index>(cols)) +=
              dy.mat().colwise().sum();
        }
        break;
      }
      case op::mul: {
        const node& A = at(n.a);
        const node& B = at(n.b);
        if (wants(n.a)) as_array(grad_of(n.a)) += as_array(dy) * as_array(B.val);
        if (wants(n.b)) as_array(grad_of(n.b)) += as_array(dy) * as_array(A.val);
        break;
      }
      case op::scale: {
        if (wants(n.a)) as_array(grad_of(n.a)) += n.x * as_array(dy);
        break;
      }
      case op::tanh_fn: {
        if (wants(n.a))
          as_array(grad_of(n.a)) += as_array(dy) * (1.0 - as_array(n.val).square());
        break;
      }
      case op::relu_fn: {
        if (wants(n.a)) {
          const tensor& x = at(n.a).val;
          as_array(grad_of(n.a)) += (as_array(x) > 0.0).select(as_array(dy), 0.0);
        }
        break;
      }
      case op::softmax: {
        if (wants(n.a)) {
          tensor& da = grad_of(n.a);
          const std::size_t cols = n.val.shape.back(), rows = n.val.numel() / cols;
          for (std::size_t r = 0; r < rows; ++r) {
            const cadview y(n.val.v.data() + r * cols, static_cast<Eigen::Index>(cols));
            const cadview g(dy.v.data() + r * cols, static_cast<Eigen::Index>(cols));
            adview d(da.v.data() + r * cols, static_cast<Eigen::Index>(cols));
            d += y * (g - (g * y).sum());
          }
        }
        break;
      }
      case op::layer_norm: {
        const tensor& X = at(n.a).val;
        const tensor& G = at(n.b).val;
        const std::size_t cols = X.shape.back(), rows = X.numel() / cols;
        const double eps = n.x;
        const cadview gain(G.v.data(), static_cast<Eigen::Index>(cols));
        Eigen::ArrayXd xhat(static_cast<Eigen::Index>(cols));
        Eigen::ArrayXd dxh(static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < rows; ++r) {
          const cadview x(X.v.data() + r * cols, static_cast<Eigen::Index>(cols));
          const cadview g(dy.v.data() + r * cols, static_cast<Eigen::Index>(cols));
          const double mu = x.mean();
          const double var = (x - mu).square().mean();
          const double inv = 1.0 / std::sqrt(var + eps);
          xhat = (x - mu) * inv;
          if (wants(n.c)) as_array(grad_of(n.c)) += g;
          if (wants(n.b)) as_array(grad_of(n.b)) += g * xhat;
          if (wants(n.a)) {
            tensor& da = grad_of(n.a);
            dxh = g * gain;
            const double m1 = dxh.mean();
            const double m2 = (dxh * xhat).mean();
            adview d(da.v.data() + r * cols, static_cast<Eigen::Index>(cols));
            d += inv * (dxh - m1 - xhat * m2);
          }
        }
        break;
      }
      case op::concat_cols: {
        const std::size_t p = at(n.a).val.shape[1], q = at(n.b).val.shape[1];
        if (wants(n.a))
          grad_of(n.a).mat() += dy.mat().leftCols(static_cast<Eigen::Index>(p));
        if (wants(n.b))
          grad_of(n.b).mat() += dy.mat().rightCols(static_cast<Eigen::Index>(q));
        break;
      }
      case op::split_heads: {
        if (wants(n.a)) {
          tensor& da = grad_of(n.a);
          const std::size_t d = n.val.shape[2];
          for_each_head_run(n.i0, n.i1, n.i2, d, [&](std::size_t f, std::size_t q) {
            for (std::size_t k = 0; k < d; ++k) da.v[f + k] += dy.v[q + k];
          });
        }
        break;
      }
      case op::merge_heads: {
        if (wants(n.a)) {
          tensor& da = grad_of(n.a);
          const std::size_t d = at(n.a).val.shape[2];
          for_each_head_run(n.i0, n.i1, n.i2, d, [&](std::size_t f, std::size_t q) {
            for (std::size_t k = 0; k < d; ++k) da.v[q + k] += dy.v[f + k];
          });
        }
        break;
      }
      case op::reshape: {
        if (wants(n.a)) as_array(grad_of(n.a)) += as_array(dy);
        break;
      }
      case op::transpose: {
        if (wants(n.a)) grad_of(n.a).mat().noalias() += dy.mat().transpose();
        break;
      }
      case op::sum_squares: {
        if (wants(n.a)) {
          const tensor& x = at(n.a).val;
          as_array(grad_of(n.a)) += (2.0 * dy.v[0]) * as_array(x);
        }
        break;
      }
      case op::mean_square: {
        if (wants(n.a)) {
          const tensor& x = at(n.a).val;
          const double g = 2.0 * dy.v[0] / static_cast<double>(x.numel());
          as_array(grad_of(n.a)) += g * as_array(x);
        }
        break;
      }
      case op::quantize_st: {
        if (wants(n.a)) as_array(grad_of(n.a)) += as_array(dy);
        break;
      }
    }
  }
};

struct grad_check_report {
  double max_err = 0.0;        // relative where the reference is large, absolute near zero
  std::size_t checked = 0;
  int worst_leaf = -1;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool ok(double tol) const { return checked > 0 && max_err < tol; }
};

// Central-difference check of every leaf coordinate. `build` receives a fresh
// graph plus the leaf ids (in the order of `leaves`) and returns the scalar
// loss id. Coordinates where the analytic gradient is below 1e-6 are compared
// absolutely, everything else relatively.
template <typename BuildFn>
grad_check_report grad_check(BuildFn&& build, std::vector<tensor> leaves,
                             double step = 1e-4) {
  if (leaves.empty()) throw std::invalid_argument("grad_check: no leaves");
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  auto run = [&](bool want_grads, std::vector<tensor>* grads) {
    graph g;
    std::vector<int> ids;
    ids.reserve(leaves.size());
    for (const auto& t : leaves) ids.push_back(g.input(t, true));
    const int loss = build(g, ids);
    const double f = g.scalar(loss);
    if (want_grads) {
      g.backward(loss);
      grads->clear();
      for (int id : ids) grads->push_back(g.gradient(id));
    }
    return f;
  };

  std::vector<tensor> analytic;
  run(true, &analytic);

  grad_check_report rep;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    for (std::size_t c = 0; c < leaves[li].numel(); ++c) {
      const double keep = leaves[li].v[c];
      leaves[li].v[c] = keep + step;
      const double fp = run(false, nullptr);
      leaves[li].v[c] = keep - step;
      const double fm = run(false, nullptr);
      leaves[li].v[c] = keep;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[li].v[c];
      const double err = std::abs(a) < 1e-6
                             ? std::abs(a - numeric)
                             : std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
      ++rep.checked;
      if (err > rep.max_err) {
        rep.max_err = err;
        rep.worst_leaf = static_cast<int>(li);
        rep.worst_coord = c;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace csifb::ad
