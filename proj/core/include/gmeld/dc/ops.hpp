#pragma once

#include <span>
#include <vector>

#include "gmeld/dc/tensor.hpp"

namespace gmeld::dc {

class ParamStore;

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] @ w[in, out] (+ bias[out]).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});
// Batched product over the leading axis: a[B,m,k] @ b[B,k,n], or b[B,n,k]^T.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// ---- pointwise ----
// Binary ops take equal shapes, or a one-element right operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// ---- normalization ----
Tensor softmax(const Tensor& x, std::size_t axis);
// Normalizes over the last axis with population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// ---- reductions ----
enum class Reduce { Mean, Sum, L2Sq };
Tensor reduce(const Tensor& x, Reduce kind, std::size_t axis);
Tensor reduce_all(const Tensor& x, Reduce kind);

// ---- layout ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor stack(std::span<const Tensor> parts, std::size_t axis);
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);

Tensor stop_gradient(const Tensor& x);

// ---- reverse pass ----
// Seeds d(loss)/d(loss) = 1 and fills the grad of every node reachable from
// `loss`. Grads are overwritten, never accumulated across calls; parameters
// the loss does not depend on receive zeros.
void backward(const Tensor& loss);
void backward(const Tensor& loss, ParamStore& params);

}  // namespace gmeld::dc
