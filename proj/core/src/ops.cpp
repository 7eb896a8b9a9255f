#include "gmeld/dc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "gmeld/dc/param_store.hpp"
#include "gmeld/error.hpp"

namespace gmeld::dc {

namespace {

using Node = detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> parents, std::function<void(Node&)> backward) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite result in op '") + op + "'");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || (p.defined() && p.requires_grad());
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(p.defined() ? p.node() : nullptr);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tensor make_result_n(const char* op, Shape shape, std::vector<double> values,
                     std::span<const Tensor> parents, std::function<void(Node&)> backward) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite result in op '") + op + "'");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Parent slot that wants a gradient, or nullptr.
Node* grad_target(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  if (p == nullptr || !p->requires_grad) return nullptr;
  p->ensure_grad();
  return p;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string("undefined tensor passed to ") + op);
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " + to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

bool scalar_rhs(const Tensor& a, const Tensor& b) { return b.numel() == 1 && a.numel() != 1; }

void check_binary(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape() && !scalar_rhs(a, b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df_from_xy) {
  require_defined(x, op);
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [df_from_xy](Node& self) {
    Node* px = grad_target(self, 0);
    if (!px) return;
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      px->grad[i] += self.grad[i] * df_from_xy(px->value[i], self.value[i]);
    }
  });
}

}  // namespace

// ---------------------------------------------------------------- algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: shape mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() = ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    ConstMapMat dc(self.grad.data(), m, n);
    if (Node* pa = grad_target(self, 0)) {
      MapMat(pa->grad.data(), m, k).noalias() += dc * ConstMapMat(self.parents[1]->value.data(), k, n).transpose();
    }
    if (Node* pb = grad_target(self, 1)) {
      MapMat(pb->grad.data(), k, n).noalias() += ConstMapMat(self.parents[0]->value.data(), m, k).transpose() * dc;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(w, "linear");
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw DimensionError("linear: shape mismatch " + to_string(x.shape()) + " x " + to_string(w.shape()));
  }
  const std::size_t in = w.dim(0), out_dim = w.dim(1), rows = x.numel() / in;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw DimensionError("linear: bias shape " + to_string(bias.shape()) + " for output width " + std::to_string(out_dim));
  }
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<double> out(rows * out_dim);
  MapMat y(out.data(), rows, out_dim);
  y.noalias() = ConstMapMat(x.data().data(), rows, in) * ConstMapMat(w.data().data(), in, out_dim);
  if (bias.defined()) {
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), out_dim);
  }
  const bool has_bias = bias.defined();
  return make_result("linear", std::move(out_shape), std::move(out), {x, w, bias},
                     [rows, in, out_dim, has_bias](Node& self) {
                       ConstMapMat dy(self.grad.data(), rows, out_dim);
                       if (Node* px = grad_target(self, 0)) {
                         MapMat(px->grad.data(), rows, in).noalias() +=
                             dy * ConstMapMat(self.parents[1]->value.data(), in, out_dim).transpose();
                       }
                       if (Node* pw = grad_target(self, 1)) {
                         MapMat(pw->grad.data(), in, out_dim).noalias() +=
                             ConstMapMat(self.parents[0]->value.data(), rows, in).transpose() * dy;
                       }
                       if (has_bias) {
                         if (Node* pb = grad_target(self, 2)) {
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < out_dim; ++c) pb->grad[c] += self.grad[r * out_dim + c];
                         }
                       }
                     });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_defined(a, "bmm");
  require_defined(b, "bmm");
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1))) {
    throw DimensionError("bmm: shape mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()) +
                         (transpose_b ? "^T" : ""));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMapMat ai(a.data().data() + i * m * k, m, k);
    MapMat ci(out.data() + i * m * n, m, n);
    if (transpose_b) {
      ci.noalias() = ai * ConstMapMat(b.data().data() + i * n * k, n, k).transpose();
    } else {
      ci.noalias() = ai * ConstMapMat(b.data().data() + i * k * n, k, n);
    }
  }
  return make_result("bmm", {batch, m, n}, std::move(out), {a, b}, [batch, m, k, n, transpose_b](Node& self) {
    Node* pa = grad_target(self, 0);
    Node* pb = grad_target(self, 1);
    const double* av = self.parents[0]->value.data();
    const double* bv = self.parents[1]->value.data();
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMapMat dc(self.grad.data() + i * m * n, m, n);
      if (transpose_b) {
        ConstMapMat bi(bv + i * n * k, n, k);
        if (pa) MapMat(pa->grad.data() + i * m * k, m, k).noalias() += dc * bi;
        if (pb) MapMat(pb->grad.data() + i * n * k, n, k).noalias() += dc.transpose() * ConstMapMat(av + i * m * k, m, k);
      } else {
        ConstMapMat bi(bv + i * k * n, k, n);
        if (pa) MapMat(pa->grad.data() + i * m * k, m, k).noalias() += dc * bi.transpose();
        if (pb) MapMat(pb->grad.data() + i * k * n, k, n).noalias() += ConstMapMat(av + i * m * k, m, k).transpose() * dc;
      }
    }
  });
}

// -------------------------------------------------------------- pointwise

Tensor add(const Tensor& a, const Tensor& b) {
  check_binary(a, b, "add");
  const bool bcast = scalar_rhs(a, b);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[bcast ? 0 : i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [bcast](Node& self) {
    if (Node* pa = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (Node* pb = grad_target(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[bcast ? 0 : i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_binary(a, b, "sub");
  const bool bcast = scalar_rhs(a, b);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[bcast ? 0 : i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [bcast](Node& self) {
    if (Node* pa = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (Node* pb = grad_target(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[bcast ? 0 : i] -= self.grad[i];
    }
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_binary(a, b, "hadamard");
  const bool bcast = scalar_rhs(a, b);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[bcast ? 0 : i];
  return make_result("hadamard", a.shape(), std::move(out), {a, b}, [bcast](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (Node* pa = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * bv[bcast ? 0 : i];
    }
    if (Node* pb = grad_target(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[bcast ? 0 : i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary("add_scalar", x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x,
               [](double v) {
                 if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
                 const double e = std::exp(v);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary("gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
               [inv_sqrt_2pi](double v, double) {
                 return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
               });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary("clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------- normalization

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  const auto s = split_at(x.shape(), axis, "softmax");
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      const std::size_t base = o * s.len * s.inner + j;
      double mx = in[base];
      for (std::size_t i = 1; i < s.len; ++i) mx = std::max(mx, in[base + i * s.inner]);
      double total = 0;
      for (std::size_t i = 0; i < s.len; ++i) {
        const double e = std::exp(in[base + i * s.inner] - mx);
        out[base + i * s.inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < s.len; ++i) out[base + i * s.inner] /= total;
    }
  }
  return make_result("softmax", x.shape(), std::move(out), {x}, [s](Node& self) {
    Node* px = grad_target(self, 0);
    if (!px) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.inner; ++j) {
        const std::size_t base = o * s.len * s.inner + j;
        double dot = 0;
        for (std::size_t i = 0; i < s.len; ++i) {
          const std::size_t at = base + i * s.inner;
          dot += self.grad[at] * self.value[at];
        }
        for (std::size_t i = 0; i < s.len; ++i) {
          const std::size_t at = base + i * s.inner;
          px->grad[at] += self.value[at] * (self.grad[at] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined(x, "layer_norm");
  const std::size_t width = x.shape().back();
  if (width < 2) throw DimensionError("layer_norm: last axis must have size >= 2, got " + to_string(x.shape()));
  if (gain.shape() != Shape{width} || bias.shape() != Shape{width}) {
    throw DimensionError("layer_norm: gain/bias must have shape [" + std::to_string(width) + "]");
  }
  const std::size_t rows = x.numel() / width;
  const auto in = x.data();
  const auto g = gain.data();
  const auto b = bias.data();
  std::vector<double> out(in.size());
  auto normalized = std::make_shared<std::vector<double>>(in.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * width;
    double mean = 0;
    for (std::size_t i = 0; i < width; ++i) mean += row[i];
    mean /= static_cast<double>(width);
    double var = 0;
    for (std::size_t i = 0; i < width; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < width; ++i) {
      const double xh = (row[i] - mean) * is;
      (*normalized)[r * width + i] = xh;
      out[r * width + i] = xh * g[i] + b[i];
    }
  }
  return make_result("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                     [rows, width, normalized, inv_std](Node& self) {
                       const auto& xh = *normalized;
                       const auto& gv = self.parents[1]->value;
                       if (Node* pg = grad_target(self, 1)) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < width; ++i)
                             pg->grad[i] += self.grad[r * width + i] * xh[r * width + i];
                       }
                       if (Node* pb = grad_target(self, 2)) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < width; ++i) pb->grad[i] += self.grad[r * width + i];
                       }
                       Node* px = grad_target(self, 0);
                       if (!px) return;
                       const double inv_w = 1.0 / static_cast<double>(width);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double mean_d = 0;
                         double mean_dx = 0;
                         for (std::size_t i = 0; i < width; ++i) {
                           const double d = self.grad[r * width + i] * gv[i];
                           mean_d += d;
                           mean_dx += d * xh[r * width + i];
                         }
                         mean_d *= inv_w;
                         mean_dx *= inv_w;
                         for (std::size_t i = 0; i < width; ++i) {
                           const double d = self.grad[r * width + i] * gv[i];
                           px->grad[r * width + i] += (*inv_std)[r] * (d - mean_d - xh[r * width + i] * mean_dx);
                         }
                       }
                     });
}

// ------------------------------------------------------------- reductions

Tensor reduce(const Tensor& x, Reduce kind, std::size_t axis) {
  require_defined(x, "reduce");
  const auto s = split_at(x.shape(), axis, "reduce");
  if (s.len == 0) throw DimensionError("reduce: empty axis " + std::to_string(axis));
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  const auto in = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.len; ++i)
      for (std::size_t j = 0; j < s.inner; ++j) {
        const double v = in[(o * s.len + i) * s.inner + j];
        out[o * s.inner + j] += kind == Reduce::L2Sq ? v * v : v;
      }
  if (kind == Reduce::Mean) {
    for (double& v : out) v /= static_cast<double>(s.len);
  }
  return make_result("reduce", std::move(out_shape), std::move(out), {x}, [s, kind](Node& self) {
    Node* px = grad_target(self, 0);
    if (!px) return;
    const double mean_scale = 1.0 / static_cast<double>(s.len);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.len; ++i)
        for (std::size_t j = 0; j < s.inner; ++j) {
          const std::size_t at = (o * s.len + i) * s.inner + j;
          const double g = self.grad[o * s.inner + j];
          switch (kind) {
            case Reduce::Sum: px->grad[at] += g; break;
            case Reduce::Mean: px->grad[at] += g * mean_scale; break;
            case Reduce::L2Sq: px->grad[at] += 2.0 * px->value[at] * g; break;
          }
        }
  });
}

Tensor reduce_all(const Tensor& x, Reduce kind) {
  require_defined(x, "reduce_all");
  if (x.numel() == 0) throw DimensionError("reduce_all: empty tensor");
  return reduce(reshape(x, {x.numel()}), kind, 0);
}

// ----------------------------------------------------------------- layout

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    Node* px = grad_target(self, 0);
    if (!px) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  require_defined(x, "permute");
  const Shape& in_shape = x.shape();
  const std::size_t r = in_shape.size();
  if (order.size() != r) throw DimensionError("permute: order length does not match rank of " + to_string(in_shape));
  std::vector<bool> seen(r, false);
  for (auto a : order) {
    if (a >= r || seen[a]) throw DimensionError("permute: invalid axis order");
    seen[a] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
  Shape out_shape(r);
  std::vector<std::size_t> step(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[order[i]];
    step[i] = in_stride[order[i]];
  }
  // src[k] is the input offset feeding output element k.
  auto src = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> idx(r, 0);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < x.numel(); ++k) {
    (*src)[k] = offset;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < out_shape[d]) {
        offset += step[d];
        break;
      }
      offset -= step[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = in[(*src)[k]];
  return make_result("permute", std::move(out_shape), std::move(out), {x}, [src](Node& self) {
    Node* px = grad_target(self, 0);
    if (!px) return;
    for (std::size_t k = 0; k < self.grad.size(); ++k) px->grad[(*src)[k]] += self.grad[k];
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts[0].shape();
  const auto s0 = split_at(first, axis, "concat");
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    Shape b = first;
    if (a.size() != b.size()) throw DimensionError("concat: rank mismatch");
    a[axis] = 0;
    b[axis] = 0;
    if (a != b) throw DimensionError("concat: shape mismatch " + to_string(p.shape()) + " vs " + to_string(first));
    lens.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(numel(out_shape));
  std::size_t at = 0;
  for (std::size_t o = 0; o < s0.outer; ++o) {
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const std::size_t chunk = lens[pi] * s0.inner;
      const double* src = parts[pi].data().data() + o * chunk;
      std::copy(src, src + chunk, out.begin() + static_cast<std::ptrdiff_t>(at));
      at += chunk;
    }
  }
  const std::size_t outer = s0.outer, inner = s0.inner;
  return make_result_n("concat", std::move(out_shape), std::move(out), parts, [lens, outer, inner](Node& self) {
    std::size_t at = 0;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t pi = 0; pi < lens.size(); ++pi) {
        const std::size_t chunk = lens[pi] * inner;
        if (Node* p = grad_target(self, pi)) {
          for (std::size_t i = 0; i < chunk; ++i) p->grad[o * chunk + i] += self.grad[at + i];
        }
        at += chunk;
      }
    }
  });
}

Tensor stack(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    require_defined(p, "stack");
    if (p.shape() != parts[0].shape()) throw DimensionError("stack: shape mismatch " + to_string(p.shape()));
    if (axis > p.rank()) throw DimensionError("stack: axis out of range");
    Shape s = p.shape();
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(p, std::move(s)));
  }
  return concat(expanded, axis);
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  require_defined(x, "select");
  const auto s = split_at(x.shape(), axis, "select");
  if (index >= s.len) throw DimensionError("select: index " + std::to_string(index) + " out of range for " + to_string(x.shape()));
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  const auto in = x.data();
  std::vector<double> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.inner; ++j) out[o * s.inner + j] = in[(o * s.len + index) * s.inner + j];
  return make_result("select", std::move(out_shape), std::move(out), {x}, [s, index](Node& self) {
    Node* px = grad_target(self, 0);
    if (!px) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.inner; ++j)
        px->grad[(o * s.len + index) * s.inner + j] += self.grad[o * s.inner + j];
  });
}

Tensor stop_gradient(const Tensor& x) {
  require_defined(x, "stop_gradient");
  auto node = std::make_shared<Node>();
  node->shape = x.shape();
  node->value.assign(x.data().begin(), x.data().end());
  node->op = "stop_gradient";
  return Tensor(std::move(node));
}

// ----------------------------------------------------------- reverse pass

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) throw DimensionError("backward: loss must be scalar, got " + to_string(loss.shape()));

  // Reachable nodes, visited in reverse creation order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> work;
  Node* root = loss.node().get();
  if (!root->requires_grad) return;
  work.emplace_back(root, 0);
  visited.insert(root);
  while (!work.empty()) {
    auto& [node, next] = work.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && visited.insert(p).second) work.emplace_back(p, 0);
    } else {
      order.push_back(node);
      work.pop_back();
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->sequence > b->sequence; });
  for (Node* n : order) n->grad.assign(n->value.size(), 0.0);
  root->grad[0] = 1.0;
  for (Node* n : order) {
    if (!n->backward) continue;
    n->backward(*n);
    for (const auto& p : n->parents) {
      if (!p || !p->requires_grad) continue;
      for (double g : p->grad) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient produced by op '" + n->op + "'");
      }
    }
  }
}

void backward(const Tensor& loss, ParamStore& params) {
  params.zero_grad();
  backward(loss);
}

}  // namespace gmeld::dc
