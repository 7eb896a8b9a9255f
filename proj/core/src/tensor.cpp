#include "gmeld/dc/tensor.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gmeld/error.hpp"

namespace gmeld::dc {

namespace detail {

std::uint64_t next_node_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
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

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (dc::numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + to_string(shape) + " given " +
                         std::to_string(values.size()) + " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor constructor");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = dc::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = dc::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  return shape()[axis];
}

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() {
  if (!node_->parents.empty()) throw ContractError("mutable_data on non-leaf tensor '" + node_->op + "'");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

void Tensor::clear_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

const std::string& Tensor::op() const { return node_->op; }

bool Tensor::is_leaf() const { return node_->parents.empty(); }

Tensor Tensor::clone(bool requires_grad) const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() noexcept { return g_grad_enabled; }

}  // namespace gmeld::dc
