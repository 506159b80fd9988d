#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace stn {

using Shape = std::vector<std::size_t>;

/// Deterministic generator threaded explicitly through initialization and dropout.
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl;

struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    // Reads the output gradient and accumulates into the inputs.
    std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> node;
};

}  // namespace detail

/// Dense row-major float64 tensor with shared (handle) semantics and an
/// optional reverse-mode computation record.
///
/// Copies of a Tensor alias the same storage. Tensors produced by an op on
/// inputs that require gradients carry a node describing how to push the
/// output gradient back to those inputs; leaves (no node) accumulate.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    // Only leaves may be written in place; nodes in a live graph may not.
    std::span<double> mutable_values();
    double operator[](std::size_t i) const { return values()[i]; }
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Copy of the values with no computation record.
    Tensor detach() const;

    /// Reverse pass from this scalar. Leaf gradients accumulate across calls;
    /// interior gradients are rebuilt on every call.
    void backward() const;

    detail::TensorImpl& impl() const;
    const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }
    static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl);

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Named trainable tensor. Names are the checkpoint keys.
struct Parameter {
    std::string name;
    Tensor tensor;
};

/// Normal(0, stddev) initialized trainable tensor.
Tensor normal_param(Shape shape, double stddev, Rng& rng);
Tensor zeros_param(Shape shape);
Tensor ones_param(Shape shape);

}  // namespace stn
