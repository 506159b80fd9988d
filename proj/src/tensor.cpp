#include "stn/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace stn {

namespace {
thread_local bool t_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static void check_extents(const Shape& shape) {
    for (auto d : shape) {
        if (d == 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
    }
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
    check_extents(shape);
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->values.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    check_extents(shape);
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument("shape " + shape_str(shape) + " does not hold " +
                                    std::to_string(values.size()) + " values");
    }
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, value, requires_grad); }

detail::TensorImpl& Tensor::impl() const {
    if (!impl_) throw std::logic_error("use of an undefined tensor");
    return *impl_;
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw std::out_of_range("axis " + std::to_string(axis) + " outside " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return impl().values.size(); }

std::span<const double> Tensor::values() const { return impl().values; }

std::span<double> Tensor::mutable_values() {
    if (impl().node) throw std::logic_error("in-place write to a recorded tensor");
    return impl_->values;
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
    return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl().requires_grad = flag; }
bool Tensor::is_leaf() const { return !impl().node; }
bool Tensor::has_grad() const { return !impl().grad.empty(); }
std::span<const double> Tensor::grad() const { return impl().grad; }

void Tensor::zero_grad() {
    auto& g = impl().grad;
    std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), impl().values, false); }

void Tensor::backward() const {
    if (numel() != 1) {
        throw std::invalid_argument("backward() needs a scalar root, got shape " + shape_str(shape()));
    }
    if (!requires_grad()) throw std::logic_error("backward() on a tensor that does not require grad");

    // Iterative post-order DFS; result is a topological order (inputs first).
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<const detail::TensorImpl*> seen;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    seen.insert(impl_.get());
    while (!stack.empty()) {
        auto& [cur, next] = stack.back();
        if (cur->node && next < cur->node->inputs.size()) {
            detail::TensorImpl* child = cur->node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }

    for (auto* t : order) {
        if (t->node) t->grad.assign(t->values.size(), 0.0);
    }
    if (impl_->grad.empty()) impl_->grad.assign(1, 0.0);
    impl_->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->node) (*it)->node->backward(**it);
    }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

Tensor normal_param(Shape shape, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), true);
}

Tensor zeros_param(Shape shape) { return Tensor(std::move(shape), 0.0, true); }
Tensor ones_param(Shape shape) { return Tensor(std::move(shape), 1.0, true); }

}  // namespace stn
