#include "lstmkd/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

namespace lstmkd {

std::size_t shape_numel(const Shape &shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape &shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << ']';
    return out.str();
}

Segments pack_segments(const std::vector<std::size_t> &lengths) {
    Segments segments;
    segments.reserve(lengths.size());
    std::size_t offset = 0;
    for (std::size_t len : lengths) {
        segments.push_back({offset, len});
        offset += len;
    }
    return segments;
}

std::size_t total_rows(const Segments &segments) {
    std::size_t n = 0;
    for (const auto &s : segments) {
        n += s.length;
    }
    return n;
}

namespace detail {

std::uint64_t next_sequence_number() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

} // namespace detail

namespace {

thread_local bool t_grad_enabled = true;

void validate_shape(const Shape &shape) {
    for (std::size_t d : shape) {
        require(d > 0, "invalid_shape", "tensor dimensions must be positive, got " + shape_string(shape));
    }
}

} // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename Scalar>
void check_finite(std::span<const Scalar> values, const char *where) {
    const Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> a(values.data(), Eigen::Index(values.size()));
    // x - x is 0 for finite x and NaN otherwise; a plain sum vectorises, unlike
    // an early-exit scan
    if (!((a - a).sum() == Scalar(0))) {
        fail("non_finite", std::string("non-finite value produced by ") + where);
    }
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(const Shape &shape, bool requires_grad) {
    return full(shape, Scalar(0), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(const Shape &shape, Scalar value, bool requires_grad) {
    validate_shape(shape);
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->data.assign(shape_numel(shape), value);
    node->requires_grad = requires_grad;
    node->seq = detail::next_sequence_number();
    return wrap(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(const Shape &shape, std::span<const Scalar> values,
                                    bool requires_grad) {
    validate_shape(shape);
    require(shape_numel(shape) == values.size(), "shape_mismatch",
            "shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                " values");
    check_finite(values, "tensor construction");
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->data.assign(values.begin(), values.end());
    node->requires_grad = requires_grad;
    node->seq = detail::next_sequence_number();
    return wrap(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(const Shape &shape, std::initializer_list<Scalar> values,
                                    bool requires_grad) {
    return from(shape, std::span<const Scalar>(values.begin(), values.size()), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

template <typename Scalar>
std::size_t Tensor<Scalar>::rows() const {
    return node_->shape.size() >= 2 ? node_->shape[0] : 1;
}

template <typename Scalar>
std::size_t Tensor<Scalar>::cols() const {
    return node_->shape.size() >= 2 ? numel() / node_->shape[0] : numel();
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
    require(numel() == 1, "not_scalar", "item() on tensor of shape " + shape_string(shape()));
    return node_->data[0];
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
    return from(shape(), data(), false);
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
    require(node_ != nullptr, "undefined_tensor", "backward() on an undefined tensor");
    require(numel() == 1, "not_scalar",
            "backward() requires a scalar root, got shape " + shape_string(shape()));
    require(!node_->released, "graph_freed",
            "the graph behind this tensor was already consumed by a previous backward()");
    if (!node_->requires_grad) {
        return;
    }

    // Owning references: releasing a node's parent list below may otherwise
    // drop the last reference to nodes still waiting in `order`.
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<Node *> seen;
    std::vector<std::shared_ptr<Node>> stack{node_};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto n = std::move(stack.back());
        stack.pop_back();
        for (const auto &p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) {
                stack.push_back(p);
            }
        }
        order.push_back(std::move(n));
    }
    // Creation order is a topological order of the tape.
    std::sort(order.begin(), order.end(), [](const auto &a, const auto &b) { return a->seq > b->seq; });

    node_->grad_buffer()[0] += Scalar(1);
    for (const auto &n : order) {
        if (n->backward_fn && !n->grad.empty()) {
            n->backward_fn(*n);
        }
    }
    for (const auto &n : order) {
        if (n->backward_fn) {
            n->backward_fn = nullptr;
            n->parents.clear();
            n->released = true;
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

template <typename Scalar>
Tensor<Scalar> make_result(const char *op, Shape shape, Buffer<Scalar> data,
                           std::vector<Tensor<Scalar>> parents,
                           std::function<void(detail::TensorNode<Scalar> &)> backward_fn) {
    check_finite<Scalar>(data, op);
    auto node = std::make_shared<detail::TensorNode<Scalar>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    node->seq = detail::next_sequence_number();
    bool needs_grad = false;
    if (grad_enabled()) {
        for (const auto &p : parents) {
            needs_grad = needs_grad || p.requires_grad();
        }
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (const auto &p : parents) {
            node->parents.push_back(p.node());
        }
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor<Scalar>::wrap(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;
template void check_finite<float>(std::span<const float>, const char *);
template void check_finite<double>(std::span<const double>, const char *);
template Tensor<float> make_result(const char *, Shape, Buffer<float>, std::vector<Tensor<float>>,
                                   std::function<void(detail::TensorNode<float> &)>);
template Tensor<double> make_result(const char *, Shape, Buffer<double>, std::vector<Tensor<double>>,
                                    std::function<void(detail::TensorNode<double> &)>);

} // namespace lstmkd
