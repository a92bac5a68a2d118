#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lstmkd/error.hpp"
#include "lstmkd/numerics/memory.hpp"

namespace lstmkd {

using Shape = std::vector<std::size_t>;

template <typename Scalar>
using Buffer = std::vector<Scalar, TrackingAllocator<Scalar>>;

std::size_t shape_numel(const Shape &shape);
std::string shape_string(const Shape &shape);

/// A contiguous run of rows belonging to one utterance inside a packed batch.
struct Segment {
    std::size_t offset = 0;
    std::size_t length = 0;
};
using Segments = std::vector<Segment>;

/// Segments for back-to-back sequences of the given lengths.
Segments pack_segments(const std::vector<std::size_t> &lengths);
std::size_t total_rows(const Segments &segments);

namespace detail {

template <typename Scalar>
struct TensorNode {
    Shape shape;
    Buffer<Scalar> data;
    Buffer<Scalar> grad; // empty until a gradient reaches this node
    bool requires_grad = false;
    bool released = false;
    std::uint64_t seq = 0;
    const char *op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode &)> backward_fn;

    std::span<Scalar> grad_buffer() {
        if (grad.empty()) {
            grad.assign(data.size(), Scalar(0));
        }
        return grad;
    }

    void accumulate(std::span<const Scalar> g) {
        auto dst = grad_buffer();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += g[i];
        }
    }
};

std::uint64_t next_sequence_number();

} // namespace detail

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled();

/// Disables tape recording on the current thread for its lifetime. Ops executed
/// under the guard keep no references to their inputs, so intermediates are
/// freed as soon as the caller drops them.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard &) = delete;
    NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
    bool previous_;
};

/// Dense row-major array with an optional reverse-mode tape node.
///
/// Copies share the underlying node (handle semantics). Values are immutable
/// once an op has produced them; only leaves (parameters) are updated in place
/// through mutable_data(), and only between backward passes.
template <typename Scalar>
class Tensor {
public:
    using Node = detail::TensorNode<Scalar>;

    Tensor() = default;

    static Tensor zeros(const Shape &shape, bool requires_grad = false);
    static Tensor full(const Shape &shape, Scalar value, bool requires_grad = false);
    static Tensor from(const Shape &shape, std::span<const Scalar> values, bool requires_grad = false);
    static Tensor from(const Shape &shape, std::initializer_list<Scalar> values,
                       bool requires_grad = false);
    static Tensor scalar(Scalar value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape &shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    /// Leading dimension (1 for rank-0/1 tensors treated as a row).
    std::size_t rows() const;
    /// Product of trailing dimensions.
    std::size_t cols() const;

    std::span<const Scalar> data() const { return node_->data; }
    std::span<Scalar> mutable_data() { return node_->data; }
    Scalar item() const;
    Scalar at(std::size_t row, std::size_t col) const { return node_->data[row * cols() + col]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    /// Empty span when no gradient has been accumulated.
    std::span<const Scalar> grad() const { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }
    const char *op_name() const { return node_->op; }

    /// Reverse-mode sweep from this scalar. Nodes are visited in descending
    /// creation order, so gradient accumulation order is fixed for a given
    /// graph. The recorded graph is released afterwards; leaf gradients
    /// accumulate across calls until zero_grad().
    void backward() const;

    /// A new leaf holding a copy of the values, with no tape history.
    Tensor detach() const;

    const std::shared_ptr<Node> &node() const { return node_; }
    static Tensor wrap(std::shared_ptr<Node> node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

private:
    std::shared_ptr<Node> node_;
};

/// Throws Error("non_finite") when any value is NaN or infinite.
template <typename Scalar>
void check_finite(std::span<const Scalar> values, const char *where);

/// Builds an op result. When grad mode is on and any parent requires a
/// gradient, the result keeps its parents and backward closure; otherwise it is
/// a plain constant.
template <typename Scalar>
Tensor<Scalar> make_result(const char *op, Shape shape, Buffer<Scalar> data,
                           std::vector<Tensor<Scalar>> parents,
                           std::function<void(detail::TensorNode<Scalar> &)> backward_fn);

extern template class Tensor<float>;
extern template class Tensor<double>;

} // namespace lstmkd
