#pragma once

#include <cstddef>
#include <vector>

#include "lstmkd/numerics/tensor.hpp"

// Differentiable kernels over row-major matrices. Unless stated otherwise an
// op takes [rows x cols] inputs; vectors are rank-1 tensors. Every op checks its
// output for NaN/Inf and throws Error("non_finite") instead of propagating.
namespace lstmkd {

template <typename S> Tensor<S> add(const Tensor<S> &a, const Tensor<S> &b);
template <typename S> Tensor<S> sub(const Tensor<S> &a, const Tensor<S> &b);
template <typename S> Tensor<S> mul(const Tensor<S> &a, const Tensor<S> &b);
template <typename S> Tensor<S> scale(const Tensor<S> &a, S factor);
/// a[r, :] + v for every row r; v has a.cols() entries.
template <typename S> Tensor<S> add_row_vector(const Tensor<S> &a, const Tensor<S> &v);
/// a[r, :] - v[r] for every row r; v has a.rows() entries.
template <typename S> Tensor<S> sub_column(const Tensor<S> &a, const Tensor<S> &v);
/// Sum of all entries, shape [1].
template <typename S> Tensor<S> sum(const Tensor<S> &a);
/// Reinterprets the payload with a new shape of equal size.
template <typename S> Tensor<S> reshape(const Tensor<S> &a, const Shape &shape);

/// [m x k] * [k x n].
template <typename S> Tensor<S> matmul(const Tensor<S> &a, const Tensor<S> &b);
/// [m x k] * [n x k]^T.
template <typename S> Tensor<S> matmul_transposed(const Tensor<S> &a, const Tensor<S> &b);
/// x * W^T (+ b) with W stored [out x in]. Pass an undefined tensor for no bias.
template <typename S> Tensor<S> linear(const Tensor<S> &x, const Tensor<S> &weight, const Tensor<S> &bias);

template <typename S> Tensor<S> relu(const Tensor<S> &a);
/// Exact (erf) GELU.
template <typename S> Tensor<S> gelu(const Tensor<S> &a);
template <typename S> Tensor<S> tanh(const Tensor<S> &a);
template <typename S> Tensor<S> sigmoid(const Tensor<S> &a);
/// log(1 - exp(x)) for x < 0, evaluated without cancellation.
template <typename S> Tensor<S> log1mexp(const Tensor<S> &a);
/// max(a, lo); the gradient is zero where the floor is active.
template <typename S> Tensor<S> clamp_min(const Tensor<S> &a, S lo);

/// Row-wise layer normalisation with affine gamma/beta of a.cols() entries.
template <typename S>
Tensor<S> layer_norm(const Tensor<S> &x, const Tensor<S> &gamma, const Tensor<S> &beta, S eps = S(1e-5));

/// Row-wise softmax of x / tau.
template <typename S> Tensor<S> softmax_rows(const Tensor<S> &x, S tau = S(1));
/// Row-wise log-softmax of x / tau (max-subtracted).
template <typename S> Tensor<S> log_softmax_rows(const Tensor<S> &x, S tau = S(1));

/// out[r] = x[r, index[r]], shape [rows x 1].
template <typename S> Tensor<S> gather_columns(const Tensor<S> &x, const std::vector<std::size_t> &index);
/// Rows of x in the listed order.
template <typename S> Tensor<S> select_rows(const Tensor<S> &x, const std::vector<std::size_t> &rows);
template <typename S> Tensor<S> slice_rows(const Tensor<S> &x, std::size_t begin, std::size_t count);
template <typename S> Tensor<S> concat_columns(const Tensor<S> &a, const Tensor<S> &b);
template <typename S> Tensor<S> concat_rows(const std::vector<Tensor<S>> &parts);
/// Copy of x whose listed rows are replaced by `row` (a learned vector).
template <typename S>
Tensor<S> replace_rows(const Tensor<S> &x, const std::vector<std::size_t> &rows, const Tensor<S> &row);
/// Each row divided by max(||row||, floor).
template <typename S> Tensor<S> normalize_rows(const Tensor<S> &x, S floor = S(1e-8));

/// Geometry of a strided 1-D convolution applied independently per segment.
struct Conv1dGeometry {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0; // zeros added on both ends of every segment
    Segments input;
    Segments output;
};

/// Output length of one segment: floor((T + 2p - k) / s) + 1, or 0 when the
/// segment is shorter than the kernel.
std::size_t conv_output_length(std::size_t input_length, std::size_t kernel, std::size_t stride,
                               std::size_t padding = 0);
Conv1dGeometry conv1d_geometry(const Segments &input, std::size_t in_channels, std::size_t out_channels,
                               std::size_t kernel, std::size_t stride, std::size_t padding = 0);

/// Time-major convolution: x is [sum T_in x C_in], weight is
/// [C_out x (kernel * C_in)] with tap-major columns, bias [C_out] (optional).
template <typename S>
Tensor<S> conv1d(const Tensor<S> &x, const Tensor<S> &weight, const Tensor<S> &bias, const Conv1dGeometry &geom);

/// One direction of an LSTM over every segment of x [sum T x in].
/// Gate order (i, f, g, o); weight_ih [4h x in], weight_hh [4h x h], bias [4h].
/// Zero initial state. `reverse` runs each segment from its last frame.
template <typename S>
Tensor<S> lstm_direction(const Tensor<S> &x, const Tensor<S> &weight_ih, const Tensor<S> &weight_hh,
                         const Tensor<S> &bias, const Segments &segments, bool reverse);

/// Bidirectional multi-head scaled dot-product attention, block-diagonal over
/// segments (frames never attend across utterances). q, k, v are [sum T x D].
template <typename S>
Tensor<S> attention(const Tensor<S> &q, const Tensor<S> &k, const Tensor<S> &v, std::size_t heads,
                    const Segments &segments);

/// Attention probabilities of one segment and head, [T x T] row-stochastic.
template <typename S>
std::vector<S> attention_weights(const Tensor<S> &q, const Tensor<S> &k, std::size_t heads, std::size_t head,
                                 const Segment &segment);

/// sum_l softmax(weights)_l * layers[l]; all layers share one shape.
template <typename S>
Tensor<S> weighted_sum(const std::vector<Tensor<S>> &layers, const Tensor<S> &weights);

} // namespace lstmkd
