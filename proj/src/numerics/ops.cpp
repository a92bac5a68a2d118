#include "lstmkd/numerics/ops.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/SpecialFunctions>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "lstmkd/numerics/mac_tally.hpp"

namespace lstmkd {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;
template <typename S>
using VecMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>;
template <typename S>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>;

template <typename S>
using Node = detail::TensorNode<S>;

template <typename S>
ConstMatMap<S> view(const Tensor<S> &t) {
    return ConstMatMap<S>(t.data().data(), t.rows(), t.cols());
}

template <typename S>
ConstMatMap<S> view(const Node<S> &n, std::size_t rows, std::size_t cols) {
    return ConstMatMap<S>(n.data.data(), rows, cols);
}

template <typename S>
MatMap<S> grad_view(Node<S> &n, std::size_t rows, std::size_t cols) {
    return MatMap<S>(n.grad_buffer().data(), rows, cols);
}

template <typename S>
ConstMatMap<S> out_grad(const Node<S> &self, std::size_t rows, std::size_t cols) {
    return ConstMatMap<S>(self.grad.data(), rows, cols);
}

template <typename S>
bool wants(const Node<S> &self, std::size_t i) {
    return self.parents[i]->requires_grad;
}

void require_same_shape(const Shape &a, const Shape &b, const char *op) {
    require(a == b, "shape_mismatch",
            std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) + " differ");
}

template <typename S>
void require_matrix(const Tensor<S> &t, const char *op) {
    require(t.defined(), "undefined_tensor", std::string(op) + ": undefined input");
    require(t.rank() == 2, "shape_mismatch",
            std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

template <typename S, typename F, typename DF>
Tensor<S> unary(const char *op, const Tensor<S> &a, F f, DF df) {
    Buffer<S> out(a.numel());
    auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(x[i]);
    }
    return make_result<S>(op, a.shape(), std::move(out), {a}, [df](Node<S> &self) {
        auto &in = *self.parents[0];
        auto g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * df(in.data[i], self.data[i]);
        }
    });
}

} // namespace

template <typename S>
Tensor<S> add(const Tensor<S> &a, const Tensor<S> &b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Buffer<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.data()[i] + b.data()[i];
    }
    return make_result<S>("add", a.shape(), std::move(out), {a, b}, [](Node<S> &self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (wants(self, p)) {
                self.parents[p]->accumulate(self.grad);
            }
        }
    });
}

template <typename S>
Tensor<S> sub(const Tensor<S> &a, const Tensor<S> &b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    Buffer<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.data()[i] - b.data()[i];
    }
    return make_result<S>("sub", a.shape(), std::move(out), {a, b}, [](Node<S> &self) {
        if (wants(self, 0)) {
            self.parents[0]->accumulate(self.grad);
        }
        if (wants(self, 1)) {
            auto g = self.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] -= self.grad[i];
            }
        }
    });
}

template <typename S>
Tensor<S> mul(const Tensor<S> &a, const Tensor<S> &b) {
    require_same_shape(a.shape(), b.shape(), "mul");
    Buffer<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.data()[i] * b.data()[i];
    }
    return make_result<S>("mul", a.shape(), std::move(out), {a, b}, [](Node<S> &self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!wants(self, p)) {
                continue;
            }
            const auto &other = self.parents[1 - p]->data;
            auto g = self.parents[p]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * other[i];
            }
        }
    });
}

template <typename S>
Tensor<S> scale(const Tensor<S> &a, S factor) {
    Buffer<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.data()[i] * factor;
    }
    return make_result<S>("scale", a.shape(), std::move(out), {a}, [factor](Node<S> &self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * factor;
        }
    });
}

template <typename S>
Tensor<S> add_row_vector(const Tensor<S> &a, const Tensor<S> &v) {
    const std::size_t rows = a.rows(), cols = a.cols();
    require(v.numel() == cols, "shape_mismatch", "add_row_vector: vector length mismatch");
    Buffer<S> out(a.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] = a.data()[r * cols + c] + v.data()[c];
        }
    }
    return make_result<S>("add_row_vector", a.shape(), std::move(out), {a, v}, [rows, cols](Node<S> &self) {
        if (wants(self, 0)) {
            self.parents[0]->accumulate(self.grad);
        }
        if (wants(self, 1)) {
            auto g = self.parents[1]->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    g[c] += self.grad[r * cols + c];
                }
            }
        }
    });
}

template <typename S>
Tensor<S> sub_column(const Tensor<S> &a, const Tensor<S> &v) {
    const std::size_t rows = a.rows(), cols = a.cols();
    require(v.numel() == rows, "shape_mismatch", "sub_column: vector length mismatch");
    Buffer<S> out(a.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] = a.data()[r * cols + c] - v.data()[r];
        }
    }
    return make_result<S>("sub_column", a.shape(), std::move(out), {a, v}, [rows, cols](Node<S> &self) {
        if (wants(self, 0)) {
            self.parents[0]->accumulate(self.grad);
        }
        if (wants(self, 1)) {
            auto g = self.parents[1]->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                S acc = 0;
                for (std::size_t c = 0; c < cols; ++c) {
                    acc += self.grad[r * cols + c];
                }
                g[r] -= acc;
            }
        }
    });
}

template <typename S>
Tensor<S> sum(const Tensor<S> &a) {
    S acc = 0;
    for (S x : a.data()) {
        acc += x;
    }
    Buffer<S> out{acc};
    return make_result<S>("sum", {1}, std::move(out), {a}, [](Node<S> &self) {
        auto g = self.parents[0]->grad_buffer();
        for (auto &x : g) {
            x += self.grad[0];
        }
    });
}

template <typename S>
Tensor<S> reshape(const Tensor<S> &a, const Shape &shape) {
    require(shape_numel(shape) == a.numel(), "shape_mismatch",
            "reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
    Buffer<S> out(a.data().begin(), a.data().end());
    return make_result<S>("reshape", shape, std::move(out), {a},
                          [](Node<S> &self) { self.parents[0]->accumulate(self.grad); });
}

template <typename S>
Tensor<S> matmul(const Tensor<S> &a, const Tensor<S> &b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    require(b.rows() == k, "shape_mismatch",
            "matmul: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
    Buffer<S> out(m * n);
    MatMap<S>(out.data(), m, n).noalias() = view(a) * view(b);
    MacTally::add(m * k * n);
    return make_result<S>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node<S> &self) {
        auto dy = out_grad(self, m, n);
        if (wants(self, 0)) {
            grad_view(*self.parents[0], m, k).noalias() += dy * view(*self.parents[1], k, n).transpose();
        }
        if (wants(self, 1)) {
            grad_view(*self.parents[1], k, n).noalias() += view(*self.parents[0], m, k).transpose() * dy;
        }
    });
}

template <typename S>
Tensor<S> matmul_transposed(const Tensor<S> &a, const Tensor<S> &b) {
    require_matrix(a, "matmul_transposed");
    require_matrix(b, "matmul_transposed");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    require(b.cols() == k, "shape_mismatch",
            "matmul_transposed: " + shape_string(a.shape()) + " * " + shape_string(b.shape()) + "^T");
    Buffer<S> out(m * n);
    MatMap<S>(out.data(), m, n).noalias() = view(a) * view(b).transpose();
    MacTally::add(m * k * n);
    return make_result<S>("matmul_transposed", {m, n}, std::move(out), {a, b}, [m, k, n](Node<S> &self) {
        auto dy = out_grad(self, m, n);
        if (wants(self, 0)) {
            grad_view(*self.parents[0], m, k).noalias() += dy * view(*self.parents[1], n, k);
        }
        if (wants(self, 1)) {
            grad_view(*self.parents[1], n, k).noalias() += dy.transpose() * view(*self.parents[0], m, k);
        }
    });
}

template <typename S>
Tensor<S> linear(const Tensor<S> &x, const Tensor<S> &weight, const Tensor<S> &bias) {
    require_matrix(x, "linear");
    require_matrix(weight, "linear");
    const std::size_t n = x.rows(), in = x.cols(), out_dim = weight.rows();
    require(weight.cols() == in, "shape_mismatch",
            "linear: input " + shape_string(x.shape()) + " vs weight " + shape_string(weight.shape()));
    const bool has_bias = bias.defined();
    if (has_bias) {
        require(bias.numel() == out_dim, "shape_mismatch", "linear: bias length mismatch");
    }
    Buffer<S> out(n * out_dim);
    MatMap<S> y(out.data(), n, out_dim);
    y.noalias() = view(x) * view(weight).transpose();
    if (has_bias) {
        y.rowwise() += ConstVecMap<S>(bias.data().data(), out_dim).transpose();
    }
    MacTally::add(n * in * out_dim);
    std::vector<Tensor<S>> parents{x, weight};
    if (has_bias) {
        parents.push_back(bias);
    }
    return make_result<S>("linear", {n, out_dim}, std::move(out), std::move(parents),
                          [n, in, out_dim, has_bias](Node<S> &self) {
                              auto dy = out_grad(self, n, out_dim);
                              if (wants(self, 0)) {
                                  grad_view(*self.parents[0], n, in).noalias() +=
                                      dy * view(*self.parents[1], out_dim, in);
                              }
                              if (wants(self, 1)) {
                                  grad_view(*self.parents[1], out_dim, in).noalias() +=
                                      dy.transpose() * view(*self.parents[0], n, in);
                              }
                              if (has_bias && wants(self, 2)) {
                                  VecMap<S>(self.parents[2]->grad_buffer().data(), out_dim) +=
                                      dy.colwise().sum().transpose();
                              }
                          });
}

template <typename S>
Tensor<S> relu(const Tensor<S> &a) {
    return unary<S>(
        "relu", a, [](S x) { return x > S(0) ? x : S(0); }, [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> gelu(const Tensor<S> &a) {
    // Vectorised through Eigen's array erf/exp; the conv encoder spends most of
    // its elementwise time here. Phi(x) is kept for the backward pass.
    using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
    using ConstArrMap = Eigen::Map<const Arr>;
    constexpr S inv_sqrt2 = S(1) / std::numbers::sqrt2_v<S>;
    const std::size_t n = a.numel();
    ConstArrMap x(a.data().data(), static_cast<Eigen::Index>(n));
    auto cdf = std::make_shared<Buffer<S>>(n);
    Eigen::Map<Arr> phi(cdf->data(), static_cast<Eigen::Index>(n));
    phi = S(0.5) * (S(1) + (x * inv_sqrt2).erf());
    Buffer<S> out(n);
    Eigen::Map<Arr>(out.data(), static_cast<Eigen::Index>(n)) = x * phi;
    return make_result<S>("gelu", a.shape(), std::move(out), {a}, [cdf, n](Node<S> &self) {
        constexpr S inv_sqrt2pi = std::numbers::inv_sqrtpi_v<S> / std::numbers::sqrt2_v<S>;
        auto &in = *self.parents[0];
        const auto len = static_cast<Eigen::Index>(n);
        ConstArrMap xs(in.data.data(), len), dy(self.grad.data(), len), phi(cdf->data(), len);
        Eigen::Map<Arr>(in.grad_buffer().data(), len) +=
            dy * (phi + xs * inv_sqrt2pi * (S(-0.5) * xs.square()).exp());
    });
}

template <typename S>
Tensor<S> tanh(const Tensor<S> &a) {
    return unary<S>(
        "tanh", a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

namespace {

template <typename S>
S stable_sigmoid(S x) {
    if (x >= S(0)) {
        return S(1) / (S(1) + std::exp(-x));
    }
    const S e = std::exp(x);
    return e / (S(1) + e);
}

template <typename S>
S log1mexp_scalar(S x) {
    return x > -std::numbers::ln2_v<S> ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

} // namespace

template <typename S>
Tensor<S> sigmoid(const Tensor<S> &a) {
    return unary<S>(
        "sigmoid", a, [](S x) { return stable_sigmoid(x); }, [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> log1mexp(const Tensor<S> &a) {
    return unary<S>(
        "log1mexp", a, [](S x) { return log1mexp_scalar(x); }, [](S x, S) { return S(-1) / std::expm1(-x); });
}

template <typename S>
Tensor<S> clamp_min(const Tensor<S> &a, S lo) {
    return unary<S>(
        "clamp_min", a, [lo](S x) { return x < lo ? lo : x; }, [lo](S x, S) { return x < lo ? S(0) : S(1); });
}

template <typename S>
Tensor<S> layer_norm(const Tensor<S> &x, const Tensor<S> &gamma, const Tensor<S> &beta, S eps) {
    require_matrix(x, "layer_norm");
    const std::size_t rows = x.rows(), cols = x.cols();
    require(gamma.numel() == cols && beta.numel() == cols, "shape_mismatch",
            "layer_norm: affine parameters must have " + std::to_string(cols) + " entries");
    auto normalized = std::make_shared<Buffer<S>>(x.numel());
    auto inv_std = std::make_shared<Buffer<S>>(rows);
    Buffer<S> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const S *in = x.data().data() + r * cols;
        S mean = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            mean += in[c];
        }
        mean /= S(cols);
        S var = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            var += (in[c] - mean) * (in[c] - mean);
        }
        var /= S(cols);
        const S rstd = S(1) / std::sqrt(var + eps);
        (*inv_std)[r] = rstd;
        for (std::size_t c = 0; c < cols; ++c) {
            const S xh = (in[c] - mean) * rstd;
            (*normalized)[r * cols + c] = xh;
            out[r * cols + c] = xh * gamma.data()[c] + beta.data()[c];
        }
    }
    return make_result<S>(
        "layer_norm", x.shape(), std::move(out), {x, gamma, beta}, [rows, cols, normalized, inv_std](Node<S> &self) {
            const auto &xh = *normalized;
            const auto &gam = self.parents[1]->data;
            if (wants(self, 1)) {
                auto g = self.parents[1]->grad_buffer();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        g[c] += self.grad[r * cols + c] * xh[r * cols + c];
                    }
                }
            }
            if (wants(self, 2)) {
                auto g = self.parents[2]->grad_buffer();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        g[c] += self.grad[r * cols + c];
                    }
                }
            }
            if (wants(self, 0)) {
                auto g = self.parents[0]->grad_buffer();
                for (std::size_t r = 0; r < rows; ++r) {
                    S mean_d = 0, mean_dx = 0;
                    for (std::size_t c = 0; c < cols; ++c) {
                        const S d = self.grad[r * cols + c] * gam[c];
                        mean_d += d;
                        mean_dx += d * xh[r * cols + c];
                    }
                    mean_d /= S(cols);
                    mean_dx /= S(cols);
                    for (std::size_t c = 0; c < cols; ++c) {
                        const S d = self.grad[r * cols + c] * gam[c];
                        g[r * cols + c] += (*inv_std)[r] * (d - mean_d - xh[r * cols + c] * mean_dx);
                    }
                }
            }
        });
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S> &x, S tau) {
    require(tau > S(0), "invalid_argument", "softmax_rows: temperature must be positive");
    const std::size_t rows = x.rows(), cols = x.cols();
    Buffer<S> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const S *in = x.data().data() + r * cols;
        S *y = out.data() + r * cols;
        const S mx = *std::max_element(in, in + cols);
        S total = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            y[c] = std::exp((in[c] - mx) / tau);
            total += y[c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
            y[c] /= total;
        }
    }
    return make_result<S>("softmax_rows", x.shape(), std::move(out), {x}, [rows, cols, tau](Node<S> &self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const S *y = self.data.data() + r * cols;
            const S *dy = self.grad.data() + r * cols;
            S dot = 0;
            for (std::size_t c = 0; c < cols; ++c) {
                dot += dy[c] * y[c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
                g[r * cols + c] += y[c] * (dy[c] - dot) / tau;
            }
        }
    });
}

template <typename S>
Tensor<S> log_softmax_rows(const Tensor<S> &x, S tau) {
    require(tau > S(0), "invalid_argument", "log_softmax_rows: temperature must be positive");
    const std::size_t rows = x.rows(), cols = x.cols();
    Buffer<S> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const S *in = x.data().data() + r * cols;
        S *y = out.data() + r * cols;
        const S mx = *std::max_element(in, in + cols);
        S total = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            y[c] = (in[c] - mx) / tau;
            total += std::exp(y[c]);
        }
        const S lse = std::log(total);
        for (std::size_t c = 0; c < cols; ++c) {
            y[c] -= lse;
        }
    }
    return make_result<S>("log_softmax_rows", x.shape(), std::move(out), {x}, [rows, cols, tau](Node<S> &self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const S *y = self.data.data() + r * cols;
            const S *dy = self.grad.data() + r * cols;
            S total = 0;
            for (std::size_t c = 0; c < cols; ++c) {
                total += dy[c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
                g[r * cols + c] += (dy[c] - std::exp(y[c]) * total) / tau;
            }
        }
    });
}

template <typename S>
Tensor<S> gather_columns(const Tensor<S> &x, const std::vector<std::size_t> &index) {
    const std::size_t rows = x.rows(), cols = x.cols();
    require(index.size() == rows, "shape_mismatch", "gather_columns: one index per row required");
    Buffer<S> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        require(index[r] < cols, "index_out_of_range", "gather_columns: column index out of range");
        out[r] = x.data()[r * cols + index[r]];
    }
    return make_result<S>("gather_columns", {rows, 1}, std::move(out), {x}, [index, cols](Node<S> &self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < index.size(); ++r) {
            g[r * cols + index[r]] += self.grad[r];
        }
    });
}

template <typename S>
Tensor<S> select_rows(const Tensor<S> &x, const std::vector<std::size_t> &rows) {
    const std::size_t cols = x.cols();
    require(!rows.empty(), "invalid_argument", "select_rows: empty row list");
    Buffer<S> out(rows.size() * cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] < x.rows(), "index_out_of_range", "select_rows: row index out of range");
        std::copy_n(x.data().data() + rows[i] * cols, cols, out.data() + i * cols);
    }
    return make_result<S>("select_rows", {rows.size(), cols}, std::move(out), {x}, [rows, cols](Node<S> &self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t c = 0; c < cols; ++c) {
                g[rows[i] * cols + c] += self.grad[i * cols + c];
            }
        }
    });
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S> &x, std::size_t begin, std::size_t count) {
    const std::size_t cols = x.cols();
    require(count > 0 && begin + count <= x.rows(), "index_out_of_range", "slice_rows: range out of bounds");
    Buffer<S> out(x.data().begin() + begin * cols, x.data().begin() + (begin + count) * cols);
    return make_result<S>("slice_rows", {count, cols}, std::move(out), {x}, [begin, cols](Node<S> &self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            g[begin * cols + i] += self.grad[i];
        }
    });
}

template <typename S>
Tensor<S> concat_columns(const Tensor<S> &a, const Tensor<S> &b) {
    const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
    require(b.rows() == rows, "shape_mismatch", "concat_columns: row counts differ");
    Buffer<S> out(rows * (ca + cb));
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.data().data() + r * ca, ca, out.data() + r * (ca + cb));
        std::copy_n(b.data().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
    }
    return make_result<S>("concat_columns", {rows, ca + cb}, std::move(out), {a, b}, [rows, ca, cb](Node<S> &self) {
        const std::size_t w = ca + cb;
        if (wants(self, 0)) {
            auto g = self.parents[0]->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < ca; ++c) {
                    g[r * ca + c] += self.grad[r * w + c];
                }
            }
        }
        if (wants(self, 1)) {
            auto g = self.parents[1]->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cb; ++c) {
                    g[r * cb + c] += self.grad[r * w + ca + c];
                }
            }
        }
    });
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>> &parts) {
    require(!parts.empty(), "invalid_argument", "concat_rows: no inputs");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const auto &p : parts) {
        require(p.cols() == cols, "shape_mismatch", "concat_rows: column counts differ");
        rows += p.rows();
    }
    Buffer<S> out;
    out.reserve(rows * cols);
    for (const auto &p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    return make_result<S>("concat_rows", {rows, cols}, std::move(out), parts, [](Node<S> &self) {
        std::size_t offset = 0;
        for (auto &p : self.parents) {
            const std::size_t n = p->data.size();
            if (p->requires_grad) {
                p->accumulate(std::span<const S>(self.grad.data() + offset, n));
            }
            offset += n;
        }
    });
}

template <typename S>
Tensor<S> replace_rows(const Tensor<S> &x, const std::vector<std::size_t> &rows, const Tensor<S> &row) {
    const std::size_t n = x.rows(), cols = x.cols();
    require(row.numel() == cols, "shape_mismatch", "replace_rows: replacement length mismatch");
    Buffer<S> out(x.data().begin(), x.data().end());
    std::vector<char> replaced(n, 0);
    for (std::size_t r : rows) {
        require(r < n, "index_out_of_range", "replace_rows: row index out of range");
        replaced[r] = 1;
        std::copy_n(row.data().data(), cols, out.data() + r * cols);
    }
    return make_result<S>("replace_rows", x.shape(), std::move(out), {x, row},
                          [replaced = std::move(replaced), cols](Node<S> &self) {
                              const std::size_t n = replaced.size();
                              if (wants(self, 0)) {
                                  auto g = self.parents[0]->grad_buffer();
                                  for (std::size_t r = 0; r < n; ++r) {
                                      if (!replaced[r]) {
                                          for (std::size_t c = 0; c < cols; ++c) {
                                              g[r * cols + c] += self.grad[r * cols + c];
                                          }
                                      }
                                  }
                              }
                              if (wants(self, 1)) {
                                  auto g = self.parents[1]->grad_buffer();
                                  for (std::size_t r = 0; r < n; ++r) {
                                      if (replaced[r]) {
                                          for (std::size_t c = 0; c < cols; ++c) {
                                              g[c] += self.grad[r * cols + c];
                                          }
                                      }
                                  }
                              }
                          });
}

template <typename S>
Tensor<S> normalize_rows(const Tensor<S> &x, S floor) {
    const std::size_t rows = x.rows(), cols = x.cols();
    auto norms = std::make_shared<std::vector<S>>(rows);
    auto clipped = std::make_shared<std::vector<char>>(rows);
    Buffer<S> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        S sq = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            sq += x.data()[r * cols + c] * x.data()[r * cols + c];
        }
        const S norm = std::sqrt(sq);
        (*clipped)[r] = norm <= floor;
        (*norms)[r] = std::max(norm, floor);
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] = x.data()[r * cols + c] / (*norms)[r];
        }
    }
    return make_result<S>("normalize_rows", x.shape(), std::move(out), {x}, [rows, cols, norms, clipped](Node<S> &self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const S *y = self.data.data() + r * cols;
            const S *dy = self.grad.data() + r * cols;
            S dot = 0;
            if (!(*clipped)[r]) {
                for (std::size_t c = 0; c < cols; ++c) {
                    dot += y[c] * dy[c];
                }
            }
            for (std::size_t c = 0; c < cols; ++c) {
                g[r * cols + c] += (dy[c] - y[c] * dot) / (*norms)[r];
            }
        }
    });
}

std::size_t conv_output_length(std::size_t input_length, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
    const std::size_t padded = input_length + 2 * padding;
    if (padded < kernel) {
        return 0;
    }
    return (padded - kernel) / stride + 1;
}

Conv1dGeometry conv1d_geometry(const Segments &input, std::size_t in_channels, std::size_t out_channels,
                               std::size_t kernel, std::size_t stride, std::size_t padding) {
    require(kernel > 0 && stride > 0, "invalid_config", "conv1d: kernel and stride must be positive");
    Conv1dGeometry geom{in_channels, out_channels, kernel, stride, padding, input, {}};
    std::size_t offset = 0;
    for (const auto &seg : input) {
        const std::size_t len = conv_output_length(seg.length, kernel, stride, padding);
        require(len > 0, "input_too_short",
                "conv1d: segment of " + std::to_string(seg.length) + " frames is shorter than the kernel (" +
                    std::to_string(kernel) + ")");
        geom.output.push_back({offset, len});
        offset += len;
    }
    return geom;
}

template <typename S>
Tensor<S> conv1d(const Tensor<S> &x, const Tensor<S> &weight, const Tensor<S> &bias, const Conv1dGeometry &geom) {
    const std::size_t cin = geom.in_channels, cout = geom.out_channels, k = geom.kernel;
    const std::size_t width = k * cin;
    require(x.cols() == cin && x.rows() == total_rows(geom.input), "shape_mismatch",
            "conv1d: input " + shape_string(x.shape()) + " does not match geometry");
    require(weight.rows() == cout && weight.cols() == width, "shape_mismatch",
            "conv1d: weight " + shape_string(weight.shape()) + " does not match geometry");
    const bool has_bias = bias.defined();
    const std::size_t n_out = total_rows(geom.output);

    auto columns = std::make_shared<Buffer<S>>(n_out * width, S(0));
    const S *in = x.data().data();
    for (std::size_t s = 0; s < geom.input.size(); ++s) {
        const auto &si = geom.input[s];
        const auto &so = geom.output[s];
        for (std::size_t t = 0; t < so.length; ++t) {
            S *row = columns->data() + (so.offset + t) * width;
            for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * geom.stride + j) -
                                           static_cast<std::ptrdiff_t>(geom.padding);
                if (src >= 0 && src < static_cast<std::ptrdiff_t>(si.length)) {
                    std::copy_n(in + (si.offset + static_cast<std::size_t>(src)) * cin, cin, row + j * cin);
                }
            }
        }
    }
    Buffer<S> out(n_out * cout);
    MatMap<S> y(out.data(), n_out, cout);
    y.noalias() = ConstMatMap<S>(columns->data(), n_out, width) * view(weight).transpose();
    if (has_bias) {
        y.rowwise() += ConstVecMap<S>(bias.data().data(), cout).transpose();
    }
    MacTally::add(n_out * width * cout);

    std::vector<Tensor<S>> parents{x, weight};
    if (has_bias) {
        parents.push_back(bias);
    }
    return make_result<S>("conv1d", {n_out, cout}, std::move(out), std::move(parents),
                          [geom, columns, has_bias, n_out, width](Node<S> &self) {
                              const std::size_t cin = geom.in_channels, cout = geom.out_channels;
                              auto dy = out_grad(self, n_out, cout);
                              ConstMatMap<S> cols(columns->data(), n_out, width);
                              if (wants(self, 1)) {
                                  grad_view(*self.parents[1], cout, width).noalias() += dy.transpose() * cols;
                              }
                              if (has_bias && wants(self, 2)) {
                                  VecMap<S>(self.parents[2]->grad_buffer().data(), cout) +=
                                      dy.colwise().sum().transpose();
                              }
                              if (wants(self, 0)) {
                                  RowMat<S> dcols = dy * view(*self.parents[1], cout, width);
                                  auto g = self.parents[0]->grad_buffer();
                                  for (std::size_t s = 0; s < geom.input.size(); ++s) {
                                      const auto &si = geom.input[s];
                                      const auto &so = geom.output[s];
                                      for (std::size_t t = 0; t < so.length; ++t) {
                                          const S *row = dcols.data() + (so.offset + t) * width;
                                          for (std::size_t j = 0; j < geom.kernel; ++j) {
                                              const std::ptrdiff_t src =
                                                  static_cast<std::ptrdiff_t>(t * geom.stride + j) -
                                                  static_cast<std::ptrdiff_t>(geom.padding);
                                              if (src < 0 || src >= static_cast<std::ptrdiff_t>(si.length)) {
                                                  continue;
                                              }
                                              S *dst = g.data() + (si.offset + static_cast<std::size_t>(src)) * cin;
                                              for (std::size_t c = 0; c < cin; ++c) {
                                                  dst[c] += row[j * cin + c];
                                              }
                                          }
                                      }
                                  }
                              }
                          });
}

template <typename S>
Tensor<S> lstm_direction(const Tensor<S> &x, const Tensor<S> &weight_ih, const Tensor<S> &weight_hh,
                         const Tensor<S> &bias, const Segments &segments, bool reverse) {
    require_matrix(x, "lstm_direction");
    const std::size_t n = x.rows(), in = x.cols(), h = weight_hh.cols(), g4 = 4 * h;
    require(n > 0 && total_rows(segments) == n, "shape_mismatch", "lstm_direction: segments do not cover input");
    require(weight_ih.rows() == g4 && weight_ih.cols() == in, "shape_mismatch", "lstm_direction: weight_ih shape");
    require(weight_hh.rows() == g4, "shape_mismatch", "lstm_direction: weight_hh shape");
    require(bias.numel() == g4, "shape_mismatch", "lstm_direction: bias shape");

    // gates: activated (i, f, g, o) per frame; cells: c_t; tanh_cells: tanh(c_t)
    auto gates = std::make_shared<Buffer<S>>(n * g4);
    auto cells = std::make_shared<Buffer<S>>(n * h);
    auto tanh_cells = std::make_shared<Buffer<S>>(n * h);
    MatMap<S> pre(gates->data(), n, g4);
    pre.noalias() = view(x) * view(weight_ih).transpose();
    pre.rowwise() += ConstVecMap<S>(bias.data().data(), g4).transpose();
    MacTally::add(n * in * g4 + n * h * g4);

    Buffer<S> out(n * h);
    ConstMatMap<S> w_hh(weight_hh.data().data(), g4, h);
    Eigen::Matrix<S, Eigen::Dynamic, 1> recur(g4);
    for (const auto &seg : segments) {
        for (std::size_t step = 0; step < seg.length; ++step) {
            const std::size_t t = seg.offset + (reverse ? seg.length - 1 - step : step);
            S *gt = gates->data() + t * g4;
            if (step > 0) {
                const std::size_t prev = reverse ? t + 1 : t - 1;
                recur.noalias() = w_hh * ConstVecMap<S>(out.data() + prev * h, h);
                for (std::size_t j = 0; j < g4; ++j) {
                    gt[j] += recur[j];
                }
            }
            const S *c_prev = step > 0 ? cells->data() + (reverse ? t + 1 : t - 1) * h : nullptr;
            for (std::size_t j = 0; j < h; ++j) {
                const S ig = stable_sigmoid(gt[j]);
                const S fg = stable_sigmoid(gt[h + j]);
                const S gg = std::tanh(gt[2 * h + j]);
                const S og = stable_sigmoid(gt[3 * h + j]);
                gt[j] = ig;
                gt[h + j] = fg;
                gt[2 * h + j] = gg;
                gt[3 * h + j] = og;
                const S c = (c_prev ? fg * c_prev[j] : S(0)) + ig * gg;
                (*cells)[t * h + j] = c;
                (*tanh_cells)[t * h + j] = std::tanh(c);
                out[t * h + j] = og * (*tanh_cells)[t * h + j];
            }
        }
    }

    return make_result<S>(
        "lstm_direction", {n, h}, std::move(out), {x, weight_ih, weight_hh, bias},
        [segments, reverse, gates, cells, tanh_cells, n, in, h, g4](Node<S> &self) {
            RowMat<S> dz = RowMat<S>::Zero(n, g4);
            RowMat<S> h_prev = RowMat<S>::Zero(n, h);
            ConstMatMap<S> w_hh(self.parents[2]->data.data(), g4, h);
            Eigen::Matrix<S, Eigen::Dynamic, 1> dh_next(h), dc_next(h);
            for (const auto &seg : segments) {
                dh_next.setZero();
                dc_next.setZero();
                for (std::size_t step = seg.length; step-- > 0;) {
                    const std::size_t t = seg.offset + (reverse ? seg.length - 1 - step : step);
                    const bool has_prev = step > 0;
                    const std::size_t prev = reverse ? t + 1 : t - 1;
                    const S *gt = gates->data() + t * g4;
                    const S *c_prev = has_prev ? cells->data() + prev * h : nullptr;
                    S *dzt = dz.data() + t * g4;
                    for (std::size_t j = 0; j < h; ++j) {
                        const S ig = gt[j], fg = gt[h + j], gg = gt[2 * h + j], og = gt[3 * h + j];
                        const S tc = (*tanh_cells)[t * h + j];
                        const S dh = self.grad[t * h + j] + dh_next[j];
                        const S dc = dh * og * (S(1) - tc * tc) + dc_next[j];
                        const S cp = c_prev ? c_prev[j] : S(0);
                        dzt[j] = dc * gg * ig * (S(1) - ig);
                        dzt[h + j] = dc * cp * fg * (S(1) - fg);
                        dzt[2 * h + j] = dc * ig * (S(1) - gg * gg);
                        dzt[3 * h + j] = dh * tc * og * (S(1) - og);
                        dc_next[j] = dc * fg;
                    }
                    if (has_prev) {
                        dh_next.noalias() = w_hh.transpose() * Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(dzt, g4);
                        std::copy_n(self.data.data() + prev * h, h, h_prev.data() + t * h);
                    } else {
                        dh_next.setZero();
                    }
                }
            }
            if (wants(self, 0)) {
                grad_view(*self.parents[0], n, in).noalias() += dz * view(*self.parents[1], g4, in);
            }
            if (wants(self, 1)) {
                grad_view(*self.parents[1], g4, in).noalias() += dz.transpose() * view(*self.parents[0], n, in);
            }
            if (wants(self, 2)) {
                grad_view(*self.parents[2], g4, h).noalias() += dz.transpose() * h_prev;
            }
            if (wants(self, 3)) {
                VecMap<S>(self.parents[3]->grad_buffer().data(), g4) += dz.colwise().sum().transpose();
            }
        });
}

namespace {

template <typename S>
void attention_probs(const S *q, const S *k, std::size_t cols, std::size_t dh, std::size_t head, std::size_t t_len,
                     S *probs) {
    const S inv_scale = S(1) / std::sqrt(S(dh));
    using Strided = Eigen::Map<const RowMat<S>, 0, Eigen::OuterStride<>>;
    Strided qh(q + head * dh, t_len, dh, Eigen::OuterStride<>(cols));
    Strided kh(k + head * dh, t_len, dh, Eigen::OuterStride<>(cols));
    MatMap<S> p(probs, t_len, t_len);
    p.noalias() = (qh * kh.transpose()) * inv_scale;
    for (std::size_t r = 0; r < t_len; ++r) {
        S *row = probs + r * t_len;
        const S mx = *std::max_element(row, row + t_len);
        S total = 0;
        for (std::size_t c = 0; c < t_len; ++c) {
            row[c] = std::exp(row[c] - mx);
            total += row[c];
        }
        for (std::size_t c = 0; c < t_len; ++c) {
            row[c] /= total;
        }
    }
}

} // namespace

template <typename S>
Tensor<S> attention(const Tensor<S> &q, const Tensor<S> &k, const Tensor<S> &v, std::size_t heads,
                    const Segments &segments) {
    require_same_shape(q.shape(), k.shape(), "attention");
    require_same_shape(q.shape(), v.shape(), "attention");
    const std::size_t n = q.rows(), d = q.cols();
    require(heads > 0 && d % heads == 0, "invalid_config",
            "attention: model dimension " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                " heads");
    require(total_rows(segments) == n, "shape_mismatch", "attention: segments do not cover input");
    const std::size_t dh = d / heads;

    std::vector<std::size_t> prob_offsets;
    std::size_t prob_total = 0;
    for (const auto &seg : segments) {
        prob_offsets.push_back(prob_total);
        prob_total += heads * seg.length * seg.length;
    }
    auto probs = std::make_shared<Buffer<S>>(prob_total);
    Buffer<S> out(n * d, S(0));
    using Strided = Eigen::Map<const RowMat<S>, 0, Eigen::OuterStride<>>;
    using StridedOut = Eigen::Map<RowMat<S>, 0, Eigen::OuterStride<>>;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const auto &seg = segments[s];
        const std::size_t t_len = seg.length;
        for (std::size_t hd = 0; hd < heads; ++hd) {
            S *p = probs->data() + prob_offsets[s] + hd * t_len * t_len;
            attention_probs(q.data().data() + seg.offset * d, k.data().data() + seg.offset * d, d, dh, hd, t_len, p);
            Strided vh(v.data().data() + seg.offset * d + hd * dh, t_len, dh, Eigen::OuterStride<>(d));
            StridedOut oh(out.data() + seg.offset * d + hd * dh, t_len, dh, Eigen::OuterStride<>(d));
            oh.noalias() = ConstMatMap<S>(p, t_len, t_len) * vh;
        }
        MacTally::add(2 * t_len * t_len * d);
    }

    return make_result<S>(
        "attention", {n, d}, std::move(out), {q, k, v},
        [segments, heads, d, dh, probs, prob_offsets](Node<S> &self) {
            const S inv_scale = S(1) / std::sqrt(S(dh));
            const bool gq = wants(self, 0), gk = wants(self, 1), gv = wants(self, 2);
            S *dq = gq ? self.parents[0]->grad_buffer().data() : nullptr;
            S *dk = gk ? self.parents[1]->grad_buffer().data() : nullptr;
            S *dv = gv ? self.parents[2]->grad_buffer().data() : nullptr;
            using Strided = Eigen::Map<const RowMat<S>, 0, Eigen::OuterStride<>>;
            using StridedOut = Eigen::Map<RowMat<S>, 0, Eigen::OuterStride<>>;
            for (std::size_t s = 0; s < segments.size(); ++s) {
                const auto &seg = segments[s];
                const std::size_t t_len = seg.length;
                const std::size_t base = seg.offset * d;
                for (std::size_t hd = 0; hd < heads; ++hd) {
                    ConstMatMap<S> p(probs->data() + prob_offsets[s] + hd * t_len * t_len, t_len, t_len);
                    const std::size_t col = base + hd * dh;
                    Strided dout(self.grad.data() + col, t_len, dh, Eigen::OuterStride<>(d));
                    Strided qh(self.parents[0]->data.data() + col, t_len, dh, Eigen::OuterStride<>(d));
                    Strided kh(self.parents[1]->data.data() + col, t_len, dh, Eigen::OuterStride<>(d));
                    Strided vh(self.parents[2]->data.data() + col, t_len, dh, Eigen::OuterStride<>(d));
                    if (gv) {
                        StridedOut(dv + col, t_len, dh, Eigen::OuterStride<>(d)).noalias() += p.transpose() * dout;
                    }
                    if (gq || gk) {
                        RowMat<S> dp = dout * vh.transpose();
                        RowMat<S> ds(t_len, t_len);
                        for (std::size_t r = 0; r < t_len; ++r) {
                            S dot = 0;
                            for (std::size_t c = 0; c < t_len; ++c) {
                                dot += dp(r, c) * p(r, c);
                            }
                            for (std::size_t c = 0; c < t_len; ++c) {
                                ds(r, c) = p(r, c) * (dp(r, c) - dot) * inv_scale;
                            }
                        }
                        if (gq) {
                            StridedOut(dq + col, t_len, dh, Eigen::OuterStride<>(d)).noalias() += ds * kh;
                        }
                        if (gk) {
                            StridedOut(dk + col, t_len, dh, Eigen::OuterStride<>(d)).noalias() += ds.transpose() * qh;
                        }
                    }
                }
            }
        });
}

template <typename S>
std::vector<S> attention_weights(const Tensor<S> &q, const Tensor<S> &k, std::size_t heads, std::size_t head,
                                 const Segment &segment) {
    const std::size_t d = q.cols();
    require(heads > 0 && d % heads == 0 && head < heads, "invalid_config", "attention_weights: bad head index");
    std::vector<S> probs(segment.length * segment.length);
    attention_probs(q.data().data() + segment.offset * d, k.data().data() + segment.offset * d, d, d / heads, head,
                    segment.length, probs.data());
    return probs;
}

template <typename S>
Tensor<S> weighted_sum(const std::vector<Tensor<S>> &layers, const Tensor<S> &weights) {
    require(!layers.empty(), "invalid_argument", "weighted_sum: no layers");
    const std::size_t count = layers.size();
    require(weights.numel() == count, "shape_mismatch", "weighted_sum: one weight per layer required");
    for (const auto &l : layers) {
        require_same_shape(l.shape(), layers.front().shape(), "weighted_sum");
    }
    auto w = std::make_shared<std::vector<S>>(count);
    const S mx = *std::max_element(weights.data().begin(), weights.data().end());
    S total = 0;
    for (std::size_t l = 0; l < count; ++l) {
        (*w)[l] = std::exp(weights.data()[l] - mx);
        total += (*w)[l];
    }
    for (auto &x : *w) {
        x /= total;
    }
    const std::size_t size = layers.front().numel();
    Buffer<S> out(size, S(0));
    for (std::size_t l = 0; l < count; ++l) {
        const auto src = layers[l].data();
        for (std::size_t i = 0; i < size; ++i) {
            out[i] += (*w)[l] * src[i];
        }
    }
    std::vector<Tensor<S>> parents(layers);
    parents.push_back(weights);
    return make_result<S>("weighted_sum", layers.front().shape(), std::move(out), std::move(parents),
                          [w, count, size](Node<S> &self) {
                              std::vector<S> g(count, S(0));
                              for (std::size_t l = 0; l < count; ++l) {
                                  const auto &src = self.parents[l]->data;
                                  for (std::size_t i = 0; i < size; ++i) {
                                      g[l] += self.grad[i] * src[i];
                                  }
                                  if (self.parents[l]->requires_grad) {
                                      auto dst = self.parents[l]->grad_buffer();
                                      for (std::size_t i = 0; i < size; ++i) {
                                          dst[i] += (*w)[l] * self.grad[i];
                                      }
                                  }
                              }
                              if (wants(self, count)) {
                                  S mean = 0;
                                  for (std::size_t l = 0; l < count; ++l) {
                                      mean += (*w)[l] * g[l];
                                  }
                                  auto dw = self.parents[count]->grad_buffer();
                                  for (std::size_t l = 0; l < count; ++l) {
                                      dw[l] += (*w)[l] * (g[l] - mean);
                                  }
                              }
                          });
}

#define LSTMKD_INSTANTIATE_OPS(S)                                                                                 \
    template Tensor<S> add(const Tensor<S> &, const Tensor<S> &);                                                 \
    template Tensor<S> sub(const Tensor<S> &, const Tensor<S> &);                                                 \
    template Tensor<S> mul(const Tensor<S> &, const Tensor<S> &);                                                 \
    template Tensor<S> scale(const Tensor<S> &, S);                                                               \
    template Tensor<S> add_row_vector(const Tensor<S> &, const Tensor<S> &);                                      \
    template Tensor<S> sub_column(const Tensor<S> &, const Tensor<S> &);                                          \
    template Tensor<S> sum(const Tensor<S> &);                                                                    \
    template Tensor<S> reshape(const Tensor<S> &, const Shape &);                                                 \
    template Tensor<S> matmul(const Tensor<S> &, const Tensor<S> &);                                              \
    template Tensor<S> matmul_transposed(const Tensor<S> &, const Tensor<S> &);                                   \
    template Tensor<S> linear(const Tensor<S> &, const Tensor<S> &, const Tensor<S> &);                           \
    template Tensor<S> relu(const Tensor<S> &);                                                                   \
    template Tensor<S> gelu(const Tensor<S> &);                                                                   \
    template Tensor<S> tanh(const Tensor<S> &);                                                                   \
    template Tensor<S> sigmoid(const Tensor<S> &);                                                                \
    template Tensor<S> log1mexp(const Tensor<S> &);                                                               \
    template Tensor<S> clamp_min(const Tensor<S> &, S);                                                           \
    template Tensor<S> layer_norm(const Tensor<S> &, const Tensor<S> &, const Tensor<S> &, S);                    \
    template Tensor<S> softmax_rows(const Tensor<S> &, S);                                                        \
    template Tensor<S> log_softmax_rows(const Tensor<S> &, S);                                                    \
    template Tensor<S> gather_columns(const Tensor<S> &, const std::vector<std::size_t> &);                       \
    template Tensor<S> select_rows(const Tensor<S> &, const std::vector<std::size_t> &);                          \
    template Tensor<S> slice_rows(const Tensor<S> &, std::size_t, std::size_t);                                   \
    template Tensor<S> concat_columns(const Tensor<S> &, const Tensor<S> &);                                      \
    template Tensor<S> concat_rows(const std::vector<Tensor<S>> &);                                               \
    template Tensor<S> replace_rows(const Tensor<S> &, const std::vector<std::size_t> &, const Tensor<S> &);      \
    template Tensor<S> normalize_rows(const Tensor<S> &, S);                                                      \
    template Tensor<S> conv1d(const Tensor<S> &, const Tensor<S> &, const Tensor<S> &, const Conv1dGeometry &);   \
    template Tensor<S> lstm_direction(const Tensor<S> &, const Tensor<S> &, const Tensor<S> &, const Tensor<S> &, \
                                      const Segments &, bool);                                                    \
    template Tensor<S> attention(const Tensor<S> &, const Tensor<S> &, const Tensor<S> &, std::size_t,            \
                                 const Segments &);                                                               \
    template std::vector<S> attention_weights(const Tensor<S> &, const Tensor<S> &, std::size_t, std::size_t,     \
                                              const Segment &);                                                   \
    template Tensor<S> weighted_sum(const std::vector<Tensor<S>> &, const Tensor<S> &);

LSTMKD_INSTANTIATE_OPS(float)
LSTMKD_INSTANTIATE_OPS(double)

} // namespace lstmkd
