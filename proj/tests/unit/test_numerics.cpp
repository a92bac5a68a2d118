#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "lstmkd/numerics/gradcheck.hpp"
#include "lstmkd/numerics/distribution.hpp"
#include "lstmkd/numerics/finite_diff.hpp"
#include "lstmkd/numerics/mac_tally.hpp"
#include "lstmkd/numerics/memory.hpp"
#include "lstmkd/numerics/ops.hpp"
#include "lstmkd/numerics/rng.hpp"

using namespace lstmkd;

namespace {

std::vector<double> random_values(Rng &rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto &x : v) {
        x = rng.normal() * scale;
    }
    return v;
}

} // namespace

TEST_CASE("rng reference vectors and reproducibility") {
    Rng a(0);
    CHECK(a.next_u64() == 0x99ec5f36cb75f2b4ULL);
    Rng b(42);
    CHECK(b.next_u64() == 0x15780b2e0c2ec716ULL);

    Rng x(1234), y(1234);
    bool same = true;
    for (int i = 0; i < 1000000; ++i) {
        same = same && x.next_u64() == y.next_u64();
    }
    CHECK(same);

    Rng u(7);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        REQUIRE(u.below(5) < 5);
    }
    CHECK(Rng(9).fork(1).next_u64() != Rng(9).fork(2).next_u64());
}

TEST_CASE("softmax_t examples") {
    const std::vector<double> zeros{0, 0, 0};
    auto p = softmax_t(zeros, 1.0);
    for (double v : p.probs) {
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }

    const std::vector<double> l{1, 2, 3};
    auto q = softmax_t(l, 1.0);
    CHECK(q[0] == doctest::Approx(0.0900305731703805).epsilon(1e-13));
    CHECK(q[1] == doctest::Approx(0.244728471054798).epsilon(1e-13));
    CHECK(q[2] == doctest::Approx(0.665240955774822).epsilon(1e-13));

    auto flat = softmax_t(l, 1e6);
    for (double v : flat.probs) {
        CHECK(std::abs(v - 1.0 / 3.0) < 1e-6);
    }
}

TEST_CASE("softmax_t errors") {
    const std::vector<double> empty;
    const std::vector<double> l{1, 2};
    const std::vector<double> bad{1, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(softmax_t(empty, 1.0), Error);
    CHECK_THROWS_AS(softmax_t(l, 0.0), Error);
    CHECK_THROWS_AS(softmax_t(l, -1.0), Error);
    CHECK_THROWS_AS(softmax_t(bad, 1.0), Error);
}

TEST_CASE("softmax_t sums to one and ignores constant shifts") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t c = 2 + rng.below(499);
        auto logits = random_values(rng, c, 5.0);
        const double tau = 0.25 + 4.0 * rng.uniform();
        auto p = softmax_t(logits, tau);
        CHECK(std::accumulate(p.probs.begin(), p.probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        auto shifted = logits;
        const double shift = rng.uniform(-50.0, 50.0);
        for (auto &v : shifted) {
            v += shift;
        }
        auto p2 = softmax_t(shifted, tau);
        double worst = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            worst = std::max(worst, std::abs(p.probs[i] - p2.probs[i]));
        }
        CHECK(worst <= 1e-7);
    }
}

TEST_CASE("kl_divergence examples") {
    SoftDistribution p{{0.3, 0.7}, 1.0};
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(kl_divergence(SoftDistribution{{1.0, 0.0}}, SoftDistribution{{0.5, 0.5}}) ==
          doctest::Approx(0.693147180559945).epsilon(1e-14));
    CHECK(kl_divergence(SoftDistribution{{0.5, 0.5}}, SoftDistribution{{0.9, 0.1}}) ==
          doctest::Approx(0.510825623765991).epsilon(1e-14));
}

TEST_CASE("kl_divergence errors and non-negativity") {
    const std::vector<double> a{0.5, 0.5}, b{1.0}, z{1.0, 0.0}, w{0.0, 1.0};
    CHECK_THROWS_AS(kl_divergence(std::span<const double>(a), std::span<const double>(b)), Error);
    CHECK_THROWS_AS(kl_divergence(std::span<const double>(z), std::span<const double>(w), KlOptions{false}), Error);
    CHECK(std::isfinite(kl_divergence(std::span<const double>(z), std::span<const double>(w))));

    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t c = 2 + rng.below(20);
        auto p = softmax_t(random_values(rng, c, 3.0), 1.0);
        auto q = softmax_t(random_values(rng, c, 3.0), 1.0);
        CHECK(kl_divergence(p, q) >= 0.0);
        CHECK(kl_divergence(p, q) > 0.0);
    }
}

TEST_CASE("backward examples") {
    auto x = Tensor<double>::from({3}, {0.5, -1.0, 2.0}, true);
    sum(x).backward();
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 1, 1});

    auto a = Tensor<double>::from({1}, {2.0}, true);
    auto b = Tensor<double>::from({1}, {5.0}, true);
    sum(mul(a, b)).backward();
    CHECK(a.grad()[0] == 5.0);
    CHECK(b.grad()[0] == 2.0);

    // Cross-entropy of softmax against a one-hot target: d/dl = p - y.
    auto logits = Tensor<double>::from({1, 4}, {0.3, -1.2, 2.0, 0.7}, true);
    const std::size_t label = 1;
    scale(sum(gather_columns(log_softmax_rows(logits), {label})), -1.0).backward();
    auto p = softmax_t(logits.data(), 1.0);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(std::abs(logits.grad()[c] - (p[c] - (c == label ? 1.0 : 0.0))) < 1e-6);
    }
}

TEST_CASE("backward errors") {
    auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(mul(x, x).backward(), Error);

    auto y = Tensor<double>::from({1}, {3.0}, true);
    auto root = mul(y, y);
    root.backward();
    CHECK(y.grad()[0] == 6.0);
    CHECK_THROWS_AS(root.backward(), Error);
}

TEST_CASE("non-finite values are surfaced") {
    auto x = Tensor<double>::from({1, 2}, {1e308, 1e308});
    CHECK_THROWS_AS(add(x, x), Error);
    auto z = Tensor<double>::from({1, 1}, {0.0});
    CHECK_THROWS_AS(log1mexp(z), Error);
}

TEST_CASE("gradient accumulation is deterministic") {
    Rng rng(5);
    auto values = random_values(rng, 12);
    auto run = [&] {
        auto w = Tensor<double>::from({3, 4}, std::span<const double>(values), true);
        auto h = tanh(matmul_transposed(w, w));
        sum(mul(h, h)).backward();
        return std::vector<double>(w.grad().begin(), w.grad().end());
    };
    CHECK(run() == run());
}

TEST_CASE("finite_diff_grad examples") {
    const std::vector<double> x{3.0};
    auto g = finite_diff_grad([](std::span<const double> v) { return v[0] * v[0]; }, x, 1e-5);
    CHECK(std::abs(g[0] - 6.0) < 1e-6);

    const std::vector<double> y{0.1, -4.0, 7.5, 2.0};
    auto ones = finite_diff_grad(
        [](std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }, y, 1e-3);
    for (double v : ones) {
        CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(finite_diff_grad([](std::span<const double>) { return 0.0; }, y, 0.0), Error);
}

TEST_CASE("elementwise and reduction ops match finite differences") {
    Rng rng(21);
    const Shape s{3, 4};
    auto a = random_values(rng, 12), b = random_values(rng, 12), v = random_values(rng, 4), c = random_values(rng, 3);
    auto neg = a;
    for (auto &x : neg) {
        x = -std::abs(x) - 0.05;
    }
    CHECK(gradcheck({s, s}, {a, b}, [](const Leaves &l) { return sum(mul(add(l[0], l[1]), sub(l[0], l[1]))); }) < 1e-6);
    CHECK(gradcheck({s, {4}}, {a, v}, [](const Leaves &l) { return sum(tanh(add_row_vector(l[0], l[1]))); }) < 1e-6);
    CHECK(gradcheck({s, {3}}, {a, c}, [](const Leaves &l) { return sum(sigmoid(sub_column(l[0], l[1]))); }) < 1e-6);
    CHECK(gradcheck({s}, {a}, [](const Leaves &l) { return sum(mul(gelu(l[0]), l[0])); }) < 1e-6);
    CHECK(gradcheck({s}, {neg}, [](const Leaves &l) { return sum(log1mexp(l[0])); }) < 1e-6);
    CHECK(gradcheck({s}, {a}, [](const Leaves &l) { return sum(mul(normalize_rows(l[0]), l[0])); }) < 1e-6);
    CHECK(gradcheck({s, s}, {a, b}, [](const Leaves &l) {
              return sum(mul(softmax_rows(l[0], 0.7), l[1]));
          }) < 1e-6);
    CHECK(gradcheck({s, s}, {a, b}, [](const Leaves &l) {
              return sum(mul(log_softmax_rows(l[0], 2.0), l[1]));
          }) < 1e-6);
}

TEST_CASE("structural ops match finite differences") {
    Rng rng(22);
    auto a = random_values(rng, 12), b = random_values(rng, 6), r = random_values(rng, 4);
    CHECK(gradcheck({{3, 4}, {3, 2}}, {a, b}, [](const Leaves &l) {
              return sum(tanh(concat_columns(l[0], l[1])));
          }) < 1e-6);
    CHECK(gradcheck({{3, 4}, {4}}, {a, r}, [](const Leaves &l) {
              auto x = replace_rows(l[0], {0, 2}, l[1]);
              return sum(mul(x, x));
          }) < 1e-6);
    CHECK(gradcheck({{3, 4}}, {a}, [](const Leaves &l) {
              auto picked = select_rows(l[0], {2, 0});
              auto cols = gather_columns(l[0], {1, 3, 0});
              return add(sum(mul(picked, picked)), sum(tanh(cols)));
          }) < 1e-6);
    auto e = random_values(rng, 8);
    CHECK(gradcheck({{3, 4}, {8}}, {a, e}, [](const Leaves &l) {
              auto x = concat_rows<double>({slice_rows(l[0], 1, 2), reshape(l[1], {2, 4})});
              return sum(mul(x, x));
          }) < 1e-6);
}

TEST_CASE("dense kernels match finite differences") {
    Rng rng(23);
    auto x = random_values(rng, 5 * 3), w = random_values(rng, 4 * 3), bias = random_values(rng, 4);
    auto m = random_values(rng, 3 * 4);
    CHECK(gradcheck({{5, 3}, {4, 3}, {4}}, {x, w, bias}, [](const Leaves &l) {
              return sum(tanh(linear(l[0], l[1], l[2])));
          }) < 1e-6);
    CHECK(gradcheck({{5, 3}, {3, 4}}, {x, m}, [](const Leaves &l) { return sum(tanh(matmul(l[0], l[1]))); }) < 1e-6);
    CHECK(gradcheck({{5, 3}, {4, 3}}, {x, w}, [](const Leaves &l) {
              return sum(tanh(matmul_transposed(l[0], l[1])));
          }) < 1e-6);
    auto gamma = random_values(rng, 3), beta = random_values(rng, 3), probe = random_values(rng, 15);
    CHECK(gradcheck({{5, 3}, {3}, {3}}, {x, gamma, beta}, [&](const Leaves &l) {
              auto target = Tensor<double>::from({5, 3}, std::span<const double>(probe));
              return sum(mul(layer_norm(l[0], l[1], l[2]), target));
          }) < 1e-6);
}

TEST_CASE("conv1d matches finite differences and stride arithmetic") {
    Rng rng(24);
    const Segments in = pack_segments({11, 8});
    auto geom = conv1d_geometry(in, 2, 3, 3, 2, 1);
    CHECK(geom.output[0].length == conv_output_length(11, 3, 2, 1));
    CHECK(geom.output[0].length == 6);
    CHECK(geom.output[1].length == 4);
    auto x = random_values(rng, 19 * 2), w = random_values(rng, 3 * 6), b = random_values(rng, 3);
    CHECK(gradcheck({{19, 2}, {3, 6}, {3}}, {x, w, b}, [&](const Leaves &l) {
              return sum(tanh(conv1d(l[0], l[1], l[2], geom)));
          }) < 1e-6);
    CHECK_THROWS_AS(conv1d_geometry(pack_segments({2}), 1, 1, 3, 1), Error);
}

TEST_CASE("lstm_direction matches finite differences") {
    Rng rng(25);
    const std::size_t in = 3, h = 2;
    const Segments seg = pack_segments({4, 1, 3});
    auto x = random_values(rng, 8 * in), wih = random_values(rng, 4 * h * in, 0.7),
         whh = random_values(rng, 4 * h * h, 0.7), b = random_values(rng, 4 * h, 0.3);
    for (bool reverse : {false, true}) {
        CHECK(gradcheck({{8, in}, {4 * h, in}, {4 * h, h}, {4 * h}}, {x, wih, whh, b}, [&](const Leaves &l) {
                  auto out = lstm_direction(l[0], l[1], l[2], l[3], seg, reverse);
                  return sum(mul(out, out));
              }) < 1e-6);
    }
}

TEST_CASE("attention matches finite differences and rows are stochastic") {
    Rng rng(26);
    const Segments seg = pack_segments({3, 2});
    auto q = random_values(rng, 5 * 4), k = random_values(rng, 5 * 4), v = random_values(rng, 5 * 4);
    CHECK(gradcheck({{5, 4}, {5, 4}, {5, 4}}, {q, k, v}, [&](const Leaves &l) {
              auto out = attention(l[0], l[1], l[2], 2, seg);
              return sum(mul(out, out));
          }) < 1e-6);
    auto qt = Tensor<double>::from({5, 4}, std::span<const double>(q));
    auto kt = Tensor<double>::from({5, 4}, std::span<const double>(k));
    auto probs = attention_weights(qt, kt, 2, 1, seg[0]);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(std::abs(probs[r * 3] + probs[r * 3 + 1] + probs[r * 3 + 2] - 1.0) < 1e-6);
    }
    CHECK_THROWS_AS(attention(qt, kt, qt, 3, seg), Error);
}

TEST_CASE("weighted_sum matches finite differences") {
    Rng rng(27);
    auto a = random_values(rng, 6), b = random_values(rng, 6), w = random_values(rng, 2);
    CHECK(gradcheck({{2, 3}, {2, 3}, {2}}, {a, b, w}, [](const Leaves &l) {
              auto out = weighted_sum<double>({l[0], l[1]}, l[2]);
              return sum(mul(out, out));
          }) < 1e-6);
}

TEST_CASE("memory tracker reports payload bytes with high-water semantics") {
    MemoryTracker::reset_peak();
    const std::size_t base = MemoryTracker::live_bytes();
    {
        auto t = Tensor<float>::zeros({1000});
        CHECK(MemoryTracker::live_bytes() - base == 4000 + MemoryTracker::kAllocationOverhead);
    }
    CHECK(MemoryTracker::live_bytes() == base);
    CHECK(MemoryTracker::peak_bytes() - base == 4000);
    MemoryTracker::reset_peak();
    { auto t = Tensor<float>::zeros({1000}); }
    { auto t = Tensor<float>::zeros({1000}); }
    CHECK(MemoryTracker::peak_bytes() - base == 4000);
}

TEST_CASE("mac tally counts affine work") {
    auto x = Tensor<float>::zeros({7, 5});
    auto w = Tensor<float>::zeros({3, 5});
    MacTallyScope scope;
    linear(x, w, Tensor<float>{});
    CHECK(scope.total() == 7u * 5u * 3u);
}
