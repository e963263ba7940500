#include "doctest.h"

#include <array>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "dintr/rng.hpp"
#include "dintr/tensor.hpp"

using namespace dintr;

namespace {

// Reference matmul in long double, written independently of the library kernel.
std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            long double acc = 0.0L;
            for (std::size_t p = 0; p < k; ++p)
                acc += static_cast<long double>(a[i * k + p]) * static_cast<long double>(b[p * n + j]);
            c[i * n + j] = static_cast<double>(acc);
        }
    return c;
}

// Reference softmax: plain exp-normalize per row (no max shift), safe for the
// moderate inputs used below.
std::vector<double> softmax_oracle(const std::vector<double>& a, std::size_t rows,
                                   std::size_t cols, double sc) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < rows; ++i) {
        long double total = 0.0L;
        for (std::size_t j = 0; j < cols; ++j) total += std::exp(static_cast<long double>(a[i * cols + j] * sc));
        for (std::size_t j = 0; j < cols; ++j)
            out[i * cols + j] =
                static_cast<double>(std::exp(static_cast<long double>(a[i * cols + j] * sc)) / total);
    }
    return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
    return worst;
}

// Central finite differences on every element of `param` against the tape
// gradient of make_loss, written locally so the gradient check itself is not
// library code.
template <typename MakeLoss>
double fd_max_rel_err(MakeLoss make_loss, tensor& param, double h = 1e-5, double floor = 1e-4) {
    param.zero_grad(); // earlier backward passes may have touched this buffer
    std::vector<double> analytic;
    {
        tape tp;
        tape::scope scope(tp);
        tensor loss = make_loss();
        tp.backward(loss);
        analytic = param.grad();
    }
    std::vector<double> base = param.values();
    double worst = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> v = base;
        v[i] = base[i] + h;
        param = tensor(param.shape(), std::move(v), true);
        double lp = make_loss().item();
        v = base;
        v[i] = base[i] - h;
        param = tensor(param.shape(), std::move(v), true);
        double lm = make_loss().item();
        double fd = (lp - lm) / (2.0 * h);
        double rel = std::fabs(fd - analytic[i]) / std::max({std::fabs(fd), std::fabs(analytic[i]), floor});
        worst = std::max(worst, rel);
    }
    param = tensor(param.shape(), std::vector<double>(base), true);
    return worst;
}

} // namespace

TEST_CASE("tensor construction and accessors") {
    tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.rank() == 2);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(1) == 3);
    CHECK(t.size() == 6);
    CHECK(t.at({1, 2}) == 6.0);
    CHECK(t.at({0, 0}) == 1.0);
    CHECK_THROWS_AS(t.at({2, 0}), index_error);
    CHECK_THROWS_AS(t.at({0}), index_error);
    CHECK_THROWS_AS(t.dim(2), index_error);
    CHECK_THROWS_AS(t.item(), shape_error);
    CHECK(tensor::scalar(4.25).item() == 4.25);
    CHECK(tensor::zeros({3}).values() == std::vector<double>{0, 0, 0});
    CHECK(tensor::full({2}, 7.5).values() == std::vector<double>{7.5, 7.5});
    CHECK_THROWS_AS(tensor({2, 2}, {1, 2, 3}), shape_error);
    CHECK(t.all_finite());
    tensor bad({1}, {std::nan("")});
    CHECK(!bad.all_finite());
}

TEST_CASE("seeded constructors are deterministic and seed-sensitive") {
    tensor a = tensor::seeded_uniform({4, 4}, 11, "w", 0.5);
    tensor b = tensor::seeded_uniform({4, 4}, 11, "w", 0.5);
    tensor c = tensor::seeded_uniform({4, 4}, 12, "w", 0.5);
    tensor d = tensor::seeded_uniform({4, 4}, 11, "v", 0.5);
    CHECK(a.values() == b.values());
    CHECK(a.values() != c.values());
    CHECK(a.values() != d.values());
    for (double v : a.values()) CHECK(std::fabs(v) <= 0.5);

    tensor n1 = tensor::seeded_normal({64}, 3, "n", 2.0);
    tensor n2 = tensor::seeded_normal({64}, 3, "n", 2.0);
    CHECK(n1.values() == n2.values());
}

TEST_CASE("detach shares storage and drops gradient tracking") {
    tensor a({2}, {1, 2}, true);
    tensor d = a.detach();
    CHECK(!d.requires_grad());
    CHECK(d.data() == a.data()); // same buffer
    CHECK(a.has_grad());
    CHECK(!d.has_grad());
    CHECK_THROWS_AS(d.grad(), contract_error);
}

TEST_CASE("elementwise ops match hand values and reject shape mismatches") {
    tensor a({2, 2}, {1, -2, 3, 0.5});
    tensor b({2, 2}, {4, 5, -6, 2});
    CHECK(add(a, b).values() == std::vector<double>{5, 3, -3, 2.5});
    CHECK(sub(a, b).values() == std::vector<double>{-3, -7, 9, -1.5});
    CHECK(mul(a, b).values() == std::vector<double>{4, -10, -18, 1.0});
    CHECK(scale(a, -2.0).values() == std::vector<double>{-2, 4, -6, -1});
    CHECK(add_scalar(a, 1.5).values() == std::vector<double>{2.5, -0.5, 4.5, 2});
    CHECK(neg(a).values() == std::vector<double>{-1, 2, -3, -0.5});
    tensor c({3}, {1, 2, 3});
    CHECK_THROWS_AS(add(a, c), shape_error);
    CHECK_THROWS_AS(sub(a, c), shape_error);
    CHECK_THROWS_AS(mul(a, c), shape_error);
}

TEST_CASE("exp/log/sqrt values and domain errors") {
    tensor a({3}, {0.0, 1.0, 2.0});
    auto e = exp(a).values();
    CHECK(e[0] == 1.0);
    CHECK(e[1] == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
    CHECK(e[2] == doctest::Approx(std::exp(2.0)).epsilon(1e-15));

    tensor p({2}, {1.0, std::exp(1.0)});
    auto l = log(p).values();
    CHECK(l[0] == 0.0);
    CHECK(l[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(log(tensor({1}, {0.0})), numeric_error);
    CHECK_THROWS_AS(log(tensor({1}, {-1.0})), numeric_error);

    tensor q({3}, {0.0, 4.0, 2.25});
    CHECK(sqrt(q).values() == std::vector<double>{0.0, 2.0, 1.5});
    CHECK_THROWS_AS(sqrt(tensor({1}, {-1e-12})), numeric_error);
}

TEST_CASE("gelu matches the exact erf form") {
    // x * Phi(x) with Phi the standard normal CDF
    auto phi = [](double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); };
    std::vector<double> xs{-3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0};
    tensor t({xs.size()}, std::vector<double>(xs));
    auto g = gelu(t).values();
    for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(g[i] == doctest::Approx(xs[i] * phi(xs[i])).epsilon(1e-14));
    CHECK(g[3] == 0.0);
}

TEST_CASE("matmul agrees with a long-double triple loop across shapes") {
    rng r(99);
    for (auto [m, k, n] : std::vector<std::array<std::size_t, 3>>{
             {1, 1, 1}, {2, 3, 4}, {5, 5, 5}, {7, 2, 9}, {1, 8, 3}}) {
        std::vector<double> av(m * k), bv(k * n);
        for (auto& v : av) v = r.uniform_sym(2.0);
        for (auto& v : bv) v = r.uniform_sym(2.0);
        tensor A({m, k}, std::vector<double>(av));
        tensor B({k, n}, std::vector<double>(bv));
        auto want = matmul_oracle(av, bv, m, k, n);
        CHECK(max_abs_diff(matmul(A, B).values(), want) <= 1e-13);
    }
    CHECK_THROWS_AS(matmul(tensor({2, 3}, std::vector<double>(6, 1.0)),
                           tensor({2, 3}, std::vector<double>(6, 1.0))),
                    shape_error);
    CHECK_THROWS_AS(matmul(tensor({4}, std::vector<double>(4, 1.0)),
                           tensor({4, 1}, std::vector<double>(4, 1.0))),
                    shape_error);
}

TEST_CASE("transpose is an involution with the right layout") {
    tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    tensor t = transpose(a);
    CHECK(t.shape() == std::vector<std::size_t>{3, 2});
    CHECK(t.values() == std::vector<double>{1, 4, 2, 5, 3, 6});
    CHECK(transpose(t).values() == a.values());
}

TEST_CASE("softmax rows match exp-normalize, sum to one, and guard inputs") {
    rng r(5);
    std::size_t rows = 6, cols = 7;
    std::vector<double> av(rows * cols);
    for (auto& v : av) v = r.uniform_sym(3.0);
    for (double sc : {1.0, 0.35, 2.0}) {
        tensor A({rows, cols}, std::vector<double>(av));
        auto got = softmax_rows(A, sc).values();
        CHECK(max_abs_diff(got, softmax_oracle(av, rows, cols, sc)) <= 1e-14);
        for (std::size_t i = 0; i < rows; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                CHECK(got[i * cols + j] >= 0.0);
                sum += got[i * cols + j];
            }
            CHECK(std::fabs(sum - 1.0) <= 1e-12);
        }
    }
    // max-shift stability: huge logits do not overflow
    tensor big({1, 3}, {1000.0, 1001.0, 999.0});
    auto sb = softmax_rows(big, 1.0).values();
    CHECK(std::fabs(sb[0] + sb[1] + sb[2] - 1.0) <= 1e-12);
    CHECK(sb[1] > sb[0]);
    // shift invariance: adding a constant per row changes nothing
    tensor shifted({1, 3}, {7.0, 8.0, 6.0});
    tensor plain({1, 3}, {0.0, 1.0, -1.0});
    CHECK(max_abs_diff(softmax_rows(shifted, 1.0).values(), softmax_rows(plain, 1.0).values()) <=
          1e-15);
    CHECK_THROWS_AS(softmax_rows(tensor({1, 2}, {0.0, 0.0}), 0.0), contract_error);
    CHECK_THROWS_AS(softmax_rows(tensor({1, 2}, {std::nan(""), 0.0}), 1.0), numeric_error);
    CHECK_THROWS_AS(softmax_rows(tensor({3}, {1, 2, 3}), 1.0), shape_error);
}

TEST_CASE("reshape keeps data and rejects count changes") {
    tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    tensor b = reshape(a, {3, 2});
    CHECK(b.values() == a.values());
    CHECK(b.shape() == std::vector<std::size_t>{3, 2});
    CHECK(reshape(a, {6}).rank() == 1);
    CHECK_THROWS_AS(reshape(a, {4}), shape_error);
}

TEST_CASE("slice/concat/split round-trip and interior layout") {
    tensor a({3, 4}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
    tensor rows = slice(a, 0, 1, 2);
    CHECK(rows.shape() == std::vector<std::size_t>{2, 4});
    CHECK(rows.values() == std::vector<double>{4, 5, 6, 7, 8, 9, 10, 11});
    tensor cols = slice(a, 1, 1, 2);
    CHECK(cols.shape() == std::vector<std::size_t>{3, 2});
    CHECK(cols.values() == std::vector<double>{1, 2, 5, 6, 9, 10});
    CHECK_THROWS_AS(slice(a, 2, 0, 1), index_error);
    CHECK_THROWS_AS(slice(a, 0, 2, 2), index_error);

    tensor glued = concat({slice(a, 1, 0, 1), slice(a, 1, 1, 3)}, 1);
    CHECK(glued.values() == a.values());
    auto parts = split(a, 0, {1, 2});
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].values() == std::vector<double>{0, 1, 2, 3});
    CHECK(parts[1].values() == std::vector<double>{4, 5, 6, 7, 8, 9, 10, 11});
    CHECK(concat(parts, 0).values() == a.values());
    CHECK_THROWS_AS(split(a, 0, {1, 1}), shape_error);
    CHECK_THROWS_AS(concat({a, tensor({3, 3}, std::vector<double>(9, 0.0))}, 0), shape_error);
    CHECK_THROWS_AS(concat(std::vector<tensor>{}, 0), contract_error);
}

TEST_CASE("reductions match hand arithmetic") {
    tensor a({2, 2}, {1, 2, 3, 4});
    CHECK(sum(a).item() == 10.0);
    CHECK(mean(a).item() == 2.5);
    tensor b({2, 2}, {2, 2, 2, 2});
    // mse = ((1)^2 + 0 + 1 + 4) / 4
    CHECK(mse(a, b).item() == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(mse(a, a).item() == 0.0);
    CHECK_THROWS_AS(mse(a, tensor({3}, {1, 2, 3})), shape_error);
}

TEST_CASE("tape backward propagates through reuse and rejects bad losses") {
    // loss = sum(x + x): d/dx = 2 everywhere (gradient accumulation on reuse)
    tensor x({3}, {1, 2, 3}, true);
    {
        tape tp;
        tape::scope scope(tp);
        tensor loss = sum(add(x, x));
        tp.backward(loss);
    }
    CHECK(x.grad() == std::vector<double>{2, 2, 2});

    x.zero_grad();
    CHECK(x.grad() == std::vector<double>{0, 0, 0});

    {
        tape tp;
        tape::scope scope(tp);
        tensor vec = add(x, x);
        CHECK_THROWS_AS(tp.backward(vec), contract_error); // not a scalar
    }
    {
        tape tp;
        tape::scope scope(tp);
        tensor detached = tensor::scalar(1.0);
        CHECK_THROWS_AS(tp.backward(detached), contract_error); // not on the tape
    }
}

TEST_CASE("hand-checked gradients for a chained expression") {
    // loss = mean((2a)^2) with a = [1, -3]: d loss/da = 4a -> [4, -12]... /n
    tensor a({2}, {1, -3}, true);
    {
        tape tp;
        tape::scope scope(tp);
        tensor loss = mean(mul(scale(a, 2.0), scale(a, 2.0)));
        tp.backward(loss);
    }
    // d/da_i of (4 a_i^2)/2 = 4 a_i
    CHECK(a.grad()[0] == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(a.grad()[1] == doctest::Approx(-12.0).epsilon(1e-14));
}

TEST_CASE("finite differences validate every primitive's gradient") {
    // Each case builds a scalar loss around one primitive; 24 seeds each.
    double worst_all = 0.0;
    for (std::uint64_t seed = 1; seed <= 24; ++seed) {
        tensor x = tensor::seeded_normal({3, 4}, mix_seed(seed, "x"), "x", 0.8, true);
        tensor y = tensor::seeded_normal({3, 4}, mix_seed(seed, "y"), "y", 0.8);
        tensor w = tensor::seeded_normal({4, 3}, mix_seed(seed, "w"), "w", 0.6, true);
        tensor pos = tensor::seeded_uniform({3, 4}, mix_seed(seed, "p"), "p", 0.4);
        tensor shifted = add_scalar(pos, 1.0); // safely positive for log/sqrt

        std::vector<std::pair<const char*, std::function<tensor()>>> cases{
            {"add", [&] { return mse(add(x, y), y); }},
            {"sub", [&] { return mse(sub(x, y), y); }},
            {"mul", [&] { return mse(mul(x, y), y); }},
            {"scale", [&] { return mse(scale(x, -1.7), y); }},
            {"add_scalar", [&] { return mse(add_scalar(x, 0.3), y); }},
            {"exp", [&] { return mse(exp(scale(x, 0.5)), y); }},
            {"log", [&] { return mse(log(add(mul(x, x), shifted)), y); }},
            {"sqrt", [&] { return mse(sqrt(add(mul(x, x), shifted)), y); }},
            {"gelu", [&] { return mse(gelu(x), y); }},
            {"matmul", [&] { return mse(matmul(x, w), slice(y, 1, 0, 3)); }},
            {"transpose", [&] { return mse(transpose(x), transpose(y)); }},
            {"softmax", [&] { return mse(softmax_rows(x, 0.9), y); }},
            {"reshape", [&] { return mse(reshape(x, {4, 3}), transpose(y)); }},
            {"slice", [&] { return mse(slice(x, 1, 1, 2), slice(y, 1, 0, 2)); }},
            {"concat", [&] { return mse(concat({slice(x, 0, 0, 1), slice(x, 0, 1, 2)}, 0), y); }},
            {"sum", [&] { return mul(sum(x), sum(x)); }},
            {"mean", [&] { return mul(mean(x), mean(x)); }},
            {"mse", [&] { return mse(x, y); }},
        };
        for (auto& [name, fn] : cases) {
            INFO("primitive: ", name, " seed: ", seed);
            double err = fd_max_rel_err(fn, x);
            CHECK(err <= 1e-4);
            worst_all = std::max(worst_all, err);
        }
        // matmul's second operand too
        double werr = fd_max_rel_err([&] { return mse(matmul(x, w), slice(y, 1, 0, 3)); }, w);
        CHECK(werr <= 1e-4);
        worst_all = std::max(worst_all, werr);
    }
    CHECK(worst_all <= 1e-4);
}

TEST_CASE("scale-free ops run without an active tape") {
    tensor x({2}, {1, 2}, true);
    tensor out = add(scale(x, 2.0), x); // no tape active: plain values
    CHECK(out.values() == std::vector<double>{3, 6});
}
