#include <catch2/catch.hpp>

#include <numeric>

#include "oracles.hpp"
#include "tpflow/rng.hpp"
#include "tpflow/stats.hpp"

using namespace tpflow;

TEST_CASE("welford on tiny hand-checked sets", "[stats]") {
    Welford w;
    for (double x : {1.0, 2.0, 3.0}) w.add(x);
    CHECK(w.mean() == Approx(2.0).margin(1e-15));
    CHECK(w.variance() == Approx(1.0).margin(1e-15));

    Welford c;
    for (int i = 0; i < 50; ++i) c.add(4.25);
    CHECK(c.mean() == 4.25);
    CHECK(c.m2() == 0.0);
    CHECK(c.variance() == 0.0);
}

TEST_CASE("welford matches two-pass oracle on adversarial data", "[stats]") {
    RngStream rng(123);
    std::vector<double> xs(10000);
    // Common offset three decades above the data spread: the subtractive
    // cancellation case. The naive sum-of-squares estimator loses about
    // seven digits here; Welford must stay within 1e-12 of two-pass.
    const double offset = 1e3;
    for (auto& x : xs) x = offset + rng.uniform();

    Welford w;
    for (double x : xs) w.add(x);
    const auto tp = oracle::two_pass(xs);
    CHECK(w.mean() == Approx(tp.mean).epsilon(1e-12));
    CHECK(w.variance() == Approx(tp.variance).epsilon(1e-12));

    double sq = 0.0;
    for (double x : xs) sq += x * x;
    const double naive = (sq - static_cast<double>(xs.size()) * tp.mean * tp.mean) /
                         static_cast<double>(xs.size() - 1);
    CHECK(std::abs(naive - tp.variance) / tp.variance > 1e-9);
}

TEST_CASE("merge equals sequential accumulation", "[stats]") {
    Welford a, b, seq;
    for (double x : {1.0, 2.0}) {
        a.add(x);
        seq.add(x);
    }
    b.add(3.0);
    seq.add(3.0);
    a.merge(b);
    CHECK(a.count() == 3);
    CHECK(a.mean() == Approx(2.0).margin(1e-15));
    CHECK(a.variance() == Approx(1.0).margin(1e-15));

    Welford empty;
    Welford c = a;
    c.merge(empty);
    CHECK(c.mean() == a.mean());
    CHECK(c.m2() == a.m2());
}

TEST_CASE("random merge trees agree with sequential to 1e-12", "[stats]") {
    RngStream rng(77);
    std::vector<double> xs(10000);
    // Offset large enough that the naive sum-of-squares formula loses many
    // digits, yet small enough that merge deltas stay accurate to 1e-12.
    for (auto& x : xs) x = 1e3 + rng.normal();

    Welford seq;
    for (double x : xs) seq.add(x);

    for (int trial = 0; trial < 5; ++trial) {
        // Split into random-size chunks, then merge in a shuffled binary tree.
        std::vector<Welford> parts;
        std::size_t i = 0;
        while (i < xs.size()) {
            const std::size_t len = 1 + rng.uniform_below(997);
            Welford w;
            for (std::size_t j = i; j < std::min(xs.size(), i + len); ++j) w.add(xs[j]);
            parts.push_back(w);
            i += len;
        }
        while (parts.size() > 1) {
            const std::size_t pick = rng.uniform_below(parts.size() - 1);
            parts[pick].merge(parts[pick + 1]);
            parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(pick + 1));
        }
        CHECK(parts[0].count() == seq.count());
        CHECK(parts[0].mean() == Approx(seq.mean()).epsilon(1e-12));
        CHECK(parts[0].variance() == Approx(seq.variance()).epsilon(1e-12));
    }
}

TEST_CASE("favre finalize on enumerable ensembles", "[stats]") {
    SECTION("pure phase-1 ensemble with constant q") {
        FieldAccumulator acc(1);
        for (int l = 0; l < 8; ++l) {
            std::vector<std::array<PhaseMoments, 2>> sample(1);
            sample[0][0] = {1.0, 5.0, 0.0, 0.0};  // theta = 1, X*rho = 5
            sample[0][1] = {0.0, 0.0, 0.0, 0.0};
            acc.add_sample(sample);
        }
        const FavreStats st = favre_finalize(acc);
        CHECK(st.cells[0][0].alpha == 1.0);
        CHECK(st.cells[0][0].rho == Approx(5.0));
        CHECK(st.cells[0][1].alpha == 0.0);
        CHECK(st.cells[0][1].rho == 0.0);  // extension rule, no division
    }

    SECTION("two equiprobable half layouts") {
        // Phase 1 covers the cell in half of the samples; q = 1 on phase 1.
        FieldAccumulator acc(1);
        for (int l = 0; l < 10; ++l) {
            std::vector<std::array<PhaseMoments, 2>> sample(1);
            const bool covered = l % 2 == 0;
            sample[0][0] = {covered ? 1.0 : 0.0, covered ? 1.0 : 0.0, 0.0, 0.0};
            sample[0][1] = {covered ? 0.0 : 1.0, 0.0, 0.0, 0.0};
            acc.add_sample(sample);
        }
        const FavreStats st = favre_finalize(acc);
        CHECK(st.cells[0][0].alpha == Approx(0.5));
        CHECK(st.cells[0][0].rho == Approx(1.0));  // E[Xq]/alpha = 0.5/0.5
    }
}

TEST_CASE("favre variance gap identity", "[stats]") {
    // For phi = X q: Favre variance = Reynolds variance + (mean - favre)^2.
    RngStream rng(9);
    std::vector<double> phi(4000);
    std::vector<double> x(4000);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        x[i] = rng.uniform() < 0.7 ? 1.0 : 0.0;
        phi[i] = x[i] * (2.0 + rng.normal());
    }
    Welford wphi, wx;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        wphi.add(phi[i]);
        wx.add(x[i]);
    }
    const double mean = wphi.mean();
    const double favre = mean / wx.mean();
    // Population-style second moments for the identity.
    double v = 0.0, vf = 0.0;
    for (double q : phi) {
        v += (q - mean) * (q - mean);
        vf += (q - favre) * (q - favre);
    }
    v /= static_cast<double>(phi.size());
    vf /= static_cast<double>(phi.size());
    CHECK(vf == Approx(v + (mean - favre) * (mean - favre)).epsilon(1e-12));
}

TEST_CASE("alpha saturation is preserved by averaging", "[stats]") {
    RngStream rng(31);
    FieldAccumulator acc(4);
    for (int l = 0; l < 100; ++l) {
        std::vector<std::array<PhaseMoments, 2>> sample(4);
        for (auto& cell : sample) {
            const double t = rng.uniform();
            cell[0].theta = t;
            cell[1].theta = 1.0 - t;
        }
        acc.add_sample(sample);
    }
    const FavreStats st = favre_finalize(acc);
    for (const auto& cell : st.cells) CHECK(cell[0].alpha + cell[1].alpha == Approx(1.0).margin(1e-12));
}

TEST_CASE("cauchy_rate is the scaled L1 distance", "[stats]") {
    std::vector<double> a(10, 1.0), b(10, 1.0);
    CHECK(cauchy_rate(a, b, 0.1) == 0.0);
    for (auto& x : b) x += 1.0;
    CHECK(cauchy_rate(a, b, 0.1) == Approx(1.0));  // unit-length domain

    // Quadrature check against an analytic integral: f = sin(pi x) vs 0 on [0,1].
    const int n = 2000;
    std::vector<double> f(n), zero(n, 0.0);
    for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = std::sin(M_PI * (i + 0.5) / n);
    CHECK(cauchy_rate(f, zero, 1.0 / n) == Approx(2.0 / M_PI).epsilon(1e-6));

    CHECK_THROWS_AS(cauchy_rate(a, std::vector<double>(3, 0.0), 0.1), std::invalid_argument);
}
