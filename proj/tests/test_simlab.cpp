#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "secord/simlab.hpp"
#include "test_util.hpp"

using namespace secord;

namespace {

template <class F>
ErrorKind kind_of(F f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::InvalidInput;
}

Alphabet AX = Alphabet::range("X", 2), AU = Alphabet::range("U", 2), AY = Alphabet::range("Y", 2);

// joint over (X,U,Y) from P_X, P_{U|X}, P_{Y|X,U}
ProbVec xuy(const std::vector<double>& px, const std::vector<double>& ux, const std::vector<double>& yxu,
            std::size_t nx, std::size_t nu, std::size_t ny) {
    std::vector<double> v(nx * nu * ny);
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t u = 0; u < nu; ++u)
            for (std::size_t y = 0; y < ny; ++y)
                v[(x * nu + u) * ny + y] = px[x] * ux[x * nu + u] * yxu[(x * nu + u) * ny + y];
    return ProbVec({Alphabet::range("X", nx), Alphabet::range("U", nu), Alphabet::range("Y", ny)}, v);
}

CodingInstance bsc_cost_instance(double p, double D) {
    ProbVec in = make_pmf(AX, {1.0 - D, D});
    std::vector<double> cost = {0.0, 1.0};
    return make_channel_cost(in, testutil::bsc_kernel(AX, AY, p), RealFunc({AX}, cost), D, 0.0);
}

}  // namespace

TEST_CASE("counter hash and codebook scores") {
    CHECK(counter_hash(1, 2, 3) == counter_hash(1, 2, 3));
    CHECK(counter_hash(1, 2, 3) != counter_hash(1, 2, 4));
    CHECK(counter_hash(1, 2, 3) != counter_hash(1, 3, 2));
    Codebook a(7, 0, 4, 16), b(7, 0, 4, 16), c(7, 1, 4, 16);
    CHECK(a.index_count() == 64);
    CHECK(a.score(3, 5) == b.score(3, 5));
    CHECK(a.score(3, 5) != c.score(3, 5));
    // Exp(1): mean 1, P(T > 1) = e^-1
    const int N = 200000;
    Codebook big(11, 0, 1, N);
    double s = 0.0, tail = 0.0;
    for (int i = 0; i < N; ++i) {
        double t = big.score(0, static_cast<std::uint64_t>(i));
        CHECK(t > 0.0);
        s += t;
        tail += t > 1.0;
    }
    CHECK(std::fabs(s / N - 1.0) < 4.0 / std::sqrt(N));
    CHECK(std::fabs(tail / N - std::exp(-1.0)) < 4.0 * 0.49 / std::sqrt(N));
    CHECK(kind_of([] { Codebook(0, 0, 1 << 12, 1 << 13); }) == ErrorKind::EnumerationBound);
}

TEST_CASE("Poisson matching selection law") {
    Codebook one(3, 0, 1, 4);
    CHECK(pml_select(one, std::vector<std::pair<std::uint64_t, double>>{{2, 0.7}}).sequence == 2);
    CHECK(kind_of([&] { pml_select(one, std::vector<double>{0.5, -0.1, 0.0, 0.0}); }) == ErrorKind::InvalidInput);
    CHECK(kind_of([&] { pml_select(one, std::vector<double>{0.6, 0.6, 0.0, 0.0}); }) == ErrorKind::InvalidInput);
    CHECK(kind_of([&] { pml_select(one, std::vector<double>{0.0, 0.0, 0.0, 0.0}); }) == ErrorKind::InvalidInput);

    // the selected pair is distributed as (uniform message, sequence ∝ weight)
    const std::vector<double> w = {0.5, 0.3, 0.0, 0.2};
    const int N = 60000;
    std::vector<double> seq(4, 0.0), msg(3, 0.0);
    std::vector<double> fixed(4, 0.0);
    for (int t = 0; t < N; ++t) {
        Codebook cb(5, static_cast<std::uint64_t>(t), 3, 4);
        auto ch = pml_select(cb, w);
        seq[ch.sequence] += 1;
        msg[ch.index] += 1;
        auto f = pml_select(cb, w, 1);
        CHECK(f.index == 1);
        fixed[f.sequence] += 1;
    }
    CHECK(seq[2] == 0.0);
    for (std::size_t r = 0; r < 4; ++r) {
        double se = std::sqrt(w[r] * (1 - w[r]) / N) + 1e-12;
        CHECK(std::fabs(seq[r] / N - w[r]) < 4 * se);
        CHECK(std::fabs(fixed[r] / N - w[r]) < 4 * se);
    }
    for (double m : msg) CHECK(std::fabs(m / N - 1.0 / 3) < 4 * std::sqrt(2.0 / 9 / N));
}

TEST_CASE("Wilson interval") {
    auto a = wilson_interval(0, 100);
    CHECK(a.lo == 0.0);
    CHECK(a.hi == doctest::Approx(0.036995).epsilon(1e-4));
    auto b = wilson_interval(50, 100);
    CHECK(0.5 * (b.lo + b.hi) == doctest::Approx(0.5));
    CHECK(b.radius() == doctest::Approx(0.0942).epsilon(2e-3));
    auto c = wilson_interval(10, 10);
    CHECK(c.hi == 1.0);
}

TEST_CASE("PML lemma check") {
    std::mt19937_64 rng(4);
    const std::size_t nx = 3, nu = 3, ny = 2;
    auto px = testutil::random_simplex(rng, nx, 0.2);
    std::vector<double> ux, yxu;
    for (std::size_t x = 0; x < nx; ++x) {
        auto r = testutil::random_simplex(rng, nu, 0.2);
        ux.insert(ux.end(), r.begin(), r.end());
    }
    SUBCASE("decoder sees U") {
        std::vector<double> eq(nx * nu * nu, 0.0);
        for (std::size_t x = 0; x < nx; ++x)
            for (std::size_t u = 0; u < nu; ++u) eq[(x * nu + u) * nu + u] = 1.0;
        auto r = pml_bound_check(xuy(px, ux, eq, nx, nu, nu), 5000, 1);
        CHECK(r.mismatches == 0);
        CHECK(r.pass);
    }
    SUBCASE("Y independent of (X,U)") {
        std::vector<double> ind;
        for (std::size_t i = 0; i < nx * nu; ++i) ind.insert(ind.end(), {0.4, 0.6});
        auto joint = xuy(px, ux, ind, nx, nu, ny);
        auto r = pml_bound_check(joint, 40000, 2);
        std::vector<double> pu(nu, 0.0);
        for (std::size_t x = 0; x < nx; ++x)
            for (std::size_t u = 0; u < nu; ++u) pu[u] += px[x] * ux[x * nu + u];
        double oracle = 0.0;
        for (std::size_t x = 0; x < nx; ++x)
            for (std::size_t u = 0; u < nu; ++u) oracle += px[x] * ux[x * nu + u] * std::min(1.0, ux[x * nu + u] / pu[u]);
        CHECK(r.mean_bound == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(r.pass);
        // the empirical law of the tuple is the joint
        for (std::size_t i = 0; i < joint.size(); ++i) CHECK(std::fabs(r.joint_freq[i] - joint[i]) < 0.01);
    }
    SUBCASE("random channel") {
        for (std::size_t i = 0; i < nx * nu; ++i) {
            auto r = testutil::random_simplex(rng, ny, 0.05);
            yxu.insert(yxu.end(), r.begin(), r.end());
        }
        auto r = pml_bound_check(xuy(px, ux, yxu, nx, nu, ny), 40000, 3);
        CHECK(r.pass);
        CHECK(std::fabs(r.mc_bound - r.mean_bound) < 0.02);
        CHECK(r.empirical > 0.0);
    }
}

TEST_CASE("GCC counts and rounding") {
    ProbVec px = make_pmf(AX, {0.5, 0.5});
    CondKernel k = make_kernel(AX, AU, {{0.3, 0.7}, {0.5, 0.5}});
    std::vector<std::size_t> xs = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    auto c = gcc_counts(px, k, Zeta::zero(), xs);
    // row 0: 1.5 / 3.5, row 1: 2.5 / 2.5; ties go to the lower symbol
    CHECK(c[0] == std::vector<std::size_t>{2, 3});
    CHECK(c[1] == std::vector<std::size_t>{3, 2});

    // deterministic kernel
    CondKernel det = make_kernel(AX, AU, {{0.0, 1.0}, {1.0, 0.0}});
    auto u = gcc_sample(px, det, Zeta::zero(), xs, 9);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(u[i] == 1 - xs[i]);

    // perturbation: ζ(g)(x,u) = g(x)·(+a, -a) on each row
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 2);
    A(0, 0) = 0.3, A(1, 0) = -0.3, A(2, 1) = -0.2, A(3, 1) = 0.2;
    Zeta z = Zeta::affine(A, Eigen::VectorXd::Zero(4));
    std::vector<std::size_t> skew(40, 0);
    for (std::size_t i = 0; i < 10; ++i) skew[i] = 1;  // 30 zeros, 10 ones
    auto cz = gcc_counts(px, k, z, skew);
    // G = √40 (0.25, -0.25); row 0 gets 0.3 + 0.5/(√40·0.75)·0.3·√40·0.25 = 0.35
    CHECK(cz[0][0] + cz[0][1] == 30);
    CHECK(cz[0][0] == 11);  // 10.5 rounds to 11 by the tie rule
    CHECK(cz[1][0] == 6);   // 0.5 + 0.5/(√40·0.25)·(-0.2)(-√40·0.25)... = 0.6 of 10

    Eigen::MatrixXd big = 10.0 * A;
    CHECK(kind_of([&] { gcc_counts(px, k, Zeta::affine(big, Eigen::VectorXd::Zero(4)), skew); }) == ErrorKind::Infeasible);
    Eigen::MatrixXd off = A;
    off(0, 0) = 0.3, off(1, 0) = 0.3;  // rows no longer sum to zero
    CHECK(kind_of([&] { gcc_counts(px, k, Zeta::affine(off, Eigen::VectorXd::Zero(4)), skew); }) == ErrorKind::InvalidInput);
    // support of the kernel must dominate
    CHECK(kind_of([&] { gcc_counts(px, det, z, skew); }) == ErrorKind::InvalidInput);
}

TEST_CASE("GCC deviation is O(1/sqrt n)") {
    std::mt19937_64 rng(12);
    Alphabet X3 = Alphabet::range("X", 3), U3 = Alphabet::range("U", 3);
    ProbVec px = testutil::random_pmf(rng, X3, 0.2);
    CondKernel k = testutil::random_kernel(rng, X3, U3, 0.2);
    // tangent affine ζ: moves mass from u=0 to u=1 proportionally to g(x)
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(9, 3);
    for (int x = 0; x < 3; ++x) A(3 * x, x) = 0.05, A(3 * x + 1, x) = -0.05;
    for (const Zeta& z : {Zeta::zero(), Zeta::affine(A, Eigen::VectorXd::Zero(9))}) {
        const std::size_t n = 400;
        double worst = 0.0;
        std::discrete_distribution<std::size_t> dx(px.mass().begin(), px.mass().end());
        for (int t = 0; t < 1000; ++t) {
            std::vector<std::size_t> xs(n);
            for (auto& x : xs) x = dx(rng);
            auto us = gcc_sample(px, k, z, xs, static_cast<std::uint64_t>(t));
            worst = std::max(worst, gcc_deviation(px, k, z, xs, us));
        }
        CHECK(worst <= 8.0 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("GCC sample is exchangeable within each input class") {
    ProbVec px = make_pmf(AX, {0.5, 0.5});
    CondKernel k = make_kernel(AX, AU, {{0.25, 0.75}, {0.5, 0.5}});
    std::vector<std::size_t> xs = {0, 0, 0, 0, 1, 1, 1, 1};
    const int N = 20000;
    std::vector<double> first0(2, 0.0), last1(2, 0.0);
    for (int t = 0; t < N; ++t) {
        auto u = gcc_sample(px, k, Zeta::zero(), xs, static_cast<std::uint64_t>(t));
        first0[u[0]] += 1;
        last1[u[7]] += 1;
    }
    CHECK(std::fabs(first0[1] / N - 0.75) < 4 * std::sqrt(0.1875 / N));
    CHECK(std::fabs(last1[1] / N - 0.5) < 4 * std::sqrt(0.25 / N));
}

TEST_CASE("lossy source simulation") {
    ProbVec px = make_pmf(AX, {0.5, 0.5});
    Alphabet Z = Alphabet::range("Z", 2);
    CondKernel tc = testutil::bsc_kernel(AX, Z, 0.2);
    SimConfig cfg;
    cfg.scheme = Scheme::LossySC;
    cfg.n = 8;
    cfg.rate = 0.5;
    cfg.trials = 400;
    cfg.seed = 17;

    SUBCASE("D at the largest distortion never errs") {
        cfg.instance = make_lossy_sc(px, tc, testutil::hamming_distortion(AX, Z), 1.0, 1.0);
        auto r = simulate(cfg);
        CHECK(r.errors == 0);
        CHECK(r.messages == 16);
        CHECK(r.empirical_rate_used == doctest::Approx(0.5));
    }
    SUBCASE("bound dominates and runs are reproducible") {
        cfg.instance = make_lossy_sc(px, tc, testutil::hamming_distortion(AX, Z), 0.2, 2.0);
        cfg.trace = true;
        auto r = simulate(cfg);
        CHECK(r.error_rate() <= r.pml_bound + 4 * r.pml_bound_se + r.wilson.radius());
        auto again = simulate(cfg);
        cfg.parallel = false;
        auto serial = simulate(cfg);
        REQUIRE(r.log.size() == cfg.trials);
        for (std::size_t t = 0; t < r.log.size(); ++t) {
            CHECK(r.log[t].error == again.log[t].error);
            CHECK(r.log[t].distortion == serial.log[t].distortion);
            CHECK(r.log[t].bound == serial.log[t].bound);
            CHECK(r.log[t].log_p_dec <= 1e-12);
        }
        CHECK(r.errors == serial.errors);
    }
    SUBCASE("tail repair adds ceil(log2 n) symbols") {
        cfg.instance = make_lossy_sc(px, tc, testutil::hamming_distortion(AX, Z), 0.2, 2.0);
        cfg.delta_slack = false;
        cfg.tail_repair = true;
        auto r = simulate(cfg);
        CHECK(r.tail_symbols == 3);
        CHECK(r.empirical_rate_used == doctest::Approx(0.5 + 3.0 / 8));
    }
    SUBCASE("enumeration bound") {
        cfg.instance = make_lossy_sc(px, tc, testutil::hamming_distortion(AX, Z), 0.2, 2.0);
        cfg.n = 25;
        CHECK(kind_of([&] { simulate(cfg); }) == ErrorKind::EnumerationBound);
        cfg.n = 20;
        cfg.rate = 0.3;
        CHECK(kind_of([&] { simulate(cfg); }) == ErrorKind::EnumerationBound);
    }
    SUBCASE("scheme must match the instance") {
        cfg.instance = make_lossy_sc(px, tc, testutil::hamming_distortion(AX, Z), 0.2, 2.0);
        cfg.scheme = Scheme::WynerZiv;
        CHECK(kind_of([&] { simulate(cfg); }) == ErrorKind::InvalidInput);
    }
}

TEST_CASE("Wyner-Ziv simulation against its Poisson matching bound") {
    auto w = wz_binary_family(0.25, 0.2, 0.6);
    SimConfig cfg;
    cfg.scheme = Scheme::WynerZiv;
    cfg.instance = w.inst;
    cfg.n = 6;
    cfg.rate = 0.4;
    cfg.trials = 1500;
    cfg.seed = 3;
    auto r = simulate(cfg);
    CHECK(r.infeasible == 0);
    CHECK(r.codewords == 729);
    CHECK(r.error_rate() <= r.pml_bound + 4 * r.pml_bound_se + r.wilson.radius());
    // more rate, fewer errors
    cfg.rate = 0.9;
    auto hi = simulate(cfg);
    CHECK(hi.error_rate() <= r.error_rate() + 0.02);
}

TEST_CASE("channel coding simulation") {
    SimConfig cfg;
    cfg.scheme = Scheme::ChannelCost;
    cfg.instance = bsc_cost_instance(0.05, 0.5);
    cfg.n = 8;
    cfg.trials = 2000;
    cfg.seed = 21;
    cfg.trace = true;
    cfg.rate = 0.25;
    auto r = simulate(cfg);
    CHECK(r.messages == 4);
    CHECK(r.error_rate() <= r.pml_bound + 4 * r.pml_bound_se + r.wilson.radius());
    for (const auto& l : r.log) {
        CHECK(l.distortion <= 0.5 + 1.0 / 8 + 1e-12);
        if (!l.replaced) CHECK(l.log_p_enc <= 0.0);
    }
    // one message cannot be decoded wrongly
    cfg.rate = 0.05;
    CHECK(simulate(cfg).errors == 0);
}

TEST_CASE("Gelfand-Pinsker simulation runs under its bound") {
    Alphabet S = Alphabet::range("S", 2), U = Alphabet::range("U", 2), X = Alphabet::range("X", 2);
    ProbVec ps = make_pmf(S, {0.5, 0.5});
    CondKernel aux({S}, {U}, {0.8, 0.2, 0.2, 0.8});
    DetMap xmap{{S, U}, X, {0, 1, 1, 0}};
    // Y = X xor S xor noise
    std::vector<double> ch;
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t x = 0; x < 2; ++x) ch.insert(ch.end(), (s ^ x) ? std::initializer_list<double>{0.1, 0.9}
                                                                            : std::initializer_list<double>{0.9, 0.1});
    Alphabet Y = Alphabet::range("Y", 2);
    CondKernel channel({S, X}, {Y}, ch);
    std::vector<double> cost = {0.0, 1.0, 0.0, 1.0};
    SimConfig cfg;
    cfg.scheme = Scheme::GelfandPinsker;
    cfg.instance = make_gelfand_pinsker(ps, aux, xmap, channel, RealFunc({S, X}, cost), 0.3, 0.0);
    cfg.n = 6;
    cfg.rate = 0.2;
    cfg.trials = 1000;
    cfg.seed = 8;
    auto r = simulate(cfg);
    CHECK(r.messages == 2);
    CHECK(r.error_rate() <= r.pml_bound + 4 * r.pml_bound_se + r.wilson.radius());
}

TEST_CASE("type deviation diagnostics") {
    Alphabet X3 = Alphabet::range("X", 3);
    SUBCASE("point mass has no deviation") {
        auto rows = type_deviation_stats(make_pmf(X3, {1.0, 0.0, 0.0}), {10, 100}, 200, 1, {8, 5, true});
        for (const auto& r : rows) {
            CHECK(r.G.cwiseAbs().maxCoeff() == 0.0);
            CHECK(r.lp_estimate == 0.0);
        }
    }
    SUBCASE("Bernoulli lattice effect shrinks like 1/sqrt n") {
        ProbVec p = make_pmf(AX, {0.3, 0.7});
        auto rows = type_deviation_stats(p, {16, 256, 4096}, 4000, 2, {4, 10, false});
        CHECK(rows[0].G.rows() == 0);
        CHECK(rows[0].lp_estimate > rows[1].lp_estimate);
        CHECK(rows[1].lp_estimate > rows[2].lp_estimate);
        for (const auto& r : rows) {
            CHECK(r.scaled < 2.0);
            CHECK(r.bootstrap_radius > 0.0);
        }
    }
    SUBCASE("projections are close to normal at large n") {
        ProbVec p = make_pmf(X3, {0.2, 0.3, 0.5});
        auto rows = type_deviation_stats(p, {10000}, 3000, 5, {0, 0, true});
        std::vector<double> col(rows[0].G.rows());
        for (Eigen::Index i = 0; i < rows[0].G.rows(); ++i) col[static_cast<std::size_t>(i)] = rows[0].G(i, 2);
        auto ks = ks_normal(col, std::sqrt(0.25));
        CHECK(ks.p_value > 0.001);
        // and clearly not at the wrong scale
        CHECK(ks_normal(col, 1.0).p_value < 1e-6);
        // each row of G sums to zero
        for (Eigen::Index i = 0; i < rows[0].G.rows(); ++i) CHECK(std::fabs(rows[0].G.row(i).sum()) < 1e-9);
    }
    SUBCASE("Levy distance oracle") {
        // three equal atoms against a point mass at 0
        Eigen::MatrixXd G(3, 2);
        G << -1, 1, 0, 0, 1, -1;
        ProbVec pm = make_pmf(AX, {1.0, 0.0});  // covariance zero
        CHECK(lp_halfspace_estimate(pm, G, 0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-9));
    }
}

TEST_CASE("exchangeable self-information residual") {
    ProbVec half = make_pmf(AX, {0.5, 0.5});
    CHECK(self_info_residual(half, 1, 10, 0, ExchangeableSource::TypeClass).residual[0] == 0.0);
    for (double r : self_info_residual(half, 1, 50, 0, ExchangeableSource::TypeMixture).residual)
        CHECK(std::fabs(r) < 1e-12);
    // type class of a fair coin: log2 C(n, n/2) - n, by direct summation
    for (long n : {10L, 100L, 1000L}) {
        double lc = 0.0;
        for (long i = 1; i <= n / 2; ++i) lc += std::log2(static_cast<double>(n / 2 + i) / static_cast<double>(i));
        auto r = self_info_residual(half, n, 5, 0, ExchangeableSource::TypeClass);
        CHECK(r.residual[0] == doctest::Approx(lc - static_cast<double>(n)).epsilon(1e-10));
        CHECK(r.q95_ratio == doctest::Approx((static_cast<double>(n) - lc) / std::log2(static_cast<double>(n))));
        CHECK(r.q95_ratio < 1.0);
    }
    ProbVec p3 = make_pmf(Alphabet::range("X", 3), {0.2, 0.3, 0.5});
    for (long n : {10L, 1000L}) {
        auto iid = self_info_residual(p3, n, 200, 1, ExchangeableSource::IID);
        for (double r : iid.residual) CHECK(std::fabs(r) <= 3 * std::log2(n + 1.0));
        auto mix = self_info_residual(p3, n, 2000, 1, ExchangeableSource::TypeMixture);
        // a two-component mixture costs at most one bit over either component
        for (double r : mix.residual) CHECK(std::fabs(r) <= 3 * std::log2(n + 1.0) + 1.0);
    }
}
