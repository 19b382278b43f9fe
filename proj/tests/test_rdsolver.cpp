#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "secord/rdsolver.hpp"
#include "test_util.hpp"

using namespace secord;
using testutil::hb;

namespace {

Alphabet bx = Alphabet::range("X", 2), by = Alphabet::range("Y", 2);

double mi_binary_channel(double px1, double a, double b) {
    // a = Q(1|0), b = Q(0|1)
    double p0 = 1 - px1;
    double q1 = p0 * a + px1 * (1 - b);
    double j[2][2] = {{p0 * (1 - a), p0 * a}, {px1 * b, px1 * (1 - b)}};
    double px[2] = {p0, px1}, qy[2] = {1 - q1, q1}, s = 0.0;
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y)
            if (j[x][y] > 0) s += j[x][y] * std::log2(j[x][y] / (px[x] * qy[y]));
    return s;
}

}  // namespace

TEST_CASE("rate-distortion of the uniform binary source") {
    ProbVec px = make_pmf(bx, {0.5, 0.5});
    RealFunc d = testutil::hamming_distortion(bx, by);
    RDSolution s = blahut_arimoto_rd(px, d, 0.11);
    CHECK(s.converged);
    CHECK(std::fabs(s.rate - (1 - hb(0.11))) < 1e-8);
    CHECK(std::fabs(s.lambda - std::log2(0.89 / 0.11)) < 1e-4);
    CHECK_FALSE(s.kink);
    CHECK(s.achieved_D <= 0.11 + 1e-9);
    CHECK(s.gap < 1e-10);

    RDSolution z = blahut_arimoto_rd(px, d, 0.5);
    CHECK(z.rate == 0.0);
    CHECK(z.lambda == 0.0);
    CHECK_THROWS_AS(blahut_arimoto_rd(px, d, 0.6), Error);
    CHECK_THROWS_AS(blahut_arimoto_rd(px, d, 0.0), Error);
}

TEST_CASE("rate-distortion of a skewed binary source against a test-channel search") {
    ProbVec px = make_pmf(bx, {0.3, 0.7});
    RealFunc d = testutil::hamming_distortion(bx, by);
    const double D = 0.1;
    RDSolution s = blahut_arimoto_rd(px, d, D);
    // independent route: binary test channels on the active constraint 0.3a + 0.7b = D
    auto along = [&](double a) { return mi_binary_channel(0.7, a, (D - 0.3 * a) / 0.7); };
    // labels: P_X(0) = 0.3, so here px1 = 0.7 and a is the flip probability of symbol 0
    double a = testutil::golden_min(along, 0.0, D / 0.3);
    double oracle = along(a);
    CHECK(std::fabs(s.rate - oracle) < 1e-6);
    CHECK(std::fabs(s.rate - (hb(0.3) - hb(0.1))) < 1e-8);
    CHECK(std::fabs(s.lambda - std::log2(0.9 / 0.1)) < 1e-4);
}

TEST_CASE("R(D) is nonincreasing and convex") {
    std::mt19937_64 rng(11);
    Alphabet X = Alphabet::range("X", 3), Y = Alphabet::range("Y", 3);
    ProbVec px = testutil::random_pmf(rng, X, 0.2);
    std::vector<double> dv{0, 1, 2, 1, 0, 1, 3, 1, 0};
    RealFunc d({X, Y}, dv);
    double dmin = rd_min_distortion(px, d), dmax = rd_max_distortion(px, d);
    std::vector<double> r;
    const int N = 16;
    double h = (dmax - dmin) / N;
    for (int i = 1; i < N; ++i) r.push_back(blahut_arimoto_rd(px, d, dmin + i * h).rate);
    for (std::size_t i = 0; i + 1 < r.size(); ++i) CHECK(r[i + 1] <= r[i] + 1e-9);
    for (std::size_t i = 1; i + 1 < r.size(); ++i) CHECK(r[i - 1] - 2 * r[i] + r[i + 1] >= -1e-6);
}

TEST_CASE("tilted information") {
    RealFunc d = testutil::hamming_distortion(bx, by);
    {
        ProbVec px = make_pmf(bx, {0.5, 0.5});
        RDSolution s = blahut_arimoto_rd(px, d, 0.11);
        TiltedInfo t = tilted_information(s, px, d);
        CHECK(std::fabs(t.j[0] - t.j[1]) < 1e-9);
        CHECK(t.variance < 1e-15);
        CHECK(std::fabs(t.mean - s.rate) < 1e-8);
        CHECK(t.identity_residual < 1e-6);
    }
    {
        ProbVec px = make_pmf(bx, {0.3, 0.7});
        RDSolution s = blahut_arimoto_rd(px, d, 0.1);
        TiltedInfo t = tilted_information(s, px, d);
        // binary Hamming: j(x) = log 1/P_X(x) - h(D)
        CHECK(std::fabs(t.j[0] - (-std::log2(0.3) - hb(0.1))) < 1e-6);
        CHECK(std::fabs(t.j[1] - (-std::log2(0.7) - hb(0.1))) < 1e-6);
        double L = std::log2(0.7 / 0.3);
        CHECK(std::fabs(t.variance - 0.21 * L * L) < 1e-6);
        CHECK(std::fabs(t.mean - s.rate) < 1e-8);
        CHECK(t.identity_residual < 1e-6);
        CHECK(t.first_order_ok);
    }
}

TEST_CASE("Var[j] equals the variance of the conditional mean of ι + λd") {
    std::mt19937_64 rng(5);
    Alphabet X = Alphabet::range("X", 3), Y = Alphabet::range("Y", 4);
    for (int rep = 0; rep < 5; ++rep) {
        ProbVec px = testutil::random_pmf(rng, X, 0.1);
        RealFunc d = testutil::random_func(rng, {X, Y});
        d = map(d, [](double v) { return std::fabs(v); });
        for (std::size_t x = 0; x < 3; ++x) d[x * 4 + x] = 0.0;
        double dmin = rd_min_distortion(px, d), dmax = rd_max_distortion(px, d);
        double D = dmin + 0.4 * (dmax - dmin);
        RDSolution s = blahut_arimoto_rd(px, d, D);
        TiltedInfo t = tilted_information(s, px, d);
        ProbVec joint = semidirect(px, s.test_channel);
        RealFunc g = info_density(joint, {"X"}, {"Y"}) + s.lambda * d;
        double v = variance(px, cond_expect(joint, g, {"X"}));
        CHECK(std::fabs(v - t.variance) < 1e-8);
        CHECK(std::fabs(t.mean - s.rate) < 1e-7);
        CodingInstance in = make_lossy_sc(px, s.test_channel, d, D, s.lambda);
        CHECK(first_order_stationarity(in) < 1e-6);
    }
}

TEST_CASE("first-order stationarity detects perturbations") {
    ProbVec px = make_pmf(bx, {0.5, 0.5});
    RealFunc d = testutil::hamming_distortion(bx, by);
    RDSolution s = blahut_arimoto_rd(px, d, 0.11);
    CodingInstance in = make_lossy_sc(px, s.test_channel, d, 0.11, s.lambda);
    CHECK(first_order_stationarity(in) < 1e-6);
    CondKernel k = s.test_channel;
    std::vector<double> v = k.func().values();
    v[0] -= 0.01;
    v[1] += 0.01;
    CodingInstance bad = make_lossy_sc(px, CondKernel(k.from(), k.to(), v), d, 0.11, s.lambda);
    CHECK(first_order_stationarity(bad) > 1e-4);

    // channel coding at λ = 0: uniform input on a BSC is the unconstrained optimum
    CondKernel w = testutil::bsc_kernel(bx, by, 0.11);
    CodingInstance cc = make_channel_cost(px, w, RealFunc({bx}, {0, 0}), 1.0, 0.0);
    CHECK(first_order_stationarity(cc) < 1e-12);
    CodingInstance cc2 = make_channel_cost(make_pmf(bx, {0.4, 0.6}), w, RealFunc({bx}, {0, 0}), 1.0, 0.0);
    CHECK(first_order_stationarity(cc2) > 1e-4);
}

TEST_CASE("fold_map replaces the reconstruction by its inputs") {
    Alphabet U = Alphabet::range("U", 3), Z = Alphabet::range("Z", 2);
    DetMap z{{U, by}, Z, {0, 0, 1, 1, 0, 1}};
    RealFunc d = testutil::hamming_distortion(bx, Z);
    RealFunc f = fold_map(d, z);
    CHECK(factor_names(f.domain()) == std::vector<std::string>{"X", "U", "Y"});
    for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t u = 0; u < 3; ++u)
            for (std::size_t y = 0; y < 2; ++y) {
                std::size_t zz = u < 2 ? u : y;
                CHECK(f.at({x, u, y}) == (zz != x ? 1.0 : 0.0));
            }
    DetMap bad{{U, by}, Z, {0, 0, 1}};
    CHECK_THROWS_AS(fold_map(d, bad), Error);
}

TEST_CASE("binary Wyner-Ziv family") {
    auto w = wz_binary_family(0.2, 0.0, 1.0);
    CHECK(std::fabs(w.expected_d) < 1e-15);
    CHECK(std::fabs(w.objective - hb(0.2)) < 1e-12);
    auto w0 = wz_binary_family(0.3, 0.2, 0.0);
    CHECK(std::fabs(w0.expected_d - 0.3) < 1e-15);
    CHECK(std::fabs(w0.objective) < 1e-12);
    auto w1 = wz_binary_family(0.2, 0.05, 0.5);
    CHECK(std::fabs(w1.expected_d - 0.125) < 1e-15);
    CHECK(w1.joint_xyuz.domain().size() == 4);
    CHECK(std::fabs(expect(w1.joint_xyuz, RealFunc({bx, Alphabet::range("Z", 2)}, {0, 1, 1, 0})) - 0.125) < 1e-15);
    CHECK_THROWS_AS(wz_binary_family(0.6, 0.1, 0.5), Error);
    CHECK_THROWS_AS(wz_binary_family(0.2, 0.6, 0.5), Error);
    CHECK_THROWS_AS(wz_binary_family(0.2, 0.1, 1.5), Error);

    // the allocation-free evaluator agrees with the table algebra
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 50; ++i) {
        double p = 0.01 + 0.48 * u(rng), b = 0.5 * u(rng), g = u(rng), o, dd;
        auto f = wz_binary_family(p, b, g);
        wz_binary_eval(p, b, g, o, dd);
        CHECK(std::fabs(o - f.objective) < 1e-12);
        CHECK(std::fabs(dd - f.expected_d) < 1e-14);
        CHECK(std::fabs(dd - (g * b + (1 - g) * p)) < 1e-14);
    }
}

namespace {

// lower convex hull of (D, f(D)) on a uniform grid plus (p,0), evaluated by interpolation
double hull_envelope(double p, double D, int N = 100000) {
    std::vector<double> xs, ys;
    for (int i = 0; i < N; ++i) {
        double x = p * i / N;
        xs.push_back(x);
        ys.push_back(hb(p * (1 - x) + x * (1 - p)) - hb(x));
    }
    xs.push_back(p);
    ys.push_back(0.0);
    std::vector<std::size_t> h;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        while (h.size() >= 2) {
            std::size_t a = h[h.size() - 2], b = h.back();
            double cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if (cross <= 0) h.pop_back();
            else break;
        }
        h.push_back(i);
    }
    if (D >= p) return 0.0;
    for (std::size_t k = 0; k + 1 < h.size(); ++k) {
        double x0 = xs[h[k]], x1 = xs[h[k + 1]];
        if (D >= x0 && D <= x1) return ys[h[k]] + (ys[h[k + 1]] - ys[h[k]]) * (D - x0) / (x1 - x0);
    }
    return ys[0];
}

}  // namespace

TEST_CASE("Wyner-Ziv envelope formula") {
    CHECK(wz_rate_formula(0.25, 0.3) == 0.0);
    CHECK(wz_rate_formula(0.25, 0.25) == 0.0);
    CHECK(std::fabs(wz_rate_formula(0.25, 0.0) - hb(0.25)) < 1e-15);
    for (double p : {0.1, 0.25, 0.4})
        for (double D : {0.01, 0.05, 0.08, 0.12, 0.2, 0.3, 0.38}) {
            if (D >= p) continue;
            CHECK(std::fabs(wz_rate_formula(p, D) - hull_envelope(p, D)) < 1e-7);
        }
    CHECK(std::fabs(wz_rate_formula(0.25, 0.05) - hull_envelope(0.25, 0.05)) < 1e-8);
}

TEST_CASE("Wyner-Ziv family optimizer tracks the envelope") {
    const double p = 0.2;
    for (int i = 1; i <= 20; ++i) {
        double D = p * i / 21.0;
        auto o = wz_binary_optimize(p, D);
        double env = wz_rate_formula(p, D);
        CHECK(o.rate >= env - 2e-4);
        CHECK(std::fabs(o.rate - env) < 2e-4);
        double obj, dist;
        wz_binary_eval(p, o.beta, o.gamma, obj, dist);
        CHECK(dist <= D + 1e-12);
        CHECK(dist >= D - 1e-6);
        CHECK(o.lambda > 0.0);
    }
    auto near = wz_binary_optimize(0.1, 0.0999);
    CHECK(near.rate < 1e-3);
    CHECK(near.gamma < 0.01);
    auto low = wz_binary_optimize(0.1, 1e-5);
    CHECK(std::fabs(low.rate - hb(0.1)) < 2e-3);
    CHECK_THROWS_AS(wz_binary_optimize(0.2, 0.25), Error);
}

TEST_CASE("Wyner-Ziv optimizer: parallel and serial grids agree exactly") {
    WZOptOptions ser;
    ser.parallel = false;
    for (double D : {0.03, 0.11, 0.17}) {
        auto a = wz_binary_optimize(0.2, D), b = wz_binary_optimize(0.2, D, ser);
        CHECK(a.rate == b.rate);
        CHECK(a.beta == b.beta);
        CHECK(a.gamma == b.gamma);
        CHECK(a.lambda == b.lambda);
    }
}

TEST_CASE("Wyner-Ziv optimum is first-order stationary") {
    for (double D : {0.05, 0.15}) {
        auto o = wz_binary_optimize(0.2, D);
        auto w = wz_binary_family(0.2, o.beta, o.gamma, o.lambda);
        CHECK(first_order_stationarity(w.inst) < 1e-4);
        auto off = wz_binary_family(0.2, std::min(0.5, o.beta + 0.05), o.gamma, o.lambda);
        CHECK(first_order_stationarity(off.inst) > 1e-4);
    }
}

TEST_CASE("capacity with cost") {
    CondKernel w = testutil::bsc_kernel(bx, by, 0.11);
    auto c = capacity_cost(w, RealFunc({bx}, {0, 1}), 1.0);
    CHECK(std::fabs(c.capacity - (1 - hb(0.11))) < 1e-8);
    CHECK_FALSE(c.cost_binding);

    // Z channel: 1 -> 0 with probability 0.3
    CondKernel zc = make_kernel(bx, by, {{1, 0}, {0.3, 0.7}});
    auto cz = capacity_cost(zc, RealFunc({bx}, {0, 0}), 1.0);
    double best = 0.0;
    for (int i = 0; i <= 1000000; ++i) {
        double a = i * 1e-6;
        double q1 = 0.7 * a, v = hb(q1) - a * hb(0.7);
        best = std::max(best, v);
    }
    CHECK(std::fabs(cz.capacity - best) < 1e-6);

    // cost binding on the expensive input: C(D) = H(D * 0.89 + (1-D) * 0.11) - H(0.11) for D ≤ 1/2
    std::vector<double> cs;
    for (double D : {0.02, 0.1, 0.2, 0.3, 0.4, 0.5}) {
        auto r = capacity_cost(w, RealFunc({bx}, {0, 1}), D);
        double q = D * 0.89 + (1 - D) * 0.11;
        CHECK(std::fabs(r.capacity - (hb(q) - hb(0.11))) < 1e-8);
        CHECK(r.gap < 1e-9);
        cs.push_back(r.capacity);
    }
    for (std::size_t i = 0; i + 1 < cs.size(); ++i) CHECK(cs[i + 1] >= cs[i] - 1e-12);
    auto tiny = capacity_cost(w, RealFunc({bx}, {0, 1}), 1e-6);
    CHECK(tiny.capacity < 1e-4);
    CHECK_THROWS_AS(capacity_cost(w, RealFunc({bx}, {0, 1}), 0.0), Error);
}

TEST_CASE("capacity-cost is concave in the cost level") {
    Alphabet X = Alphabet::range("X", 3), Y = Alphabet::range("Y", 3);
    std::mt19937_64 rng(9);
    CondKernel w = testutil::random_kernel(rng, X, Y, 0.05);
    RealFunc cost({X}, {0.0, 1.0, 2.0});
    std::vector<double> cs;
    for (int i = 1; i <= 10; ++i) cs.push_back(capacity_cost(w, cost, 0.1 * i).capacity);
    for (std::size_t i = 0; i + 1 < cs.size(); ++i) CHECK(cs[i + 1] >= cs[i] - 1e-10);
    for (std::size_t i = 1; i + 1 < cs.size(); ++i) CHECK(cs[i - 1] - 2 * cs[i] + cs[i + 1] <= 1e-7);
}

TEST_CASE("instance builders") {
    Alphabet S = Alphabet::range("S", 2), U = Alphabet::range("U", 2), Xc = Alphabet::range("X", 2);
    ProbVec ps = make_pmf(S, {0.6, 0.4});
    CondKernel aux = make_kernel(S, U, {{0.8, 0.2}, {0.3, 0.7}});
    DetMap xmap{{S, U}, Xc, {0, 1, 1, 0}};
    CondKernel ch({S, Xc}, {by}, {0.9, 0.1, 0.2, 0.8, 0.85, 0.15, 0.1, 0.9});
    RealFunc cost({S, Xc}, {0, 1, 0, 1});
    CodingInstance gp = make_gelfand_pinsker(ps, aux, xmap, ch, cost, 0.5, 0.3);
    CHECK(factor_names(gp.joint.domain()) == std::vector<std::string>{"S", "U", "Y"});
    // P(S=1,U=0,Y=1) = 0.4*0.3*W(1|s=1,x=1) = 0.12*0.9
    CHECK(std::fabs(gp.joint.func().at({1, 0, 1}) - 0.12 * 0.9) < 1e-15);
    CHECK(std::fabs(gp.d[0].at({1, 0, 0}) - 1.0) < 1e-15);
    CHECK(std::isfinite(first_order_stationarity(gp)));

    Alphabet U1 = Alphabet::range("U1", 2), U2 = Alphabet::range("U2", 2), Z1 = Alphabet::range("Z1", 2),
             Z2 = Alphabet::range("Z2", 2);
    ProbVec px = make_pmf(bx, {0.5, 0.5});
    CondKernel a12({bx}, {U1, U2}, {0.6, 0.2, 0.1, 0.1, 0.1, 0.1, 0.2, 0.6});
    DetMap z1{{U1}, Z1, {0, 1}};
    std::vector<std::size_t> im;
    for (std::size_t u1 = 0; u1 < 2; ++u1)
        for (std::size_t u2 = 0; u2 < 2; ++u2)
            for (std::size_t y = 0; y < 2; ++y) im.push_back(u2);
    DetMap z2{{U1, U2, by}, Z2, im};
    CodingInstance h = make_heegard_berger(px, testutil::bsc_kernel(bx, by, 0.1), a12, z1, z2,
                                           testutil::hamming_distortion(bx, Z1), testutil::hamming_distortion(bx, Z2),
                                           {0.3, 0.2}, {1.0, 1.0});
    double r = expect(h.joint, rate_density(h));
    double want = mutual_information(h.joint, {"U1"}, {"X"}) + mutual_information(h.joint, {"U2"}, {"X"}, {"U1", "Y"});
    CHECK(std::fabs(r - want) < 1e-12);
    CHECK_THROWS_AS(make_heegard_berger(px, testutil::bsc_kernel(bx, by, 0.1), a12, z1, z2,
                                        testutil::hamming_distortion(bx, Z1), testutil::hamming_distortion(bx, Z2),
                                        {0.3}, {1.0, 1.0}),
                    Error);
    CHECK(parse_variant("HeegardBerger") == Variant::HeegardBerger);
    CHECK_THROWS_AS(parse_variant("nope"), Error);
}
