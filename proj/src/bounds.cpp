#include "secord/bounds.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>

namespace secord {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kZeroVar = 1e-15;

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

double var_given(const ProbVec& P, const RealFunc& f, const std::vector<std::string>& given) {
    if (given.empty()) return variance(P, f);
    return variance(P, cond_expect(P, f, given));
}

void require_psd(const Eigen::MatrixXd& s) {
    require(s.rows() == s.cols(), ErrorKind::Shape, "covariance must be square");
    for (int i = 0; i < s.size(); ++i) require(std::isfinite(s.data()[i]), ErrorKind::InvalidInput, "non-finite covariance");
    double scale = std::max(1.0, s.diagonal().cwiseAbs().maxCoeff());
    require((s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, ErrorKind::InvalidInput,
            "covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    require(es.eigenvalues().minCoeff() >= -1e-10 * scale, ErrorKind::InvalidInput, "covariance is not PSD");
}

double sq(double x) { return x * x; }
double sqrt0(double v) { return std::sqrt(std::max(v, 0.0)); }

}  // namespace

// ============================================================================
// Moments
// ============================================================================

SecondOrderTerms wz_second_order_terms(const CodingInstance& inst) {
    validate_instance(inst);
    const ProbVec& P = inst.joint;
    const std::size_t k = inst.d.size();
    require(k >= 1 && inst.lambda.size() == k, ErrorKind::Shape, "instance needs one λ per distortion");

    SecondOrderTerms t;
    t.variant = inst.variant;
    t.lambda = inst.lambda;
    for (double l : inst.lambda) {
        if (!std::isfinite(l)) t.notes.push_back("lambda is not finite");
        else if (l < 0.0) t.notes.push_back("lambda is negative");
        else if (l == 0.0 && inst.variant != Variant::ChannelCost && inst.variant != Variant::GelfandPinsker)
            t.notes.push_back("lambda is zero");
    }

    RealFunc iota = rate_density(inst);
    RealFunc g = iota;
    for (std::size_t i = 0; i < k; ++i) g = g + inst.lambda[i] * inst.d[i];
    t.var_A = inst.enc.empty() ? 0.0 : var_given(P, g, inst.enc);

    const auto ea = concat(inst.enc, inst.aux);
    std::vector<RealFunc> f{iota};
    f.insert(f.end(), inst.d.begin(), inst.d.end());
    t.sigma_JD.resize(k + 1, k + 1);
    for (std::size_t i = 0; i <= k; ++i)
        for (std::size_t j = i; j <= k; ++j)
            t.sigma_JD(i, j) = t.sigma_JD(j, i) = expected_cond_cov(P, f[i], f[j], ea);
    for (std::size_t i = 0; i <= k; ++i) t.sigma_JD(i, i) = std::max(0.0, t.sigma_JD(i, i));

    std::vector<RealFunc> h;
    for (const auto& d : inst.d) h.push_back(cond_expect(P, d, ea));
    t.cond2.resize(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < k; ++j)
            t.cond2(i, j) = t.cond2(j, i) =
                inst.enc.empty() ? covariance(P, h[i], h[j]) : expected_cond_cov(P, h[i], h[j], inst.enc);
    t.cond2_min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(t.cond2).eigenvalues().minCoeff();
    t.cond2_ok = t.cond2_min_eig > 1e-10;
    if (!t.cond2_ok) t.notes.push_back("E[Var[E[d|enc,aux]|enc]] is not positive definite");

    if (inst.variant == Variant::HeegardBerger) {
        auto c = concat({inst.aux[0]}, inst.side);
        if (mutual_information(P, {inst.aux[0]}, inst.enc) <= 1e-10) t.notes.push_back("I(U1;X) is zero");
        if (mutual_information(P, {inst.aux[1]}, inst.enc, c) <= 1e-10) t.notes.push_back("I(U2;X|U1,Y) is zero");
    }
    t.stationarity = first_order_stationarity(inst);
    if (t.stationarity > 1e-6) t.notes.push_back("instance is not first-order stationary");
    return t;
}

LSCDispersion lsc_dispersion(const ProbVec& px, const RealFunc& d, double D) {
    require(px.domain().size() == 1 && d.domain().size() == 2, ErrorKind::Shape, "lossy source coding needs d on (X,Y)");
    const std::size_t nx = px.size(), ny = d.domain()[1].size();
    require(d.domain()[0].name == px.domain()[0].name, ErrorKind::Shape, "d must lead with the source factor");
    bool x_only = true;
    for (std::size_t x = 0; x < nx && x_only; ++x)
        for (std::size_t y = 1; y < ny; ++y)
            if (d[x * ny + y] != d[x * ny]) {
                x_only = false;
                break;
            }
    LSCDispersion out;
    if (x_only) {
        // no communication is needed, and none helps
        double Ed = 0.0;
        for (std::size_t x = 0; x < nx; ++x) Ed += px[x] * d[x * ny];
        require(D >= Ed - 1e-12, ErrorKind::Domain, "distortion level below the unavoidable distortion");
        out.degenerate = true;
        out.solution.D = D;
        out.solution.achieved_D = Ed;
        out.solution.converged = true;
        return out;
    }
    out.solution = blahut_arimoto_rd(px, d, D);
    TiltedInfo ti = tilted_information(out.solution, px, d);
    out.V = ti.variance;
    out.rate = out.solution.rate;
    out.lambda = out.solution.lambda;
    return out;
}

CCDispersion cc_dispersion(const CondKernel& channel, const RealFunc& cost, double D, double epsilon) {
    require(epsilon > 0.0 && epsilon < 1.0, ErrorKind::Domain, "ε must lie in (0,1)");
    CapacityCost cc = capacity_cost(channel, cost, D);
    const std::size_t nx = channel.rows(), ny = channel.cols();
    RealFunc c = broadcast(cost, channel.from());
    const auto& q = cc.output.mass();

    std::vector<double> dv(nx, 0.0), var(nx, 0.0);
    for (std::size_t x = 0; x < nx; ++x) {
        double m = 0.0, m2 = 0.0;
        for (std::size_t y = 0; y < ny; ++y) {
            double w = channel(x, y);
            if (w == 0.0) continue;
            double i = std::log2(w / q[y]);
            m += w * i;
            m2 += w * i * i;
        }
        dv[x] = m - cc.lambda * c[x];
        var[x] = std::max(0.0, m2 - m * m);
    }
    auto V_of = [&](const std::vector<double>& p) {
        double v = 0.0;
        for (std::size_t x = 0; x < nx; ++x) v += p[x] * var[x];
        return v;
    };

    CCDispersion out;
    out.capacity = cc.capacity;
    out.lambda = cc.lambda;
    out.input = cc.input;
    out.V = V_of(cc.input.mass());

    // Every capacity-achieving input induces the same output law and puts its
    // mass where dv is maximal, so V is linear over a polytope; its extreme
    // points are enumerated.
    double top = *std::max_element(dv.begin(), dv.end());
    std::vector<std::size_t> S;
    for (std::size_t x = 0; x < nx; ++x)
        if (dv[x] >= top - 1e-9) S.push_back(x);
    if (S.size() <= 1 || S.size() > 16) return out;
    const bool binding = cc.cost_binding && cc.lambda > 1e-12;
    const std::size_t m = ny + (binding ? 1 : 0);
    Eigen::MatrixXd A(m, S.size());
    Eigen::VectorXd b(m);
    for (std::size_t j = 0; j < S.size(); ++j) {
        for (std::size_t y = 0; y < ny; ++y) A(y, j) = channel(S[j], y);
        if (binding) A(ny, j) = c[S[j]];
    }
    for (std::size_t y = 0; y < ny; ++y) b(y) = q[y];
    if (binding) b(ny) = D;

    const bool want_small = epsilon <= 0.5;
    std::vector<double> best = cc.input.mass();
    double bestV = out.V;
    std::size_t vertices = 0;
    const std::size_t ns = S.size();
    for (std::uint32_t mask = 1; mask < (1u << ns); ++mask) {
        std::vector<std::size_t> cols;
        for (std::size_t j = 0; j < ns; ++j)
            if (mask >> j & 1u) cols.push_back(j);
        if (cols.size() > m) continue;
        Eigen::MatrixXd Ab(m, cols.size());
        for (std::size_t j = 0; j < cols.size(); ++j) Ab.col(j) = A.col(cols[j]);
        auto dec = Ab.colPivHouseholderQr();
        if (dec.rank() < static_cast<Eigen::Index>(cols.size())) continue;
        Eigen::VectorXd sol = dec.solve(b);
        if ((Ab * sol - b).cwiseAbs().maxCoeff() > 1e-9 || sol.minCoeff() < -1e-12) continue;
        std::vector<double> p(nx, 0.0);
        for (std::size_t j = 0; j < cols.size(); ++j) p[S[cols[j]]] = std::max(0.0, sol(j));
        ++vertices;
        double v = V_of(p);
        if (want_small ? v < bestV - 1e-14 : v > bestV + 1e-14) {
            bestV = v;
            best = p;
        }
    }
    out.optimal_vertices = vertices;
    out.V = bestV;
    out.input = ProbVec(cc.input.domain(), best, true);
    return out;
}

GPDispersion gp_dispersion(const CodingInstance& inst) {
    require(inst.variant == Variant::GelfandPinsker, ErrorKind::InvalidInput, "not a Gelfand-Pinsker instance");
    SecondOrderTerms t = wz_second_order_terms(inst);
    GPDispersion g;
    g.var_A = t.var_A;
    g.var_J = t.sigma_JD(0, 0);
    g.V = g.var_A + g.var_J;
    g.cost_cond_var = expected_cond_var(inst.joint, inst.d[0], inst.enc);
    g.cost_ok = g.cost_cond_var > 1e-10;
    return g;
}

VGCC v_gcc(const SecondOrderTerms& t) {
    require(t.k() == 1, ErrorKind::Unsupported, "V_GCC is defined for a single distortion");
    VGCC v;
    v.var_A = t.var_A;
    v.sigma_J = sqrt0(t.sigma_JD(0, 0));
    v.sigma_D = sqrt0(t.sigma_JD(1, 1));
    v.V = v.var_A + sq(v.sigma_J + t.lambda[0] * v.sigma_D);
    v.half_epsilon = v.sigma_D > 1e-12;
    return v;
}

VGCC v_gcc(const CodingInstance& inst) { return v_gcc(wz_second_order_terms(inst)); }

// ============================================================================
// P_e*
// ============================================================================

PeStar pe_star(double alpha, double lambda, const Eigen::MatrixXd& sigma, const PeStarOptions& opt) {
    require(sigma.rows() == 2 && sigma.cols() == 2, ErrorKind::Shape, "scalar P_e* needs a 2x2 covariance");
    require_psd(sigma);
    require(!std::isnan(alpha), ErrorKind::InvalidInput, "α is NaN");
    require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::InvalidInput, "λ must be finite and nonnegative");
    PeStar r;
    if (alpha == kInf) return {0.0, {0.0}, 0.0};
    if (alpha == -kInf) return {1.0, {0.0}, 0.0};
    const double vJ = sigma(0, 0), vD = sigma(1, 1);
    const double sJ = sqrt0(vJ), sD = sqrt0(vD);
    auto q_or_step = [](double a, double s) { return s > 0.0 ? normal_q(a / s) : (a >= 0.0 ? 0.0 : 1.0); };

    if (vD <= kZeroVar) return {q_or_step(alpha, sJ), {0.0}, 0.0};
    if (lambda == 0.0) return {q_or_step(alpha, sJ), {kInf}, 0.0};
    if (vJ <= kZeroVar) return {normal_q(alpha / (lambda * sD)), {alpha / lambda}, 0.0};

    const double rho = std::clamp(sigma(0, 1) / (sJ * sD), -1.0, 1.0);
    auto P = [&](double t) {
        double a = t / sD, b = (alpha - lambda * t) / sJ;
        double v = normal_q(a) + normal_q(b) - bvn_cdf(-a, -b, rho);
        return std::clamp(v, 0.0, 1.0);
    };
    const double half = 6.0 * sD + std::fabs(alpha) / lambda;
    const int n = std::max(opt.grid, 3);
    const double h = 2.0 * half / (n - 1);
    int bi = 0;
    double bv = kInf;
    for (int i = 0; i < n; ++i) {
        double v = P(-half + i * h);
        if (v < bv) {
            bv = v;
            bi = i;
        }
    }
    double lo = -half + std::max(bi - 1, 0) * h, hi = -half + std::min(bi + 1, n - 1) * h;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
    double fc = P(c), fd = P(d);
    while (hi - lo > opt.golden_tol * std::max(1.0, half)) {
        // ties keep the left part
        if (fc <= fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = P(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = P(d);
        }
    }
    double tm = 0.5 * (lo + hi), fm = P(tm);
    double tg = -half + bi * h;
    if (fm < bv || (fm == bv && tm < tg)) {
        r.prob = fm;
        r.t = {tm};
    } else {
        r.prob = bv;
        r.t = {tg};
    }
    return r;
}

namespace {

OrthantResult orthant(const Eigen::MatrixXd& cov, const std::vector<double>& upper, const OrthantOptions& o) {
    if (upper.size() <= 3) return trivariate_orthant(cov, upper);
    return gaussian_orthant(cov, upper, o);
}

struct NMContext {
    const Eigen::MatrixXd* cov;
    const Eigen::VectorXd* a;
    const Eigen::MatrixXd* B;
    const OrthantOptions* o;
};

double nm_objective(const gsl_vector* x, void* params) {
    auto* c = static_cast<NMContext*>(params);
    Eigen::VectorXd s(x->size);
    for (std::size_t i = 0; i < x->size; ++i) s(i) = gsl_vector_get(x, i);
    Eigen::VectorXd u = *c->a + *c->B * s;
    std::vector<double> up(u.data(), u.data() + u.size());
    return 1.0 - orthant(*c->cov, up, *c->o).prob;
}

// min over s of 1 - P(Z <= a + B s), Z ~ N(0, cov)
PeStar min_complement(Eigen::MatrixXd cov, Eigen::VectorXd a, Eigen::MatrixXd B, std::vector<double> scale,
                      const PeStarOptions& opt) {
    const int m = static_cast<int>(B.cols());
    std::vector<double> s_full(m, 0.0);
    std::vector<bool> pinned(m, false);
    std::vector<int> coords;
    // a constant coordinate whose threshold is a single parameter that only
    // tightens the other events: the parameter sits at the constant
    for (int i = 0; i < cov.rows(); ++i) {
        bool drop = false;
        if (cov(i, i) <= kZeroVar) {
            int j = -1, nz = 0;
            for (int c = 0; c < m; ++c)
                if (B(i, c) != 0.0) {
                    ++nz;
                    j = c;
                }
            if (nz == 1 && B(i, j) == 1.0 && !pinned[j]) {
                bool ok = true;
                for (int r = 0; r < cov.rows(); ++r)
                    if (r != i && B(r, j) > 0.0) ok = false;
                if (ok) {
                    pinned[j] = true;
                    s_full[j] = -a(i);
                    drop = true;
                }
            }
        }
        if (!drop) coords.push_back(i);
    }
    std::vector<int> freep;
    for (int c = 0; c < m; ++c)
        if (!pinned[c]) freep.push_back(c);
    const int nc = static_cast<int>(coords.size()), nf = static_cast<int>(freep.size());
    Eigen::MatrixXd C(nc, nc), Bf(nc, nf);
    Eigen::VectorXd af(nc);
    for (int i = 0; i < nc; ++i) {
        for (int j = 0; j < nc; ++j) C(i, j) = cov(coords[i], coords[j]);
        af(i) = a(coords[i]);
        for (int c = 0; c < m; ++c)
            if (pinned[c]) af(i) += B(coords[i], c) * s_full[c];
        for (int j = 0; j < nf; ++j) Bf(i, j) = B(coords[i], freep[j]);
    }

    PeStar r;
    r.t = s_full;
    if (nf == 0 || nc == 0) {
        std::vector<double> up(af.data(), af.data() + af.size());
        auto o = nc == 0 ? OrthantResult{1.0, 0.0} : orthant(C, up, opt.final);
        r.prob = 1.0 - o.prob;
        r.radius = o.radius;
        return r;
    }
    // two coordinates, one parameter entering one of them with unit weight
    // and the other with nonpositive weight: this is the scalar form
    if (nf == 1 && nc == 2) {
        for (int dcoord = 0; dcoord < 2; ++dcoord) {
            int jc = 1 - dcoord;
            if (Bf(dcoord, 0) == 1.0 && Bf(jc, 0) <= 0.0) {
                double lam = -Bf(jc, 0);
                double alpha = af(jc) + lam * af(dcoord);
                Eigen::MatrixXd s2(2, 2);
                s2 << C(jc, jc), C(jc, dcoord), C(dcoord, jc), C(dcoord, dcoord);
                PeStar p = pe_star(alpha, lam, s2, opt);
                r.prob = p.prob;
                r.t[freep[0]] = p.t[0] - af(dcoord);
                return r;
            }
        }
    }

    NMContext ctx{&C, &af, &Bf, &opt.search};
    gsl_multimin_function fn{nm_objective, static_cast<std::size_t>(nf), &ctx};
    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> mz(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, nf), gsl_multimin_fminimizer_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(nf), gsl_vector_free),
        step(gsl_vector_alloc(nf), gsl_vector_free);
    std::vector<double> sc(nf);
    for (int j = 0; j < nf; ++j) {
        double s = scale.empty() ? 1.0 : scale[freep[j]];
        sc[j] = s > 0.0 ? s : 1.0;
        gsl_vector_set(step.get(), j, sc[j]);
    }
    // seeds: origin, ±2 scale along each axis, then sign patterns
    std::vector<std::vector<double>> seeds{std::vector<double>(nf, 0.0)};
    for (int j = 0; j < nf; ++j)
        for (double sgn : {1.0, -1.0}) {
            std::vector<double> s(nf, 0.0);
            s[j] = 2.0 * sgn * sc[j];
            seeds.push_back(s);
        }
    for (std::uint32_t pat = 0; pat < (1u << nf) && seeds.size() < static_cast<std::size_t>(opt.nm_seeds); ++pat) {
        std::vector<double> s(nf);
        for (int j = 0; j < nf; ++j) s[j] = ((pat >> j & 1u) ? -2.0 : 2.0) * sc[j];
        seeds.push_back(s);
    }
    if (seeds.size() > static_cast<std::size_t>(opt.nm_seeds)) seeds.resize(opt.nm_seeds);

    double smax = *std::max_element(sc.begin(), sc.end());
    double best = kInf;
    std::vector<double> bs(nf, 0.0);
    gsl_error_handler_t* old = gsl_set_error_handler_off();
    for (const auto& seed : seeds) {
        for (int j = 0; j < nf; ++j) gsl_vector_set(x.get(), j, seed[j]);
        gsl_multimin_fminimizer_set(mz.get(), &fn, x.get(), step.get());
        for (int it = 0; it < opt.nm_max_iter; ++it) {
            if (gsl_multimin_fminimizer_iterate(mz.get()) != GSL_SUCCESS) break;
            if (gsl_multimin_fminimizer_size(mz.get()) < 1e-7 * smax) break;
        }
        double v = mz->fval;
        if (v < best) {
            best = v;
            for (int j = 0; j < nf; ++j) bs[j] = gsl_vector_get(mz->x, j);
        }
    }
    gsl_set_error_handler(old);

    Eigen::VectorXd s(nf);
    for (int j = 0; j < nf; ++j) s(j) = bs[j];
    Eigen::VectorXd u = af + Bf * s;
    auto o = orthant(C, std::vector<double>(u.data(), u.data() + u.size()), opt.final);
    r.prob = std::clamp(1.0 - o.prob, 0.0, 1.0);
    r.radius = o.radius;
    for (int j = 0; j < nf; ++j) r.t[freep[j]] = bs[j];
    return r;
}

}  // namespace

PeStar pe_star(double alpha, const std::vector<double>& lambda, const Eigen::MatrixXd& sigma, const PeStarOptions& opt) {
    const std::size_t k = lambda.size();
    require(k >= 1 && static_cast<std::size_t>(sigma.rows()) == k + 1, ErrorKind::Shape,
            "P_e* covariance must cover J and every distortion");
    if (k == 1) return pe_star(alpha, lambda[0], sigma, opt);
    require(k <= 3, ErrorKind::Unsupported, "at most three distortion functions");
    require_psd(sigma);
    require(!std::isnan(alpha), ErrorKind::InvalidInput, "α is NaN");
    for (double l : lambda) require(l >= 0.0 && std::isfinite(l), ErrorKind::InvalidInput, "λ must be finite and nonnegative");
    if (alpha == kInf) return {0.0, std::vector<double>(k, 0.0), 0.0};
    if (alpha == -kInf) return {1.0, std::vector<double>(k, 0.0), 0.0};
    Eigen::VectorXd a = Eigen::VectorXd::Zero(k + 1);
    a(0) = alpha;
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(k + 1, k);
    std::vector<double> scale(k);
    for (std::size_t i = 0; i < k; ++i) {
        B(0, i) = -lambda[i];
        B(i + 1, i) = 1.0;
        scale[i] = sqrt0(sigma(i + 1, i + 1));
    }
    return min_complement(sigma, a, B, scale, opt);
}

PeStar three_event_bound(double W, double lambda, const Eigen::Matrix3d& cov, const PeStarOptions& opt) {
    require_psd(cov);
    require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::InvalidInput, "λ must be finite and nonnegative");
    Eigen::VectorXd a(3);
    a << W, 0.0, 0.0;
    Eigen::MatrixXd B(3, 2);  // parameters (t, τ)
    B << -lambda, -1.0, 0.0, 1.0, 1.0, 0.0;
    return min_complement(cov, a, B, {sqrt0(cov(2, 2)), sqrt0(cov(1, 1))}, opt);
}

// ============================================================================
// Gaussian mixture over A and rate inversion
// ============================================================================

namespace {

struct HermiteRule {
    std::vector<double> x, w;
};

HermiteRule hermite(int n) {
    // weight exp(-x^2/2); dividing by √(2π) gives the standard normal
    std::unique_ptr<gsl_integration_fixed_workspace, decltype(&gsl_integration_fixed_free)> ws(
        gsl_integration_fixed_alloc(gsl_integration_fixed_hermite, n, 0.0, 0.5, 0.0, 0.0), gsl_integration_fixed_free);
    HermiteRule r;
    const double* xs = gsl_integration_fixed_nodes(ws.get());
    const double* wt = gsl_integration_fixed_weights(ws.get());
    for (int i = 0; i < n; ++i) {
        r.x.push_back(xs[i]);
        r.w.push_back(wt[i] / std::sqrt(2.0 * M_PI));
    }
    return r;
}

double pe_alpha(double alpha, const SecondOrderTerms& t, const PeStarOptions& o) {
    if (t.k() == 1) return pe_star(alpha, t.lambda[0], t.sigma_JD, o).prob;
    return pe_star(alpha, t.lambda, t.sigma_JD, o).prob;
}

}  // namespace

ExpectedPe expected_pe(double W, const SecondOrderTerms& t, const ExpectedPeOptions& opt) {
    require(t.sigma_JD.rows() == static_cast<Eigen::Index>(t.k() + 1), ErrorKind::Shape, "terms are inconsistent");
    ExpectedPe r;
    const double sA = sqrt0(t.var_A);
    bool all_zero = t.sigma_JD.cwiseAbs().maxCoeff() <= kZeroVar;
    bool d_zero = true;
    for (std::size_t i = 1; i <= t.k(); ++i) d_zero = d_zero && t.sigma_JD(i, i) <= kZeroVar;
    auto step_q = [&](double v) { return v > kZeroVar ? normal_q(W / std::sqrt(v)) : (W >= 0.0 ? 0.0 : 1.0); };
    if (all_zero) {
        r.value = step_q(t.var_A);
        r.method = "closed";
        return r;
    }
    if (d_zero) {
        r.value = step_q(t.var_A + t.sigma_JD(0, 0));
        r.method = "closed";
        return r;
    }
    if (sA <= std::sqrt(kZeroVar)) {
        r.value = pe_alpha(W, t, opt.pe);
        r.method = "pe_star";
        return r;
    }
    auto rule_value = [&](int n) {
        HermiteRule h = hermite(n);
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += h.w[i] * pe_alpha(W - sA * h.x[i], t, opt.pe);
        return s;
    };
    double v1 = rule_value(opt.nodes), v2 = rule_value(opt.nodes / 2);
    r.value = std::clamp(v1, 0.0, 1.0);
    r.radius = std::fabs(v1 - v2);
    r.method = "gauss-hermite";
    if (r.radius <= opt.fallback_radius || t.k() > 1) return r;

    // P_e* has kinks in α for some instances; adaptive quadrature handles them
    std::function<double(double)> f = [&](double z) {
        return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI) * pe_alpha(W - sA * z, t, opt.pe);
    };
    gsl_function gf;
    gf.function = [](double z, void* p) { return (*static_cast<std::function<double(double)>*>(p))(z); };
    gf.params = &f;
    std::unique_ptr<gsl_integration_workspace, decltype(&gsl_integration_workspace_free)> ws(
        gsl_integration_workspace_alloc(1000), gsl_integration_workspace_free);
    double val = 0.0, err = 0.0;
    gsl_error_handler_t* old = gsl_set_error_handler_off();
    gsl_integration_qags(&gf, -10.0, 10.0, 1e-11, 1e-10, 1000, ws.get(), &val, &err);
    gsl_set_error_handler(old);
    r.value = std::clamp(val, 0.0, 1.0);
    r.radius = err + 2.0 * normal_q(10.0);
    r.method = "adaptive";
    return r;
}

Direction direction_of(Variant v) {
    return (v == Variant::ChannelCost || v == Variant::GelfandPinsker) ? Direction::Channel : Direction::Source;
}

RateForEpsilon rate_for_epsilon(double epsilon, const SecondOrderTerms& t, long n, double R_first_order,
                                const ExpectedPeOptions& opt) {
    require(epsilon > 0.0 && epsilon < 1.0, ErrorKind::Domain, "ε must lie in (0,1)");
    require(n >= 1, ErrorKind::Domain, "blocklength must be positive");
    double lam_sd = 0.0;
    for (std::size_t i = 0; i < t.k(); ++i) lam_sd += t.lambda[i] * sqrt0(t.sigma_JD(i + 1, i + 1));
    const double vproxy = t.var_A + sq(sqrt0(t.sigma_JD(0, 0)) + lam_sd);
    RateForEpsilon r;
    const double sign = direction_of(t.variant) == Direction::Source ? 1.0 : -1.0;
    if (vproxy <= kZeroVar) {
        r.W = 0.0;
        r.pe = 0.0;
        r.rate = R_first_order;
        return r;
    }
    const double span = 10.0 * std::sqrt(vproxy);
    double lo = -span, hi = span;
    double flo = expected_pe(lo, t, opt).value - epsilon, fhi = expected_pe(hi, t, opt).value - epsilon;
    if (!(flo > 0.0 && fhi < 0.0)) fail(ErrorKind::Convergence, "target ε is not bracketed by ±10√V");
    double mid = 0.0, fm = 0.0;
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        fm = expected_pe(mid, t, opt).value - epsilon;
        if (std::fabs(fm) <= 1e-9 && hi - lo < 1e-8 * span) break;
        if (fm > 0.0) lo = mid;
        else hi = mid;
        if (hi - lo <= 1e-13 * span) break;
    }
    r.W = mid;
    r.pe = fm + epsilon;
    r.rate = R_first_order + sign * r.W / std::sqrt(static_cast<double>(n));
    return r;
}

// ============================================================================
// Competitors
// ============================================================================

Eigen::Matrix3d vyag_covariance(const CodingInstance& inst) {
    require(inst.variant == Variant::WynerZiv || inst.variant == Variant::IndirectWZ ||
                (inst.variant == Variant::MultiDistortionWZ && inst.d.size() == 1),
            ErrorKind::Unsupported, "competing bounds are defined for single-distortion Wyner-Ziv instances");
    const ProbVec& P = inst.joint;
    std::vector<RealFunc> f{info_density(P, inst.aux, inst.enc), -1.0 * info_density(P, inst.aux, inst.side),
                            inst.d[0]};
    Eigen::Matrix3d c;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) c(i, j) = c(j, i) = covariance(P, f[i], f[j]);
    for (int i = 0; i < 3; ++i) c(i, i) = std::max(0.0, c(i, i));
    return c;
}

Eigen::Matrix3d wkt_covariance(const TimeSharing& ts) {
    require(!ts.parts.empty() && ts.parts.size() == ts.weights.size(), ErrorKind::Shape, "time-sharing weights");
    Eigen::Matrix3d c = Eigen::Matrix3d::Zero();
    double tot = 0.0;
    for (std::size_t i = 0; i < ts.parts.size(); ++i) {
        require(ts.weights[i] >= 0.0, ErrorKind::InvalidInput, "negative time-sharing weight");
        c += ts.weights[i] * vyag_covariance(ts.parts[i]);
        tot += ts.weights[i];
    }
    require(std::fabs(tot - 1.0) <= 1e-9, ErrorKind::InvalidInput, "time-sharing weights must sum to one");
    return c;
}

namespace {
double three_term(const Eigen::Matrix3d& c, double lambda) {
    return sq(sqrt0(c(0, 0)) + sqrt0(c(1, 1)) + lambda * sqrt0(c(2, 2)));
}
}  // namespace

double v_wkt(const TimeSharing& ts) { return three_term(wkt_covariance(ts), ts.parts.front().lambda[0]); }

Competitors v_competitors(const CodingInstance& inst, const TimeSharing* ts) {
    Eigen::Matrix3d c = vyag_covariance(inst);
    const double lam = inst.lambda[0];
    Competitors r;
    r.v_vyag = three_term(c, lam);
    r.v_la = sq(sqrt0(c(0, 0) + c(1, 1) + 2.0 * c(0, 1)) + lam * sqrt0(c(2, 2)));
    if (ts) {
        r.v_wkt = v_wkt(*ts);
        r.wkt_convention = ts->convention;
    } else {
        r.v_wkt = r.v_vyag;
        r.wkt_convention = "T empty";
    }
    return r;
}

TimeSharing wkt_binary_default(double p, double D, double lambda) {
    require(p > 0.0 && p < 0.5 && D > 0.0 && D < p, ErrorKind::Domain, "binary family needs 0 < D < p < 1/2");
    WZBinaryOpt opt = wz_binary_optimize(p, D);
    const double R = wz_rate_formula(p, D);

    struct Point {
        double beta, gamma, dist, rate;
        Eigen::Matrix3d cov;
    };
    std::vector<Point> pts;
    auto add = [&](double b, double g) {
        double obj = 0.0, dist = 0.0;
        wz_binary_eval(p, b, g, obj, dist);
        if (std::fabs(obj - wz_rate_formula(p, dist)) > 1e-9) return;
        pts.push_back({b, g, dist, obj, vyag_covariance(wz_binary_family(p, b, g, lambda).inst)});
    };
    const double bc = wz_tangent_point(p);
    for (int i = 0; i <= 50; ++i) {
        double b = 0.01 * i;
        if (b <= bc) add(b, 1.0);
    }
    for (int i = 0; i <= 100; ++i) add(bc, 0.01 * i);
    if (std::fabs(opt.beta - bc) < 1e-6) add(bc, opt.gamma);
    add(0.0, 0.0);

    TimeSharing best;
    best.weights = {1.0};
    best.parts = {wz_binary_family(p, opt.beta, opt.gamma, lambda).inst};
    double bestV = v_wkt(best);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts.size(); ++j) {
            const Point &a = pts[i], &b = pts[j];
            if (!(a.dist <= D && D <= b.dist && a.dist < b.dist)) continue;
            double w = (b.dist - D) / (b.dist - a.dist);
            if (std::fabs(w * a.rate + (1.0 - w) * b.rate - R) > 1e-9) continue;
            double V = three_term(w * a.cov + (1.0 - w) * b.cov, lambda);
            if (V < bestV - 1e-15) {
                bestV = V;
                best.weights = {w, 1.0 - w};
                best.parts = {wz_binary_family(p, a.beta, a.gamma, lambda).inst,
                              wz_binary_family(p, b.beta, b.gamma, lambda).inst};
            }
        }
    return best;
}

std::vector<ComparisonRow> comparison_suite(const CodingInstance& inst, const std::vector<double>& W_grid,
                                            const TimeSharing* ts) {
    SecondOrderTerms terms = wz_second_order_terms(inst);
    require(terms.k() == 1, ErrorKind::Unsupported, "comparison needs a single distortion");
    const double lam = terms.lambda[0];
    Eigen::Matrix3d c3 = vyag_covariance(inst);
    Eigen::MatrixXd la(2, 2);
    la << c3(0, 0) + c3(1, 1) + 2.0 * c3(0, 1), c3(0, 2) + c3(1, 2), c3(0, 2) + c3(1, 2), c3(2, 2);
    la(0, 0) = std::max(0.0, la(0, 0));
    Eigen::Matrix3d cw = ts ? wkt_covariance(*ts) : Eigen::Matrix3d::Zero();
    std::vector<ComparisonRow> rows;
    for (double W : W_grid) {
        ComparisonRow r;
        r.W = W;
        ExpectedPe e = expected_pe(W, terms);
        r.thm2 = e.value;
        r.thm2_radius = e.radius;
        PeStar pl = pe_star(W, lam, la);
        PeStar pv = three_event_bound(W, lam, c3);
        r.la = pl.prob;
        r.vyag = pv.prob;
        r.radius = e.radius + pl.radius + pv.radius + 1e-9;
        r.wkt = kNaN;
        if (ts) {
            PeStar pw = three_event_bound(W, lam, cw);
            r.wkt = pw.prob;
            r.wkt_ok = r.thm2 <= r.wkt + r.radius + pw.radius;
        }
        r.thm2_le_la = r.thm2 <= r.la + r.radius;
        r.la_le_vyag = r.la <= r.vyag + r.radius;
        rows.push_back(r);
    }
    return rows;
}

std::string instance_digest(const CodingInstance& inst) {
    std::uint64_t h = 1469598103934665603ull;
    auto feed = [&](const std::string& s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 1099511628211ull;
        }
        h ^= 0xff;
        h *= 1099511628211ull;
    };
    auto num = [&](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        feed(buf);
    };
    auto func = [&](const RealFunc& f) {
        for (const auto& a : f.domain()) {
            feed(a.name);
            num(static_cast<double>(a.size()));
        }
        for (double v : f.values()) num(v);
    };
    feed(variant_name(inst.variant));
    func(inst.joint.func());
    for (const auto& d : inst.d) func(d);
    for (double v : inst.D) num(v);
    for (double v : inst.lambda) num(v);
    char out[20];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

BoundReport bound_report(const CodingInstance& inst, long n, double epsilon) {
    SecondOrderTerms t = wz_second_order_terms(inst);
    VGCC g = v_gcc(t);
    BoundReport r;
    r.bound_name = "V_GCC";
    r.value = g.V;
    r.digest = instance_digest(inst);
    auto& m = r.intermediates;
    m["var_A"] = t.var_A;
    m["sigma_J"] = g.sigma_J;
    m["sigma_D"] = g.sigma_D;
    for (std::size_t i = 0; i < t.k(); ++i) m["lambda_" + std::to_string(i)] = t.lambda[i];
    for (Eigen::Index i = 0; i < t.sigma_JD.rows(); ++i)
        for (Eigen::Index j = i; j < t.sigma_JD.cols(); ++j)
            m["sigma_JD_" + std::to_string(i) + std::to_string(j)] = t.sigma_JD(i, j);
    m["stationarity"] = t.stationarity;
    const double mean = inner(inst.joint.func(), rate_density(inst));
    const bool source = direction_of(inst.variant) == Direction::Source;
    m["first_order_rate"] = source ? mean : -mean;
    if (inst.variant == Variant::WynerZiv && t.k() == 1) {
        Competitors c = v_competitors(inst);
        m["V_VYAG"] = c.v_vyag;
        m["V_LA"] = c.v_la;
    }
    if (n > 0 && epsilon > 0.0 && epsilon < 1.0) {
        RateForEpsilon re = rate_for_epsilon(epsilon, t, n, m["first_order_rate"]);
        m["n"] = static_cast<double>(n);
        m["epsilon"] = epsilon;
        m["W"] = re.W;
        m["rate_at_epsilon"] = re.rate;
    }
    return r;
}

Figure3Point figure3_point(double p, double D) {
    Figure3Point f;
    f.D = D;
    try {
        WZBinaryOpt o = wz_binary_optimize(p, D);
        WZBinaryInstance w = wz_binary_family(p, o.beta, o.gamma, o.lambda);
        f.rate = o.rate;
        f.lambda = o.lambda;
        f.v_gcc = v_gcc(w.inst).V;
        TimeSharing ts = wkt_binary_default(p, D, o.lambda);
        Competitors c = v_competitors(w.inst, &ts);
        f.v_vyag = c.v_vyag;
        f.v_la = c.v_la;
        f.v_wkt = c.v_wkt;
    } catch (const Error& e) {
        f.ok = false;
        f.note = e.what();
        f.v_gcc = f.v_vyag = f.v_wkt = f.v_la = std::numeric_limits<double>::quiet_NaN();
    }
    return f;
}

}  // namespace secord
