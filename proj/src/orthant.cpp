// Gaussian orthant probabilities. Two dimensions use Genz's Gauss-Legendre
// rules on the correlation integral (Drezner-Wesolowsky form); three and four
// use the separation-of-variables transform under randomly shifted
// Richtmyer lattices. A deterministic three-dimensional route conditions on
// one coordinate and integrates the bivariate CDF adaptively.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "secord/gm.hpp"

namespace secord {

namespace {

constexpr double kTwoPi = 6.283185307179586;

// P(X > h, Y > k), correlation r
double bvnu(double h, double k, double r) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (h == inf || k == inf) return 0.0;
    if (h == -inf) return k == -inf ? 1.0 : normal_cdf(-k);
    if (k == -inf) return normal_cdf(-h);
    if (r == 0.0) return normal_cdf(-h) * normal_cdf(-k);

    static const double w6[3] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
    static const double x6[3] = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
    static const double w12[6] = {.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                  0.2031674267230659, 0.2334925365383547, 0.2491470458134029};
    static const double x12[6] = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                  0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
    static const double w20[10] = {.01761400713915212, .04060142980038694, .06267204833410906, .08327674157670475,
                                   0.1019301198172404, 0.1181945319615184, 0.1316886384491766, 0.1420961093183821,
                                   0.1491729864726037, 0.1527533871307259};
    static const double x20[10] = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
                                   0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
                                   0.2277858511416451, 0.07652652113349733};
    const double* w;
    const double* xg;
    int ng;
    if (std::fabs(r) < 0.3) { w = w6; xg = x6; ng = 3; }
    else if (std::fabs(r) < 0.75) { w = w12; xg = x12; ng = 6; }
    else { w = w20; xg = x20; ng = 10; }

    double hk = h * k, bvn = 0.0;
    if (std::fabs(r) < 0.925) {
        double hs = (h * h + k * k) / 2.0, asr = std::asin(r) / 2.0;
        for (int i = 0; i < ng; ++i)
            for (int s : {-1, 1}) {
                double sn = std::sin(asr * (1.0 + s * xg[i]));
                bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
        return std::clamp(bvn * asr / kTwoPi + normal_cdf(-h) * normal_cdf(-k), 0.0, 1.0);
    }
    if (r < 0.0) { k = -k; hk = -hk; }
    if (std::fabs(r) < 1.0) {
        double as = 1.0 - r * r, a = std::sqrt(as), bs = (h - k) * (h - k);
        double asr = -(bs / as + hk) / 2.0, c = (4.0 - hk) / 8.0, d = (12.0 - hk) / 80.0;
        if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
        if (hk > -100.0) {
            double b = std::sqrt(bs), sp = std::sqrt(kTwoPi) * normal_cdf(-b / a);
            bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a /= 2.0;
        double acc = 0.0;
        for (int i = 0; i < ng; ++i)
            for (int s : {-1, 1}) {
                double xs = a * (1.0 + s * xg[i]);
                xs *= xs;
                double asr2 = -(bs / xs + hk) / 2.0;
                if (asr2 <= -100.0) continue;
                double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs), rs = std::sqrt(1.0 - xs);
                double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
                acc += w[i] * std::exp(asr2) * (sp - ep);
            }
        bvn = (a * acc - bvn) / kTwoPi;
    }
    if (r > 0.0) {
        bvn += normal_cdf(-std::max(h, k));
    } else if (h >= k) {
        bvn = -bvn;
    } else {
        double L = h < 0.0 ? normal_cdf(k) - normal_cdf(h) : normal_cdf(-h) - normal_cdf(-k);
        bvn = L - bvn;
    }
    return std::clamp(bvn, 0.0, 1.0);
}

double normal_inv(double p) {
    p = std::clamp(p, 1e-300, 1.0 - 1e-16);
    return -normal_q_inv(p);
}

// pivoted Cholesky for the separation-of-variables integrand; zero pivots
// mark coordinates fixed by the earlier ones
struct SovPlan {
    Eigen::MatrixXd L;
    std::vector<double> b;
};

SovPlan plan_sov(const Eigen::MatrixXd& cov, const std::vector<double>& upper) {
    const int k = static_cast<int>(cov.rows());
    Eigen::MatrixXd S = cov;
    std::vector<double> b = upper;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(k, k);
    std::vector<double> ybar(k, 0.0);
    double scale = std::max(1e-300, S.diagonal().maxCoeff());
    for (int i = 0; i < k; ++i) {
        // choose the remaining variable with the smallest conditional probability
        int best = -1;
        double best_p = 2.0;
        for (int j = i; j < k; ++j) {
            double v = S(j, j);
            for (int m = 0; m < i; ++m) v -= L(j, m) * L(j, m);
            if (v <= 1e-14 * scale) continue;
            double mu = 0.0;
            for (int m = 0; m < i; ++m) mu += L(j, m) * ybar[m];
            double p = normal_cdf((b[j] - mu) / std::sqrt(v));
            if (p < best_p) { best_p = p; best = j; }
        }
        if (best < 0) best = i;  // all remaining are fixed by the earlier coordinates
        if (best != i) {
            S.row(i).swap(S.row(best));
            S.col(i).swap(S.col(best));
            L.row(i).swap(L.row(best));
            std::swap(b[i], b[best]);
        }
        double v = S(i, i);
        for (int m = 0; m < i; ++m) v -= L(i, m) * L(i, m);
        if (v <= 1e-14 * scale) {
            L(i, i) = 0.0;
            for (int j = i + 1; j < k; ++j) L(j, i) = 0.0;
            ybar[i] = 0.0;
            continue;
        }
        L(i, i) = std::sqrt(v);
        for (int j = i + 1; j < k; ++j) {
            double s = S(j, i);
            for (int m = 0; m < i; ++m) s -= L(j, m) * L(i, m);
            L(j, i) = s / L(i, i);
        }
        double mu = 0.0;
        for (int m = 0; m < i; ++m) mu += L(i, m) * ybar[m];
        double c = (b[i] - mu) / L(i, i);
        double pc = std::max(normal_cdf(c), 1e-300);
        ybar[i] = -std::exp(-0.5 * c * c) / std::sqrt(kTwoPi) / pc;
    }
    return {L, b};
}

double sov_integrand(const SovPlan& plan, const double* w) {
    const int k = static_cast<int>(plan.L.rows());
    double y[4] = {0, 0, 0, 0};
    double f = 1.0;
    for (int i = 0; i < k; ++i) {
        double s = 0.0;
        for (int m = 0; m < i; ++m) s += plan.L(i, m) * y[m];
        double e;
        if (plan.L(i, i) > 0.0) {
            double c = (plan.b[i] - s) / plan.L(i, i);
            e = normal_cdf(c);
            if (i + 1 < k) y[i] = normal_inv(w[i] * e);
        } else {
            e = s <= plan.b[i] ? 1.0 : 0.0;
        }
        f *= e;
        if (f == 0.0) return 0.0;
    }
    return f;
}

OrthantResult qmc_orthant(const Eigen::MatrixXd& cov, const std::vector<double>& upper, const OrthantOptions& opt) {
    SovPlan plan = plan_sov(cov, upper);
    const int dims = static_cast<int>(cov.rows()) - 1;
    static const double primes[3] = {2.0, 3.0, 5.0};
    double z[3];
    for (int j = 0; j < dims; ++j) z[j] = std::sqrt(primes[j]) - std::floor(std::sqrt(primes[j]));
    const std::size_t shifts = std::max<std::size_t>(2, opt.qmc_shifts);
    const std::size_t per = std::max<std::size_t>(1, opt.qmc_points / shifts);
    std::mt19937_64 rng(opt.qmc_seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> means(shifts);
    double w[3];
    for (std::size_t s = 0; s < shifts; ++s) {
        double shift[3];
        for (int j = 0; j < dims; ++j) shift[j] = unif(rng);
        double acc = 0.0;
        for (std::size_t i = 1; i <= per; ++i) {
            for (int j = 0; j < dims; ++j) {
                double x = std::fmod(static_cast<double>(i) * z[j] + shift[j], 1.0);
                w[j] = std::fabs(2.0 * x - 1.0);  // tent transform
            }
            acc += sov_integrand(plan, w);
        }
        means[s] = acc / static_cast<double>(per);
    }
    double m = 0.0;
    for (double v : means) m += v;
    m /= static_cast<double>(shifts);
    double var = 0.0;
    for (double v : means) var += (v - m) * (v - m);
    var /= static_cast<double>(shifts * (shifts - 1));
    return {std::clamp(m, 0.0, 1.0), std::sqrt(var)};
}

}  // namespace

double bvn_cdf(double a, double b, double r) {
    r = std::clamp(r, -1.0, 1.0);
    return bvnu(-a, -b, r);
}

namespace {

struct Settled {
    bool done = false;
    OrthantResult result;
    Eigen::MatrixXd R;  // correlation of the surviving coordinates
    std::vector<double> u;
};

// degenerate and infinite coordinates are settled before integration
Settled settle(const Eigen::MatrixXd& cov, const std::vector<double>& upper) {
    const std::size_t n = upper.size();
    require(static_cast<std::size_t>(cov.rows()) == n && static_cast<std::size_t>(cov.cols()) == n, ErrorKind::Shape,
            "orthant thresholds do not match covariance");
    require(n >= 1, ErrorKind::Shape, "orthant needs at least one coordinate");
    if (n > 4) fail(ErrorKind::Unsupported, "orthant probabilities above four dimensions are not supported");
    double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
    require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, ErrorKind::InvalidInput,
            "covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    require(es.eigenvalues().minCoeff() >= -1e-10 * scale, ErrorKind::InvalidInput, "covariance is not PSD");

    Settled st;
    std::vector<int> keep;
    for (std::size_t i = 0; i < n; ++i) {
        double u = upper[i];
        require(!std::isnan(u), ErrorKind::InvalidInput, "NaN threshold");
        if (u == std::numeric_limits<double>::infinity()) continue;
        if (cov(i, i) <= 1e-14 * scale) {
            if (u < 0.0) {
                st.done = true;
                return st;
            }
            continue;
        }
        if (u == -std::numeric_limits<double>::infinity()) {
            st.done = true;
            return st;
        }
        keep.push_back(static_cast<int>(i));
    }
    const std::size_t k = keep.size();
    if (k == 0) {
        st.done = true;
        st.result = {1.0, 0.0};
        return st;
    }
    std::vector<double> sd(k);
    st.u.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        sd[i] = std::sqrt(cov(keep[i], keep[i]));
        st.u[i] = upper[keep[i]] / sd[i];
    }
    st.R.resize(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            st.R(i, j) = std::clamp(cov(keep[i], keep[j]) / (sd[i] * sd[j]), -1.0, 1.0);
    if (k == 1) {
        st.done = true;
        st.result = {normal_cdf(st.u[0]), 0.0};
    } else if (k == 2) {
        st.done = true;
        st.result = {bvn_cdf(st.u[0], st.u[1], st.R(0, 1)), 0.0};
    }
    return st;
}

// condition on the coordinate least correlated with the others and
// integrate the conditional bivariate probability
OrthantResult trivariate_by_conditioning(const Eigen::MatrixXd& R, const std::vector<double>& u) {
    int c = 0;
    double best = 2.0;
    for (int i = 0; i < 3; ++i) {
        double m = 0.0;
        for (int j = 0; j < 3; ++j)
            if (j != i) m = std::max(m, std::fabs(R(i, j)));
        if (m < best) {
            best = m;
            c = i;
        }
    }
    int a = (c + 1) % 3, b = (c + 2) % 3;
    double ra = R(c, a), rb = R(c, b);
    double va = 1.0 - ra * ra, vb = 1.0 - rb * rb;
    constexpr double tiny = 1e-12;
    double lo = -9.0, hi = std::min(u[c], 9.0);
    // a coordinate fully explained by Z_c becomes a half-line constraint on z
    auto restrict = [&](double r, double ub) {
        if (r > 0.0) hi = std::min(hi, ub / r);
        else if (r < 0.0) lo = std::max(lo, ub / r);
        else if (ub < 0.0) hi = lo;
    };
    bool da = va <= tiny, db = vb <= tiny;
    if (da) restrict(ra, u[a]);
    if (db) restrict(rb, u[b]);
    if (hi <= lo) return {0.0, 0.0};
    double sa = da ? 0.0 : std::sqrt(va), sb = db ? 0.0 : std::sqrt(vb);
    double rho = (da || db) ? 0.0 : std::clamp((R(a, b) - ra * rb) / (sa * sb), -1.0, 1.0);
    auto f = [&](double z) {
        double phi = std::exp(-0.5 * z * z) / std::sqrt(kTwoPi);
        if (da && db) return phi;
        if (da) return phi * normal_cdf((u[b] - rb * z) / sb);
        if (db) return phi * normal_cdf((u[a] - ra * z) / sa);
        return phi * bvn_cdf((u[a] - ra * z) / sa, (u[b] - rb * z) / sb, rho);
    };
    double err = 0.0;
    double v = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, lo, hi, 12, 1e-11, &err);
    // mass beyond |z| = 9 is below 1e-18
    return {std::clamp(v, 0.0, 1.0), err};
}

}  // namespace

OrthantResult gaussian_orthant(const Eigen::MatrixXd& cov, const std::vector<double>& upper,
                               const OrthantOptions& opt) {
    Settled st = settle(cov, upper);
    if (st.done) return st.result;
    return qmc_orthant(st.R, st.u, opt);
}

OrthantResult trivariate_orthant(const Eigen::MatrixXd& cov, const std::vector<double>& upper) {
    require(upper.size() <= 3, ErrorKind::Unsupported, "conditioning quadrature covers at most three dimensions");
    Settled st = settle(cov, upper);
    if (st.done) return st.result;
    return trivariate_by_conditioning(st.R, st.u);
}

}  // namespace secord
