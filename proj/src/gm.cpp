#include "secord/gm.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <random>

namespace secord {

// ============================================================================
// ζ maps
// ============================================================================

Zeta Zeta::affine(Eigen::MatrixXd A, Eigen::VectorXd b) {
    require(A.rows() == b.size(), ErrorKind::Shape, "zeta offset length differs from matrix rows");
    Zeta z;
    z.kind = Kind::Affine;
    z.A = std::move(A);
    z.b = std::move(b);
    return z;
}

Zeta Zeta::nonlinear(std::function<std::vector<double>(const std::vector<double>&)> f) {
    Zeta z;
    z.kind = Kind::Nonlinear;
    z.fn = std::move(f);
    return z;
}

std::vector<double> Zeta::operator()(const std::vector<double>& g, std::size_t out_dim) const {
    switch (kind) {
        case Kind::Zero: return std::vector<double>(out_dim, 0.0);
        case Kind::Affine: {
            require(static_cast<std::size_t>(A.cols()) == g.size() && static_cast<std::size_t>(A.rows()) == out_dim,
                    ErrorKind::Shape, "zeta matrix shape");
            Eigen::VectorXd v = A * Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()) + b;
            return std::vector<double>(v.data(), v.data() + v.size());
        }
        case Kind::Nonlinear: {
            auto v = fn(g);
            require(v.size() == out_dim, ErrorKind::Shape, "zeta output length");
            return v;
        }
    }
    return {};
}

// ============================================================================
// Gaussian-multinomial covariances
// ============================================================================

namespace {

Eigen::MatrixXd nm_block(const double* p, std::size_t n) {
    Eigen::MatrixXd s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) s(i, j) = (i == j ? p[i] : 0.0) - p[i] * p[j];
    return s;
}

std::size_t row_count(const Domain& d, std::size_t row_factors) {
    std::size_t nr = 1;
    for (std::size_t i = 0; i < row_factors; ++i) nr *= d[i].size();
    return nr;
}

}  // namespace

GaussianSpec nm_covariance(const ProbVec& p) {
    GaussianSpec s;
    s.domain = p.domain();
    s.cov = nm_block(p.mass().data(), p.size());
    s.mean = Eigen::VectorXd::Zero(p.size());
    s.center = p.func();
    return s;
}

GaussianSpec nm_cond_covariance(const CondKernel& k) {
    GaussianSpec s;
    s.domain = k.func().domain();
    s.row_factors = k.from().size();
    std::size_t nr = k.rows(), nc = k.cols();
    s.cov = Eigen::MatrixXd::Zero(nr * nc, nr * nc);
    for (std::size_t r = 0; r < nr; ++r) s.cov.block(r * nc, r * nc, nc, nc) = nm_block(&k.func().values()[r * nc], nc);
    s.mean = Eigen::VectorXd::Zero(nr * nc);
    return s;
}

GaussianSpec zero_deviation(const ProbVec& p) {
    GaussianSpec s = nm_covariance(p);
    s.cov.setZero();
    return s;
}

ScalarGaussian linear_pushforward(const GaussianSpec& spec, const std::vector<RealFunc>& maps,
                                  std::vector<std::string> labels) {
    const std::size_t n = spec.dim(), m = maps.size();
    Eigen::MatrixXd F(n, m);
    for (std::size_t j = 0; j < m; ++j) {
        RealFunc f = broadcast(maps[j], spec.domain);
        for (std::size_t i = 0; i < n; ++i) {
            double v = f[i];
            if (std::isnan(v)) {
                // unusable values are fine on coordinates that never move
                require(spec.cov(i, i) == 0.0 && (spec.mean.size() == 0 || spec.mean(i) == 0.0),
                        ErrorKind::InvalidInput, "map has an unusable value on a random coordinate");
                v = 0.0;
            }
            F(i, j) = v;
        }
    }
    ScalarGaussian out;
    out.cov = F.transpose() * spec.cov * F;
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    if (labels.empty())
        for (std::size_t j = 0; j < m; ++j) labels.push_back("f" + std::to_string(j));
    require(labels.size() == m, ErrorKind::Shape, "label count");
    out.labels = std::move(labels);
    return out;
}

namespace {

// M1[(c,y), c] = k(row(c), y)
Eigen::MatrixXd channel_map(const GaussianSpec& spec, const CondKernel& k, std::vector<std::size_t>& rowmap) {
    require(is_subdomain(k.from(), spec.domain), ErrorKind::Shape, "kernel input factors absent from deviation");
    for (const auto& a : k.to())
        require(find_factor(spec.domain, a.name) < 0, ErrorKind::Shape, "kernel output factor already present");
    rowmap = projection_map(spec.domain, k.from());
    const std::size_t n = spec.dim(), C = k.cols();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n * C, n);
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t y = 0; y < C; ++y) M(c * C + y, c) = k(rowmap[c], y);
    return M;
}

void require_center(const GaussianSpec& spec) {
    require(spec.center.size() == spec.dim() && spec.center.domain() == spec.domain, ErrorKind::InvalidInput,
            "deviation spec has no center distribution");
}

}  // namespace

GaussianSpec compose_channel_deviation(const GaussianSpec& spec, const CondKernel& k) {
    require_center(spec);
    std::vector<std::size_t> rowmap;
    Eigen::MatrixXd M = channel_map(spec, k, rowmap);
    const std::size_t n = spec.dim(), C = k.cols();
    GaussianSpec out;
    out.domain = spec.domain;
    out.domain.insert(out.domain.end(), k.to().begin(), k.to().end());
    out.row_factors = spec.row_factors;
    out.cov = M * spec.cov * M.transpose();
    for (std::size_t c = 0; c < n; ++c) {
        double w = spec.center[c];
        if (w == 0.0) continue;
        out.cov.block(c * C, c * C, C, C) += w * nm_block(&k.func().values()[rowmap[c] * C], C);
    }
    out.mean = M * (spec.mean.size() ? spec.mean : Eigen::VectorXd::Zero(n));
    out.center = spec.center * k.func();
    return out;
}

GaussianSpec compose_gcc_deviation(const GaussianSpec& spec, const CondKernel& k, const Zeta& zeta) {
    require_center(spec);
    if (!zeta.is_affine()) fail(ErrorKind::Unsupported, "covariance of a non-affine deviation map is not available");
    require(factor_names(k.from()) == factor_names(spec.domain), ErrorKind::Shape,
            "GCC kernel must condition on exactly the deviation's factors");
    std::vector<std::size_t> rowmap;
    Eigen::MatrixXd M = channel_map(spec, k, rowmap);
    const std::size_t n = spec.dim(), C = k.cols();
    Eigen::VectorXd offset = Eigen::VectorXd::Zero(n * C);
    if (zeta.kind == Zeta::Kind::Affine) {
        require(static_cast<std::size_t>(zeta.A.rows()) == n * C && static_cast<std::size_t>(zeta.A.cols()) == n,
                ErrorKind::Shape, "zeta matrix shape");
        for (std::size_t c = 0; c < n; ++c)
            for (std::size_t u = 0; u < C; ++u) {
                M.row(c * C + u) += spec.center[c] * zeta.A.row(c * C + u);
                offset(c * C + u) = spec.center[c] * zeta.b(c * C + u);
            }
    }
    GaussianSpec out;
    out.domain = spec.domain;
    out.domain.insert(out.domain.end(), k.to().begin(), k.to().end());
    out.row_factors = spec.row_factors;
    out.cov = M * spec.cov * M.transpose();
    out.mean = M * (spec.mean.size() ? spec.mean : Eigen::VectorXd::Zero(n)) + offset;
    out.center = spec.center * k.func();
    return out;
}

double tangent_row_violation(const GaussianSpec& spec) {
    const std::size_t nr = row_count(spec.domain, spec.row_factors), nc = spec.dim() / nr;
    double worst = 0.0;
    for (std::size_t r = 0; r < nr; ++r) {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(spec.dim());
        s.segment(r * nc, nc).setOnes();
        double v = s.dot(spec.cov * s);
        worst = std::max(worst, std::sqrt(std::max(v, 0.0)));
        if (spec.mean.size()) worst = std::max(worst, std::fabs(s.dot(spec.mean)));
    }
    return worst;
}

// ============================================================================
// Normal helpers, factorization, sampling
// ============================================================================

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double normal_q(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double normal_q_inv(double p) {
    require(p > 0.0 && p < 1.0, ErrorKind::Domain, "Q^{-1} needs a probability in (0,1)");
    boost::math::normal_distribution<double> nd;
    return boost::math::quantile(boost::math::complement(nd, p));
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov) {
    require(cov.rows() == cov.cols(), ErrorKind::Shape, "covariance must be square");
    if (cov.rows() == 0) return cov;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()));
    Eigen::VectorXd ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-8) fail(ErrorKind::InvalidInput, "covariance has a negative eigenvalue");
    // roundoff-level eigenvalues belong to the null space of a tangent covariance
    double floor = 1e-13 * std::max(1.0, ev.maxCoeff());
    for (int i = 0; i < ev.size(); ++i) ev(i) = ev(i) > floor ? std::sqrt(ev(i)) : 0.0;
    return es.eigenvectors() * ev.asDiagonal();
}

Eigen::MatrixXd sample_gaussian(const GaussianSpec& spec, std::uint64_t seed, std::size_t count) {
    const std::size_t n = spec.dim();
    Eigen::MatrixXd L = psd_factor(spec.cov);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd out(count, n);
    Eigen::VectorXd z(n);
    for (std::size_t t = 0; t < count; ++t) {
        for (std::size_t i = 0; i < n; ++i) z(i) = nd(rng);
        Eigen::VectorXd x = L * z;
        if (spec.mean.size()) x += spec.mean;
        out.row(t) = x.transpose();
    }
    return out;
}

}  // namespace secord
