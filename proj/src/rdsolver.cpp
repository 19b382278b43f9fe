#include "secord/rdsolver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace secord {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct BAState {
    std::vector<double> q;  // output distribution used to form Q
    std::vector<double> Q;  // nx*ny test channel
    std::vector<double> out;  // actual output marginal of p∘Q
    double rate = 0, dist = 0, gap = 0;
    int iterations = 0;
    bool converged = false;
};

// alternating minimization at fixed slope lam (bits per unit distortion)
BAState ba_fixed(const std::vector<double>& p, const std::vector<double>& d, std::size_t nx, std::size_t ny, double lam,
                 std::vector<double> q, double tol, int max_iter) {
    BAState s;
    std::vector<double> Q(nx * ny), qn(ny);
    for (int it = 1; it <= max_iter; ++it) {
        std::fill(qn.begin(), qn.end(), 0.0);
        for (std::size_t x = 0; x < nx; ++x) {
            double* row = &Q[x * ny];
            if (p[x] == 0.0) {
                std::copy(q.begin(), q.end(), row);
                continue;
            }
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t y = 0; y < ny; ++y)
                if (q[y] > 0.0) m = std::max(m, std::log2(q[y]) - lam * d[x * ny + y]);
            double z = 0.0;
            for (std::size_t y = 0; y < ny; ++y) {
                row[y] = q[y] > 0.0 ? std::exp2(std::log2(q[y]) - lam * d[x * ny + y] - m) : 0.0;
                z += row[y];
            }
            for (std::size_t y = 0; y < ny; ++y) {
                row[y] /= z;
                qn[y] += p[x] * row[y];
            }
        }
        // gap = log max(q'/q) - D(q'||q), the distance between the primal value and the dual bound
        double lmax = -std::numeric_limits<double>::infinity(), kl = 0.0;
        for (std::size_t y = 0; y < ny; ++y) {
            if (q[y] <= 0.0) continue;
            if (qn[y] > 0.0) {
                lmax = std::max(lmax, std::log2(qn[y] / q[y]));
                kl += qn[y] * std::log2(qn[y] / q[y]);
            } else {
                lmax = std::max(lmax, -1e300);
            }
        }
        s.gap = std::max(0.0, lmax - kl);
        s.iterations = it;
        s.q = q;
        q = qn;
        if (s.gap < tol) {
            s.converged = true;
            break;
        }
    }
    s.Q = Q;
    s.out = qn;
    s.rate = 0.0;
    s.dist = 0.0;
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y) {
            double w = p[x] * Q[x * ny + y];
            if (w <= 0.0) continue;
            s.rate += w * std::log2(Q[x * ny + y] / qn[y]);
            s.dist += w * d[x * ny + y];
        }
    s.rate = std::max(0.0, s.rate);
    return s;
}

// Newton on the support of q for the fixed-slope optimality conditions
// c_y(q) = sum_x p(x) e(x,y) / Z_x(q) = 1 on the support, c_y <= 1 off it.
// BA converges sublinearly when an output mass tends to zero; this finishes it.
std::vector<double> polish_fixed(const std::vector<double>& p, const std::vector<double>& d, std::size_t nx,
                                 std::size_t ny, double lam, std::vector<double> q) {
    std::vector<double> e(nx * ny);
    for (std::size_t x = 0; x < nx; ++x) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t y = 0; y < ny; ++y) m = std::min(m, d[x * ny + y]);
        for (std::size_t y = 0; y < ny; ++y) e[x * ny + y] = std::exp2(-lam * (d[x * ny + y] - m));
    }
    auto cvec = [&](const std::vector<double>& qq, std::vector<double>& Z) {
        std::vector<double> c(ny, 0.0);
        for (std::size_t x = 0; x < nx; ++x) {
            double z = 0.0;
            for (std::size_t y = 0; y < ny; ++y) z += qq[y] * e[x * ny + y];
            Z[x] = z;
            if (p[x] > 0.0)
                for (std::size_t y = 0; y < ny; ++y) c[y] += p[x] * e[x * ny + y] / z;
        }
        return c;
    };
    std::vector<double> Z(nx);
    for (auto& v : q)
        if (v < 1e-12) v = 0.0;
    for (int outer = 0; outer < 4 * static_cast<int>(ny) + 4; ++outer) {
        for (int it = 0; it < 50; ++it) {
            std::vector<double> c = cvec(q, Z);
            std::vector<std::size_t> S;
            for (std::size_t y = 0; y < ny; ++y)
                if (q[y] > 0.0) S.push_back(y);
            const auto k = static_cast<Eigen::Index>(S.size());
            Eigen::VectorXd F(k);
            Eigen::MatrixXd Jm = Eigen::MatrixXd::Zero(k, k);
            double res = 0.0;
            for (Eigen::Index i = 0; i < k; ++i) {
                F(i) = c[S[i]] - 1.0;
                res = std::max(res, std::fabs(F(i)));
            }
            if (res < 1e-15) break;
            for (std::size_t x = 0; x < nx; ++x) {
                if (p[x] == 0.0) continue;
                double w = p[x] / (Z[x] * Z[x]);
                for (Eigen::Index i = 0; i < k; ++i)
                    for (Eigen::Index j = 0; j < k; ++j) Jm(i, j) -= w * e[x * ny + S[i]] * e[x * ny + S[j]];
            }
            Eigen::VectorXd step = Jm.completeOrthogonalDecomposition().solve(-F);
            // keep q positive; a coordinate driven to zero leaves the support
            double t = 1.0;
            for (Eigen::Index i = 0; i < k; ++i)
                if (step(i) < 0.0) t = std::min(t, -q[S[i]] / step(i));
            for (Eigen::Index i = 0; i < k; ++i) {
                double v = q[S[i]] + t * step(i);
                q[S[i]] = (t < 1.0 && v <= 1e-14 * std::fabs(step(i)) + 1e-300) ? 0.0 : std::max(0.0, v);
            }
            double s = 0.0;
            for (double v : q) s += v;
            for (auto& v : q) v /= s;
            if (t < 1.0) continue;
        }
        std::vector<double> c = cvec(q, Z);
        std::size_t worst = ny;
        double wv = 1.0 + 1e-13;
        for (std::size_t y = 0; y < ny; ++y)
            if (q[y] == 0.0 && c[y] > wv) wv = c[y], worst = y;
        if (worst == ny) break;
        q[worst] = 1e-6;
        double s = 0.0;
        for (double v : q) s += v;
        for (auto& v : q) v /= s;
    }
    return q;
}

struct RDProblem {
    std::vector<double> p, d;
    std::size_t nx = 0, ny = 0;
    Domain X, Y;
};

RDProblem rd_problem(const ProbVec& px, const RealFunc& d) {
    require(px.domain().size() == 1, ErrorKind::Shape, "rate-distortion source must have a single factor");
    RDProblem pr;
    pr.X = px.domain();
    for (const auto& a : d.domain())
        if (a.name != pr.X[0].name) pr.Y.push_back(a);
    require(pr.Y.size() == 1 && d.domain().size() == 2, ErrorKind::Shape,
            "distortion must be a function of the source and one reconstruction variable");
    RealFunc db = permute(d, {pr.X[0].name, pr.Y[0].name});
    pr.p = px.mass();
    pr.d = db.values();
    pr.nx = pr.X[0].size();
    pr.ny = pr.Y[0].size();
    for (double v : pr.d) require(std::isfinite(v), ErrorKind::InvalidInput, "distortion must be finite");
    return pr;
}

double min_dist(const RDProblem& pr) {
    double s = 0.0;
    for (std::size_t x = 0; x < pr.nx; ++x) {
        double m = pr.d[x * pr.ny];
        for (std::size_t y = 1; y < pr.ny; ++y) m = std::min(m, pr.d[x * pr.ny + y]);
        s += pr.p[x] * m;
    }
    return s;
}

std::size_t max_dist_arg(const RDProblem& pr, double& best) {
    best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t y = 0; y < pr.ny; ++y) {
        double s = 0.0;
        for (std::size_t x = 0; x < pr.nx; ++x) s += pr.p[x] * pr.d[x * pr.ny + y];
        if (s < best) best = s, arg = y;
    }
    return arg;
}

RDSolution pack(const RDProblem& pr, const std::vector<double>& Q, double rate, double dist, double lam, double D,
                double gap, int iters, bool conv) {
    RDSolution sol;
    sol.rate = rate;
    sol.test_channel = CondKernel(pr.X, pr.Y, Q, true);
    std::vector<double> out(pr.ny, 0.0);
    for (std::size_t x = 0; x < pr.nx; ++x)
        for (std::size_t y = 0; y < pr.ny; ++y) out[y] += pr.p[x] * Q[x * pr.ny + y];
    sol.output = ProbVec(pr.Y, out, true);
    sol.lambda = sol.lambda_dual = sol.lambda_fd = lam;
    sol.D = D;
    sol.achieved_D = dist;
    sol.gap = gap;
    sol.iterations = iters;
    sol.converged = conv;
    return sol;
}

RDSolution solve_rd(const RDProblem& pr, double D, const RDOptions& opt) {
    const double dmin = min_dist(pr);
    double dmax;
    std::size_t ystar = max_dist_arg(pr, dmax);
    const double eps = 1e-12 * std::max(1.0, std::fabs(dmax));
    if (!(D > dmin)) fail(ErrorKind::Domain, "distortion level at or below the minimum achievable distortion");
    if (D > dmax + eps) fail(ErrorKind::Domain, "distortion level beyond the zero-rate distortion");
    if (D >= dmax - eps) {
        std::vector<double> Q(pr.nx * pr.ny, 0.0);
        for (std::size_t x = 0; x < pr.nx; ++x) Q[x * pr.ny + ystar] = 1.0;
        return pack(pr, Q, 0.0, dmax, 0.0, D, 0.0, 0, true);
    }

    const double inner_tol = opt.gap_tol * 1e-2;
    std::vector<double> q0(pr.ny, 1.0 / pr.ny);
    int total = 0;
    auto run = [&](double lam, const std::vector<double>& q) {
        BAState s = ba_fixed(pr.p, pr.d, pr.nx, pr.ny, lam, q, inner_tol, opt.max_iter);
        total += s.iterations;
        if (!s.converged) {
            BAState t = ba_fixed(pr.p, pr.d, pr.nx, pr.ny, lam, polish_fixed(pr.p, pr.d, pr.nx, pr.ny, lam, s.out),
                                 inner_tol, 1000);
            total += t.iterations;
            if (t.gap < s.gap) s = t;
        }
        if (!s.converged && s.gap > opt.gap_tol)
            fail(ErrorKind::Convergence,
                 "Blahut-Arimoto did not converge; duality gap " + std::to_string(s.gap) + " bits");
        return s;
    };

    // bracket: D(lam) decreases in lam
    double lo = 0.0, hi = 1.0;
    BAState shi = run(hi, q0), slo;
    bool have_lo = false;
    while (shi.dist > D) {
        lo = hi;
        slo = shi;
        have_lo = true;
        hi *= 2.0;
        if (hi > 1e7) fail(ErrorKind::Domain, "distortion level too close to the minimum achievable distortion");
        shi = run(hi, shi.out);
    }
    if (!have_lo) {
        slo = run(0.0, q0);
        // at lam = 0 the minimizer is the zero-rate point
        std::vector<double> Q(pr.nx * pr.ny, 0.0);
        for (std::size_t x = 0; x < pr.nx; ++x) Q[x * pr.ny + ystar] = 1.0;
        slo.Q = Q;
        slo.rate = 0.0;
        slo.dist = dmax;
        slo.gap = 0.0;
    }
    for (int k = 0; k < 200; ++k) {
        if (std::fabs(shi.dist - D) < 1e-13 || hi - lo <= 1e-14 * std::max(1.0, hi)) break;
        double mid = 0.5 * (lo + hi);
        BAState sm = run(mid, shi.out);
        if (sm.dist > D) lo = mid, slo = sm;
        else hi = mid, shi = sm;
    }
    if (std::fabs(shi.dist - D) < 1e-12 || slo.dist <= shi.dist)
        return pack(pr, shi.Q, shi.rate, shi.dist, hi, D, shi.gap, total, true);

    // D(lam) jumps here (a linear piece of R): time-share the two sides
    double th = (D - shi.dist) / (slo.dist - shi.dist);
    th = std::clamp(th, 0.0, 1.0);
    std::vector<double> Q(pr.nx * pr.ny);
    for (std::size_t i = 0; i < Q.size(); ++i) Q[i] = th * slo.Q[i] + (1.0 - th) * shi.Q[i];
    std::vector<double> out(pr.ny, 0.0);
    for (std::size_t x = 0; x < pr.nx; ++x)
        for (std::size_t y = 0; y < pr.ny; ++y) out[y] += pr.p[x] * Q[x * pr.ny + y];
    double rate = 0.0, dist = 0.0;
    for (std::size_t x = 0; x < pr.nx; ++x)
        for (std::size_t y = 0; y < pr.ny; ++y) {
            double w = pr.p[x] * Q[x * pr.ny + y];
            if (w <= 0.0) continue;
            rate += w * std::log2(Q[x * pr.ny + y] / out[y]);
            dist += w * pr.d[x * pr.ny + y];
        }
    return pack(pr, Q, rate, dist, 0.5 * (lo + hi), D, std::max(slo.gap, shi.gap), total, true);
}

}  // namespace

double rd_min_distortion(const ProbVec& px, const RealFunc& d) { return min_dist(rd_problem(px, d)); }

double rd_max_distortion(const ProbVec& px, const RealFunc& d) {
    double m;
    max_dist_arg(rd_problem(px, d), m);
    return m;
}

RDSolution blahut_arimoto_rd(const ProbVec& px, const RealFunc& d, double D, const RDOptions& opt) {
    RDProblem pr = rd_problem(px, d);
    RDSolution sol = solve_rd(pr, D, opt);
    if (!opt.fd_check || sol.rate == 0.0) return sol;
    const double h = opt.fd_step;
    double dmax;
    max_dist_arg(pr, dmax);
    if (D - h <= min_dist(pr) || D + h > dmax) return sol;
    RDOptions o = opt;
    o.fd_check = false;
    double rm = solve_rd(pr, D - h, o).rate, rp = solve_rd(pr, D + h, o).rate;
    sol.lambda_fd = (rm - rp) / (2.0 * h);
    if (std::fabs(sol.lambda_fd - sol.lambda_dual) > 1e-3) {
        sol.kink = true;
        sol.lambda = sol.lambda_fd;
    }
    return sol;
}

TiltedInfo tilted_information(const RDSolution& sol, const ProbVec& px, const RealFunc& d) {
    require(sol.converged, ErrorKind::InvalidInput, "tilted information needs a converged solution");
    RDProblem pr = rd_problem(px, d);
    const double lam = sol.lambda, D = sol.D;
    const auto& q = sol.output.mass();
    std::vector<double> j(pr.nx, kNaN);
    for (std::size_t x = 0; x < pr.nx; ++x) {
        if (pr.p[x] == 0.0) continue;
        double s = 0.0;
        for (std::size_t y = 0; y < pr.ny; ++y)
            if (q[y] > 0.0) s += q[y] * std::exp2(-lam * (pr.d[x * pr.ny + y] - D));
        j[x] = -std::log2(s);
    }
    TiltedInfo out;
    out.j = RealFunc(pr.X, j);

    ProbVec joint = semidirect(px, sol.test_channel);
    RealFunc dd = broadcast(d, joint.domain());
    RealFunc g = info_density(joint, {pr.X[0].name}, {pr.Y[0].name}) + lam * map(dd, [D](double v) { return v - D; });
    RealFunc cm = cond_expect(joint, g, {pr.X[0].name});
    double worst = 0.0;
    for (std::size_t x = 0; x < pr.nx; ++x)
        if (pr.p[x] > 0.0) worst = std::max(worst, std::fabs(cm[x] - j[x]));
    out.identity_residual = worst;
    out.first_order_ok = worst <= 1e-4;
    out.mean = expect(px, out.j);
    out.variance = variance(px, out.j);
    return out;
}

// ============================================================================
// Maps and instances
// ============================================================================

RealFunc fold_map(const RealFunc& d, const DetMap& z) {
    require(z.image.size() == domain_size(z.from), ErrorKind::Shape, "map image length");
    for (auto v : z.image) require(v < z.to.size(), ErrorKind::Shape, "map image out of range");
    require(find_factor(d.domain(), z.to.name) >= 0, ErrorKind::Shape, "function does not use " + z.to.name);
    Domain rest;
    for (const auto& a : d.domain())
        if (a.name != z.to.name) rest.push_back(a);
    Domain out = union_domain(rest, z.from);
    Domain full = out;
    full.push_back(z.to);
    RealFunc db = broadcast(d, full);
    std::vector<std::size_t> pm = projection_map(out, z.from);
    const std::size_t nz = z.to.size();
    std::vector<double> v(domain_size(out));
    for (std::size_t c = 0; c < v.size(); ++c) v[c] = db[c * nz + z.image[pm[c]]];
    return RealFunc(out, std::move(v));
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::LossySC: return "LossySC";
        case Variant::WynerZiv: return "WynerZiv";
        case Variant::IndirectWZ: return "IndirectWZ";
        case Variant::MultiDistortionWZ: return "MultiDistortionWZ";
        case Variant::HeegardBerger: return "HeegardBerger";
        case Variant::ChannelCost: return "ChannelCost";
        case Variant::GelfandPinsker: return "GelfandPinsker";
    }
    return "";
}

Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::LossySC, Variant::WynerZiv, Variant::IndirectWZ, Variant::MultiDistortionWZ,
                      Variant::HeegardBerger, Variant::ChannelCost, Variant::GelfandPinsker})
        if (variant_name(v) == s) return v;
    fail(ErrorKind::InvalidInput, "unknown variant '" + s + "'");
}

namespace {

std::vector<RealFunc> on_joint(const ProbVec& joint, const std::vector<RealFunc>& fs) {
    std::vector<RealFunc> out;
    for (const auto& f : fs) {
        require(is_subdomain(f.domain(), joint.domain()), ErrorKind::Shape,
                "distortion uses a variable that is not part of the instance");
        out.push_back(broadcast(f, joint.domain()));
    }
    return out;
}

void require_from(const CondKernel& k, const Domain& d, const std::string& what) {
    require(factor_names(k.from()) == factor_names(d), ErrorKind::Shape, what + " must condition on " +
                                                                            factor_names(d).front());
}

}  // namespace

CodingInstance make_lossy_sc(const ProbVec& px, const CondKernel& test_channel, const RealFunc& d, double D,
                             double lambda) {
    require_from(test_channel, px.domain(), "test channel");
    CodingInstance in;
    in.variant = Variant::LossySC;
    in.joint = semidirect(px, test_channel);
    in.enc = factor_names(px.domain());
    in.aux = factor_names(test_channel.to());
    in.d = on_joint(in.joint, {d});
    in.D = {D};
    in.lambda = {lambda};
    validate_instance(in);
    return in;
}

CodingInstance make_multi_distortion_wz(const ProbVec& px, const CondKernel& side_f, const CondKernel& aux,
                                        const DetMap& z, const std::vector<RealFunc>& d, const std::vector<double>& D,
                                        const std::vector<double>& lambda) {
    require_from(side_f, px.domain(), "side-information kernel");
    require_from(aux, px.domain(), "auxiliary kernel");
    CodingInstance in;
    in.variant = Variant::MultiDistortionWZ;
    in.joint = semidirect(semidirect(px, aux), side_f);
    in.enc = factor_names(px.domain());
    in.aux = factor_names(aux.to());
    std::vector<RealFunc> folded;
    for (const auto& f : d) folded.push_back(fold_map(f, z));
    // decoder sees the side kernel's outputs that the distortions do not score
    for (const auto& a : side_f.to()) {
        bool scored = false;
        for (const auto& f : d) scored = scored || find_factor(f.domain(), a.name) >= 0;
        if (!scored) in.side.push_back(a.name);
    }
    for (const auto& s : factor_names(z.from))
        if (std::find(in.aux.begin(), in.aux.end(), s) == in.aux.end())
            require(std::find(in.side.begin(), in.side.end(), s) != in.side.end(), ErrorKind::Shape,
                    "reconstruction map reads " + s + ", which the decoder does not observe");
    in.d = on_joint(in.joint, folded);
    in.D = D;
    in.lambda = lambda;
    validate_instance(in);
    return in;
}

CodingInstance make_wyner_ziv(const ProbVec& px, const CondKernel& side, const CondKernel& aux, const DetMap& z,
                              const RealFunc& d, double D, double lambda) {
    CodingInstance in = make_multi_distortion_wz(px, side, aux, z, {d}, {D}, {lambda});
    in.variant = Variant::WynerZiv;
    return in;
}

CodingInstance make_indirect_wz(const ProbVec& px, const CondKernel& side_f, const CondKernel& aux, const DetMap& z,
                                const RealFunc& d, double D, double lambda) {
    CodingInstance in = make_multi_distortion_wz(px, side_f, aux, z, {d}, {D}, {lambda});
    in.variant = Variant::IndirectWZ;
    return in;
}

CodingInstance make_heegard_berger(const ProbVec& px, const CondKernel& side, const CondKernel& aux, const DetMap& z1,
                                   const DetMap& z2, const RealFunc& d1, const RealFunc& d2, const std::vector<double>& D,
                                   const std::vector<double>& lambda) {
    require_from(side, px.domain(), "side-information kernel");
    require_from(aux, px.domain(), "auxiliary kernel");
    require(aux.to().size() == 2, ErrorKind::Shape, "Heegard-Berger needs a kernel onto (U1,U2)");
    CodingInstance in;
    in.variant = Variant::HeegardBerger;
    in.joint = semidirect(semidirect(px, aux), side);
    in.enc = factor_names(px.domain());
    in.aux = factor_names(aux.to());
    in.side = factor_names(side.to());
    in.d = on_joint(in.joint, {fold_map(d1, z1), fold_map(d2, z2)});
    in.D = D;
    in.lambda = lambda;
    validate_instance(in);
    return in;
}

CodingInstance make_channel_cost(const ProbVec& input, const CondKernel& channel, const RealFunc& cost, double D,
                                 double lambda) {
    require_from(channel, input.domain(), "channel");
    CodingInstance in;
    in.variant = Variant::ChannelCost;
    in.joint = semidirect(input, channel);
    in.aux = factor_names(input.domain());
    in.side = factor_names(channel.to());
    in.d = on_joint(in.joint, {cost});
    in.D = {D};
    in.lambda = {lambda};
    validate_instance(in);
    return in;
}

CodingInstance make_gelfand_pinsker(const ProbVec& ps, const CondKernel& aux, const DetMap& xmap,
                                    const CondKernel& channel, const RealFunc& cost, double D, double lambda) {
    require_from(aux, ps.domain(), "auxiliary kernel");
    const std::string S = ps.domain()[0].name, U = aux.to()[0].name;
    require(ps.domain().size() == 1 && aux.to().size() == 1, ErrorKind::Shape, "state and auxiliary are single factors");
    require(factor_names(xmap.from).size() == 2 && find_factor(xmap.from, S) >= 0 && find_factor(xmap.from, U) >= 0,
            ErrorKind::Shape, "input map must read (S,U)");
    require(find_factor(channel.from(), xmap.to.name) >= 0 && find_factor(channel.from(), S) >= 0 &&
                channel.from().size() == 2,
            ErrorKind::Shape, "channel must condition on (S,X)");
    // P_{Y|S,U}(y|s,u) = W(y|s,x(s,u))
    Domain cdom = channel.from();
    cdom.insert(cdom.end(), channel.to().begin(), channel.to().end());
    RealFunc folded = fold_map(RealFunc(cdom, channel.func().values()), xmap);
    std::vector<std::string> order{S, U};
    for (const auto& a : channel.to()) order.push_back(a.name);
    folded = permute(folded, order);
    CondKernel k(select_factors(folded.domain(), {S, U}), channel.to(), folded.values(), true);
    CodingInstance in;
    in.variant = Variant::GelfandPinsker;
    in.joint = semidirect(semidirect(ps, aux), k);
    in.enc = {S};
    in.aux = {U};
    in.side = factor_names(channel.to());
    in.d = on_joint(in.joint, {fold_map(cost, xmap)});
    in.D = {D};
    in.lambda = {lambda};
    validate_instance(in);
    return in;
}

void validate_instance(const CodingInstance& in) {
    require(!in.aux.empty(), ErrorKind::InvalidInput, "instance has no encoder-chosen variable");
    require(in.d.size() == in.D.size() && in.d.size() == in.lambda.size() && !in.d.empty(), ErrorKind::Shape,
            "distortion, level and multiplier counts differ");
    for (double l : in.lambda) require(std::isfinite(l) && l >= 0.0, ErrorKind::InvalidInput, "λ must be finite and ≥ 0");
    for (double v : in.D) require(std::isfinite(v), ErrorKind::InvalidInput, "distortion level must be finite");
    auto present = [&](const std::vector<std::string>& names) {
        for (const auto& n : names)
            require(find_factor(in.joint.domain(), n) >= 0, ErrorKind::Shape, "variable " + n + " missing from joint");
    };
    present(in.enc);
    present(in.aux);
    present(in.side);
    for (const auto& f : in.d) require(f.domain() == in.joint.domain(), ErrorKind::Shape, "distortion not on joint");
    switch (in.variant) {
        case Variant::LossySC: require(in.enc.size() == 1 && in.d.size() == 1, ErrorKind::Shape, "lossy source shape"); break;
        case Variant::WynerZiv:
        case Variant::IndirectWZ:
        case Variant::GelfandPinsker:
            require(in.d.size() == 1 && in.aux.size() == 1, ErrorKind::Shape, "single auxiliary and distortion");
            break;
        case Variant::MultiDistortionWZ: require(in.aux.size() == 1, ErrorKind::Shape, "single auxiliary"); break;
        case Variant::HeegardBerger:
            require(in.aux.size() == 2 && in.d.size() == 2, ErrorKind::Shape, "two auxiliaries and two distortions");
            break;
        case Variant::ChannelCost:
            require(in.enc.empty() && in.d.size() == 1, ErrorKind::Shape, "channel coding has no encoder observation");
            break;
    }
}

RealFunc rate_density(const CodingInstance& in) {
    const ProbVec& j = in.joint;
    switch (in.variant) {
        case Variant::LossySC: return info_density(j, in.aux, in.enc);
        case Variant::WynerZiv:
        case Variant::IndirectWZ:
        case Variant::MultiDistortionWZ:
        case Variant::GelfandPinsker: return info_density(j, in.aux, in.enc) - info_density(j, in.aux, in.side);
        case Variant::HeegardBerger: {
            std::vector<std::string> c{in.aux[0]};
            c.insert(c.end(), in.side.begin(), in.side.end());
            return info_density(j, {in.aux[0]}, in.enc) + info_density(j, {in.aux[1]}, in.enc, c);
        }
        case Variant::ChannelCost: return -1.0 * info_density(j, in.aux, in.side);
    }
    return {};
}

CondKernel aux_kernel(const CodingInstance& in) { return conditional(in.joint, in.aux, in.enc); }

double first_order_stationarity(const CodingInstance& in, double support_tol) {
    RealFunc g = rate_density(in);
    for (std::size_t i = 0; i < in.d.size(); ++i) g = g + in.lambda[i] * in.d[i];
    std::vector<std::string> ea = in.enc;
    ea.insert(ea.end(), in.aux.begin(), in.aux.end());
    RealFunc h = cond_expect(in.joint, g, ea);  // on (enc, aux)
    RealFunc pe = sum_to(in.joint.func(), in.enc);
    CondKernel k = aux_kernel(in);
    // entries a numerical optimizer left at roundoff level are off the support
    std::vector<double> kv = k.func().values();
    for (auto& v : kv)
        if (v <= support_tol) v = 0.0;
    k = CondKernel(k.from(), k.to(), kv, true);
    const std::size_t nc = k.cols();
    double worst = 0.0;
    for (const auto& v : tangent_basis(k)) {
        double s = 0.0;
        for (std::size_t c = 0; c < v.delta.size(); ++c) {
            double w = v.delta[c];
            if (w == 0.0) continue;
            double pr = pe[c / nc];
            if (pr == 0.0) continue;
            s += pr * w * h[c];
        }
        worst = std::max(worst, std::fabs(s));
    }
    return worst;
}

// ============================================================================
// Binary-Hamming Wyner-Ziv
// ============================================================================

namespace {

void check_family(double p, double beta, double gamma) {
    require(p > 0.0 && p < 0.5, ErrorKind::Domain, "crossover must lie in (0,1/2)");
    require(beta >= 0.0 && beta <= 0.5, ErrorKind::Domain, "β must lie in [0,1/2]");
    require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::Domain, "γ must lie in [0,1]");
}

double xlog(double a, double b) { return a > 0.0 ? a * std::log2(a / b) : 0.0; }

}  // namespace

void wz_binary_eval(double p, double beta, double gamma, double& objective, double& distortion) {
    // P(x,u) and P(y,u) for X uniform, Y = X xor Bern(p)
    const double pu[2][3] = {{gamma * (1 - beta), gamma * beta, 1 - gamma}, {gamma * beta, gamma * (1 - beta), 1 - gamma}};
    double mu[3] = {0, 0, 0};
    for (int u = 0; u < 3; ++u) mu[u] = 0.5 * (pu[0][u] + pu[1][u]);
    double ix = 0.0, iy = 0.0, ed = 0.0;
    for (int x = 0; x < 2; ++x)
        for (int u = 0; u < 3; ++u) ix += xlog(0.5 * pu[x][u], 0.5 * mu[u]);
    for (int y = 0; y < 2; ++y)
        for (int u = 0; u < 3; ++u) {
            double pyu = 0.0;
            for (int x = 0; x < 2; ++x) pyu += 0.5 * pu[x][u] * (x == y ? 1 - p : p);
            iy += xlog(pyu, 0.5 * mu[u]);
        }
    for (int x = 0; x < 2; ++x)
        for (int u = 0; u < 3; ++u)
            for (int y = 0; y < 2; ++y) {
                double w = 0.5 * pu[x][u] * (x == y ? 1 - p : p);
                int z = u < 2 ? u : y;
                ed += w * (z != x);
            }
    objective = ix - iy;
    distortion = ed;
}

WZBinaryInstance wz_binary_family(double p, double beta, double gamma, double lambda) {
    check_family(p, beta, gamma);
    Alphabet X = Alphabet::range("X", 2), Y = Alphabet::range("Y", 2), U = Alphabet::range("U", 3),
             Z = Alphabet::range("Z", 2);
    ProbVec px = make_pmf(X, {0.5, 0.5});
    CondKernel side = make_kernel(X, Y, {{1 - p, p}, {p, 1 - p}});
    CondKernel aux = make_kernel(X, U, {{gamma * (1 - beta), gamma * beta, 1 - gamma},
                                        {gamma * beta, gamma * (1 - beta), 1 - gamma}});
    DetMap z{{U, Y}, Z, {0, 0, 1, 1, 0, 1}};
    RealFunc d({X, Z}, {0, 1, 1, 0});
    WZBinaryInstance w;
    w.p = p;
    w.beta = beta;
    w.gamma = gamma;
    w.inst = make_wyner_ziv(px, side, aux, z, d, 0.0, lambda);
    w.expected_d = expect(w.inst.joint, w.inst.d[0]);
    w.inst.D = {w.expected_d};
    w.objective = mutual_information(w.inst.joint, {"U"}, {"X"}) - mutual_information(w.inst.joint, {"U"}, {"Y"});
    CondKernel zk({U, Y}, {Z}, {1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 0, 1});
    w.joint_xyuz = semidirect(w.inst.joint, zk);
    return w;
}

double wz_f(double p, double D) {
    if (D >= p) return 0.0;
    double pd = p * (1 - D) + D * (1 - p);
    return binary_entropy(pd) - binary_entropy(D);
}

double wz_tangent_point(double p) {
    require(p > 0.0 && p < 0.5, ErrorKind::Domain, "crossover must lie in (0,1/2)");
    // the tangent from (p,0) touches f where f(b)/(p-b) is smallest
    auto g = [p](double b) { return wz_f(p, b) / (p - b); };
    const int N = 20000;
    double best = 0.0, gb = g(0.0);
    for (int i = 1; i < N; ++i) {
        double b = p * i / N;
        double v = g(b);
        if (v < gb) gb = v, best = b;
    }
    double a = std::max(0.0, best - p / N), c = std::min(p * (1 - 1e-12), best + p / N);
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = c - r * (c - a), x2 = a + r * (c - a), f1 = g(x1), f2 = g(x2);
    for (int it = 0; it < 200 && c - a > 1e-15; ++it) {
        if (f1 < f2) c = x2, x2 = x1, f2 = f1, x1 = c - r * (c - a), f1 = g(x1);
        else a = x1, x1 = x2, f1 = f2, x2 = a + r * (c - a), f2 = g(x2);
    }
    double b = 0.5 * (a + c);
    return g(b) <= gb ? b : best;
}

double wz_rate_formula(double p, double D) {
    require(p > 0.0 && p < 0.5, ErrorKind::Domain, "crossover must lie in (0,1/2)");
    require(D >= 0.0, ErrorKind::Domain, "distortion level must be nonnegative");
    if (D >= p) return 0.0;
    double bc = wz_tangent_point(p);
    if (D <= bc) return wz_f(p, D);
    return (p - D) * wz_f(p, bc) / (p - bc);
}

namespace {

struct GridBest {
    double obj = std::numeric_limits<double>::infinity();
    double beta = 0, gamma = 0;
    std::size_t idx = std::numeric_limits<std::size_t>::max();
};

// rate along the active constraint with β free
double constrained_rate(double p, double D, double beta) {
    double gamma = std::min(1.0, (p - D) / (p - beta));
    double o, d;
    wz_binary_eval(p, beta, gamma, o, d);
    return o;
}

GridBest grid_search(double p, double D, double step, bool parallel) {
    const std::size_t nb = static_cast<std::size_t>(std::floor(0.5 / step + 1e-9)) + 1;
    const std::size_t ng = static_cast<std::size_t>(std::floor(1.0 / step + 1e-9)) + 1;
    std::vector<GridBest> per(nb);
    auto scan = [&](std::size_t i) {
        GridBest b;
        double beta = std::min(0.5, i * step);
        for (std::size_t k = 0; k < ng; ++k) {
            double gamma = std::min(1.0, k * step), o, d;
            wz_binary_eval(p, beta, gamma, o, d);
            if (d > D + 1e-15) continue;
            if (o < b.obj) b = {o, beta, gamma, i * ng + k};
        }
        per[i] = b;
    };
    if (parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(nb); ++i) scan(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < nb; ++i) scan(i);
    }
    // fixed reduction order: smallest objective, ties to the smallest flat index
    GridBest best;
    for (const auto& b : per)
        if (b.obj < best.obj || (b.obj == best.obj && b.idx < best.idx)) best = b;
    return best;
}

WZBinaryOpt optimize_at(double p, double D, const WZOptOptions& opt) {
    GridBest g = grid_search(p, D, opt.grid_step, opt.parallel);
    require(std::isfinite(g.obj), ErrorKind::Domain, "no feasible grid point");
    // refine on the active constraint E[d] = D, parameterized by β ∈ [0, D];
    // the window slides while the minimizer sits on its edge
    const double w = 5 * opt.grid_step;
    double center = std::min(D, g.beta), a = 0, c = 0;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int shift = 0; shift < 200; ++shift) {
        a = std::max(0.0, center - w);
        c = std::min(D, center + w);
        double lo = a, hi = c;
        double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
        double f1 = constrained_rate(p, D, x1), f2 = constrained_rate(p, D, x2);
        while (hi - lo > opt.refine_tol * 1e-2) {
            if (f1 < f2) hi = x2, x2 = x1, f2 = f1, x1 = hi - r * (hi - lo), f1 = constrained_rate(p, D, x1);
            else lo = x1, x1 = x2, f1 = f2, x2 = lo + r * (hi - lo), f2 = constrained_rate(p, D, x2);
        }
        double m = 0.5 * (lo + hi);
        bool at_edge = (m - a < 0.1 * w && a > 0.0) || (c - m < 0.1 * w && c < D);
        center = m;
        if (!at_edge) break;
    }
    a = c = center;
    WZBinaryOpt out;
    double b = 0.5 * (a + c), fb = constrained_rate(p, D, b);
    // endpoints of the constraint (β = D is γ = 1) are candidates too
    for (double cand : {0.0, D}) {
        double fc = constrained_rate(p, D, cand);
        if (fc < fb) fb = fc, b = cand;
    }
    if (fb <= g.obj) {
        out.rate = fb;
        out.beta = b;
        out.gamma = std::min(1.0, (p - D) / (p - b));
    } else {
        out.rate = g.obj;
        out.beta = g.beta;
        out.gamma = g.gamma;
    }
    out.rate = std::max(0.0, out.rate);
    return out;
}

}  // namespace

WZBinaryOpt wz_binary_optimize(double p, double D, const WZOptOptions& opt) {
    require(p > 0.0 && p < 0.5, ErrorKind::Domain, "crossover must lie in (0,1/2)");
    require(D > 0.0 && D < p, ErrorKind::Domain, "distortion level must lie in (0,p)");
    WZBinaryOpt out = optimize_at(p, D, opt);
    const double h = opt.fd_step;
    double lo = std::max(D - h, 0.5 * D), hi = std::min(D + h, 0.5 * (D + p));
    double rlo = optimize_at(p, lo, opt).rate, rhi = optimize_at(p, hi, opt).rate;
    out.lambda = (rlo - rhi) / (hi - lo);
    out.on_envelope = std::fabs(wz_f(p, D) - wz_rate_formula(p, D)) <= 1e-9;
    return out;
}

// ============================================================================
// Capacity-cost
// ============================================================================

namespace {

struct CCState {
    std::vector<double> P, q, dv;  // dv[x] = D(W_x||q) - mu*c(x)
    double I = 0, cost = 0;
    double upper = 0;  // max_x dv[x]
    int iterations = 0;
    double lagr_gap() const { return upper - (I - mu_used * cost); }
    double mu_used = 0;
};

struct CCProblem {
    const std::vector<double>& W;
    const std::vector<double>& c;
    std::size_t nx, ny;
};

CCState cc_eval(const CCProblem& pr, double mu, const std::vector<double>& P) {
    CCState s;
    s.P = P;
    s.mu_used = mu;
    s.q.assign(pr.ny, 0.0);
    s.dv.assign(pr.nx, 0.0);
    for (std::size_t x = 0; x < pr.nx; ++x)
        for (std::size_t y = 0; y < pr.ny; ++y) s.q[y] += P[x] * pr.W[x * pr.ny + y];
    s.upper = -std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < pr.nx; ++x) {
        double k = 0.0;
        for (std::size_t y = 0; y < pr.ny; ++y) k += xlog(pr.W[x * pr.ny + y], s.q[y]);
        s.dv[x] = k - mu * pr.c[x];
        s.upper = std::max(s.upper, s.dv[x]);
        if (P[x] > 0.0) s.I += P[x] * k, s.cost += P[x] * pr.c[x];
    }
    return s;
}

// alternating maximization at fixed multiplier; stops at `tol` or the iteration cap
CCState cc_fixed(const CCProblem& pr, double mu, std::vector<double> P, double tol, int max_iter) {
    CCState s;
    for (int it = 1; it <= max_iter; ++it) {
        s = cc_eval(pr, mu, P);
        s.iterations = it;
        if (s.lagr_gap() < tol) break;
        double z = 0.0;
        for (std::size_t x = 0; x < pr.nx; ++x) z += (P[x] *= std::exp2(s.dv[x] - s.upper));
        for (auto& v : P) v /= z;
    }
    return s;
}

// Active-set Newton solve of the KKT system. With `binding` the cost holds with
// equality and mu is an unknown; otherwise mu = 0.
bool cc_newton(const CCProblem& pr, double D, bool binding, std::vector<double>& P, double& mu) {
    const std::size_t nx = pr.nx, ny = pr.ny;
    std::vector<std::size_t> S;
    for (std::size_t x = 0; x < nx; ++x)
        if (P[x] > 1e-10) S.push_back(x);
    if (!binding) mu = 0.0;
    for (std::size_t round = 0; round < 4 * nx + 4; ++round) {
        const std::size_t k = S.size(), m = k + 1 + (binding ? 1 : 0);
        double nu = 0.0;
        {
            CCState s = cc_eval(pr, mu, P);
            for (auto x : S) nu += P[x] * s.dv[x];
        }
        auto residual = [&](const std::vector<double>& Pv, double muv, double nuv, Eigen::VectorXd& F) {
            CCState s = cc_eval(pr, muv, Pv);
            F.resize(m);
            double sp = 0.0, sc = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                F(i) = s.dv[S[i]] - nuv;
                sp += Pv[S[i]];
                sc += Pv[S[i]] * pr.c[S[i]];
            }
            F(k) = sp - 1.0;
            if (binding) F(k + 1) = sc - D;
            return s;
        };
        Eigen::VectorXd F;
        for (int it = 0; it < 200; ++it) {
            CCState s = residual(P, mu, nu, F);
            if (F.lpNorm<Eigen::Infinity>() < 1e-14) break;
            Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    double v = 0.0;
                    for (std::size_t y = 0; y < ny; ++y)
                        if (s.q[y] > 0.0) v += pr.W[S[i] * ny + y] * pr.W[S[j] * ny + y] / s.q[y];
                    J(i, j) = -v / std::log(2.0);
                }
                J(i, k) = -1.0;  // ν
                if (binding) J(i, k + 1) = -pr.c[S[i]];
                J(k, i) = 1.0;
                if (binding) J(k + 1, i) = pr.c[S[i]];
            }
            Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(-F);
            double t = 1.0;
            for (std::size_t i = 0; i < k; ++i)
                if (step(i) < 0.0) t = std::min(t, -0.995 * P[S[i]] / step(i));
            for (std::size_t i = 0; i < k; ++i) P[S[i]] += t * step(i);
            nu += t * step(k);
            if (binding) mu += t * step(k + 1);
        }
        // drop inputs Newton pushed to the boundary, add inputs that violate KKT
        std::vector<std::size_t> keep;
        for (auto x : S)
            if (P[x] > 1e-13) keep.push_back(x);
            else P[x] = 0.0;
        if (keep.size() != S.size()) {
            S = keep;
            continue;
        }
        CCState s = cc_eval(pr, mu, P);
        std::size_t add = nx;
        double worst = nu + 1e-13;
        for (std::size_t x = 0; x < nx; ++x)
            if (P[x] == 0.0 && s.dv[x] > worst) worst = s.dv[x], add = x;
        if (add == nx) return F.lpNorm<Eigen::Infinity>() < 1e-11;
        P[add] = 1e-6;
        S.push_back(add);
        std::sort(S.begin(), S.end());
    }
    return false;
}

}  // namespace

CapacityCost capacity_cost(const CondKernel& channel, const RealFunc& cost, double D, const CCOptions& opt) {
    require(channel.from().size() == 1, ErrorKind::Shape, "channel input must be a single factor");
    require(factor_names(cost.domain()) == factor_names(channel.from()), ErrorKind::Shape,
            "cost must be a function of the channel input");
    const std::size_t nx = channel.rows(), ny = channel.cols();
    CCProblem pr{channel.func().values(), cost.values(), nx, ny};
    const std::vector<double>& c = cost.values();
    double cmin = *std::min_element(c.begin(), c.end());
    require(D > cmin, ErrorKind::Domain, "cost level must exceed the cheapest input's cost");

    int total = 0;
    auto finish = [&](const std::vector<double>& P, double mu, bool binding) {
        CCState s = cc_eval(pr, mu, P);
        CapacityCost out;
        out.capacity = std::max(0.0, s.I);
        out.input = ProbVec(channel.from(), P, true);
        out.output = ProbVec(channel.to(), s.q, true);
        out.lambda = mu;
        // C(D) ≤ max_x [D(W_x||q) - mu c(x)] + mu D for every q
        out.gap = std::max(0.0, s.upper + mu * D - s.I);
        out.cost_binding = binding;
        out.iterations = total;
        if (out.gap > opt.gap_tol)
            fail(ErrorKind::Convergence, "capacity iteration did not converge; gap " + std::to_string(out.gap));
        return out;
    };
    // a loose alternating pass locates the optimum, Newton on the KKT system polishes it
    const double loose = 1e-7;
    const int cap = std::min(opt.max_iter, 20000);
    auto run = [&](double mu, const std::vector<double>& P0) {
        CCState s = cc_fixed(pr, mu, P0, loose, cap);
        total += s.iterations;
        return s;
    };
    std::vector<double> P0(nx, 1.0 / nx);
    CCState s0 = run(0.0, P0);
    if (s0.cost <= D + 1e-9) {
        std::vector<double> P = s0.P;
        double mu = 0.0;
        if (cc_newton(pr, D, false, P, mu) && cc_eval(pr, 0.0, P).cost <= D + 1e-12) return finish(P, 0.0, false);
        if (s0.cost <= D) {
            CCState s = cc_fixed(pr, 0.0, s0.P, opt.gap_tol * 1e-2, opt.max_iter);
            if (s.cost <= D) return finish(s.P, 0.0, false);
        }
    }

    double lo = 0.0, hi = 1.0;
    CCState shi = run(hi, s0.P);
    while (shi.cost > D) {
        lo = hi;
        hi *= 2.0;
        require(hi < 1e7, ErrorKind::Domain, "cost level too close to the cheapest input");
        shi = run(hi, shi.P);
    }
    for (int k = 0; k < 100 && hi - lo > 1e-9 * std::max(1.0, hi); ++k) {
        double mid = 0.5 * (lo + hi);
        CCState sm = run(mid, shi.P);
        if (sm.cost > D) lo = mid;
        else hi = mid, shi = sm;
    }
    std::vector<double> P = shi.P;
    double mu = 0.5 * (lo + hi);
    if (cc_newton(pr, D, true, P, mu) && mu >= 0.0) return finish(P, mu, true);
    fail(ErrorKind::Convergence, "capacity-cost KKT solve did not converge");
}

}  // namespace secord
