#include "secord/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace secord {

namespace {

constexpr std::uint64_t kStreamSource = 0x736f75726365ULL;
constexpr std::uint64_t kStreamShuffle = 0x7368756666ULL;

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit(std::uint64_t h) { return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53; }

std::size_t draw(const double* p, std::size_t k, double u) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < k; ++i) {
        acc += p[i];
        if (u < acc) return i;
    }
    // land on the last symbol with positive mass
    for (std::size_t i = k; i-- > 0;)
        if (p[i] > 0.0) return i;
    return k - 1;
}

double uniform01(std::mt19937_64& rng) { return unit(rng()); }

double log2_multinomial(std::size_t n, const std::size_t* counts, std::size_t k) {
    double s = std::lgamma(static_cast<double>(n) + 1.0);
    for (std::size_t i = 0; i < k; ++i) s -= std::lgamma(static_cast<double>(counts[i]) + 1.0);
    return s / std::log(2.0);
}

std::uint64_t checked_pow(std::uint64_t base, long n, const std::string& what) {
    std::uint64_t v = 1;
    for (long i = 0; i < n; ++i) {
        if (base > 1 && v > kEnumerationLimit / base)
            fail(ErrorKind::EnumerationBound, what + " exceeds the enumeration bound 2^24");
        v *= base;
    }
    return v;
}

// per-row largest-remainder rounding of the perturbed kernel
struct GCCRows {
    bool feasible = true;
    std::vector<std::size_t> counts;  // ns x nc
    double log2K = 0.0;               // log2 of the conditional type class size
    std::string why;
};

GCCRows gcc_rows(const std::vector<double>& ps, const std::vector<double>& pcs, std::size_t ns, std::size_t nc,
                 const Zeta& zeta, const std::vector<std::size_t>& s_counts, long n) {
    GCCRows r;
    r.counts.assign(ns * nc, 0);
    const double rn = std::sqrt(static_cast<double>(n));
    std::vector<double> G(ns);
    for (std::size_t s = 0; s < ns; ++s) {
        if (s_counts[s] > 0 && ps[s] == 0.0)
            fail(ErrorKind::InvalidInput, "input sequence uses symbol " + std::to_string(s) + " outside the support");
        G[s] = rn * (static_cast<double>(s_counts[s]) / static_cast<double>(n) - ps[s]);
    }
    std::vector<double> z = zeta.is_zero() ? std::vector<double>(ns * nc, 0.0) : zeta(G, ns * nc);
    std::vector<double> row(nc), rem(nc);
    std::vector<std::size_t> order(nc);
    for (std::size_t s = 0; s < ns; ++s) {
        const std::size_t ms = s_counts[s];
        if (ms == 0) continue;
        const double ph = static_cast<double>(ms) / static_cast<double>(n);
        double sum = 0.0;
        for (std::size_t c = 0; c < nc; ++c) {
            double base = pcs[s * nc + c];
            double v = base + ps[s] / (rn * ph) * z[s * nc + c];
            if (base == 0.0 && std::fabs(z[s * nc + c]) > 1e-12)
                fail(ErrorKind::InvalidInput, "deviation function leaves the support of the kernel");
            row[c] = v;
            sum += v;
        }
        if (std::fabs(sum - 1.0) > 1e-9) fail(ErrorKind::InvalidInput, "deviation function is not tangent");
        for (std::size_t c = 0; c < nc; ++c)
            if (row[c] < -1e-12) {
                r.feasible = false;
                std::ostringstream os;
                os << "perturbed conditional type has a negative entry in row " << s << ": [";
                for (std::size_t k = 0; k < nc; ++k) os << (k ? ", " : "") << row[k];
                os << "]";
                r.why = os.str();
                return r;
            }
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < nc; ++c) {
            double t = std::max(0.0, row[c]) * static_cast<double>(ms);
            double f = std::floor(t + 1e-9);
            r.counts[s * nc + c] = static_cast<std::size_t>(f);
            rem[c] = row[c] > 0.0 ? t - f : -1.0;
            assigned += r.counts[s * nc + c];
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
        for (std::size_t k = 0; assigned < ms; ++k, ++assigned) r.counts[s * nc + order[k % nc]] += 1;
        while (assigned > ms) {
            // floors can only overshoot through the 1e-9 guard; take back from the smallest remainders
            for (std::size_t k = nc; k-- > 0 && assigned > ms;)
                if (r.counts[s * nc + order[k]] > 0) r.counts[s * nc + order[k]] -= 1, --assigned;
        }
        r.log2K += log2_multinomial(ms, &r.counts[s * nc], nc);
    }
    return r;
}

// depth-first walk over a conditional type class; leaf(rank, product of w)
template <class Leaf>
struct ClassWalk {
    const std::uint32_t* seq;
    std::size_t n, nc;
    std::size_t* rem;   // ns x nc remaining counts
    const double* w;    // n x nc position weights, or null
    Leaf& leaf;

    void go(std::size_t i, std::uint64_t rank, double prod) {
        if (i == n) {
            leaf(rank, prod);
            return;
        }
        const std::size_t s = seq[i];
        for (std::size_t c = 0; c < nc; ++c) {
            std::size_t& k = rem[s * nc + c];
            if (k == 0) continue;
            double p = prod;
            if (w) {
                if (w[i * nc + c] == 0.0) continue;
                p *= w[i * nc + c];
            }
            --k;
            go(i + 1, rank * nc + c, p);
            ++k;
        }
    }
};

template <class Leaf>
void walk_class(const std::uint32_t* seq, std::size_t n, std::size_t nc, const std::vector<std::size_t>& counts,
                const double* w, Leaf&& leaf) {
    std::vector<std::size_t> rem(counts);
    ClassWalk<Leaf> cw{seq, n, nc, rem.data(), w, leaf};
    cw.go(0, 0, 1.0);
}

std::vector<double> kernel_rows(const CondKernel& k) { return k.func().values(); }

}  // namespace

std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return splitmix(splitmix(splitmix(seed) ^ stream) ^ counter);
}

// ============================================================================
// Codebook and Poisson matching
// ============================================================================

Codebook::Codebook(std::uint64_t seed, std::uint64_t slice, std::uint64_t messages, std::uint64_t sequences)
    : seed_(seed), slice_(slice), messages_(messages), sequences_(sequences) {
    require(messages >= 1 && sequences >= 1, ErrorKind::InvalidInput, "codebook needs at least one index");
    if (messages > kEnumerationLimit / sequences)
        fail(ErrorKind::EnumerationBound, "codebook index count exceeds the enumeration bound 2^24");
}

double Codebook::score(std::uint64_t m, std::uint64_t rank) const {
    return -std::log(unit(counter_hash(seed_, slice_, m * sequences_ + rank)));
}

PMLChoice pml_select(const Codebook& cb, const std::vector<std::pair<std::uint64_t, double>>& weights,
                     std::optional<std::uint64_t> m) {
    double total = 0.0;
    for (const auto& [r, w] : weights) {
        require(w >= 0.0 && std::isfinite(w), ErrorKind::InvalidInput, "selection weights must be nonnegative");
        require(r < cb.sequences(), ErrorKind::InvalidInput, "sequence rank outside the codebook");
        total += w;
    }
    require(total <= 1.0 + 1e-9, ErrorKind::InvalidInput, "selection weights sum above 1");
    require(total > 0.0, ErrorKind::InvalidInput, "all selection weights are zero");
    if (m) require(*m < cb.messages(), ErrorKind::InvalidInput, "message index outside the codebook");
    PMLChoice best;
    double bv = std::numeric_limits<double>::infinity();
    const std::uint64_t m0 = m ? *m : 0, m1 = m ? *m + 1 : cb.messages();
    for (std::uint64_t mm = m0; mm < m1; ++mm)
        for (const auto& [r, w] : weights) {
            if (w == 0.0) continue;
            double v = cb.score(mm, r) / w;
            if (v < bv) bv = v, best = {mm, r};
        }
    return best;
}

PMLChoice pml_select(const Codebook& cb, const std::vector<double>& weights, std::optional<std::uint64_t> m) {
    std::vector<std::pair<std::uint64_t, double>> sparse;
    for (std::size_t r = 0; r < weights.size(); ++r)
        if (weights[r] != 0.0) sparse.emplace_back(r, weights[r]);
    return pml_select(cb, sparse, m);
}

Interval wilson_interval(std::uint64_t k, std::uint64_t n, double z) {
    if (n == 0) return {0.0, 1.0};
    const double nn = static_cast<double>(n), ph = static_cast<double>(k) / nn, z2 = z * z;
    const double den = 1.0 + z2 / nn;
    const double center = (ph + z2 / (2.0 * nn)) / den;
    const double half = z / den * std::sqrt(ph * (1.0 - ph) / nn + z2 / (4.0 * nn * nn));
    return {k == 0 ? 0.0 : std::max(0.0, center - half), k == n ? 1.0 : std::min(1.0, center + half)};
}

PMLCheck pml_bound_check(const ProbVec& joint, std::uint64_t trials, std::uint64_t seed) {
    require(joint.domain().size() == 3, ErrorKind::Shape, "joint must have factors (X, U, Y)");
    const std::size_t nx = joint.domain()[0].size(), nu = joint.domain()[1].size(), ny = joint.domain()[2].size();
    const auto& P = joint.mass();
    std::vector<double> px(nx, 0.0), pxu(nx * nu, 0.0), py(ny, 0.0), puy(nu * ny, 0.0);
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t u = 0; u < nu; ++u)
            for (std::size_t y = 0; y < ny; ++y) {
                double v = P[(x * nu + u) * ny + y];
                px[x] += v;
                pxu[x * nu + u] += v;
                py[y] += v;
                puy[u * ny + y] += v;
            }
    // P(u|x), P(y|x,u), P(u|y)
    std::vector<double> u_x(nx * nu), y_xu(nx * nu * ny), u_y(ny * nu);
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t u = 0; u < nu; ++u) {
            u_x[x * nu + u] = px[x] > 0.0 ? pxu[x * nu + u] / px[x] : 0.0;
            for (std::size_t y = 0; y < ny; ++y)
                y_xu[(x * nu + u) * ny + y] =
                    pxu[x * nu + u] > 0.0 ? P[(x * nu + u) * ny + y] / pxu[x * nu + u] : 0.0;
        }
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t u = 0; u < nu; ++u) u_y[y * nu + u] = py[y] > 0.0 ? puy[u * ny + y] / py[y] : 0.0;

    PMLCheck out;
    out.trials = trials;
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t u = 0; u < nu; ++u)
            for (std::size_t y = 0; y < ny; ++y) {
                double v = P[(x * nu + u) * ny + y];
                if (v > 0.0) out.mean_bound += v * std::min(1.0, u_x[x * nu + u] / u_y[y * nu + u]);
            }

    const std::int64_t T = static_cast<std::int64_t>(trials);
    std::vector<std::uint32_t> cell(trials);
    std::vector<std::uint8_t> miss(trials);
    std::vector<double> bnd(trials);
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < T; ++t) {
        const auto tt = static_cast<std::uint64_t>(t);
        std::mt19937_64 rng(counter_hash(seed, kStreamSource, tt));
        Codebook cb(seed, tt, 1, nu);
        std::size_t x = draw(px.data(), nx, uniform01(rng));
        std::vector<std::pair<std::uint64_t, double>> w;
        for (std::size_t u = 0; u < nu; ++u)
            if (u_x[x * nu + u] > 0.0) w.emplace_back(u, u_x[x * nu + u]);
        std::size_t u = pml_select(cb, w).sequence;
        std::size_t y = draw(&y_xu[(x * nu + u) * ny], ny, uniform01(rng));
        w.clear();
        for (std::size_t v = 0; v < nu; ++v)
            if (u_y[y * nu + v] > 0.0) w.emplace_back(v, u_y[y * nu + v]);
        std::size_t uh = pml_select(cb, w).sequence;
        cell[tt] = static_cast<std::uint32_t>((x * nu + u) * ny + y);
        miss[tt] = uh != u;
        bnd[tt] = std::min(1.0, u_x[x * nu + u] / u_y[y * nu + u]);
    }
    out.joint_freq.assign(nx * nu * ny, 0.0);
    double bs = 0.0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        out.mismatches += miss[t];
        out.joint_freq[cell[t]] += 1.0;
        bs += bnd[t];
    }
    if (trials) {
        for (auto& f : out.joint_freq) f /= static_cast<double>(trials);
        out.mc_bound = bs / static_cast<double>(trials);
        out.empirical = static_cast<double>(out.mismatches) / static_cast<double>(trials);
    }
    out.wilson = wilson_interval(out.mismatches, trials);
    out.pass = out.empirical <= out.mean_bound + 3.0 * out.wilson.radius();
    return out;
}

// ============================================================================
// GCC codeword law
// ============================================================================

namespace {

void check_gcc_args(const ProbVec& px, const CondKernel& pux, const std::vector<std::size_t>& x_seq) {
    require(pux.rows() == px.size(), ErrorKind::Shape, "kernel rows must match the input alphabet");
    require(!x_seq.empty(), ErrorKind::InvalidInput, "empty input sequence");
    for (auto x : x_seq) require(x < px.size(), ErrorKind::InvalidInput, "input symbol out of range");
}

std::vector<std::size_t> seq_counts(const std::vector<std::size_t>& seq, std::size_t k) {
    std::vector<std::size_t> c(k, 0);
    for (auto v : seq) ++c[v];
    return c;
}

}  // namespace

std::vector<std::vector<std::size_t>> gcc_counts(const ProbVec& px, const CondKernel& pux, const Zeta& zeta,
                                                 const std::vector<std::size_t>& x_seq) {
    check_gcc_args(px, pux, x_seq);
    const std::size_t ns = px.size(), nc = pux.cols();
    GCCRows r = gcc_rows(px.mass(), kernel_rows(pux), ns, nc, zeta, seq_counts(x_seq, ns),
                         static_cast<long>(x_seq.size()));
    if (!r.feasible) fail(ErrorKind::Infeasible, r.why);
    std::vector<std::vector<std::size_t>> out(ns, std::vector<std::size_t>(nc));
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t c = 0; c < nc; ++c) out[s][c] = r.counts[s * nc + c];
    return out;
}

std::vector<std::size_t> gcc_sample(const ProbVec& px, const CondKernel& pux, const Zeta& zeta,
                                    const std::vector<std::size_t>& x_seq, std::uint64_t seed) {
    auto counts = gcc_counts(px, pux, zeta, x_seq);
    std::mt19937_64 rng(counter_hash(seed, kStreamShuffle, 0));
    std::vector<std::size_t> u(x_seq.size());
    for (std::size_t s = 0; s < counts.size(); ++s) {
        std::vector<std::size_t> labels;
        for (std::size_t c = 0; c < counts[s].size(); ++c) labels.insert(labels.end(), counts[s][c], c);
        std::shuffle(labels.begin(), labels.end(), rng);
        std::size_t k = 0;
        for (std::size_t i = 0; i < x_seq.size(); ++i)
            if (x_seq[i] == s) u[i] = labels[k++];
    }
    return u;
}

std::vector<std::size_t> gcc_sample(const ProbVec& joint, const Zeta& zeta, const std::vector<std::size_t>& x_seq,
                                    std::uint64_t seed) {
    require(joint.domain().size() >= 2, ErrorKind::Shape, "joint needs an input factor and an output factor");
    std::vector<std::string> names = factor_names(joint.domain());
    std::vector<std::string> rest(names.begin() + 1, names.end());
    ProbVec px = joint.marginal({names[0]});
    CondKernel k = conditional(joint, rest, {names[0]});
    return gcc_sample(px, k, zeta, x_seq, seed);
}

double gcc_deviation(const ProbVec& px, const CondKernel& pux, const Zeta& zeta, const std::vector<std::size_t>& x_seq,
                     const std::vector<std::size_t>& u_seq) {
    check_gcc_args(px, pux, x_seq);
    require(u_seq.size() == x_seq.size(), ErrorKind::Shape, "sequence lengths differ");
    const std::size_t ns = px.size(), nc = pux.cols();
    const double n = static_cast<double>(x_seq.size()), rn = std::sqrt(n);
    std::vector<double> gx(ns, 0.0), gxu(ns * nc, 0.0);
    for (std::size_t i = 0; i < x_seq.size(); ++i) {
        require(u_seq[i] < nc, ErrorKind::InvalidInput, "output symbol out of range");
        gx[x_seq[i]] += 1.0;
        gxu[x_seq[i] * nc + u_seq[i]] += 1.0;
    }
    for (std::size_t s = 0; s < ns; ++s) gx[s] = rn * (gx[s] / n - px[s]);
    std::vector<double> z = zeta.is_zero() ? std::vector<double>(ns * nc, 0.0) : zeta(gx, ns * nc);
    double ss = 0.0;
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t c = 0; c < nc; ++c) {
            double g = rn * (gxu[s * nc + c] / n - px[s] * pux(s, c));
            double pred = gx[s] * pux(s, c) + px[s] * z[s * nc + c];
            ss += (g - pred) * (g - pred);
        }
    return std::sqrt(ss);
}

// ============================================================================
// Simulation
// ============================================================================

Scheme scheme_of(Variant v) {
    switch (v) {
        case Variant::LossySC: return Scheme::LossySC;
        case Variant::WynerZiv: return Scheme::WynerZiv;
        case Variant::ChannelCost: return Scheme::ChannelCost;
        case Variant::GelfandPinsker: return Scheme::GelfandPinsker;
        default: fail(ErrorKind::Unsupported, variant_name(v) + " is not simulated");
    }
}

namespace {

struct Model {
    std::size_t ns = 1, nc = 1, no = 1;
    std::vector<double> ps, pcs;
    std::vector<double> wo;    // (s*nc+c)*no+o : W(o|s,c)
    std::vector<double> dbar;  // d on the same cells
    std::vector<double> cbar;  // s*nc+c : cost for the channel schemes
    std::vector<double> tail;  // s*nc+c : E[d | s,c] for greedy tail symbols
    double D = 0.0;
    bool source = true;
};

std::size_t flat_size(const CodingInstance& in, const std::vector<std::string>& names) {
    std::size_t k = 1;
    for (const auto& nm : names) {
        int f = find_factor(in.joint.domain(), nm);
        require(f >= 0, ErrorKind::Shape, "variable " + nm + " missing from joint");
        k *= in.joint.domain()[static_cast<std::size_t>(f)].size();
    }
    return k;
}

Model build_model(const SimConfig& cfg) {
    const CodingInstance& in = cfg.instance;
    validate_instance(in);
    require(scheme_of(in.variant) == cfg.scheme, ErrorKind::InvalidInput, "instance variant does not match the scheme");
    require(in.d.size() == 1, ErrorKind::Unsupported, "simulation takes a single distortion or cost function");
    Model m;
    m.source = cfg.scheme == Scheme::LossySC || cfg.scheme == Scheme::WynerZiv;
    m.D = in.D[0];
    m.ns = flat_size(in, in.enc);
    m.nc = flat_size(in, in.aux);
    m.no = flat_size(in, in.side);
    std::vector<std::string> all = in.enc;
    all.insert(all.end(), in.aux.begin(), in.aux.end());
    all.insert(all.end(), in.side.begin(), in.side.end());
    require(all.size() == in.joint.domain().size(), ErrorKind::Unsupported,
            "simulation needs every variable of the joint to be encoder, codeword or decoder side");
    const std::vector<double> p = permute(in.joint.func(), all).values();
    const std::vector<double> d = permute(broadcast(in.d[0], in.joint.domain()), all).values();
    const std::size_t ns = m.ns, nc = m.nc, no = m.no;
    m.ps.assign(ns, 0.0);
    m.pcs.assign(ns * nc, 0.0);
    m.wo.assign(ns * nc * no, 0.0);
    m.dbar = d;
    m.cbar.assign(ns * nc, 0.0);
    m.tail.assign(ns * nc, 0.0);
    std::vector<double> psc(ns * nc, 0.0);
    for (std::size_t i = 0; i < ns * nc; ++i)
        for (std::size_t o = 0; o < no; ++o) psc[i] += p[i * no + o];
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t c = 0; c < nc; ++c) m.ps[s] += psc[s * nc + c];
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t c = 0; c < nc; ++c) {
            const std::size_t i = s * nc + c;
            m.pcs[i] = m.ps[s] > 0.0 ? psc[i] / m.ps[s] : 1.0 / static_cast<double>(nc);
            double e = 0.0, e2 = 0.0;
            for (std::size_t o = 0; o < no; ++o) {
                m.wo[i * no + o] = psc[i] > 0.0 ? p[i * no + o] / psc[i] : 0.0;
                e += m.wo[i * no + o] * d[i * no + o];
                e2 += m.wo[i * no + o] * d[i * no + o] * d[i * no + o];
            }
            m.tail[i] = e;
            m.cbar[i] = e;
            if (!m.source && psc[i] > 0.0)
                require(e2 - e * e <= 1e-12 * std::max(1.0, e2), ErrorKind::Unsupported,
                        "cost must be a function of the encoder's variables");
        }
    return m;
}

struct Source {
    std::vector<std::uint32_t> seq;
    double coef = 0.0;  // P^n(s) / K(s)
    const GCCRows* rows = nullptr;
};

struct Trial {
    std::uint64_t m = 0, c = 0, o = 0, mhat = 0;
    bool infeasible = false, replaced = false, error = false, enc_excess = false;
    double log_k = 0.0;
    double dist = 0.0;
    double tail_sum = 0.0;
    double bound = 1.0;
    double log_dec = -std::numeric_limits<double>::infinity(), log_marg = 0.0;
};

std::vector<std::size_t> type_of(const std::uint32_t* seq, long n, std::size_t k) {
    std::vector<std::size_t> c(k, 0);
    for (long i = 0; i < n; ++i) ++c[seq[i]];
    return c;
}

// every composition of n into k parts
void compositions(std::size_t k, std::size_t n, std::vector<std::size_t>& cur,
                  std::vector<std::vector<std::size_t>>& out) {
    if (cur.size() + 1 == k) {
        cur.push_back(n);
        out.push_back(cur);
        cur.pop_back();
        return;
    }
    for (std::size_t v = 0; v <= n; ++v) {
        cur.push_back(v);
        compositions(k, n - v, cur, out);
        cur.pop_back();
    }
}

// unnormalized P(c|o) over all codeword ranks (o = null: the marginal)
void decoder_weights(const Model& m, const std::vector<Source>& src, long n, const std::uint32_t* o_seq,
                     std::vector<double>& out, std::vector<double>& posw) {
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t nc = m.nc, no = m.no;
    for (const Source& s : src) {
        const double* w = nullptr;
        if (o_seq) {
            for (long i = 0; i < n; ++i)
                for (std::size_t c = 0; c < nc; ++c)
                    posw[static_cast<std::size_t>(i) * nc + c] = m.wo[(s.seq[i] * nc + c) * no + o_seq[i]];
            w = posw.data();
        }
        const double coef = s.coef;
        walk_class(s.seq.data(), static_cast<std::size_t>(n), nc, s.rows->counts, w,
                   [&](std::uint64_t r, double prod) { out[r] += coef * prod; });
    }
}

void unrank(std::uint64_t r, std::size_t base, long n, std::uint32_t* out) {
    for (long i = n; i-- > 0;) {
        out[i] = static_cast<std::uint32_t>(r % base);
        r /= base;
    }
}

}  // namespace

SimResult simulate(const SimConfig& cfg) {
    require(cfg.n >= 1, ErrorKind::InvalidInput, "blocklength must be at least 1");
    require(cfg.rate >= 0.0 && std::isfinite(cfg.rate), ErrorKind::InvalidInput, "rate must be finite and ≥ 0");
    require(cfg.delta >= 0.0, ErrorKind::InvalidInput, "slack must be nonnegative");
    const Model M = build_model(cfg);
    const long n = cfg.n;
    const std::size_t ns = M.ns, nc = M.nc, no = M.no;

    const double mv = std::exp2(static_cast<double>(n) * cfg.rate);
    if (mv > static_cast<double>(kEnumerationLimit))
        fail(ErrorKind::EnumerationBound, "message count exceeds the enumeration bound 2^24");
    const auto messages = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::floor(mv * (1.0 + 1e-12))));
    const std::uint64_t codewords = checked_pow(nc, n, "codeword space");
    if (messages > kEnumerationLimit / codewords)
        fail(ErrorKind::EnumerationBound, "⌊2^{nR}⌋·|U|^n exceeds the enumeration bound 2^24");
    const std::uint64_t sources = checked_pow(ns, n, "source sequence space");
    checked_pow(no, n, "observation space");

    SimResult res;
    res.trials = cfg.trials;
    res.messages = messages;
    res.codewords = codewords;
    const bool tail = M.source && !cfg.delta_slack && cfg.tail_repair;
    res.tail_symbols = tail ? static_cast<int>(std::ceil(std::log2(static_cast<double>(n)))) : 0;
    res.empirical_rate_used = std::log2(static_cast<double>(messages)) / static_cast<double>(n) +
                              res.tail_symbols * std::log2(static_cast<double>(nc)) / static_cast<double>(n);
    const double thr = cfg.delta_slack ? M.D + cfg.delta / static_cast<double>(n) : M.D;
    res.threshold = thr;
    const double tol = 1e-9;

    // GCC rows for every input type
    std::map<std::vector<std::size_t>, GCCRows> rows;
    {
        std::vector<std::vector<std::size_t>> comps;
        std::vector<std::size_t> cur;
        compositions(ns, static_cast<std::size_t>(n), cur, comps);
        for (auto& t : comps) {
            bool ok = true;
            for (std::size_t s = 0; s < ns; ++s)
                if (t[s] > 0 && M.ps[s] == 0.0) ok = false;
            if (ok) rows.emplace(t, gcc_rows(M.ps, M.pcs, ns, nc, cfg.zeta, t, n));
        }
    }
    // feasible source sequences with their weight in the codeword law
    std::vector<Source> src;
    for (std::uint64_t r = 0; r < sources; ++r) {
        Source s;
        s.seq.resize(static_cast<std::size_t>(n));
        unrank(r, ns, n, s.seq.data());
        double lp = 0.0;
        bool ok = true;
        for (long i = 0; i < n && ok; ++i) {
            if (M.ps[s.seq[i]] == 0.0) ok = false;
            else lp += std::log2(M.ps[s.seq[i]]);
        }
        if (!ok) continue;
        auto it = rows.find(type_of(s.seq.data(), n, ns));
        if (!it->second.feasible) continue;
        s.rows = &it->second;
        s.coef = std::exp2(lp - it->second.log2K);
        src.push_back(std::move(s));
    }
    std::vector<double> marg(codewords, 0.0);
    {
        std::vector<double> posw;
        decoder_weights(M, src, n, nullptr, marg, posw);
        double z = std::accumulate(marg.begin(), marg.end(), 0.0);
        if (z > 0.0)
            for (auto& v : marg) v /= z;
    }

    const std::uint64_t T = cfg.trials;
    const auto nn = static_cast<std::size_t>(n);
    std::vector<Trial> tr(T);
    std::vector<std::uint32_t> S(T * nn), C(T * nn), O(T * nn);
    const auto Ti = static_cast<std::int64_t>(T);

    // phase 1: source, encoder, channel
#pragma omp parallel for schedule(dynamic, 64) if (cfg.parallel)
    for (std::int64_t ti = 0; ti < Ti; ++ti) {
        const auto t = static_cast<std::uint64_t>(ti);
        Trial& x = tr[t];
        std::mt19937_64 rng(counter_hash(cfg.seed, kStreamSource, t));
        std::uint32_t* s = &S[t * nn];
        std::uint32_t* c = &C[t * nn];
        std::uint32_t* o = &O[t * nn];
        if (!M.source) x.m = rng() % messages;
        for (std::size_t i = 0; i < nn; ++i) s[i] = static_cast<std::uint32_t>(draw(M.ps.data(), ns, uniform01(rng)));
        const GCCRows& R = rows.at(type_of(s, n, ns));
        if (!R.feasible) {
            x.infeasible = true;
            x.error = true;
            continue;
        }
        x.log_k = R.log2K;
        Codebook cb(cfg.seed, t, messages, codewords);
        std::vector<std::uint64_t> cls;
        walk_class(s, nn, nc, R.counts, nullptr, [&](std::uint64_t r, double) { cls.push_back(r); });
        double bv = std::numeric_limits<double>::infinity();
        const std::uint64_t m0 = M.source ? 0 : x.m, m1 = M.source ? messages : x.m + 1;
        for (std::uint64_t mm = m0; mm < m1; ++mm)
            for (std::uint64_t r : cls) {
                double v = cb.score(mm, r);
                if (v < bv) bv = v, x.m = mm, x.c = r;
            }
        unrank(x.c, nc, n, c);
        if (!M.source) {
            double cost = 0.0;
            for (std::size_t i = 0; i < nn; ++i) cost += M.cbar[s[i] * nc + c[i]];
            x.dist = cost / static_cast<double>(n);
            if (cost > thr * static_cast<double>(n) + tol) {
                // send the cheapest admissible symbols instead
                x.replaced = true;
                for (std::size_t i = 0; i < nn; ++i) {
                    std::size_t bc = 0;
                    double bcost = std::numeric_limits<double>::infinity();
                    for (std::size_t k = 0; k < nc; ++k)
                        if (M.pcs[s[i] * nc + k] > 0.0 && M.cbar[s[i] * nc + k] < bcost) bcost = M.cbar[s[i] * nc + k], bc = k;
                    c[i] = static_cast<std::uint32_t>(bc);
                }
            }
        }
        std::uint64_t orank = 0;
        for (std::size_t i = 0; i < nn; ++i) {
            o[i] = static_cast<std::uint32_t>(draw(&M.wo[(s[i] * nc + c[i]) * no], no, uniform01(rng)));
            orank = orank * no + o[i];
        }
        x.o = orank;
        if (M.source) {
            double dsum = 0.0;
            for (std::size_t i = 0; i < nn; ++i) dsum += M.dbar[(s[i] * nc + c[i]) * no + o[i]];
            if (tail) {
                for (int k = 0; k < res.tail_symbols; ++k) {
                    std::size_t st = draw(M.ps.data(), ns, uniform01(rng));
                    std::size_t bc = 0;
                    double bd = std::numeric_limits<double>::infinity();
                    for (std::size_t cc = 0; cc < nc; ++cc)
                        if (M.pcs[st * nc + cc] > 0.0 && M.tail[st * nc + cc] < bd) bd = M.tail[st * nc + cc], bc = cc;
                    std::size_t ot = draw(&M.wo[(st * nc + bc) * no], no, uniform01(rng));
                    x.tail_sum += M.dbar[(st * nc + bc) * no + ot];
                }
                x.enc_excess = dsum + x.tail_sum > M.D * static_cast<double>(n + res.tail_symbols) + tol;
            } else {
                x.enc_excess = dsum > thr * static_cast<double>(n) + tol;
            }
        }
    }

    // phase 2: decode, grouped by observation
    std::vector<std::uint64_t> order;
    order.reserve(T);
    for (std::uint64_t t = 0; t < T; ++t)
        if (!tr[t].infeasible) order.push_back(t);
    std::stable_sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) { return tr[a].o < tr[b].o; });
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < order.size(); ++i)
        if (i == 0 || tr[order[i]].o != tr[order[i - 1]].o) starts.push_back(i);
    starts.push_back(order.size());
    const auto G = static_cast<std::int64_t>(starts.size()) - 1;
    const double lmsg = std::log2(static_cast<double>(messages));

#pragma omp parallel if (cfg.parallel)
    {
        std::vector<double> wv(codewords), posw(nn * nc);
        std::vector<std::uint64_t> nz;
#pragma omp for schedule(dynamic, 1)
        for (std::int64_t g = 0; g < G; ++g) {
            const std::uint64_t t0 = order[starts[static_cast<std::size_t>(g)]];
            if (no == 1) {
                wv = marg;
            } else {
                decoder_weights(M, src, n, &O[t0 * nn], wv, posw);
                double z = std::accumulate(wv.begin(), wv.end(), 0.0);
                if (z > 0.0)
                    for (auto& v : wv) v /= z;
            }
            nz.clear();
            for (std::uint64_t r = 0; r < codewords; ++r)
                if (wv[r] > 0.0) nz.push_back(r);
            for (std::size_t k = starts[static_cast<std::size_t>(g)]; k < starts[static_cast<std::size_t>(g) + 1]; ++k) {
                const std::uint64_t t = order[k];
                Trial& x = tr[t];
                Codebook cb(cfg.seed, t, messages, codewords);
                std::uint64_t chat = 0, mhat = 0;
                bool found = false;
                double bv = std::numeric_limits<double>::infinity();
                const std::uint64_t m0 = M.source ? x.m : 0, m1 = M.source ? x.m + 1 : messages;
                for (std::uint64_t mm = m0; mm < m1; ++mm)
                    for (std::uint64_t r : nz) {
                        double v = cb.score(mm, r) / wv[r];
                        if (v < bv) bv = v, chat = r, mhat = mm, found = true;
                    }
                x.mhat = mhat;
                x.log_dec = wv[x.c] > 0.0 ? std::log2(wv[x.c]) : -std::numeric_limits<double>::infinity();
                x.log_marg = marg[x.c] > 0.0 ? std::log2(marg[x.c]) : -std::numeric_limits<double>::infinity();
                const double lpe = -x.log_k;
                if (M.source) {
                    double term = std::exp2(lpe - lmsg - x.log_dec);
                    x.bound = std::min(1.0, (x.enc_excess ? 1.0 : 0.0) + term);
                    std::uint32_t* c = &C[t * nn];
                    const std::uint32_t* s = &S[t * nn];
                    const std::uint32_t* o = &O[t * nn];
                    if (found) unrank(chat, nc, n, c);
                    double dsum = 0.0;
                    for (std::size_t i = 0; i < nn; ++i) dsum += M.dbar[(s[i] * nc + c[i]) * no + o[i]];
                    x.dist = dsum / static_cast<double>(n);
                    if (!found) x.error = true;
                    else if (tail) x.error = dsum + x.tail_sum > M.D * static_cast<double>(n + res.tail_symbols) + tol;
                    else x.error = dsum > thr * static_cast<double>(n) + tol;
                } else {
                    double term = std::exp2(lmsg + lpe - x.log_dec);
                    x.bound = x.replaced ? 1.0 : std::min(1.0, term);
                    x.error = !found || mhat != x.m;
                }
            }
        }
    }

    double bs = 0.0, bs2 = 0.0;
    for (std::uint64_t t = 0; t < T; ++t) {
        const Trial& x = tr[t];
        res.errors += x.error;
        res.infeasible += x.infeasible;
        bs += x.bound;
        bs2 += x.bound * x.bound;
    }
    if (T) {
        const double Td = static_cast<double>(T);
        res.pml_bound = bs / Td;
        res.pml_bound_se = T > 1 ? std::sqrt(std::max(0.0, (bs2 / Td - res.pml_bound * res.pml_bound) / (Td - 1.0))) : 0.0;
    }
    res.wilson = wilson_interval(res.errors, T);
    if (cfg.trace) {
        res.log.resize(T);
        for (std::uint64_t t = 0; t < T; ++t) {
            const Trial& x = tr[t];
            TrialLog& l = res.log[t];
            l.trial = t;
            l.infeasible = x.infeasible;
            l.error = x.error;
            l.replaced = x.replaced;
            l.log_p_enc = -x.log_k;
            l.log_p_dec = x.log_dec;
            l.log_p_marg = x.log_marg;
            l.distortion = x.dist;
            l.bound = x.bound;
        }
    }
    return res;
}

// ============================================================================
// Type-deviation diagnostics
// ============================================================================

namespace {

// cdf of N(0, sigma^2); for sigma = 0 the step, with `left` asking for its left limit
double phi_scaled(double t, double sigma, bool left = false) {
    if (sigma <= 0.0) return (left ? t > 0.0 : t >= 0.0) ? 1.0 : 0.0;
    return normal_cdf(t / sigma);
}

// Lévy distance between the empirical law of `x` (sorted) and N(0, sigma^2)
double levy_distance(const std::vector<double>& x, double sigma) {
    const std::size_t N = x.size();
    if (N == 0) return 0.0;
    // distinct points with left and right limits of the empirical cdf
    std::vector<double> t, a, b;
    for (std::size_t i = 0; i < N;) {
        std::size_t j = i;
        while (j < N && x[j] == x[i]) ++j;
        t.push_back(x[i]);
        a.push_back(static_cast<double>(i) / static_cast<double>(N));
        b.push_back(static_cast<double>(j) / static_cast<double>(N));
        i = j;
    }
    auto ok = [&](double e) {
        for (std::size_t k = 0; k < t.size(); ++k) {
            if (phi_scaled(t[k] - e, sigma, true) - e > a[k] + 1e-15) return false;
            if (b[k] > phi_scaled(t[k] + e, sigma) + e + 1e-15) return false;
        }
        return true;
    };
    if (ok(0.0)) return 0.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 48; ++it) {
        double mid = 0.5 * (lo + hi);
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

std::vector<Eigen::VectorXd> directions(std::size_t k, std::size_t random, std::uint64_t seed) {
    std::vector<Eigen::VectorXd> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(Eigen::VectorXd::Unit(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)));
    std::mt19937_64 rng(counter_hash(seed, 0x646972ULL, 0));
    std::normal_distribution<double> nd;
    for (std::size_t r = 0; r < random; ++r) {
        Eigen::VectorXd v(k);
        for (std::size_t i = 0; i < k; ++i) v[static_cast<Eigen::Index>(i)] = nd(rng);
        if (v.norm() > 0.0) out.push_back(v / v.norm());
    }
    return out;
}

double estimate_rows(const Eigen::MatrixXd& G, const std::vector<Eigen::Index>& idx, const Eigen::MatrixXd& cov,
                     const std::vector<Eigen::VectorXd>& dirs) {
    double best = 0.0;
    std::vector<double> proj(idx.size());
    for (const auto& v : dirs) {
        for (std::size_t i = 0; i < idx.size(); ++i) proj[i] = G.row(idx[i]).dot(v);
        std::sort(proj.begin(), proj.end());
        double var = v.dot(cov * v);
        best = std::max(best, levy_distance(proj, std::sqrt(std::max(0.0, var))));
    }
    return best;
}

Eigen::MatrixXd nm_matrix(const ProbVec& p) {
    const auto k = static_cast<Eigen::Index>(p.size());
    Eigen::MatrixXd c(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j)
            c(i, j) = (i == j ? p[static_cast<std::size_t>(i)] : 0.0) - p[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(j)];
    return c;
}

// multinomial counts by sequential binomials
std::vector<std::size_t> draw_type(const std::vector<double>& p, long n, std::mt19937_64& rng) {
    std::vector<std::size_t> c(p.size(), 0);
    long left = n;
    double mass = 1.0;
    for (std::size_t i = 0; i + 1 < p.size() && left > 0; ++i) {
        if (p[i] <= 0.0) continue;
        double q = mass > 0.0 ? std::min(1.0, p[i] / mass) : 1.0;
        std::binomial_distribution<long> bd(left, q);
        long k = bd(rng);
        c[i] = static_cast<std::size_t>(k);
        left -= k;
        mass -= p[i];
    }
    if (left > 0) {
        for (std::size_t i = p.size(); i-- > 0;)
            if (p[i] > 0.0) {
                c[i] += static_cast<std::size_t>(left);
                break;
            }
    }
    return c;
}

}  // namespace

double lp_halfspace_estimate(const ProbVec& source, const Eigen::MatrixXd& G, std::size_t random_directions,
                             std::uint64_t seed) {
    require(G.cols() == static_cast<Eigen::Index>(source.size()), ErrorKind::Shape, "draws must have one column per symbol");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(G.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    return estimate_rows(G, idx, nm_matrix(source), directions(source.size(), random_directions, seed));
}

std::vector<TypeDeviationRow> type_deviation_stats(const ProbVec& source, const std::vector<long>& n_list,
                                                   std::size_t trials, std::uint64_t seed,
                                                   const TypeDeviationOptions& opt) {
    require(trials >= 1, ErrorKind::InvalidInput, "need at least one trial");
    const std::size_t k = source.size();
    const Eigen::MatrixXd cov = nm_matrix(source);
    const auto dirs = directions(k, opt.random_directions, seed);
    std::vector<TypeDeviationRow> out;
    for (long n : n_list) {
        require(n >= 1, ErrorKind::InvalidInput, "blocklength must be at least 1");
        TypeDeviationRow row;
        row.n = n;
        row.G.resize(static_cast<Eigen::Index>(trials), static_cast<Eigen::Index>(k));
        const double rn = std::sqrt(static_cast<double>(n));
        const auto T = static_cast<std::int64_t>(trials);
#pragma omp parallel for schedule(static)
        for (std::int64_t t = 0; t < T; ++t) {
            std::mt19937_64 rng(counter_hash(seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t)));
            auto c = draw_type(source.mass(), n, rng);
            for (std::size_t i = 0; i < k; ++i)
                row.G(t, static_cast<Eigen::Index>(i)) = rn * (static_cast<double>(c[i]) / static_cast<double>(n) - source[i]);
        }
        std::vector<Eigen::Index> idx(trials);
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        row.lp_estimate = estimate_rows(row.G, idx, cov, dirs);
        row.scaled = row.lp_estimate * rn;
        if (opt.bootstrap > 1) {
            std::vector<double> reps(opt.bootstrap);
            const auto B = static_cast<std::int64_t>(opt.bootstrap);
#pragma omp parallel for schedule(dynamic, 1)
            for (std::int64_t b = 0; b < B; ++b) {
                std::mt19937_64 rng(counter_hash(seed ^ 0x626f6f74ULL, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(b)));
                std::uniform_int_distribution<Eigen::Index> pick(0, static_cast<Eigen::Index>(trials) - 1);
                std::vector<Eigen::Index> ri(trials);
                for (auto& v : ri) v = pick(rng);
                reps[static_cast<std::size_t>(b)] = estimate_rows(row.G, ri, cov, dirs) * rn;
            }
            double m = std::accumulate(reps.begin(), reps.end(), 0.0) / static_cast<double>(reps.size());
            double v = 0.0;
            for (double r : reps) v += (r - m) * (r - m);
            row.bootstrap_radius = 1.959963984540054 * std::sqrt(v / static_cast<double>(reps.size() - 1));
        }
        if (!opt.keep_samples) row.G.resize(0, static_cast<Eigen::Index>(k));
        out.push_back(std::move(row));
    }
    return out;
}

KSResult ks_normal(std::vector<double> x, double sigma) {
    require(!x.empty(), ErrorKind::InvalidInput, "no samples");
    require(sigma > 0.0, ErrorKind::InvalidInput, "sigma must be positive");
    std::sort(x.begin(), x.end());
    const double N = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double F = normal_cdf(x[i] / sigma);
        d = std::max({d, static_cast<double>(i + 1) / N - F, F - static_cast<double>(i) / N});
    }
    const double sn = std::sqrt(N);
    const double lam = (sn + 0.12 + 0.11 / sn) * d;
    double q = 0.0;
    if (lam < 0.2) {
        q = 1.0;
    } else {
        for (int k = 1; k <= 100; ++k) {
            double term = std::exp(-2.0 * k * k * lam * lam);
            q += (k % 2 ? 2.0 : -2.0) * term;
            if (term < 1e-16) break;
        }
    }
    return {d, std::clamp(q, 0.0, 1.0)};
}

SelfInfoResult self_info_residual(const ProbVec& p_target, long n, std::size_t trials, std::uint64_t seed,
                                  ExchangeableSource source, double shift) {
    require(n >= 1, ErrorKind::InvalidInput, "blocklength must be at least 1");
    require(shift >= 0.0 && shift <= 1.0, ErrorKind::InvalidInput, "shift must lie in [0, 1]");
    const std::size_t k = p_target.size();
    const std::vector<double>& p = p_target.mass();
    const double nd = static_cast<double>(n), rn = std::sqrt(nd), ln2 = std::log(2.0);
    SelfInfoResult out;
    out.n = n;
    out.residual.assign(trials, 0.0);

    if (source == ExchangeableSource::TypeClass) {
        // nearest type by largest remainder; the law is uniform on its class
        std::vector<std::size_t> t(k, 0);
        std::vector<double> rem(k);
        std::size_t used = 0;
        for (std::size_t i = 0; i < k; ++i) {
            double v = p[i] * nd;
            t[i] = static_cast<std::size_t>(std::floor(v));
            rem[i] = p[i] > 0.0 ? v - std::floor(v) : -1.0;
            used += t[i];
        }
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
        for (std::size_t j = 0; used < static_cast<std::size_t>(n); ++j, ++used) t[order[j % k]] += 1;
        double h = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            if (t[i] > 0) {
                double q = static_cast<double>(t[i]) / nd;
                h -= q * std::log2(q);
            }
        // every sequence of the class has ι = log|T|; the center is the type itself so G = 0
        const double r = log2_multinomial(static_cast<std::size_t>(n), t.data(), k) - nd * h;
        std::fill(out.residual.begin(), out.residual.end(), n == 1 ? 0.0 : r);
    } else {
        std::vector<double> pp = p, pm = p;
        if (source == ExchangeableSource::TypeMixture) {
            std::size_t a = k, b = k;
            for (std::size_t i = 0; i < k; ++i)
                if (p[i] > 0.0 && (a == k || p[i] > p[a])) a = i;
            for (std::size_t i = 0; i < k; ++i)
                if (p[i] > 0.0 && i != a && (b == k || p[i] < p[b])) b = i;
            if (a != k && b != k && a != b) {
                double v = shift * p[b] / rn;
                pp[a] += v, pp[b] -= v;
                pm[a] -= v, pm[b] += v;
            }
        }
        const auto T = static_cast<std::int64_t>(trials);
#pragma omp parallel for schedule(static)
        for (std::int64_t tt = 0; tt < T; ++tt) {
            std::mt19937_64 rng(counter_hash(seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(tt)));
            const bool plus = source == ExchangeableSource::TypeMixture ? (rng() >> 63) != 0 : true;
            auto c = draw_type(plus ? pp : pm, n, rng);
            // ln of the sequence probability under each component
            double lp = 0.0, lm = 0.0, approx = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                if (c[i] == 0) continue;
                const double ci = static_cast<double>(c[i]);
                lp += pp[i] > 0.0 ? ci * std::log(pp[i]) : -std::numeric_limits<double>::infinity();
                lm += pm[i] > 0.0 ? ci * std::log(pm[i]) : -std::numeric_limits<double>::infinity();
                approx -= ci * std::log2(p[i]);  // nH(p) + √n<G, ι_p>
            }
            double iota;
            if (source == ExchangeableSource::IID) {
                iota = -lp / ln2;
            } else {
                double mx = std::max(lp, lm);
                iota = -(mx + std::log(0.5 * std::exp(lp - mx) + 0.5 * std::exp(lm - mx))) / ln2;
            }
            out.residual[static_cast<std::size_t>(tt)] = iota - approx;
        }
    }
    if (n > 1 && trials > 0) {
        std::vector<double> a(trials);
        for (std::size_t i = 0; i < trials; ++i) a[i] = std::fabs(out.residual[i]) / std::log2(nd);
        std::sort(a.begin(), a.end());
        std::size_t idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(trials))) - 1;
        out.q95_ratio = a[std::min(idx, trials - 1)];
    }
    return out;
}

}  // namespace secord
