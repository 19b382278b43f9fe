#include "secord/probkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace secord {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNormTol = 1e-12;

// Σ p·h over cells with p>0; NaN in h under positive mass is an error
double weighted_sum(const std::vector<double>& p, const std::vector<double>& h) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (std::isnan(h[i])) fail(ErrorKind::InvalidInput, "unusable value read under positive mass");
        s += p[i] * h[i];
    }
    return s;
}

}  // namespace

// ============================================================================
// Alphabet / Domain
// ============================================================================

Alphabet::Alphabet(std::string var, std::vector<std::string> syms) : name(std::move(var)), symbols(std::move(syms)) {
    require(!symbols.empty(), ErrorKind::InvalidInput, "alphabet " + name + " is empty");
    std::set<std::string> seen(symbols.begin(), symbols.end());
    require(seen.size() == symbols.size(), ErrorKind::InvalidInput, "alphabet " + name + " has duplicate labels");
}

Alphabet Alphabet::range(const std::string& var, std::size_t n) {
    std::vector<std::string> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = std::to_string(i);
    return Alphabet(var, s);
}

std::size_t Alphabet::index(const std::string& sym) const {
    auto it = std::find(symbols.begin(), symbols.end(), sym);
    if (it == symbols.end()) fail(ErrorKind::InvalidInput, "symbol '" + sym + "' not in alphabet " + name);
    return static_cast<std::size_t>(it - symbols.begin());
}

std::size_t domain_size(const Domain& d) {
    std::size_t n = 1;
    for (const auto& a : d) n *= a.size();
    return n;
}

int find_factor(const Domain& d, const std::string& name) {
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i].name == name) return static_cast<int>(i);
    return -1;
}

Domain union_domain(const Domain& f, const Domain& g) {
    Domain out = f;
    for (const auto& a : g) {
        int k = find_factor(f, a.name);
        if (k < 0) {
            out.push_back(a);
        } else if (f[k].size() != a.size()) {
            fail(ErrorKind::Shape, "factor " + a.name + " has mismatched sizes");
        }
    }
    return out;
}

bool is_subdomain(const Domain& sub, const Domain& full) {
    for (const auto& a : sub) {
        int k = find_factor(full, a.name);
        if (k < 0 || full[k].size() != a.size()) return false;
    }
    return true;
}

Domain select_factors(const Domain& d, const std::vector<std::string>& names) {
    Domain out;
    for (const auto& n : names) {
        int k = find_factor(d, n);
        if (k < 0) fail(ErrorKind::Shape, "factor " + n + " not present");
        out.push_back(d[k]);
    }
    return out;
}

std::vector<std::string> factor_names(const Domain& d) {
    std::vector<std::string> out;
    for (const auto& a : d) out.push_back(a.name);
    return out;
}

// ============================================================================
// RealFunc
// ============================================================================

RealFunc::RealFunc(Domain domain, std::vector<double> values) : domain_(std::move(domain)), values_(std::move(values)) {
    std::set<std::string> names;
    for (const auto& a : domain_) names.insert(a.name);
    require(names.size() == domain_.size(), ErrorKind::Shape, "repeated factor in domain");
    require(values_.size() == domain_size(domain_), ErrorKind::Shape, "value count does not match domain");
}

RealFunc RealFunc::constant(Domain domain, double v) {
    std::size_t n = domain_size(domain);
    return RealFunc(std::move(domain), std::vector<double>(n, v));
}

std::size_t RealFunc::flat(const std::vector<std::size_t>& idx) const {
    require(idx.size() == domain_.size(), ErrorKind::Shape, "index rank mismatch");
    std::size_t k = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] < domain_[i].size(), ErrorKind::Shape, "index out of range");
        k = k * domain_[i].size() + idx[i];
    }
    return k;
}

std::vector<std::size_t> RealFunc::unflat(std::size_t k) const {
    std::vector<std::size_t> idx(domain_.size());
    for (std::size_t i = domain_.size(); i-- > 0;) {
        idx[i] = k % domain_[i].size();
        k /= domain_[i].size();
    }
    return idx;
}

std::vector<std::size_t> projection_map(const Domain& target, const Domain& sub) {
    std::vector<int> pos(sub.size());
    for (std::size_t j = 0; j < sub.size(); ++j) {
        pos[j] = find_factor(target, sub[j].name);
        if (pos[j] < 0) fail(ErrorKind::Shape, "factor " + sub[j].name + " missing from target domain");
        if (target[pos[j]].size() != sub[j].size()) fail(ErrorKind::Shape, "factor " + sub[j].name + " size mismatch");
    }
    std::size_t n = domain_size(target);
    std::vector<std::size_t> out(n);
    std::vector<std::size_t> idx(target.size(), 0);
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t k = 0;
        for (std::size_t j = 0; j < sub.size(); ++j) k = k * sub[j].size() + idx[pos[j]];
        out[c] = k;
        for (std::size_t i = target.size(); i-- > 0;) {
            if (++idx[i] < target[i].size()) break;
            idx[i] = 0;
        }
    }
    return out;
}

RealFunc broadcast(const RealFunc& g, const Domain& target) {
    auto proj = projection_map(target, g.domain());
    std::vector<double> v(proj.size());
    for (std::size_t i = 0; i < proj.size(); ++i) v[i] = g[proj[i]];
    return RealFunc(target, std::move(v));
}

RealFunc combine(const RealFunc& f, const RealFunc& g, const std::function<double(double, double)>& op) {
    Domain d = union_domain(f.domain(), g.domain());
    RealFunc fb = broadcast(f, d), gb = broadcast(g, d);
    std::vector<double> v(fb.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = op(fb[i], gb[i]);
    return RealFunc(d, std::move(v));
}

RealFunc operator+(const RealFunc& f, const RealFunc& g) { return combine(f, g, std::plus<double>()); }
RealFunc operator-(const RealFunc& f, const RealFunc& g) { return combine(f, g, std::minus<double>()); }
RealFunc operator*(const RealFunc& f, const RealFunc& g) { return combine(f, g, std::multiplies<double>()); }

RealFunc operator*(double a, const RealFunc& f) {
    return map(f, [a](double x) { return a * x; });
}

RealFunc map(const RealFunc& f, const std::function<double(double)>& op) {
    std::vector<double> v(f.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = op(f[i]);
    return RealFunc(f.domain(), std::move(v));
}

RealFunc permute(const RealFunc& f, const std::vector<std::string>& names) {
    require(names.size() == f.domain().size(), ErrorKind::Shape, "permute needs every factor");
    Domain d = select_factors(f.domain(), names);
    return broadcast(f, d);
}

RealFunc sum_to(const RealFunc& f, const std::vector<std::string>& keep) {
    Domain d = select_factors(f.domain(), keep);
    auto proj = projection_map(f.domain(), d);
    std::vector<double> v(domain_size(d), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) v[proj[i]] += f[i];
    return RealFunc(d, std::move(v));
}

// ============================================================================
// ProbVec / CondKernel
// ============================================================================

namespace {

void check_mass(std::vector<double>& m, bool renormalize, const std::string& what) {
    double s = 0.0;
    for (double& x : m) {
        if (!std::isfinite(x)) fail(ErrorKind::InvalidInput, what + ": non-finite entry");
        if (x < 0.0) {
            if (renormalize && x > -1e-12) x = 0.0;
            else fail(ErrorKind::InvalidInput, what + ": negative entry");
        }
        s += x;
    }
    if (renormalize) {
        require(s > 0.0, ErrorKind::InvalidInput, what + ": zero total mass");
        for (double& x : m) x /= s;
    } else if (std::fabs(s - 1.0) > kNormTol) {
        fail(ErrorKind::InvalidInput, what + ": entries sum to " + std::to_string(s));
    }
}

}  // namespace

ProbVec::ProbVec(Domain domain, std::vector<double> mass, bool renormalize) {
    check_mass(mass, renormalize, "pmf");
    f_ = RealFunc(std::move(domain), std::move(mass));
}

ProbVec::ProbVec(const RealFunc& f, bool renormalize) : ProbVec(f.domain(), f.values(), renormalize) {}

std::vector<std::size_t> ProbVec::support() const {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < size(); ++i)
        if (f_[i] > 0.0) s.push_back(i);
    return s;
}

ProbVec ProbVec::marginal(const std::vector<std::string>& names) const {
    return ProbVec(sum_to(f_, names), true);
}

CondKernel::CondKernel(Domain from, Domain to, std::vector<double> rows, bool renormalize)
    : from_(std::move(from)), to_(std::move(to)) {
    Domain d = from_;
    d.insert(d.end(), to_.begin(), to_.end());
    std::size_t nr = domain_size(from_), nc = domain_size(to_);
    require(rows.size() == nr * nc, ErrorKind::Shape, "kernel value count does not match alphabets");
    for (std::size_t r = 0; r < nr; ++r) {
        std::vector<double> row(rows.begin() + r * nc, rows.begin() + (r + 1) * nc);
        check_mass(row, renormalize, "kernel row " + std::to_string(r));
        std::copy(row.begin(), row.end(), rows.begin() + r * nc);
    }
    f_ = RealFunc(std::move(d), std::move(rows));
}

CondKernel conditional(const ProbVec& joint, const std::vector<std::string>& target,
                       const std::vector<std::string>& given) {
    std::vector<std::string> all = given;
    all.insert(all.end(), target.begin(), target.end());
    RealFunc pj = sum_to(joint.func(), all);
    Domain from = select_factors(joint.domain(), given), to = select_factors(joint.domain(), target);
    std::size_t nr = domain_size(from), nc = domain_size(to);
    std::vector<double> v = pj.values();
    for (std::size_t r = 0; r < nr; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < nc; ++c) s += v[r * nc + c];
        for (std::size_t c = 0; c < nc; ++c) v[r * nc + c] = s > 0.0 ? v[r * nc + c] / s : 1.0 / nc;
    }
    return CondKernel(from, to, std::move(v), true);
}

CondKernel make_kernel(const Alphabet& from, const Alphabet& to, const std::vector<std::vector<double>>& rows) {
    std::vector<double> v;
    require(rows.size() == from.size(), ErrorKind::Shape, "kernel row count");
    for (const auto& r : rows) {
        require(r.size() == to.size(), ErrorKind::Shape, "kernel column count");
        v.insert(v.end(), r.begin(), r.end());
    }
    return CondKernel({from}, {to}, std::move(v));
}

ProbVec make_pmf(const Alphabet& a, const std::vector<double>& p) { return ProbVec(Domain{a}, p); }

RealFunc semidirect(const RealFunc& f, const RealFunc& g) { return f * g; }

ProbVec semidirect(const ProbVec& p, const CondKernel& k) {
    require(is_subdomain(k.from(), p.domain()), ErrorKind::Shape, "kernel conditions on factors absent from the pmf");
    for (const auto& a : k.to())
        require(find_factor(p.domain(), a.name) < 0, ErrorKind::Shape, "kernel output " + a.name + " already present");
    return ProbVec(p.func() * k.func(), true);
}

double inner(const RealFunc& f, const RealFunc& g) {
    Domain d;
    if (is_subdomain(g.domain(), f.domain())) d = f.domain();
    else if (is_subdomain(f.domain(), g.domain())) d = g.domain();
    else fail(ErrorKind::Shape, "inner product of functions on incompatible domains");
    RealFunc fb = broadcast(f, d), gb = broadcast(g, d);
    double s = 0.0;
    for (std::size_t i = 0; i < fb.size(); ++i) {
        double a = fb[i], b = gb[i];
        if (std::isnan(a) || std::isnan(b)) {
            if ((std::isnan(a) && b != 0.0) || (std::isnan(b) && a != 0.0))
                fail(ErrorKind::InvalidInput, "unusable value read under a non-dominated measure");
            continue;
        }
        s += a * b;
    }
    return s;
}

std::vector<double> empirical_counts(const std::vector<std::size_t>& seq, std::size_t alphabet_size) {
    std::vector<double> c(alphabet_size, 0.0);
    for (std::size_t s : seq) {
        require(s < alphabet_size, ErrorKind::InvalidInput, "symbol index outside alphabet");
        c[s] += 1.0;
    }
    return c;
}

ProbVec empirical_type(const std::vector<std::size_t>& seq, const Alphabet& a) {
    require(!seq.empty(), ErrorKind::InvalidInput, "empty sequence has no type");
    auto c = empirical_counts(seq, a.size());
    for (double& x : c) x /= static_cast<double>(seq.size());
    return ProbVec(Domain{a}, c, true);
}

ProbVec empirical_type(const std::vector<std::string>& seq, const Alphabet& a) {
    std::vector<std::size_t> idx;
    idx.reserve(seq.size());
    for (const auto& s : seq) idx.push_back(a.index(s));
    return empirical_type(idx, a);
}

bool is_dominated(const std::vector<double>& f, const std::vector<double>& g) {
    require(f.size() == g.size(), ErrorKind::Shape, "domination check on different shapes");
    for (std::size_t i = 0; i < f.size(); ++i)
        if (g[i] == 0.0 && f[i] != 0.0) return false;
    return true;
}

// ============================================================================
// Tangent space
// ============================================================================

void TangentVec::validate(double tol) const {
    require(delta.domain() == base.domain(), ErrorKind::Shape, "tangent vector shape differs from base");
    require(is_dominated(delta.values(), base.values()), ErrorKind::InvalidInput, "tangent vector not dominated by base");
    std::size_t nr = 1;
    for (std::size_t i = 0; i < row_factors; ++i) nr *= base.domain()[i].size();
    std::size_t nc = base.size() / nr;
    for (std::size_t r = 0; r < nr; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < nc; ++c) s += delta[r * nc + c];
        require(std::fabs(s) <= tol, ErrorKind::InvalidInput, "tangent row does not sum to zero");
    }
}

namespace {

std::vector<TangentVec> row_basis(const RealFunc& base, std::size_t row_factors) {
    std::size_t nr = 1;
    for (std::size_t i = 0; i < row_factors; ++i) nr *= base.domain()[i].size();
    std::size_t nc = base.size() / nr;
    std::vector<TangentVec> out;
    for (std::size_t r = 0; r < nr; ++r) {
        std::vector<std::size_t> supp;
        for (std::size_t c = 0; c < nc; ++c)
            if (base[r * nc + c] > 0.0) supp.push_back(r * nc + c);
        for (std::size_t k = 0; k + 1 < supp.size(); ++k) {
            RealFunc d = RealFunc::constant(base.domain(), 0.0);
            d[supp[k]] = 1.0;
            d[supp[k + 1]] = -1.0;
            out.push_back(TangentVec{base, row_factors, std::move(d)});
        }
    }
    return out;
}

}  // namespace

std::vector<TangentVec> tangent_basis(const ProbVec& base) { return row_basis(base.func(), 0); }

std::vector<TangentVec> tangent_basis(const CondKernel& base) { return row_basis(base.func(), base.from().size()); }

// ============================================================================
// Information functionals
// ============================================================================

double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log2(x);
    return h;
}

double binary_entropy(double p) { return entropy({p, 1.0 - p}); }

RealFunc self_information(const ProbVec& joint, const std::vector<std::string>& a) {
    RealFunc pa = broadcast(sum_to(joint.func(), a), joint.domain());
    return map(pa, [](double x) { return x > 0.0 ? -std::log2(x) : kNaN; });
}

RealFunc info_density(const ProbVec& joint, const std::vector<std::string>& a, const std::vector<std::string>& b,
                      const std::vector<std::string>& c) {
    auto cat = [](std::vector<std::string> x, const std::vector<std::string>& y) {
        x.insert(x.end(), y.begin(), y.end());
        return x;
    };
    const Domain& d = joint.domain();
    RealFunc pabc = broadcast(sum_to(joint.func(), cat(cat(a, b), c)), d);
    RealFunc pac = broadcast(sum_to(joint.func(), cat(a, c)), d);
    RealFunc pbc = broadcast(sum_to(joint.func(), cat(b, c)), d);
    RealFunc pc = c.empty() ? RealFunc::constant(d, 1.0) : broadcast(sum_to(joint.func(), c), d);
    std::vector<double> v(pabc.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = pabc[i] > 0.0 ? std::log2(pabc[i]) + std::log2(pc[i]) - std::log2(pac[i]) - std::log2(pbc[i]) : kNaN;
    return RealFunc(d, std::move(v));
}

double mutual_information(const ProbVec& joint, const std::vector<std::string>& a, const std::vector<std::string>& b,
                          const std::vector<std::string>& c) {
    return inner(joint.func(), info_density(joint, a, b, c));
}

InfoFunctionals info_functionals(const ProbVec& joint) {
    require(joint.domain().size() == 2, ErrorKind::Shape, "info_functionals expects a joint over two factors");
    const std::string x = joint.domain()[0].name, y = joint.domain()[1].name;
    InfoFunctionals out;
    ProbVec px = joint.marginal({x}), py = joint.marginal({y});
    out.iota_x = map(px.func(), [](double v) { return v > 0.0 ? -std::log2(v) : kNaN; });
    out.iota_y = map(py.func(), [](double v) { return v > 0.0 ? -std::log2(v) : kNaN; });
    out.iota_xy = info_density(joint, {x}, {y});
    out.H_x = entropy(px.mass());
    out.H_y = entropy(py.mass());
    out.I_xy = std::max(0.0, inner(joint.func(), out.iota_xy));
    return out;
}

// ============================================================================
// Moments
// ============================================================================

double expect(const ProbVec& p, const RealFunc& f) {
    return weighted_sum(p.mass(), broadcast(f, p.domain()).values());
}

RealFunc cond_expect(const ProbVec& p, const RealFunc& f, const std::vector<std::string>& given) {
    RealFunc fb = broadcast(f, p.domain());
    std::vector<double> pf(p.size());
    for (std::size_t i = 0; i < pf.size(); ++i) {
        if (p[i] == 0.0) { pf[i] = 0.0; continue; }
        if (std::isnan(fb[i])) fail(ErrorKind::InvalidInput, "unusable value read under positive mass");
        pf[i] = p[i] * fb[i];
    }
    RealFunc num = sum_to(RealFunc(p.domain(), pf), given);
    RealFunc den = sum_to(p.func(), given);
    for (std::size_t i = 0; i < num.size(); ++i) num[i] = den[i] > 0.0 ? num[i] / den[i] : kNaN;
    return num;
}

double covariance(const ProbVec& p, const RealFunc& f, const RealFunc& g) {
    RealFunc fb = broadcast(f, p.domain()), gb = broadcast(g, p.domain());
    double mf = weighted_sum(p.mass(), fb.values()), mg = weighted_sum(p.mass(), gb.values());
    std::vector<double> h(p.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = (fb[i] - mf) * (gb[i] - mg);
    return weighted_sum(p.mass(), h);
}

double variance(const ProbVec& p, const RealFunc& f) { return std::max(0.0, covariance(p, f, f)); }

double expected_cond_cov(const ProbVec& p, const RealFunc& f, const RealFunc& g, const std::vector<std::string>& given) {
    RealFunc fb = broadcast(f, p.domain()), gb = broadcast(g, p.domain());
    RealFunc ef = broadcast(cond_expect(p, fb, given), p.domain());
    RealFunc eg = broadcast(cond_expect(p, gb, given), p.domain());
    std::vector<double> h(p.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = (fb[i] - ef[i]) * (gb[i] - eg[i]);
    return weighted_sum(p.mass(), h);
}

double expected_cond_var(const ProbVec& p, const RealFunc& f, const std::vector<std::string>& given) {
    return std::max(0.0, expected_cond_cov(p, f, f, given));
}

}  // namespace secord
