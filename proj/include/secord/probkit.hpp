#pragma once

// Finite-alphabet probability algebra. Every table is dense, row-major,
// last factor fastest. Factors are identified by variable name; pairing two
// tables broadcasts over the factors one of them lacks.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "secord/errors.hpp"

namespace secord {

struct Alphabet {
    std::string name;
    std::vector<std::string> symbols;

    Alphabet() = default;
    Alphabet(std::string var, std::vector<std::string> syms);

    // symbols "0".."n-1"
    static Alphabet range(const std::string& var, std::size_t n);

    std::size_t size() const { return symbols.size(); }
    std::size_t index(const std::string& sym) const;
    bool operator==(const Alphabet& o) const { return name == o.name && symbols == o.symbols; }
};

using Domain = std::vector<Alphabet>;

std::size_t domain_size(const Domain& d);
// position of factor `name` in d, or -1
int find_factor(const Domain& d, const std::string& name);
// f's factors followed by g's factors that f lacks; shared factors must agree in size
Domain union_domain(const Domain& f, const Domain& g);
bool is_subdomain(const Domain& sub, const Domain& full);
Domain select_factors(const Domain& d, const std::vector<std::string>& names);
std::vector<std::string> factor_names(const Domain& d);

class RealFunc {
public:
    RealFunc() = default;
    RealFunc(Domain domain, std::vector<double> values);
    static RealFunc constant(Domain domain, double v);

    const Domain& domain() const { return domain_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    double at(const std::vector<std::size_t>& idx) const { return values_[flat(idx)]; }
    std::size_t flat(const std::vector<std::size_t>& idx) const;
    std::vector<std::size_t> unflat(std::size_t k) const;
    bool has(const std::string& name) const { return find_factor(domain_, name) >= 0; }

private:
    Domain domain_;
    std::vector<double> values_;
};

// g evaluated on every cell of `target` (g's factors must be a subset)
RealFunc broadcast(const RealFunc& g, const Domain& target);
// for each cell of `target`, the flat index of the matching cell in `sub`
std::vector<std::size_t> projection_map(const Domain& target, const Domain& sub);

RealFunc combine(const RealFunc& f, const RealFunc& g, const std::function<double(double, double)>& op);
RealFunc operator+(const RealFunc& f, const RealFunc& g);
RealFunc operator-(const RealFunc& f, const RealFunc& g);
RealFunc operator*(const RealFunc& f, const RealFunc& g);
RealFunc operator*(double a, const RealFunc& f);
RealFunc map(const RealFunc& f, const std::function<double(double)>& op);
// reorder factors to `names`
RealFunc permute(const RealFunc& f, const std::vector<std::string>& names);

// sum over every factor not listed in `keep`; result follows the order of `keep`
RealFunc sum_to(const RealFunc& f, const std::vector<std::string>& keep);

class ProbVec {
public:
    ProbVec() = default;
    ProbVec(Domain domain, std::vector<double> mass, bool renormalize = false);
    explicit ProbVec(const RealFunc& f, bool renormalize = false);

    const RealFunc& func() const { return f_; }
    const Domain& domain() const { return f_.domain(); }
    std::size_t size() const { return f_.size(); }
    double operator[](std::size_t i) const { return f_[i]; }
    const std::vector<double>& mass() const { return f_.values(); }
    std::vector<std::size_t> support() const;

    ProbVec marginal(const std::vector<std::string>& names) const;

private:
    RealFunc f_;
};

class CondKernel {
public:
    CondKernel() = default;
    CondKernel(Domain from, Domain to, std::vector<double> rows, bool renormalize = false);

    const Domain& from() const { return from_; }
    const Domain& to() const { return to_; }
    const RealFunc& func() const { return f_; }
    std::size_t rows() const { return domain_size(from_); }
    std::size_t cols() const { return domain_size(to_); }
    double operator()(std::size_t r, std::size_t c) const { return f_[r * cols() + c]; }

private:
    Domain from_, to_;
    RealFunc f_;
};

// P(target | given) from a joint; rows with zero mass are filled uniformly
CondKernel conditional(const ProbVec& joint, const std::vector<std::string>& target,
                       const std::vector<std::string>& given);
// channel P_{Y|X} given as a 2-D row-major matrix
CondKernel make_kernel(const Alphabet& from, const Alphabet& to, const std::vector<std::vector<double>>& rows);
ProbVec make_pmf(const Alphabet& a, const std::vector<double>& p);

RealFunc semidirect(const RealFunc& f, const RealFunc& g);
ProbVec semidirect(const ProbVec& p, const CondKernel& k);

// exact sum of f*g over the larger of the two domains; a NaN (unusable ι value)
// meeting a nonzero entry on the other side is an error
double inner(const RealFunc& f, const RealFunc& g);

std::vector<double> empirical_counts(const std::vector<std::size_t>& seq, std::size_t alphabet_size);
ProbVec empirical_type(const std::vector<std::string>& seq, const Alphabet& a);
ProbVec empirical_type(const std::vector<std::size_t>& seq, const Alphabet& a);

bool is_dominated(const std::vector<double>& f, const std::vector<double>& g);

struct TangentVec {
    RealFunc base;
    std::size_t row_factors = 0;  // leading factors that index independent rows
    RealFunc delta;

    void validate(double tol = 1e-10) const;
};

std::vector<TangentVec> tangent_basis(const ProbVec& base);
std::vector<TangentVec> tangent_basis(const CondKernel& base);

// ---- information functionals (base 2) -----------------------------------

double entropy(const std::vector<double>& p);
double binary_entropy(double p);
// ι_{A;B|C} over the joint's full domain; NaN on zero-mass cells
RealFunc info_density(const ProbVec& joint, const std::vector<std::string>& a, const std::vector<std::string>& b,
                      const std::vector<std::string>& c = {});
// ι_A = -log P_A over the joint's domain; NaN on zero-mass cells
RealFunc self_information(const ProbVec& joint, const std::vector<std::string>& a);
double mutual_information(const ProbVec& joint, const std::vector<std::string>& a, const std::vector<std::string>& b,
                          const std::vector<std::string>& c = {});

struct InfoFunctionals {
    RealFunc iota_x, iota_y, iota_xy;
    double H_x = 0, H_y = 0, I_xy = 0;
};
// joint over exactly two factors
InfoFunctionals info_functionals(const ProbVec& joint);

// ---- moments under a joint ------------------------------------------------

double expect(const ProbVec& p, const RealFunc& f);
// E[f | given] as a function of the given factors; NaN where P(given)=0
RealFunc cond_expect(const ProbVec& p, const RealFunc& f, const std::vector<std::string>& given);
double covariance(const ProbVec& p, const RealFunc& f, const RealFunc& g);
double variance(const ProbVec& p, const RealFunc& f);
// E[Cov(f,g | given)]
double expected_cond_cov(const ProbVec& p, const RealFunc& f, const RealFunc& g, const std::vector<std::string>& given);
double expected_cond_var(const ProbVec& p, const RealFunc& f, const std::vector<std::string>& given);

}  // namespace secord
