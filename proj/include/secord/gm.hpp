#pragma once

// Gaussian-multinomial deviation calculus and Gaussian event probabilities.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "secord/probkit.hpp"

namespace secord {

// Zero-mean (unless stated) Gaussian on the cells of a product domain.
struct GaussianSpec {
    Domain domain;
    std::size_t row_factors = 0;  // tangent rows: leading factors index blocks that sum to 0
    Eigen::MatrixXd cov;
    Eigen::VectorXd mean;
    RealFunc center;  // the pmf this is a deviation around (may be empty)

    std::size_t dim() const { return static_cast<std::size_t>(cov.rows()); }
};

struct ScalarGaussian {
    std::vector<std::string> labels;
    Eigen::MatrixXd cov;
};

// Deviation function ζ: Tan(P_X) -> Tan(P_{U|X}), evaluated on X cells and
// returning (X,U) cells. Affine maps carry their matrix; anything else only
// has the pointwise evaluator.
struct Zeta {
    enum class Kind { Zero, Affine, Nonlinear };
    Kind kind = Kind::Zero;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    std::function<std::vector<double>(const std::vector<double>&)> fn;

    static Zeta zero() { return {}; }
    static Zeta affine(Eigen::MatrixXd A, Eigen::VectorXd b);
    static Zeta nonlinear(std::function<std::vector<double>(const std::vector<double>&)> f);

    bool is_affine() const { return kind != Kind::Nonlinear; }
    bool is_zero() const { return kind == Kind::Zero; }
    std::vector<double> operator()(const std::vector<double>& g, std::size_t out_dim) const;
};

GaussianSpec nm_covariance(const ProbVec& p);
GaussianSpec nm_cond_covariance(const CondKernel& k);
// spec with zero covariance over Tan(p), i.e. a constant-composition input
GaussianSpec zero_deviation(const ProbVec& p);

ScalarGaussian linear_pushforward(const GaussianSpec& spec, const std::vector<RealFunc>& maps,
                                  std::vector<std::string> labels = {});

// A∘k + √center∘B with A ~ spec, B ~ NM(k extended to spec's cells), independent
GaussianSpec compose_channel_deviation(const GaussianSpec& spec, const CondKernel& k);
// A∘k + center∘ζ(A); ζ must be affine
GaussianSpec compose_gcc_deviation(const GaussianSpec& spec, const CondKernel& k, const Zeta& zeta);

// largest |row sum| standard deviation over tangent rows (0 for a valid spec)
double tangent_row_violation(const GaussianSpec& spec);

struct OrthantResult {
    double prob = 0.0;
    double radius = 0.0;  // standard error (0 for deterministic quadrature)
};

double normal_cdf(double x);
double normal_q(double x);
double normal_q_inv(double p);
// P(Z1 <= a, Z2 <= b) for standard normals with correlation r
double bvn_cdf(double a, double b, double r);

struct OrthantOptions {
    std::size_t qmc_points = 1u << 16;
    std::size_t qmc_shifts = 16;
    std::uint64_t qmc_seed = 0x5eed;
};
// P(Z_i <= upper_i for all i), Z ~ N(0, cov), dimension 1..4
OrthantResult gaussian_orthant(const Eigen::MatrixXd& cov, const std::vector<double>& upper,
                               const OrthantOptions& opt = {});
inline OrthantResult gaussian_orthant(const ScalarGaussian& g, const std::vector<double>& upper,
                                      const OrthantOptions& opt = {}) {
    return gaussian_orthant(g.cov, upper, opt);
}

// dimension 1..3; three dimensions by adaptive Gauss-Kronrod over the
// conditional bivariate CDF, radius = the quadrature error estimate
OrthantResult trivariate_orthant(const Eigen::MatrixXd& cov, const std::vector<double>& upper);

// rows are draws
Eigen::MatrixXd sample_gaussian(const GaussianSpec& spec, std::uint64_t seed, std::size_t count);
// symmetric square-root factor with clipping; hard error below -1e-8
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov);

}  // namespace secord
