#pragma once

// Second-order terms, dispersions and the Gaussian error functionals built
// from them.

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "secord/gm.hpp"
#include "secord/rdsolver.hpp"

namespace secord {

struct SecondOrderTerms {
    Variant variant = Variant::WynerZiv;
    std::vector<double> lambda;
    double var_A = 0.0;        // Var of the encoder-measurable Gaussian
    Eigen::MatrixXd sigma_JD;  // residual covariance, order [J, d_1, ..., d_k]
    Eigen::MatrixXd cond2;     // E[Var[E[d|enc,aux]|enc]]
    double cond2_min_eig = 0.0;
    bool cond2_ok = false;  // min eigenvalue above 1e-10
    double stationarity = 0.0;
    std::vector<std::string> notes;

    std::size_t k() const { return lambda.size(); }
};

// exact moments of (rate density, d) over the instance joint; assumption
// failures land in notes
SecondOrderTerms wz_second_order_terms(const CodingInstance& inst);

struct LSCDispersion {
    double V = 0.0;
    double rate = 0.0;
    double lambda = 0.0;
    bool degenerate = false;  // d depends on x only
    RDSolution solution;
};
LSCDispersion lsc_dispersion(const ProbVec& px, const RealFunc& d, double D);

struct CCDispersion {
    double V = 0.0;
    double capacity = 0.0;
    double lambda = 0.0;
    ProbVec input;
    std::size_t optimal_vertices = 1;  // extreme points of the optimal input set examined
};
// epsilon selects the tie-break among capacity-achieving inputs: smallest V
// for ε ≤ 1/2, largest otherwise
CCDispersion cc_dispersion(const CondKernel& channel, const RealFunc& cost, double D, double epsilon = 0.1);

struct GPDispersion {
    double V = 0.0;
    double var_A = 0.0;
    double var_J = 0.0;
    double cost_cond_var = 0.0;  // E[Var[d|S]]
    bool cost_ok = false;
};
GPDispersion gp_dispersion(const CodingInstance& inst);

struct VGCC {
    double V = 0.0;
    double var_A = 0.0, sigma_J = 0.0, sigma_D = 0.0;
    bool half_epsilon = true;  // false when d is a function of (enc, aux)
};
VGCC v_gcc(const SecondOrderTerms& t);
VGCC v_gcc(const CodingInstance& inst);

// ============================================================================
// P_e* and its Gaussian mixture
// ============================================================================

struct PeStarOptions {
    int grid = 200;
    double golden_tol = 1e-10;
    int nm_seeds = 9;
    int nm_max_iter = 2000;
    OrthantOptions search{1u << 12, 8, 0x5eed};
    OrthantOptions final{};
};

struct PeStar {
    double prob = 0.0;
    std::vector<double> t;  // minimizing thresholds (±inf allowed)
    double radius = 0.0;    // orthant quadrature radius at the returned point
};

// scalar form; sigma is 2x2 over [J, D]
PeStar pe_star(double alpha, double lambda, const Eigen::MatrixXd& sigma, const PeStarOptions& opt = {});
// vector form; sigma is (k+1)x(k+1) over [J, D_1..D_k]
PeStar pe_star(double alpha, const std::vector<double>& lambda, const Eigen::MatrixXd& sigma,
               const PeStarOptions& opt = {});

struct ExpectedPe {
    double value = 0.0;
    double radius = 0.0;
    std::string method;
};
struct ExpectedPeOptions {
    int nodes = 64;
    double fallback_radius = 1e-6;
    PeStarOptions pe{};
};
ExpectedPe expected_pe(double W, const SecondOrderTerms& t, const ExpectedPeOptions& opt = {});

enum class Direction { Source, Channel };
Direction direction_of(Variant v);

struct RateForEpsilon {
    double rate = 0.0;
    double W = 0.0;
    double pe = 0.0;  // expected_pe at W
    // the O(log n / n) term is never added to rate
    std::string remainder = "O(log n / n)";
};
// Source: R1 + W/√n with E[P_e*(W - A)] = ε; Channel: R1 - W/√n
RateForEpsilon rate_for_epsilon(double epsilon, const SecondOrderTerms& t, long n, double R_first_order,
                                const ExpectedPeOptions& opt = {});

// ============================================================================
// Competing Wyner-Ziv bounds
// ============================================================================

// mixture of component instances with T independent of the source
struct TimeSharing {
    std::vector<double> weights;
    std::vector<CodingInstance> parts;
    std::string convention = "P_{U|X,T}";
};

struct Competitors {
    double v_vyag = 0.0, v_la = 0.0, v_wkt = 0.0;
    std::string wkt_convention;
};
Competitors v_competitors(const CodingInstance& inst, const TimeSharing* ts = nullptr);
double v_wkt(const TimeSharing& ts);

// binary time-sharing over (β,γ) operating points of the binary family on
// the envelope at D; an empty T (the optimizer's own point) is a candidate
TimeSharing wkt_binary_default(double p, double D, double lambda);

// covariance of [ι(aux;enc), -ι(aux;side), d] (unconditional, or averaged
// over T for a time-sharing)
Eigen::Matrix3d vyag_covariance(const CodingInstance& inst);
Eigen::Matrix3d wkt_covariance(const TimeSharing& ts);

// min over (t,τ) of P(J_X > W-λt-τ or J_Y > τ or D > t)
PeStar three_event_bound(double W, double lambda, const Eigen::Matrix3d& cov, const PeStarOptions& opt = {});

struct ComparisonRow {
    double W = 0.0;
    double thm2 = 0.0, thm2_radius = 0.0;
    double la = 0.0, vyag = 0.0, wkt = 0.0;  // wkt NaN without a time-sharing
    double radius = 0.0;
    bool thm2_le_la = false, la_le_vyag = false, wkt_ok = true;
};
std::vector<ComparisonRow> comparison_suite(const CodingInstance& inst, const std::vector<double>& W_grid,
                                            const TimeSharing* ts = nullptr);

struct BoundReport {
    std::string bound_name;
    double value = 0.0;
    std::map<std::string, double> intermediates;
    std::string digest;
};
std::string instance_digest(const CodingInstance& inst);

// V_GCC and the competitors on any instance; with n > 0 and ε in (0,1) also
// the rate at ε. Intermediates carry Var A, Σ_JD entries and λ.
BoundReport bound_report(const CodingInstance& inst, long n = 0, double epsilon = 0.0);

// one D of the binary-Hamming Wyner-Ziv comparison
struct Figure3Point {
    double D = 0.0;
    double v_gcc = 0.0, v_vyag = 0.0, v_wkt = 0.0, v_la = 0.0;
    double rate = 0.0, lambda = 0.0;
    bool ok = true;  // false when the optimizer failed; values are NaN then
    std::string note;
};
Figure3Point figure3_point(double p, double D);

}  // namespace secord
