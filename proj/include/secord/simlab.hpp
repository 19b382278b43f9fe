#pragma once

// Small-n simulation of the Poisson-matching schemes, GCC codeword laws and
// type-deviation diagnostics.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "secord/gm.hpp"
#include "secord/rdsolver.hpp"

namespace secord {

constexpr std::uint64_t kEnumerationLimit = std::uint64_t{1} << 24;

// keyed 64-bit hash; every random draw in the module derives from it
std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

// Exp(1) scores T_{m,seq}, generated on demand from (seed, slice, m, rank)
class Codebook {
public:
    Codebook(std::uint64_t seed, std::uint64_t slice, std::uint64_t messages, std::uint64_t sequences);

    std::uint64_t messages() const { return messages_; }
    std::uint64_t sequences() const { return sequences_; }
    std::uint64_t index_count() const { return messages_ * sequences_; }
    double score(std::uint64_t m, std::uint64_t rank) const;

private:
    std::uint64_t seed_, slice_, messages_, sequences_;
};

struct PMLChoice {
    std::uint64_t index = 0;     // message
    std::uint64_t sequence = 0;  // sequence rank
};

// argmin of score/weight over messages (or only message *m) and the listed
// sequences; weights sum to at most 1
PMLChoice pml_select(const Codebook& cb, const std::vector<std::pair<std::uint64_t, double>>& weights,
                     std::optional<std::uint64_t> m = std::nullopt);
// dense form, weights indexed by sequence rank
PMLChoice pml_select(const Codebook& cb, const std::vector<double>& weights,
                     std::optional<std::uint64_t> m = std::nullopt);

struct Interval {
    double lo = 0.0, hi = 1.0;
    double radius() const { return 0.5 * (hi - lo); }
};
Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z = 1.959963984540054);

struct PMLCheck {
    std::uint64_t trials = 0, mismatches = 0;
    double empirical = 0.0;
    double mean_bound = 0.0;  // exact E[min(1, 2^{ι(U;X)-ι(U;Y)})]
    double mc_bound = 0.0;    // the same average over the simulated tuples
    Interval wilson;
    bool pass = false;  // empirical <= mean_bound + 3 Wilson radii
    std::vector<double> joint_freq;  // empirical frequencies of (X,U,Y) cells
};
// joint over three factors taken in order as (X, U, Y)
PMLCheck pml_bound_check(const ProbVec& joint, std::uint64_t trials, std::uint64_t seed);

// ============================================================================
// GCC codeword law
// ============================================================================

// conditional n-type counts [x][u] of the GCC law given x_seq: the perturbed
// kernel rounded by largest remainder per row, ties to the lower symbol.
// Infeasible when a perturbed entry is negative.
std::vector<std::vector<std::size_t>> gcc_counts(const ProbVec& px, const CondKernel& pux, const Zeta& zeta,
                                                 const std::vector<std::size_t>& x_seq);
// a uniform draw from the conditional type class
std::vector<std::size_t> gcc_sample(const ProbVec& px, const CondKernel& pux, const Zeta& zeta,
                                    const std::vector<std::size_t>& x_seq, std::uint64_t seed);
// joint over (X, U): first factor is X, the rest U
std::vector<std::size_t> gcc_sample(const ProbVec& joint, const Zeta& zeta, const std::vector<std::size_t>& x_seq,
                                    std::uint64_t seed);
// ‖G_{x,u} - (G_x∘P_{U|X} + P_X∘ζ(G_x))‖ (Euclidean, over (X,U) cells)
double gcc_deviation(const ProbVec& px, const CondKernel& pux, const Zeta& zeta, const std::vector<std::size_t>& x_seq,
                     const std::vector<std::size_t>& u_seq);

// ============================================================================
// Scheme simulation
// ============================================================================

enum class Scheme { LossySC, WynerZiv, ChannelCost, GelfandPinsker };
Scheme scheme_of(Variant v);

struct SimConfig {
    Scheme scheme = Scheme::LossySC;
    long n = 1;
    double rate = 0.0;  // bits per symbol; ⌊2^{nR}⌋ messages
    std::uint64_t trials = 1000;
    std::uint64_t seed = 0;
    bool delta_slack = true;  // threshold D + delta/n
    double delta = 1.0;
    // with the slack off: append ⌈log2 n⌉ greedy symbols and test the
    // (n+k)-average against D
    bool tail_repair = false;
    CodingInstance instance;
    Zeta zeta;  // over enc cells -> (enc, aux) cells
    bool parallel = true;
    bool trace = false;
};

struct TrialLog {
    std::uint64_t trial = 0;
    bool infeasible = false;
    bool error = false;
    bool replaced = false;       // channel: codeword broke the cost limit
    double log_p_enc = 0.0;      // log2 P(c|s) of the encoder's codeword
    double log_p_dec = 0.0;      // log2 P(c|o)
    double log_p_marg = 0.0;     // log2 P(c)
    double distortion = 0.0;     // decoded distortion, or the sent cost
    double bound = 0.0;          // per-trial Poisson matching bound
};

struct SimResult {
    std::uint64_t trials = 0;
    std::uint64_t errors = 0;  // excess distortion or wrong message, infeasible included
    std::uint64_t infeasible = 0;
    std::uint64_t messages = 1;
    std::uint64_t codewords = 1;  // |aux|^n
    int tail_symbols = 0;
    double empirical_rate_used = 0.0;
    double threshold = 0.0;
    Interval wilson;
    double pml_bound = 0.0;  // mean of the per-trial bounds
    double pml_bound_se = 0.0;
    std::vector<TrialLog> log;  // filled with trace on

    double error_rate() const { return trials ? static_cast<double>(errors) / static_cast<double>(trials) : 0.0; }
};

SimResult simulate(const SimConfig& config);

// ============================================================================
// Type-deviation diagnostics
// ============================================================================

struct TypeDeviationOptions {
    std::size_t random_directions = 16;
    std::size_t bootstrap = 30;
    bool keep_samples = true;
};

struct TypeDeviationRow {
    long n = 0;
    Eigen::MatrixXd G;           // trials x |X|, rows are draws of √n(P̂ - P)
    double lp_estimate = 0.0;    // max over half-space families of the 1-D Lévy distance
    double scaled = 0.0;         // lp_estimate·√n
    double bootstrap_radius = 0.0;  // of scaled, 95%
};
std::vector<TypeDeviationRow> type_deviation_stats(const ProbVec& source, const std::vector<long>& n_list,
                                                   std::size_t trials, std::uint64_t seed,
                                                   const TypeDeviationOptions& opt = {});
// the estimator on given draws (rows of G) against NM(source)
double lp_halfspace_estimate(const ProbVec& source, const Eigen::MatrixXd& G, std::size_t random_directions,
                             std::uint64_t seed);

struct KSResult {
    double statistic = 0.0;
    double p_value = 1.0;
};
// one-sample Kolmogorov-Smirnov against N(0, sigma^2), asymptotic p-value
KSResult ks_normal(std::vector<double> samples, double sigma);

enum class ExchangeableSource {
    TypeClass,    // uniform over the type class nearest n·p; its center is that type
    TypeMixture,  // equal mixture of i.i.d. laws at p ± v/√n
    IID,
};

struct SelfInfoResult {
    long n = 0;
    std::vector<double> residual;  // ι exact - (nH + √n<G, ι_X>), bits
    double q95_ratio = 0.0;        // 95th percentile of |residual| / log2 n (0 at n = 1)
};
SelfInfoResult self_info_residual(const ProbVec& p_target, long n, std::size_t trials, std::uint64_t seed,
                                  ExchangeableSource source = ExchangeableSource::TypeMixture, double shift = 0.5);

}  // namespace secord
