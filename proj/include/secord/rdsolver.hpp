#pragma once

// First-order solvers and coding-instance builders.

#include <string>
#include <vector>

#include "secord/probkit.hpp"

namespace secord {

// ============================================================================
// Rate-distortion
// ============================================================================

struct RDOptions {
    double gap_tol = 1e-10;
    int max_iter = 100000;
    bool fd_check = true;
    double fd_step = 1e-4;
};

struct RDSolution {
    double rate = 0.0;
    CondKernel test_channel;  // P_{Y|X}
    ProbVec output;           // P_Y
    double lambda = 0.0;      // -dR/dD in bits per distortion unit
    double lambda_dual = 0.0;
    double lambda_fd = 0.0;
    bool kink = false;  // dual and finite-difference slopes disagree
    double D = 0.0;
    double achieved_D = 0.0;
    double gap = 0.0;  // duality gap at the returned point
    bool converged = false;
    int iterations = 0;
};

double rd_min_distortion(const ProbVec& px, const RealFunc& d);
double rd_max_distortion(const ProbVec& px, const RealFunc& d);
// d is a function on (X,Y), X being px's single factor
RDSolution blahut_arimoto_rd(const ProbVec& px, const RealFunc& d, double D, const RDOptions& opt = {});

struct TiltedInfo {
    RealFunc j;                       // on X, NaN off the support
    double identity_residual = 0.0;  // max |E[ι+λ(d-D)|X=x] - j(x)|
    bool first_order_ok = true;
    double mean = 0.0;
    double variance = 0.0;
};
TiltedInfo tilted_information(const RDSolution& sol, const ProbVec& px, const RealFunc& d);

// ============================================================================
// Deterministic maps and coding instances
// ============================================================================

struct DetMap {
    Domain from;
    Alphabet to;
    std::vector<std::size_t> image;  // indexed by flat cell of `from`
};

// d(..., z(from...)) with the Z factor of d replaced by the map's inputs
RealFunc fold_map(const RealFunc& d, const DetMap& z);

enum class Variant { LossySC, WynerZiv, IndirectWZ, MultiDistortionWZ, HeegardBerger, ChannelCost, GelfandPinsker };
std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

// One problem instance. The joint covers every random variable; distortion
// and cost functions are already folded through the reconstruction maps so
// they live on factors of the joint.
struct CodingInstance {
    Variant variant = Variant::WynerZiv;
    ProbVec joint;
    std::vector<std::string> enc;   // observed by the encoder (X or S); empty for channel coding
    std::vector<std::string> aux;   // chosen by the encoder (U, reconstruction Y, U1/U2, channel input X)
    std::vector<std::string> side;  // observed by the decoder besides the message
    std::vector<RealFunc> d;
    std::vector<double> D;
    std::vector<double> lambda;
    std::string note;
};

CodingInstance make_lossy_sc(const ProbVec& px, const CondKernel& test_channel, const RealFunc& d, double D,
                             double lambda);
CodingInstance make_wyner_ziv(const ProbVec& px, const CondKernel& side, const CondKernel& aux, const DetMap& z,
                              const RealFunc& d, double D, double lambda);
// side_f: P_{F,Y|X} (to-factors F and Y, any order); d on (F,Z)
CodingInstance make_indirect_wz(const ProbVec& px, const CondKernel& side_f, const CondKernel& aux, const DetMap& z,
                                const RealFunc& d, double D, double lambda);
CodingInstance make_multi_distortion_wz(const ProbVec& px, const CondKernel& side_f, const CondKernel& aux,
                                        const DetMap& z, const std::vector<RealFunc>& d, const std::vector<double>& D,
                                        const std::vector<double>& lambda);
// aux: P_{U1,U2|X}; z1: U1 -> Z1; z2: (U1,U2,Y) -> Z2
CodingInstance make_heegard_berger(const ProbVec& px, const CondKernel& side, const CondKernel& aux, const DetMap& z1,
                                   const DetMap& z2, const RealFunc& d1, const RealFunc& d2, const std::vector<double>& D,
                                   const std::vector<double>& lambda);
CodingInstance make_channel_cost(const ProbVec& input, const CondKernel& channel, const RealFunc& cost, double D,
                                 double lambda);
// xmap: (S,U) -> X; channel P_{Y|S,X}; cost on (S,X)
CodingInstance make_gelfand_pinsker(const ProbVec& ps, const CondKernel& aux, const DetMap& xmap,
                                    const CondKernel& channel, const RealFunc& cost, double D, double lambda);

void validate_instance(const CodingInstance& inst);
// information density whose mean is the first-order rate (negated for channel coding)
RealFunc rate_density(const CodingInstance& inst);
CondKernel aux_kernel(const CodingInstance& inst);

// max over tangent_basis(P_{aux|enc}) of |<P_enc∘V∘P_{rest|enc,aux}, ι + Σλd>|;
// kernel entries at or below support_tol count as zero
double first_order_stationarity(const CodingInstance& inst, double support_tol = 1e-9);

// ============================================================================
// Binary-Hamming Wyner-Ziv family
// ============================================================================

struct WZBinaryInstance {
    double p = 0, beta = 0, gamma = 0;
    CodingInstance inst;  // joint over (X,U,Y), d folded through z
    ProbVec joint_xyuz;   // same joint with Z appended
    double expected_d = 0;
    double objective = 0;  // I(U;X) - I(U;Y)
};

WZBinaryInstance wz_binary_family(double p, double beta, double gamma, double lambda = 0.0);

struct WZBinaryOpt {
    double rate = 0, beta = 0, gamma = 0, lambda = 0;
    bool on_envelope = false;  // f equals its envelope at D within 1e-9
};
struct WZOptOptions {
    double grid_step = 1e-3;
    double refine_tol = 1e-7;
    double fd_step = 1e-4;
    bool parallel = true;
};
WZBinaryOpt wz_binary_optimize(double p, double D, const WZOptOptions& opt = {});
// objective and distortion of the family by direct summation (no allocation)
void wz_binary_eval(double p, double beta, double gamma, double& objective, double& distortion);

double wz_f(double p, double D);
// tangent point of the envelope's linear segment through (p,0)
double wz_tangent_point(double p);
double wz_rate_formula(double p, double D);

// ============================================================================
// Capacity with cost
// ============================================================================

struct CapacityCost {
    double capacity = 0;
    ProbVec input;
    ProbVec output;
    double lambda = 0;  // dC/dD
    double gap = 0;
    bool cost_binding = false;
    int iterations = 0;
};

struct CCOptions {
    double gap_tol = 1e-10;
    int max_iter = 100000;
};

CapacityCost capacity_cost(const CondKernel& channel, const RealFunc& cost, double D, const CCOptions& opt = {});

}  // namespace secord
