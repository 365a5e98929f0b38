#pragma once

#include "mfgc/grid.hpp"
#include "mfgc/potential.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mfgc {

/// Momentum-sized vector and matrix (d <= 2, no heap allocation).
using PVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2, 1>;
using PMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2>;

/// L0(x, v) = a(x) (1 + |v|^2)^{gamma'/2}, the congestion Lagrangian.
class LagrangianModel {
public:
    LagrangianModel(double gamma_prime, Field weight);

    double gamma_prime() const { return gamma_prime_; }
    const Field& weight() const { return weight_; }
    double eval(std::size_t node, const PVec& v) const;

private:
    double gamma_prime_;
    Field weight_;
};

/// Value, gradient and Hessian in p at one point.
struct HamiltonianJet {
    double value = 0.0;
    PVec grad;
    PMat hess;
};

/// Isotropic congestion Hamiltonians and the continuation blend
///   H_lambda(x, p) = (1 - lambda) H0(x, p) + lambda (1 + |p|^2)^{gamma/2}.
///
/// Two base models H0 are available:
///  - IsoPower:     H0 = c(x) (1 + |p|^2)^{gamma/2} (closed form);
///  - LegendreDual: H0 = sup_v [-v.p - L0(x, v)] with L0 = c(x)(1+|v|^2)^{gamma'/2},
///    evaluated to round-off by a scalar Newton solve of the radial optimality condition.
/// Both are radial in p, so H0(x,p) = F(x, |p|) and derivatives follow from F', F''.
class HamiltonianModel {
public:
    enum class Base { IsoPower, LegendreDual };

    HamiltonianModel() = default;
    HamiltonianModel(Base base, double gamma, Field weight, double lambda = 0.0);

    HamiltonianModel with_lambda(double lambda) const;

    Base base() const { return base_; }
    double gamma() const { return gamma_; }
    double gamma_prime() const { return gamma_ / (gamma_ - 1.0); }
    double lambda() const { return lambda_; }
    const Field& weight() const { return weight_; }
    int dim() const { return weight_.grid.dim(); }

    double eval(std::size_t node, const PVec& p) const;
    PVec grad(std::size_t node, const PVec& p) const;
    PMat hess(std::size_t node, const PVec& p) const;
    HamiltonianJet jet(std::size_t node, const PVec& p) const;

    /// The Lagrangian whose transform is the LegendreDual base (same weight, gamma').
    LagrangianModel dual_lagrangian() const;

    static Base parse_base(const std::string& name);
    static std::string base_name(Base base);

private:
    struct Radial {
        double f = 0.0;       // F(r)
        double fr = 0.0;      // F'(r)
        double fr_over_r = 0.0;  // F'(r)/r, finite at r = 0
        double frr = 0.0;     // F''(r)
    };
    Radial base_radial(std::size_t node, double r) const;
    Radial blend_radial(std::size_t node, double r) const;

    Base base_ = Base::LegendreDual;
    double gamma_ = 1.5;
    Field weight_;
    double lambda_ = 0.0;
};

/// Radial profile of the exact transform of c (1 + |v|^2)^{gamma'/2}: returns the optimal
/// speed rho solving c gamma' rho (1 + rho^2)^{gamma'/2 - 1} = r.
double legendre_dual_speed(double c, double gamma_prime, double r);

// Brute-force Legendre oracle: grid search over the cube [-R, R]^d followed by a
// finite-difference Newton ascent. Black-box in the objective.

struct SupResult {
    double value = 0.0;
    PVec argmax;
};

/// Maximize a concave objective over the cube [-radius, radius]^dim. Throws std::domain_error
/// if the grid maximizer sits on the cube boundary (radius too small).
SupResult brute_force_sup(const std::function<double(const PVec&)>& objective, int dim, double radius, int samples);

/// H0(x, p) = sup_v [-v.p - L0(x, v)] by brute force.
double legendre_transform(const LagrangianModel& lagrangian, std::size_t node, const PVec& p, double v_radius,
                          int v_samples);

/// sup_p [-p.v - H(p)] with H itself computed by legendre_transform: recovers L0 when L0 is convex.
double double_legendre_transform(const LagrangianModel& lagrangian, std::size_t node, const PVec& v,
                                 double radius, int samples);

/// Growth constants for L0 = a (1+|v|^2)^{gamma'/2}:
/// C1 |v|^g'/g' <= L0 <= C2 |v|^g'/g' + c2 with C1 = g' a_min, C2 = g' a_max 2^{g'/2-1}, c2 = a_max 2^{g'/2-1}.
/// Conjugation gives C1' |p|^g/g - c1' <= H0 <= C2' |p|^g/g with C1' = C2^{1-g}, C2' = C1^{1-g}, c1' = c2.
struct GrowthConstants {
    double lower_slope = 0.0;   // C1'
    double upper_slope = 0.0;   // C2'
    double lower_offset = 0.0;  // c1'
};
GrowthConstants transform_growth_constants(const LagrangianModel& lagrangian, double gamma);

struct AssumptionCheck {
    std::string name;
    std::string statement;
    bool passed = false;
    bool mandatory = true;
    double margin = 0.0;      // worst sampled slack (positive = satisfied)
    std::size_t worst_node = 0;
    PVec worst_p;
    std::string detail;
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;
    /// Fitted constants of the coercivity bound p.DpH - H >= c|p|^gamma - C.
    double coercivity_c = 0.0;
    double coercivity_C = 0.0;
    /// Fitted constant of |DpH| <= C |p|^{gamma-1} + C.
    double gradient_growth_C = 0.0;
    /// Smallest sampled Hessian eigenvalue.
    double min_hessian_eigenvalue = 0.0;
    std::size_t sample_count = 0;

    bool all_passed() const;
    const AssumptionCheck& find(const std::string& name) const;
};

struct SampleSpec {
    int momenta_per_node = 64;
    double momentum_radius = 10.0;
    std::uint64_t seed = 7;
    /// Optional potential (for strict monotonicity in m) with the density range to scan.
    std::optional<Potential> potential;
    double m_min = 0.05;
    double m_max = 5.0;
};

AssumptionReport check_assumptions(const HamiltonianModel& model, double alpha, int dim, const SampleSpec& spec);

}  // namespace mfgc
