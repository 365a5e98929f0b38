#pragma once

#include "mfgc/grid.hpp"
#include "mfgc/hamiltonian.hpp"
#include "mfgc/potential.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgc {

/// A density value that is not strictly positive where strict evaluation was requested.
struct PositivityError : std::runtime_error {
    PositivityError(std::size_t node_, int slice_, double value_);
    std::size_t node;
    int slice;
    double value;
};

/// All data of the congestion MFG system on one space-time discretization.
struct MFGProblem {
    PeriodicGrid grid;
    TimeGrid time;
    double alpha = 0.5;
    /// Base Hamiltonian H0 (lambda = 0).
    HamiltonianModel hamiltonian;
    /// Reference drift b(x), one field per direction.
    VectorField drift;
    Potential potential;
    Field terminal;         // Psi
    Field initial_density;  // m0
    /// Lower bound m0 >= k0 > 0; filled in by validate() when left at zero.
    double k0 = 0.0;
    /// Floor used only inside the congestion ratio Du / m^alpha.
    double m_floor = 1e-10;
    /// Reject nonpositive densities instead of flooring them.
    bool strict = true;

    /// Throws std::invalid_argument naming the offending field.
    void validate();
};

/// Blended data at continuation parameter lambda.
struct LambdaData {
    double lambda = 0.0;
    HamiltonianModel hamiltonian;
    VectorField drift;      // (1 - lambda) b
    Potential potential;    // (1 - lambda) V + lambda arctan(m)
    Field terminal;         // (1 - lambda) Psi
    Field initial_density;  // (1 - lambda) m0 + lambda
};

LambdaData lambda_data(const MFGProblem& problem, double lambda);

struct SolutionPair {
    SpaceTimeField u;
    SpaceTimeField m;
};

/// Q_i = Du_i / max(m_i, floor)^alpha.
VectorField congestion_ratio(const VectorField& du, const Field& m, double alpha, double m_floor);

/// Pointwise coefficients of one time slice, evaluated at Q = Du / m^alpha.
struct SliceCoefficients {
    Field m;                       // density on the slice
    Field m_eff;                   // max(m, floor)
    std::vector<char> floor_active;
    VectorField du;
    VectorField q;
    Field h;                       // H_lambda(x, Q)
    VectorField dph;               // DpH_lambda(x, Q)
    std::vector<PMat> hess;        // D2ppH_lambda(x, Q)
};

SliceCoefficients slice_coefficients(const MFGProblem& problem, const LambdaData& data, const Field& u, const Field& m,
                                     int slice);

/// -Laplacian(m) - div((DpH_lambda(x,Q) + b_lambda) m): the FP spatial operator (integrates to 0).
Field fp_spatial_term(const LambdaData& data, const SliceCoefficients& c);

/// Laplacian(u) - m^alpha H_lambda(x,Q) - b_lambda.Du + V_lambda(x,m): the HJB spatial operator.
Field hjb_spatial_term(const MFGProblem& problem, const LambdaData& data, const SliceCoefficients& c, const Field& u);

/// FP row: slice 0 holds m(.,0) - m_lambda; slices n >= 1 hold the implicit Euler residual
/// (m^n - m^{n-1})/dt - Lap m^n - div((DpH + b) m^n).
SpaceTimeField residual_fp(const MFGProblem& problem, const LambdaData& data, const SolutionPair& pair);

/// HJB row: slices n < N_t hold (u^{n+1} - u^n)/dt + Lap u^n - m^alpha H(x,Q) - b.Du^n + V(x,m^n);
/// slice N_t holds u(.,T) - Psi_lambda.
SpaceTimeField residual_hjb(const MFGProblem& problem, const LambdaData& data, const SolutionPair& pair);

/// The four rows of the residual operator, in order [FP; HJB; m(.,0)-m_lambda; u(.,T)-Psi_lambda].
struct MFGResidual {
    SpaceTimeField fp;
    SpaceTimeField hjb;
    Field initial;
    Field terminal;

    double sup_norm() const;
};

MFGResidual residual_full(const MFGProblem& problem, const LambdaData& data, const SolutionPair& pair);

/// Flattened unknown / residual layout shared by the Newton solver: slice n occupies the
/// block [m^n ; u^n] (residual block [FP_n ; HJB_n]) of length 2 N^d.
Eigen::VectorXd flatten(const SolutionPair& pair);
SolutionPair unflatten(const Eigen::VectorXd& x, const PeriodicGrid& grid, const TimeGrid& time);
Eigen::VectorXd flatten(const MFGResidual& r);

double min_density(const SolutionPair& pair);

}  // namespace mfgc
