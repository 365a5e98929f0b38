#pragma once

#include "mfgc/linearized.hpp"

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <vector>

namespace mfgc {

/// First `count` real Fourier modes on the grid, orthonormal in the discrete L2 product:
/// the constant, then cos/sin pairs ordered by |k|^2 (Nyquist modes excluded).
class FourierBasis {
public:
    FourierBasis(const PeriodicGrid& grid, int count);

    int size() const { return static_cast<int>(values_.cols()); }
    const PeriodicGrid& grid() const { return grid_; }
    /// Node values, one column per mode.
    const Eigen::MatrixXd& values() const { return values_; }
    /// Spectral gradients of the modes, one matrix per axis.
    const std::vector<Eigen::MatrixXd>& gradients() const { return gradients_; }
    const std::array<int, 2>& wavevector(int k) const { return wavevectors_[static_cast<std::size_t>(k)]; }

    Eigen::VectorXd project(const Field& f) const;
    Field reconstruct(const Eigen::VectorXd& coefficients) const;

private:
    PeriodicGrid grid_;
    Eigen::MatrixXd values_;
    std::vector<Eigen::MatrixXd> gradients_;
    std::vector<std::array<int, 2>> wavevectors_;
};

/// Coupling blocks of the Galerkin ODE on one time slice:
///   dA/dt = h - K_AA A - K_AB B,     dB/dt = g + K_BB B + K_BA A,
/// K_AA[k,l] = <De_l + (G + b - alpha S Q) e_l, De_k>,  K_AB[k,l] = <m^{1-alpha} S De_l, De_k>,
/// K_BB[k,l] = <De_l, De_k> + <(G + b).De_l, e_k>,      K_BA[k,l] = <(alpha m^{alpha-1}(H - Q.G) - V') e_l, e_k>.
struct GalerkinSlice {
    Eigen::MatrixXd aa, ab, bb, ba;
    Eigen::VectorXd h, g;
};

struct GalerkinSystem {
    TimeGrid time;
    std::vector<GalerkinSlice> slices;
    Eigen::VectorXd initial;   // <A, e_k>
    Eigen::VectorXd terminal;  // <B, e_k>

    int size() const { return static_cast<int>(initial.size()); }
    /// Generator of the homogeneous system [A; B]' = F [A; B] at slice n.
    Eigen::MatrixXd generator(int n) const;
    Eigen::VectorXd forcing(int n) const;
};

GalerkinSystem assemble_galerkin_system(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                                        const FourierBasis& basis, const LinearizedRHS& rhs);
GalerkinSystem assemble_galerkin_system(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                                        const FourierBasis& basis);

/// Coefficients A_N^k(t_n), B_N^k(t_n) as N x (N_t + 1) arrays.
struct GalerkinTrajectory {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
};

/// The linear map (A(0), B(0)) -> (A(0), B(T)) of the homogeneous system, built from the
/// fundamental matrix integrated with fixed-step RK4 on the system's time grid.
struct ShootingMatrix {
    Eigen::MatrixXd map;
    /// Fundamental matrix Phi(t_n) for every slice (Phi(0) = I).
    std::vector<Eigen::MatrixXd> fundamental;
    double smallest_singular_value = 0.0;
    double largest_singular_value = 0.0;
    /// Condition number of the row-equilibrated map actually factorized.
    double equilibrated_condition = 0.0;
};

ShootingMatrix shooting_matrix(const GalerkinSystem& system);

struct SingularShooting : std::runtime_error {
    SingularShooting(const std::string& what, double sigma_min_);
    double sigma_min;
};

struct GalerkinSolution {
    GalerkinTrajectory trajectory;
    Perturbation fields;
    ShootingMatrix shooting;
    /// Number of shooting segments used (1 = plain shooting over [0, T]).
    int segments = 1;
};

/// Particular solution from zero initial data plus the homogeneous correction fixing
/// A(0) = <A,e>, B(T) = <B,e>. When the homogeneous flow grows by more than about e^12
/// over the horizon, the interval is split into segments whose initial states are solved
/// together with the continuity conditions (multiple shooting); otherwise the full-horizon
/// shooting matrix is inverted directly. Throws SingularShooting when the map is singular.
GalerkinSolution solve_galerkin(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                                const FourierBasis& basis, const LinearizedRHS& rhs);

Perturbation solve_linearized_galerkin(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                                       const FourierBasis& basis, const LinearizedRHS& rhs);

/// Largest relative mismatch between one RK4 step from each stored state and the next stored state.
double galerkin_step_defect(const GalerkinSystem& system, const GalerkinTrajectory& trajectory);

/// max_t ||(f_N, v_N)||_{L2} and ||h|| + ||g|| + ||A|| + ||B|| (space-time L2 for h, g).
struct EnergyRatio {
    double state = 0.0;
    double data = 0.0;
    double ratio() const { return data > 0.0 ? state / data : 0.0; }
};
EnergyRatio energy_ratio(const GalerkinTrajectory& trajectory, const LinearizedRHS& rhs);

/// Smallest constants making the two step-wise energy inequalities hold along a trajectory:
///   (|f|^2)_t + |Df|^2 <= C_fp  (|h|^2 + |Dv|^2 + |f|^2),
///   (|v|^2)_t - |Dv|^2 >= -C_hjb (|g|^2 + |v|^2 + |f|^2).
struct EnergyInequalityConstants {
    double fp = 0.0;
    double hjb = 0.0;
};
/// Evaluated on the coefficients with midpoint averages over each step; |h|, |g| are the projected data.
EnergyInequalityConstants energy_inequality_constants(const FourierBasis& basis, const GalerkinSystem& system,
                                                      const GalerkinTrajectory& trajectory);

}  // namespace mfgc
