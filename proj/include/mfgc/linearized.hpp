#pragma once

#include "mfgc/mfg_system.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <stdexcept>
#include <vector>

namespace mfgc {

/// Direction (v, f) in which the residual operator is linearized.
struct Perturbation {
    SpaceTimeField v;
    SpaceTimeField f;

    static Perturbation zero(const PeriodicGrid& grid, const TimeGrid& time);
};

/// Right-hand side [h; g; A; B] of the linearized system. h is the FP-row datum on slices
/// 1..N_t, g the HJB-row datum on slices 0..N_t-1; h[0] and g[N_t] are not read (those
/// rows carry the initial datum A and the terminal datum B).
struct LinearizedRHS {
    SpaceTimeField h;
    SpaceTimeField g;
    Field A;
    Field B;

    static LinearizedRHS zero(const PeriodicGrid& grid, const TimeGrid& time);
};

/// Image of a direction: the same four rows as MFGResidual.
using LinearizedImage = MFGResidual;

/// Per-slice coefficients of the linearization at a base pair.
struct LinearCoefficients {
    VectorField fp_f;                 // G + b - alpha chi (m / m_eff) S Q
    std::vector<VectorField> fp_v;    // m m_eff^{-alpha} S, fp_v[a][b]
    Field hjb_f;                      // -alpha chi m_eff^{alpha-1} (H - Q.G) + V'(m)
    VectorField hjb_v;                // G + b
};

std::vector<LinearCoefficients> linear_coefficients(const MFGProblem& problem, const LambdaData& data,
                                                    const SolutionPair& base);

/// Exact derivative of residual_full at `base` in the direction `dir`.
LinearizedImage apply_L(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                        const Perturbation& dir);

struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Block-tridiagonal-in-time matrix of the linearization. Unknowns and rows are ordered by
/// slice, each slice holding [f^n; v^n] (rows [FP_n; HJB_n]). Off-diagonal blocks are diagonal.
struct BlockTridiagonal {
    Eigen::Index block = 0;
    std::vector<Eigen::MatrixXd> diag;
    std::vector<Eigen::VectorXd> lower;  // lower[n]: coupling of row block n to column block n-1
    std::vector<Eigen::VectorXd> upper;  // upper[n]: coupling of row block n to column block n+1

    int slices() const { return static_cast<int>(diag.size()); }
    Eigen::Index rows() const { return block * slices(); }
    Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
    Eigen::SparseMatrix<double> to_sparse() const;
    std::size_t memory_bytes() const;
};

inline constexpr std::size_t kDefaultMemoryBudget = std::size_t{1} << 30;

/// Throws BudgetExceeded when the dense blocks would not fit in `memory_budget` bytes.
BlockTridiagonal assemble_L(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                            std::size_t memory_budget = kDefaultMemoryBudget);

/// Block LU (Thomas recursion) of a BlockTridiagonal matrix.
class BlockTridiagonalSolver {
public:
    explicit BlockTridiagonalSolver(const BlockTridiagonal& matrix);
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

private:
    const BlockTridiagonal* matrix_;
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> lu_;
    std::vector<Eigen::MatrixXd> coupling_;     // S_n^{-1} U_n restricted to its nonzero columns
    std::vector<std::vector<Eigen::Index>> upper_cols_;
};

struct GmresOptions {
    int restart = 80;
    int max_iterations = 4000;
    double relative_tolerance = 1e-12;
};

struct GmresResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

using LinearMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Restarted GMRES with right preconditioning: solves A x = b using A M^{-1} y = b, x = M^{-1} y.
GmresResult gmres(const LinearMap& apply, const LinearMap& precondition, const Eigen::VectorXd& b,
                  const GmresOptions& options);

/// Decoupled implicit heat sweeps: forward in time for f, backward for v.
Eigen::VectorXd heat_preconditioner(const PeriodicGrid& grid, const TimeGrid& time, const Eigen::VectorXd& r);

enum class LinearMethod { Auto, Direct, Krylov };

struct LinearSolveOptions {
    LinearMethod method = LinearMethod::Auto;
    /// Auto uses the direct path while the per-slice block has at most this many rows.
    Eigen::Index direct_block_limit = 1024;
    std::size_t memory_budget = kDefaultMemoryBudget;
    GmresOptions gmres;
};

struct LinearSolveInfo {
    LinearMethod used = LinearMethod::Direct;
    int iterations = 0;
    double relative_residual = 0.0;
};

Eigen::VectorXd flatten(const Perturbation& p);
Perturbation to_perturbation(const Eigen::VectorXd& x, const PeriodicGrid& grid, const TimeGrid& time);
Eigen::VectorXd flatten(const LinearizedRHS& rhs);

/// Solves L_lambda[v, f] = rhs at `base`. Throws NumericalError if the Krylov path stalls.
Perturbation solve_linearized(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                              const LinearizedRHS& rhs, const LinearSolveOptions& options = {},
                              LinearSolveInfo* info = nullptr);

/// Discrete energy identity for a direction with f(.,0) = 0 and v(.,T) = 0:
///   sum_n dt <FP_n, v^n> + sum_n dt <HJB_n, f^n>  =  dt sum_{0<n<N_t} int I_n dx,
/// where I_n = alpha m^{alpha-1} f^2 (Q.DpH - H - (alpha/4) Q.D2H.Q)
///           + m^{alpha-1} w.D2H.w,  w = m^{1-alpha} Dv - (alpha/2) f Q,
///           + V'(m) f^2.
struct EnergyIdentity {
    double pairing = 0.0;
    double integrand = 0.0;
    /// The three integrated summands in the order above.
    double congestion_part = 0.0;
    double convexity_part = 0.0;
    double monotone_part = 0.0;
};

EnergyIdentity energy_identity(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                               const Perturbation& dir);

}  // namespace mfgc
