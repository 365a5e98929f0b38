#pragma once

#include "mfgc/linearized.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mfgc {

struct SolverConfig {
    double newton_tol = 1e-10;
    int newton_max_iters = 20;
    double dlambda_init = 0.25;
    double dlambda_min = 1e-3;
    double dlambda_max = 0.5;
    /// Accepted states keep min m at or above this value.
    double m_positivity_margin = 1e-8;
    /// solve_path refuses horizons longer than this (the theory is short-time only).
    double max_horizon = 1.0;
    /// Fixed schedules keep dlambda_init and fail on the first rejected step.
    bool adaptive = true;
    /// Smallest damping factor tried by the line search.
    double min_damping = 1.0 / 1024.0;
    /// solve_path stops here (0 = the target problem).
    double lambda_target = 0.0;
    LinearSolveOptions linear;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct ContinuationState {
    double lambda = 1.0;
    SolutionPair pair;
    double residual_norm = 0.0;
    int newton_iters = 0;
    double step = 0.0;
    double min_density = 0.0;
    bool floor_activated = false;
};

/// lambda = 1 state: m = 1, u = (1 - pi/4)(t - T).
ContinuationState trivial_solution(const MFGProblem& problem);

struct NewtonDiagnostics {
    bool converged = false;
    int iterations = 0;
    /// Residual sup-norm before each iteration and after the last one.
    std::vector<double> residual_history;
    std::vector<double> damping;
    std::string failure;
};

struct NewtonResult {
    SolutionPair pair;
    NewtonDiagnostics diagnostics;
};

/// Damped Newton on residual_full. Never throws for non-convergence; the diagnostics carry the reason.
NewtonResult newton_correct(const MFGProblem& problem, const LambdaData& data, const SolutionPair& start,
                            const SolverConfig& config);

enum class PathStatus { Completed, StepUnderflow, HorizonGuard };

const char* path_status_name(PathStatus s);

struct PathResult {
    PathStatus status = PathStatus::Completed;
    /// Accepted states, starting with the lambda = 1 state.
    std::vector<ContinuationState> states;
    std::string message;
    /// The lambda at which the last rejected attempt was made (failures only).
    double failed_lambda = 0.0;

    bool completed() const { return status == PathStatus::Completed; }
    const ContinuationState& last() const { return states.back(); }
};

using ProgressSink = std::function<void(const ContinuationState&)>;

PathResult solve_path(const MFGProblem& problem, const SolverConfig& config, const ProgressSink& progress = {});

/// Line-oriented progress record: "lambda=... residual=... iters=... step=... min_m=...".
std::string progress_line(const ContinuationState& s);

}  // namespace mfgc
