#include "mfgc/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace mfgc {

namespace {

bool floor_activated(const SolutionPair& pair, double m_floor) { return min_density(pair) <= m_floor; }

LinearizedRHS negated(const MFGResidual& r) {
    LinearizedRHS rhs{r.fp, r.hjb, r.initial, r.terminal};
    for (auto& s : rhs.h.slices) s *= -1.0;
    for (auto& s : rhs.g.slices) s *= -1.0;
    rhs.A *= -1.0;
    rhs.B *= -1.0;
    return rhs;
}

SolutionPair step(const SolutionPair& x, const Perturbation& d, double t) {
    SolutionPair out = x;
    for (int n = 0; n <= x.u.steps(); ++n) {
        out.u[n] += t * d.v[n];
        out.m[n] += t * d.f[n];
    }
    return out;
}

}  // namespace

void SolverConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("SolverConfig: ") + what);
    };
    require(newton_tol > 0.0, "newton_tol must be positive");
    require(newton_max_iters > 0, "newton_max_iters must be positive");
    require(dlambda_min > 0.0 && dlambda_min <= dlambda_init && dlambda_init <= dlambda_max && dlambda_max <= 1.0,
            "need 0 < dlambda_min <= dlambda_init <= dlambda_max <= 1");
    require(m_positivity_margin > 0.0, "m_positivity_margin must be positive");
    require(max_horizon > 0.0, "max_horizon must be positive");
    require(min_damping > 0.0 && min_damping <= 1.0, "min_damping must lie in (0, 1]");
    require(lambda_target >= 0.0 && lambda_target <= 1.0, "lambda_target must lie in [0, 1]");
}

ContinuationState trivial_solution(const MFGProblem& problem) {
    ContinuationState s;
    s.lambda = 1.0;
    s.pair = SolutionPair{SpaceTimeField(problem.grid, problem.time), SpaceTimeField(problem.grid, problem.time)};
    const double slope = 1.0 - std::numbers::pi / 4.0;
    for (int n = 0; n <= problem.time.steps(); ++n) {
        s.pair.m[n] = Field::constant(problem.grid, 1.0);
        s.pair.u[n] = Field::constant(problem.grid, slope * (problem.time.time(n) - problem.time.horizon()));
    }
    s.residual_norm = residual_full(problem, lambda_data(problem, 1.0), s.pair).sup_norm();
    s.min_density = 1.0;
    return s;
}

NewtonResult newton_correct(const MFGProblem& problem, const LambdaData& data, const SolutionPair& start,
                            const SolverConfig& config) {
    NewtonResult out{start, {}};
    NewtonDiagnostics& diag = out.diagnostics;
    double res;
    try {
        res = residual_full(problem, data, start).sup_norm();
    } catch (const std::exception& e) {
        diag.failure = std::string("residual evaluation failed at the start: ") + e.what();
        return out;
    }
    diag.residual_history.push_back(res);
    while (true) {
        if (res <= config.newton_tol) {
            diag.converged = true;
            return out;
        }
        if (diag.iterations >= config.newton_max_iters) {
            diag.failure = "newton_max_iters exceeded";
            return out;
        }
        Perturbation d;
        try {
            d = solve_linearized(problem, data, out.pair, negated(residual_full(problem, data, out.pair)), config.linear);
        } catch (const std::exception& e) {
            diag.failure = std::string("linearized solve failed: ") + e.what();
            return out;
        }
        double t = 1.0;
        bool accepted = false;
        for (; t >= config.min_damping; t *= 0.5) {
            const SolutionPair trial = step(out.pair, d, t);
            if (min_density(trial) < config.m_positivity_margin) continue;
            double r;
            try {
                r = residual_full(problem, data, trial).sup_norm();
            } catch (const std::exception&) {
                continue;
            }
            if (std::isfinite(r) && r < res) {
                out.pair = trial;
                res = r;
                accepted = true;
                break;
            }
        }
        ++diag.iterations;
        if (!accepted) {
            diag.failure = "line search found no decrease with positive density";
            return out;
        }
        diag.damping.push_back(t);
        diag.residual_history.push_back(res);
    }
}

const char* path_status_name(PathStatus s) {
    switch (s) {
        case PathStatus::Completed: return "completed";
        case PathStatus::StepUnderflow: return "step_underflow";
        case PathStatus::HorizonGuard: return "horizon_guard";
    }
    return "unknown";
}

PathResult solve_path(const MFGProblem& problem, const SolverConfig& config, const ProgressSink& progress) {
    config.validate();
    PathResult result;
    result.states.push_back(trivial_solution(problem));
    result.states.back().step = config.dlambda_init;
    if (progress) progress(result.states.back());
    if (problem.time.horizon() > config.max_horizon) {
        result.status = PathStatus::HorizonGuard;
        result.failed_lambda = 1.0;
        result.message = "horizon " + std::to_string(problem.time.horizon()) + " exceeds max_horizon " +
                         std::to_string(config.max_horizon);
        return result;
    }
    double dl = config.dlambda_init;
    const double goal = config.lambda_target;
    while (result.last().lambda > goal) {
        const ContinuationState& prev = result.last();
        double target = prev.lambda - dl;
        if (target < goal + 1e-9 * dl) target = goal;
        const NewtonResult nr = newton_correct(problem, lambda_data(problem, target), prev.pair, config);
        if (nr.diagnostics.converged) {
            ContinuationState s;
            s.lambda = target;
            s.pair = nr.pair;
            s.residual_norm = nr.diagnostics.residual_history.back();
            s.newton_iters = nr.diagnostics.iterations;
            s.step = prev.lambda - target;
            s.min_density = min_density(nr.pair);
            s.floor_activated = floor_activated(nr.pair, problem.m_floor);
            result.states.push_back(std::move(s));
            if (progress) progress(result.last());
            if (config.adaptive && nr.diagnostics.iterations <= 2) dl = std::min(1.5 * dl, config.dlambda_max);
            continue;
        }
        result.failed_lambda = target;
        if (!config.adaptive || 0.5 * dl < config.dlambda_min) {
            result.status = PathStatus::StepUnderflow;
            std::ostringstream msg;
            msg << "no accepted step from lambda=" << prev.lambda << " (last attempt dlambda=" << dl
                << ", newton: " << nr.diagnostics.failure << ")";
            result.message = msg.str();
            return result;
        }
        dl *= 0.5;
    }
    result.status = PathStatus::Completed;
    return result;
}

std::string progress_line(const ContinuationState& s) {
    std::ostringstream out;
    out.precision(6);
    out << "lambda=" << s.lambda << " residual=" << s.residual_norm << " iters=" << s.newton_iters
        << " step=" << s.step << " min_m=" << s.min_density;
    return out.str();
}

}  // namespace mfgc
