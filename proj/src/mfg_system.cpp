#include "mfgc/mfg_system.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfgc {

PositivityError::PositivityError(std::size_t node_, int slice_, double value_)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << "nonpositive density m=" << value_ << " at node " << node_ << ", slice " << slice_;
          return os.str();
      }()),
      node(node_),
      slice(slice_),
      value(value_) {}

void MFGProblem::validate() {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha: congestion exponent must be >= 0");
    if (hamiltonian.dim() != grid.dim()) throw std::invalid_argument("hamiltonian: weight lives on a different grid");
    require_same_grid(hamiltonian.weight().grid, grid, "hamiltonian weight");
    if (static_cast<int>(drift.size()) != grid.dim()) throw std::invalid_argument("drift: need one component per dimension");
    for (const auto& b : drift) {
        require_same_grid(b.grid, grid, "drift");
        if (!b.all_finite()) throw std::invalid_argument("drift: non-finite values");
    }
    require_same_grid(terminal.grid, grid, "terminal cost");
    require_same_grid(initial_density.grid, grid, "initial density");
    require_same_grid(potential.spatial_part().grid, grid, "potential");
    if (!terminal.all_finite()) throw std::invalid_argument("terminal: non-finite values");
    if (!initial_density.all_finite()) throw std::invalid_argument("initial_density: non-finite values");
    if (std::abs(integrate(initial_density) - 1.0) > 1e-12)
        throw std::invalid_argument("initial_density: must integrate to 1 (got " + std::to_string(integrate(initial_density)) + ")");
    const double m_min = initial_density.values.minCoeff();
    if (k0 == 0.0) k0 = m_min;
    if (!(k0 > 0.0) || m_min < k0) throw std::invalid_argument("initial_density: need m0 >= k0 > 0");
    if (!(m_floor > 0.0)) throw std::invalid_argument("m_floor: must be positive");
    for (int k = 0; k <= 256; ++k) {
        const double m = 1e-3 + 10.0 * k / 256.0;
        if (!(potential.slope(m) > 0.0)) throw std::invalid_argument("potential: v2 must be strictly increasing");
    }
}

LambdaData lambda_data(const MFGProblem& problem, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0,1]");
    LambdaData d;
    d.lambda = lambda;
    d.hamiltonian = problem.hamiltonian.with_lambda(lambda);
    d.potential = problem.potential.with_lambda(lambda);
    d.drift = problem.drift;
    for (auto& b : d.drift) b *= 1.0 - lambda;
    d.terminal = (1.0 - lambda) * problem.terminal;
    d.initial_density = (1.0 - lambda) * problem.initial_density;
    d.initial_density.values.array() += lambda;
    return d;
}

VectorField congestion_ratio(const VectorField& du, const Field& m, double alpha, double m_floor) {
    VectorField q = du;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double scale = std::pow(std::max(m[i], m_floor), -alpha);
        for (auto& comp : q) comp[i] *= scale;
    }
    return q;
}

SliceCoefficients slice_coefficients(const MFGProblem& problem, const LambdaData& data, const Field& u, const Field& m,
                                     int slice) {
    const std::size_t size = m.size();
    const int d = problem.grid.dim();
    SliceCoefficients c;
    c.m = m;
    c.m_eff = m;
    c.floor_active.assign(size, 0);
    for (std::size_t i = 0; i < size; ++i) {
        if (!std::isfinite(m[i])) throw NumericalError("non-finite density at slice " + std::to_string(slice));
        if (problem.strict && m[i] <= 0.0) throw PositivityError(i, slice, m[i]);
        if (m[i] < problem.m_floor) {
            c.m_eff[i] = problem.m_floor;
            c.floor_active[i] = 1;
        }
    }
    c.du = gradient(u);
    c.q = congestion_ratio(c.du, m, problem.alpha, problem.m_floor);
    c.h = Field(problem.grid);
    c.dph.assign(static_cast<std::size_t>(d), Field(problem.grid));
    c.hess.resize(size);
    PVec p(d);
    for (std::size_t i = 0; i < size; ++i) {
        for (int a = 0; a < d; ++a) p[a] = c.q[static_cast<std::size_t>(a)][i];
        const HamiltonianJet j = data.hamiltonian.jet(i, p);
        c.h[i] = j.value;
        for (int a = 0; a < d; ++a) c.dph[static_cast<std::size_t>(a)][i] = j.grad[a];
        c.hess[i] = j.hess;
    }
    return c;
}

Field fp_spatial_term(const LambdaData& data, const SliceCoefficients& c) {
    VectorField flux = c.dph;
    for (std::size_t a = 0; a < flux.size(); ++a) {
        flux[a] += data.drift[a];
        flux[a].values.array() *= c.m.values.array();
    }
    Field out = laplacian(c.m) + divergence(flux);
    out *= -1.0;
    return out;
}

Field hjb_spatial_term(const MFGProblem& problem, const LambdaData& data, const SliceCoefficients& c, const Field& u) {
    Field out = laplacian(u);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double drift_dot = 0.0;
        for (std::size_t a = 0; a < c.du.size(); ++a) drift_dot += data.drift[a][i] * c.du[a][i];
        out[i] += -std::pow(c.m_eff[i], problem.alpha) * c.h[i] - drift_dot + data.potential.value(i, c.m[i]);
    }
    return out;
}

SpaceTimeField residual_fp(const MFGProblem& problem, const LambdaData& data, const SolutionPair& pair) {
    const int nt = problem.time.steps();
    const double dt = problem.time.dt();
    SpaceTimeField r(problem.grid, problem.time);
    r[0] = pair.m[0] - data.initial_density;
    for (int n = 1; n <= nt; ++n) {
        const SliceCoefficients c = slice_coefficients(problem, data, pair.u[n], pair.m[n], n);
        r[n] = (1.0 / dt) * (pair.m[n] - pair.m[n - 1]) + fp_spatial_term(data, c);
    }
    return r;
}

SpaceTimeField residual_hjb(const MFGProblem& problem, const LambdaData& data, const SolutionPair& pair) {
    const int nt = problem.time.steps();
    const double dt = problem.time.dt();
    SpaceTimeField r(problem.grid, problem.time);
    for (int n = 0; n < nt; ++n) {
        const SliceCoefficients c = slice_coefficients(problem, data, pair.u[n], pair.m[n], n);
        r[n] = (1.0 / dt) * (pair.u[n + 1] - pair.u[n]) + hjb_spatial_term(problem, data, c, pair.u[n]);
    }
    r[nt] = pair.u[nt] - data.terminal;
    return r;
}

double MFGResidual::sup_norm() const {
    return std::max({fp.sup_norm(), hjb.sup_norm(), initial.values.cwiseAbs().maxCoeff(),
                     terminal.values.cwiseAbs().maxCoeff()});
}

MFGResidual residual_full(const MFGProblem& problem, const LambdaData& data, const SolutionPair& pair) {
    require_same_grid(pair.u.grid(), problem.grid, "residual_full (u)");
    require_same_grid(pair.m.grid(), problem.grid, "residual_full (m)");
    if (!(pair.u.time == problem.time) || !(pair.m.time == problem.time))
        throw GridMismatch("residual_full: time grids differ");
    MFGResidual r;
    r.fp = residual_fp(problem, data, pair);
    r.hjb = residual_hjb(problem, data, pair);
    r.initial = r.fp[0];
    r.terminal = r.hjb[problem.time.steps()];
    return r;
}

Eigen::VectorXd flatten(const SolutionPair& pair) {
    const int nt = pair.m.steps();
    const auto nx = static_cast<Eigen::Index>(pair.m.grid().size());
    Eigen::VectorXd x(2 * nx * (nt + 1));
    for (int n = 0; n <= nt; ++n) {
        x.segment(2 * nx * n, nx) = pair.m[n].values;
        x.segment(2 * nx * n + nx, nx) = pair.u[n].values;
    }
    return x;
}

SolutionPair unflatten(const Eigen::VectorXd& x, const PeriodicGrid& grid, const TimeGrid& time) {
    const auto nx = static_cast<Eigen::Index>(grid.size());
    if (x.size() != 2 * nx * (time.steps() + 1)) throw GridMismatch("unflatten: vector length does not match grids");
    SolutionPair pair{SpaceTimeField(grid, time), SpaceTimeField(grid, time)};
    for (int n = 0; n <= time.steps(); ++n) {
        pair.m[n].values = x.segment(2 * nx * n, nx);
        pair.u[n].values = x.segment(2 * nx * n + nx, nx);
    }
    return pair;
}

Eigen::VectorXd flatten(const MFGResidual& r) {
    // FP rows align with m unknowns and HJB rows with u unknowns.
    return flatten(SolutionPair{r.hjb, r.fp});
}

double min_density(const SolutionPair& pair) {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& s : pair.m.slices) lo = std::min(lo, s.values.minCoeff());
    return lo;
}

}  // namespace mfgc
