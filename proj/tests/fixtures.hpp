#pragma once

#include "mfgc/mfg_system.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace fixtures {

inline constexpr double kPi = std::numbers::pi;

// d=1 reference data: b = 0.1 sin(2 pi x), V = 0.1 cos(2 pi x) + arctan(m),
// Psi = 0.05 cos(2 pi x), m0 proportional to 1 + 0.2 cos(2 pi x).
inline mfgc::MFGProblem reference_problem(int n = 64, int nt = 64, double horizon = 0.05, int dim = 1) {
    using namespace mfgc;
    const PeriodicGrid g(dim, n);
    MFGProblem p;
    p.grid = g;
    p.time = TimeGrid(horizon, nt);
    p.alpha = 0.5;
    p.hamiltonian = HamiltonianModel(HamiltonianModel::Base::LegendreDual, 1.5, Field::constant(g, 1.0));
    p.drift.clear();
    for (int a = 0; a < dim; ++a)
        p.drift.push_back(sample(g, [a](const Eigen::VectorXd& x) { return a == 0 ? 0.1 * std::sin(2 * kPi * x[0]) : 0.0; }));
    p.potential = Potential(sample(g, [](const Eigen::VectorXd& x) { return 0.1 * std::cos(2 * kPi * x[0]); }),
                            Potential::Kind::Arctan);
    p.terminal = sample(g, [](const Eigen::VectorXd& x) { return 0.05 * std::cos(2 * kPi * x[0]); });
    p.initial_density = sample(g, [](const Eigen::VectorXd& x) { return 1.0 + 0.2 * std::cos(2 * kPi * x[0]); });
    p.initial_density *= 1.0 / integrate(p.initial_density);
    p.validate();
    return p;
}

// The explicit lambda = 1 pair: m = 1, u = (1 - pi/4)(t - T).
inline mfgc::SolutionPair top_pair(const mfgc::MFGProblem& p) {
    using namespace mfgc;
    SolutionPair s{SpaceTimeField(p.grid, p.time), SpaceTimeField(p.grid, p.time)};
    for (int n = 0; n <= p.time.steps(); ++n) {
        s.m[n] = Field::constant(p.grid, 1.0);
        s.u[n] = Field::constant(p.grid, (1.0 - kPi / 4.0) * (p.time.time(n) - p.time.horizon()));
    }
    return s;
}

// Smooth random field with a few low modes and the given amplitude.
inline mfgc::Field smooth_random(const mfgc::PeriodicGrid& g, std::mt19937_64& rng, double amplitude, int kmax = 3) {
    using namespace mfgc;
    std::normal_distribution<double> n(0.0, 1.0);
    Field f(g);
    for (int k = 1; k <= kmax; ++k) {
        const double a = n(rng) / k, b = n(rng) / k;
        const double c = g.dim() == 2 ? n(rng) / k : 0.0;
        f += sample(g, [&](const Eigen::VectorXd& x) {
            const double y = g.dim() == 2 ? x[1] : 0.0;
            return a * std::cos(2 * kPi * k * x[0]) + b * std::sin(2 * kPi * k * x[0]) + c * std::cos(2 * kPi * k * y);
        });
    }
    f *= amplitude / std::max(f.values.cwiseAbs().maxCoeff(), 1e-300);
    return f;
}

// Random smooth pair near the lambda = 1 solution with positive, unit-mass density slices.
inline mfgc::SolutionPair random_pair(const mfgc::MFGProblem& p, std::mt19937_64& rng, double amplitude = 0.2) {
    using namespace mfgc;
    SolutionPair s = top_pair(p);
    const Field du = smooth_random(p.grid, rng, amplitude);
    const Field dm = smooth_random(p.grid, rng, amplitude);
    for (int n = 0; n <= p.time.steps(); ++n) {
        const double t = p.time.time(n) / p.time.horizon();
        s.u[n] += (1.0 + t) * du;
        Field m = s.m[n] + (1.0 - 0.5 * t) * dm;
        m.values.array() -= integrate(m) - 1.0;
        s.m[n] = m;
    }
    return s;
}

}  // namespace fixtures
