#include "mfgc/galerkin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace mfgc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<std::array<int, 2>> half_plane_wavevectors(const PeriodicGrid& grid) {
    const int half = grid.points_per_dim() / 2;
    // |k_a| < N/2 keeps every mode away from the Nyquist frequency.
    const int kmax = grid.points_per_dim() % 2 == 0 ? half - 1 : half;
    std::vector<std::array<int, 2>> out;
    if (grid.dim() == 1) {
        for (int k = 1; k <= kmax; ++k) out.push_back({k, 0});
        return out;
    }
    for (int k0 = 0; k0 <= kmax; ++k0)
        for (int k1 = -kmax; k1 <= kmax; ++k1)
            if (k0 > 0 || k1 > 0) out.push_back({k0, k1});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        const int na = a[0] * a[0] + a[1] * a[1], nb = b[0] * b[0] + b[1] * b[1];
        if (na != nb) return na < nb;
        return a < b;
    });
    return out;
}

Eigen::MatrixXd stiffness(const FourierBasis& basis) {
    const double w = basis.grid().cell_volume();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(basis.size(), basis.size());
    for (const auto& de : basis.gradients()) k += w * de.transpose() * de;
    return k;
}

Eigen::MatrixXd mix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double theta) {
    return (1.0 - theta) * a + theta * b;
}

// One classical RK4 step for y' = F(t) y + s(t), F and s linear in t across the step.
Eigen::MatrixXd rk4_step(const Eigen::MatrixXd& f0, const Eigen::MatrixXd& f1, const Eigen::MatrixXd& s0,
                         const Eigen::MatrixXd& s1, const Eigen::MatrixXd& y, double dt) {
    const Eigen::MatrixXd fh = mix(f0, f1, 0.5);
    const Eigen::MatrixXd sh = mix(s0, s1, 0.5);
    const Eigen::MatrixXd k1 = f0 * y + s0;
    const Eigen::MatrixXd k2 = fh * (y + 0.5 * dt * k1) + sh;
    const Eigen::MatrixXd k3 = fh * (y + 0.5 * dt * k2) + sh;
    const Eigen::MatrixXd k4 = f1 * (y + dt * k3) + s1;
    Eigen::MatrixXd out = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!out.allFinite()) throw NumericalError("galerkin: RK4 step produced non-finite values");
    return out;
}

Eigen::VectorXd state(const GalerkinTrajectory& t, int n) {
    Eigen::VectorXd y(2 * t.A.rows());
    y << t.A.col(n), t.B.col(n);
    return y;
}

}  // namespace

FourierBasis::FourierBasis(const PeriodicGrid& grid, int count) : grid_(grid) {
    const auto waves = half_plane_wavevectors(grid);
    const int available = 1 + 2 * static_cast<int>(waves.size());
    if (count < 1 || count > available)
        throw std::invalid_argument("FourierBasis: count must lie in [1, " + std::to_string(available) + "]");
    const auto nx = static_cast<Eigen::Index>(grid.size());
    values_.resize(nx, count);
    values_.col(0).setOnes();
    wavevectors_.push_back({0, 0});
    for (int k = 1; k < count; ++k) {
        const auto& w = waves[static_cast<std::size_t>((k - 1) / 2)];
        const bool is_sin = (k - 1) % 2 == 1;
        for (Eigen::Index i = 0; i < nx; ++i) {
            double phase = 0.0;
            for (int a = 0; a < grid.dim(); ++a) phase += w[static_cast<std::size_t>(a)] * grid.coordinate(static_cast<std::size_t>(i), a);
            phase *= kTwoPi;
            values_(i, k) = std::numbers::sqrt2 * (is_sin ? std::sin(phase) : std::cos(phase));
        }
        wavevectors_.push_back(w);
    }
    gradients_.assign(static_cast<std::size_t>(grid.dim()), Eigen::MatrixXd(nx, count));
    for (int k = 0; k < count; ++k) {
        const VectorField g = gradient(Field(grid, values_.col(k)));
        for (int a = 0; a < grid.dim(); ++a) gradients_[static_cast<std::size_t>(a)].col(k) = g[static_cast<std::size_t>(a)].values;
    }
}

Eigen::VectorXd FourierBasis::project(const Field& f) const {
    require_same_grid(grid_, f.grid, "FourierBasis::project");
    return grid_.cell_volume() * (values_.transpose() * f.values);
}

Field FourierBasis::reconstruct(const Eigen::VectorXd& coefficients) const {
    if (coefficients.size() != size()) throw std::invalid_argument("FourierBasis::reconstruct: wrong coefficient count");
    return Field(grid_, values_ * coefficients);
}

Eigen::MatrixXd GalerkinSystem::generator(int n) const {
    const auto& s = slices[static_cast<std::size_t>(n)];
    const Eigen::Index k = size();
    Eigen::MatrixXd f(2 * k, 2 * k);
    f << -s.aa, -s.ab, s.ba, s.bb;
    return f;
}

Eigen::VectorXd GalerkinSystem::forcing(int n) const {
    const auto& s = slices[static_cast<std::size_t>(n)];
    Eigen::VectorXd v(2 * size());
    v << s.h, s.g;
    return v;
}

GalerkinSystem assemble_galerkin_system(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                                        const FourierBasis& basis, const LinearizedRHS& rhs) {
    require_same_grid(problem.grid, basis.grid(), "assemble_galerkin_system");
    require_same_grid(problem.grid, rhs.A.grid, "assemble_galerkin_system");
    if (!(rhs.h.time == problem.time) || !(rhs.g.time == problem.time))
        throw GridMismatch("assemble_galerkin_system: rhs time grid differs from the problem");
    const auto coeffs = linear_coefficients(problem, data, base);
    const int nt = problem.time.steps();
    const double w = problem.grid.cell_volume();
    const Eigen::MatrixXd& e = basis.values();
    const auto& de = basis.gradients();
    const Eigen::MatrixXd heat = stiffness(basis);
    const auto d = static_cast<std::size_t>(problem.grid.dim());

    GalerkinSystem sys;
    sys.time = problem.time;
    sys.slices.resize(static_cast<std::size_t>(nt + 1));
    for (int n = 0; n <= nt; ++n) {
        const LinearCoefficients& lc = coeffs[static_cast<std::size_t>(n)];
        GalerkinSlice& s = sys.slices[static_cast<std::size_t>(n)];
        s.aa = heat;
        s.ab = Eigen::MatrixXd::Zero(basis.size(), basis.size());
        s.bb = heat;
        for (std::size_t a = 0; a < d; ++a) {
            s.aa += w * de[a].transpose() * (lc.fp_f[a].values.asDiagonal() * e);
            s.bb += w * e.transpose() * (lc.hjb_v[a].values.asDiagonal() * de[a]);
            for (std::size_t b = 0; b < d; ++b) s.ab += w * de[a].transpose() * (lc.fp_v[a][b].values.asDiagonal() * de[b]);
        }
        s.ba = -w * e.transpose() * (lc.hjb_f.values.asDiagonal() * e);
        // h is not defined on slice 0 nor g on slice N_t; the neighbouring slice stands in.
        s.h = basis.project(rhs.h[std::max(n, 1)]);
        s.g = basis.project(rhs.g[std::min(n, nt - 1)]);
        if (!s.aa.allFinite() || !s.ab.allFinite() || !s.bb.allFinite() || !s.ba.allFinite())
            throw NumericalError("assemble_galerkin_system: non-finite coupling at slice " + std::to_string(n));
    }
    sys.initial = basis.project(rhs.A);
    sys.terminal = basis.project(rhs.B);
    return sys;
}

GalerkinSystem assemble_galerkin_system(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                                        const FourierBasis& basis) {
    return assemble_galerkin_system(problem, data, base, basis, LinearizedRHS::zero(problem.grid, problem.time));
}

SingularShooting::SingularShooting(const std::string& what, double sigma_min_)
    : std::runtime_error(what), sigma_min(sigma_min_) {}

ShootingMatrix shooting_matrix(const GalerkinSystem& system) {
    const Eigen::Index k = system.size();
    const int nt = system.time.steps();
    const double dt = system.time.dt();
    ShootingMatrix out;
    out.fundamental.reserve(static_cast<std::size_t>(nt + 1));
    out.fundamental.push_back(Eigen::MatrixXd::Identity(2 * k, 2 * k));
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2 * k, 2 * k);
    Eigen::MatrixXd f0 = system.generator(0);
    for (int n = 0; n < nt; ++n) {
        const Eigen::MatrixXd f1 = system.generator(n + 1);
        out.fundamental.push_back(rk4_step(f0, f1, zero, zero, out.fundamental.back(), dt));
        f0 = f1;
    }
    const Eigen::MatrixXd& phi = out.fundamental.back();
    out.map = Eigen::MatrixXd::Zero(2 * k, 2 * k);
    out.map.topLeftCorner(k, k).setIdentity();
    out.map.bottomRows(k) = phi.bottomRows(k);

    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.map);
    out.largest_singular_value = svd.singularValues()(0);
    out.smallest_singular_value = svd.singularValues()(2 * k - 1);
    Eigen::MatrixXd eq = out.map;
    for (Eigen::Index r = 0; r < eq.rows(); ++r) {
        const double s = eq.row(r).cwiseAbs().maxCoeff();
        if (s > 0.0) eq.row(r) /= s;
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd_eq(eq);
    const double lo = svd_eq.singularValues()(2 * k - 1);
    out.equilibrated_condition = lo > 0.0 ? svd_eq.singularValues()(0) / lo : INFINITY;
    return out;
}

GalerkinSolution solve_galerkin(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                                const FourierBasis& basis, const LinearizedRHS& rhs) {
    const GalerkinSystem sys = assemble_galerkin_system(problem, data, base, basis, rhs);
    GalerkinSolution sol;
    sol.shooting = shooting_matrix(sys);
    const double sigma = sol.shooting.smallest_singular_value;
    if (!(sigma > 0.0) || !std::isfinite(sol.shooting.largest_singular_value))
        throw SingularShooting("shooting matrix is singular (smallest singular value " + std::to_string(sigma) + ")",
                               sigma);
    const Eigen::Index k = sys.size();
    const Eigen::Index w = 2 * k;
    const int nt = sys.time.steps();
    const double dt = sys.time.dt();

    // Segment starts: cut whenever the fundamental matrix has grown by e^12 since the last cut.
    constexpr double kMaxLogGrowth = 12.0;
    std::vector<int> cuts{0};
    for (int n = 1; n < nt; ++n) {
        const double grow = std::log(sol.shooting.fundamental[static_cast<std::size_t>(n + 1)].norm()) -
                            std::log(sol.shooting.fundamental[static_cast<std::size_t>(cuts.back())].norm());
        if (grow > kMaxLogGrowth) cuts.push_back(n);
    }
    const int segs = static_cast<int>(cuts.size());
    cuts.push_back(nt);
    sol.segments = segs;

    // Local fundamental matrices and zero-start particular solutions on every segment.
    std::vector<Eigen::MatrixXd> local(static_cast<std::size_t>(nt + 1));
    std::vector<Eigen::VectorXd> part(static_cast<std::size_t>(nt + 1));
    std::vector<Eigen::MatrixXd> seg_end_phi(static_cast<std::size_t>(segs));
    std::vector<Eigen::VectorXd> seg_end_part(static_cast<std::size_t>(segs));
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(w, w);
    for (int j = 0; j < segs; ++j) {
        const int a = cuts[static_cast<std::size_t>(j)], b = cuts[static_cast<std::size_t>(j + 1)];
        Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(w, w);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(w);
        for (int n = a; n <= b; ++n) {
            if (n > a) {
                const Eigen::MatrixXd f0 = sys.generator(n - 1), f1 = sys.generator(n);
                phi = rk4_step(f0, f1, zero, zero, phi, dt);
                y = rk4_step(f0, f1, sys.forcing(n - 1), sys.forcing(n), y, dt);
            }
            // Slice b belongs to the next segment unless it is the final time.
            if (n < b || j == segs - 1) {
                local[static_cast<std::size_t>(n)] = phi;
                part[static_cast<std::size_t>(n)] = y;
            }
        }
        seg_end_phi[static_cast<std::size_t>(j)] = phi;
        seg_end_part[static_cast<std::size_t>(j)] = y;
    }

    // Unknowns: the state at each segment start. Rows: A(0), continuity, B(T).
    const Eigen::Index size = w * segs;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(size, size);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(size);
    m.topLeftCorner(k, k).setIdentity();
    r.head(k) = sys.initial;
    for (int j = 0; j + 1 < segs; ++j) {
        const Eigen::Index row = k + w * j;
        m.block(row, w * j, w, w) = -seg_end_phi[static_cast<std::size_t>(j)];
        m.block(row, w * (j + 1), w, w).setIdentity();
        r.segment(row, w) = seg_end_part[static_cast<std::size_t>(j)];
    }
    m.block(size - k, w * (segs - 1), k, w) = seg_end_phi.back().bottomRows(k);
    r.tail(k) = sys.terminal - seg_end_part.back().tail(k);
    for (Eigen::Index i = 0; i < size; ++i) {
        const double s = m.row(i).cwiseAbs().maxCoeff();
        if (s > 0.0) {
            m.row(i) /= s;
            r[i] /= s;
        }
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (!lu.isInvertible() || lu.rcond() < 1e-14)
        throw SingularShooting("shooting system is singular (rcond " + std::to_string(lu.rcond()) + ", smallest singular value of the map " +
                                   std::to_string(sigma) + ")",
                               sigma);
    const Eigen::VectorXd z = lu.solve(r);

    sol.trajectory.A.resize(k, nt + 1);
    sol.trajectory.B.resize(k, nt + 1);
    sol.fields = Perturbation::zero(problem.grid, problem.time);
    int j = 0;
    for (int n = 0; n <= nt; ++n) {
        while (j + 1 < segs && n >= cuts[static_cast<std::size_t>(j + 1)]) ++j;
        const Eigen::VectorXd y = local[static_cast<std::size_t>(n)] * z.segment(w * j, w) + part[static_cast<std::size_t>(n)];
        sol.trajectory.A.col(n) = y.head(k);
        sol.trajectory.B.col(n) = y.tail(k);
        sol.fields.f[n] = basis.reconstruct(y.head(k));
        sol.fields.v[n] = basis.reconstruct(y.tail(k));
    }
    return sol;
}

Perturbation solve_linearized_galerkin(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                                       const FourierBasis& basis, const LinearizedRHS& rhs) {
    return solve_galerkin(problem, data, base, basis, rhs).fields;
}

double galerkin_step_defect(const GalerkinSystem& system, const GalerkinTrajectory& trajectory) {
    const int nt = system.time.steps();
    if (trajectory.A.cols() != nt + 1 || trajectory.A.rows() != system.size())
        throw std::invalid_argument("galerkin_step_defect: trajectory does not match the system");
    double worst = 0.0;
    for (int n = 0; n < nt; ++n) {
        const Eigen::VectorXd next = rk4_step(system.generator(n), system.generator(n + 1), system.forcing(n),
                                              system.forcing(n + 1), state(trajectory, n), system.time.dt());
        const Eigen::VectorXd stored = state(trajectory, n + 1);
        worst = std::max(worst, (next - stored).norm() / std::max(1.0, stored.norm()));
    }
    return worst;
}

EnergyRatio energy_ratio(const GalerkinTrajectory& trajectory, const LinearizedRHS& rhs) {
    const TimeGrid& time = rhs.h.time;
    const int nt = time.steps();
    EnergyRatio r;
    for (int n = 0; n <= nt; ++n)
        r.state = std::max(r.state, std::sqrt(trajectory.A.col(n).squaredNorm() + trajectory.B.col(n).squaredNorm()));
    // Space-time L2 norms by the trapezoidal rule over the slices where each datum is read.
    auto st_norm = [&](const SpaceTimeField& f, int first, int last) {
        double acc = 0.0;
        for (int n = first; n <= last; ++n) {
            const double wt = (n == first || n == last) ? 0.5 : 1.0;
            acc += wt * time.dt() * inner(f[n], f[n]);
        }
        return std::sqrt(acc);
    };
    r.data = st_norm(rhs.h, 1, nt) + st_norm(rhs.g, 0, nt - 1) + l2_norm(rhs.A) + l2_norm(rhs.B);
    return r;
}

EnergyInequalityConstants energy_inequality_constants(const FourierBasis& basis, const GalerkinSystem& system,
                                                      const GalerkinTrajectory& trajectory) {
    const Eigen::MatrixXd heat = stiffness(basis);
    const int nt = system.time.steps();
    const double dt = system.time.dt();
    EnergyInequalityConstants c;
    auto ratio = [](double excess, double bound) {
        if (excess <= 0.0) return 0.0;
        return bound > 0.0 ? excess / bound : INFINITY;
    };
    for (int n = 0; n < nt; ++n) {
        const auto a0 = trajectory.A.col(n), a1 = trajectory.A.col(n + 1);
        const auto b0 = trajectory.B.col(n), b1 = trajectory.B.col(n + 1);
        const auto& s0 = system.slices[static_cast<std::size_t>(n)];
        const auto& s1 = system.slices[static_cast<std::size_t>(n + 1)];
        auto avg = [](double x, double y) { return 0.5 * (x + y); };
        const double f2 = avg(a0.squaredNorm(), a1.squaredNorm());
        const double v2 = avg(b0.squaredNorm(), b1.squaredNorm());
        const double df2 = avg(a0.dot(heat * a0), a1.dot(heat * a1));
        const double dv2 = avg(b0.dot(heat * b0), b1.dot(heat * b1));
        const double h2 = avg(s0.h.squaredNorm(), s1.h.squaredNorm());
        const double g2 = avg(s0.g.squaredNorm(), s1.g.squaredNorm());
        const double f2_t = (a1.squaredNorm() - a0.squaredNorm()) / dt;
        const double v2_t = (b1.squaredNorm() - b0.squaredNorm()) / dt;
        c.fp = std::max(c.fp, ratio(f2_t + df2, h2 + dv2 + f2));
        c.hjb = std::max(c.hjb, ratio(-(v2_t - dv2), g2 + v2 + f2));
    }
    return c;
}

}  // namespace mfgc
