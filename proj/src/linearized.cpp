#include "mfgc/linearized.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mfgc {

Perturbation Perturbation::zero(const PeriodicGrid& grid, const TimeGrid& time) {
    return {SpaceTimeField(grid, time), SpaceTimeField(grid, time)};
}

LinearizedRHS LinearizedRHS::zero(const PeriodicGrid& grid, const TimeGrid& time) {
    return {SpaceTimeField(grid, time), SpaceTimeField(grid, time), Field(grid), Field(grid)};
}

std::vector<LinearCoefficients> linear_coefficients(const MFGProblem& problem, const LambdaData& data,
                                                    const SolutionPair& base) {
    const int nt = problem.time.steps();
    const auto d = static_cast<std::size_t>(problem.grid.dim());
    const double alpha = problem.alpha;
    std::vector<LinearCoefficients> out(static_cast<std::size_t>(nt + 1));
    for (int n = 0; n <= nt; ++n) {
        const SliceCoefficients c = slice_coefficients(problem, data, base.u[n], base.m[n], n);
        LinearCoefficients& lc = out[static_cast<std::size_t>(n)];
        lc.fp_f.assign(d, Field(problem.grid));
        lc.hjb_v.assign(d, Field(problem.grid));
        lc.fp_v.assign(d, VectorField(d, Field(problem.grid)));
        lc.hjb_f = Field(problem.grid);
        for (std::size_t i = 0; i < c.m.size(); ++i) {
            const double m = c.m[i];
            const double me = c.m_eff[i];
            const double chi = c.floor_active[i] ? 0.0 : 1.0;
            const PMat& s = c.hess[i];
            double qg = 0.0;
            for (std::size_t a = 0; a < d; ++a) qg += c.q[a][i] * c.dph[a][i];
            lc.hjb_f[i] = -alpha * chi * std::pow(me, alpha - 1.0) * (c.h[i] - qg) + data.potential.slope(m);
            const double scale = m * std::pow(me, -alpha);
            for (std::size_t a = 0; a < d; ++a) {
                double sq = 0.0;
                for (std::size_t b = 0; b < d; ++b) {
                    sq += s(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * c.q[b][i];
                    lc.fp_v[a][b][i] = scale * s(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
                }
                const double gb = c.dph[a][i] + data.drift[a][i];
                lc.hjb_v[a][i] = gb;
                lc.fp_f[a][i] = gb - alpha * chi * (m / me) * sq;
            }
        }
    }
    return out;
}

namespace {

Field fp_linear_spatial(const LinearCoefficients& lc, const Field& f, const Field& v) {
    const std::size_t d = lc.fp_f.size();
    const VectorField dv = gradient(v);
    VectorField flux(d, Field(f.grid));
    for (std::size_t a = 0; a < d; ++a) {
        flux[a].values = lc.fp_f[a].values.cwiseProduct(f.values);
        for (std::size_t b = 0; b < d; ++b) flux[a].values += lc.fp_v[a][b].values.cwiseProduct(dv[b].values);
    }
    Field out = laplacian(f) + divergence(flux);
    out *= -1.0;
    return out;
}

Field hjb_linear_spatial(const LinearCoefficients& lc, const Field& f, const Field& v) {
    const VectorField dv = gradient(v);
    Field out = laplacian(v);
    out.values += lc.hjb_f.values.cwiseProduct(f.values);
    for (std::size_t a = 0; a < dv.size(); ++a) out.values -= lc.hjb_v[a].values.cwiseProduct(dv[a].values);
    return out;
}

void require_compatible(const MFGProblem& problem, const SolutionPair& base, const Perturbation& dir) {
    require_same_grid(base.m.grid(), problem.grid, "linearization base");
    require_same_grid(dir.f.grid(), problem.grid, "perturbation f");
    require_same_grid(dir.v.grid(), problem.grid, "perturbation v");
    if (!(dir.f.time == problem.time) || !(dir.v.time == problem.time) || !(base.m.time == problem.time))
        throw GridMismatch("linearization: time grids differ");
}

LinearizedImage apply_with(const MFGProblem& problem, const std::vector<LinearCoefficients>& coeffs,
                           const Perturbation& dir) {
    const int nt = problem.time.steps();
    const double dt = problem.time.dt();
    LinearizedImage out{SpaceTimeField(problem.grid, problem.time), SpaceTimeField(problem.grid, problem.time),
                        Field(problem.grid), Field(problem.grid)};
    out.fp[0] = dir.f[0];
    for (int n = 1; n <= nt; ++n) {
        out.fp[n] = (1.0 / dt) * (dir.f[n] - dir.f[n - 1]) +
                    fp_linear_spatial(coeffs[static_cast<std::size_t>(n)], dir.f[n], dir.v[n]);
    }
    for (int n = 0; n < nt; ++n) {
        out.hjb[n] = (1.0 / dt) * (dir.v[n + 1] - dir.v[n]) +
                     hjb_linear_spatial(coeffs[static_cast<std::size_t>(n)], dir.f[n], dir.v[n]);
    }
    out.hjb[nt] = dir.v[nt];
    out.initial = out.fp[0];
    out.terminal = out.hjb[nt];
    return out;
}

}  // namespace

LinearizedImage apply_L(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                        const Perturbation& dir) {
    require_compatible(problem, base, dir);
    return apply_with(problem, linear_coefficients(problem, data, base), dir);
}

Eigen::VectorXd BlockTridiagonal::multiply(const Eigen::VectorXd& x) const {
    if (x.size() != rows()) throw std::invalid_argument("BlockTridiagonal::multiply: size mismatch");
    Eigen::VectorXd y(rows());
    const int s = slices();
    for (int n = 0; n < s; ++n) {
        auto yn = y.segment(block * n, block);
        yn = diag[static_cast<std::size_t>(n)] * x.segment(block * n, block);
        if (n > 0) yn += lower[static_cast<std::size_t>(n)].cwiseProduct(x.segment(block * (n - 1), block));
        if (n + 1 < s) yn += upper[static_cast<std::size_t>(n)].cwiseProduct(x.segment(block * (n + 1), block));
    }
    return y;
}

Eigen::SparseMatrix<double> BlockTridiagonal::to_sparse() const {
    std::vector<Eigen::Triplet<double>> trips;
    const int s = slices();
    for (int n = 0; n < s; ++n) {
        const Eigen::MatrixXd& dn = diag[static_cast<std::size_t>(n)];
        for (Eigen::Index j = 0; j < block; ++j)
            for (Eigen::Index i = 0; i < block; ++i)
                if (dn(i, j) != 0.0) trips.emplace_back(block * n + i, block * n + j, dn(i, j));
        for (Eigen::Index i = 0; i < block; ++i) {
            if (n > 0 && lower[static_cast<std::size_t>(n)][i] != 0.0)
                trips.emplace_back(block * n + i, block * (n - 1) + i, lower[static_cast<std::size_t>(n)][i]);
            if (n + 1 < s && upper[static_cast<std::size_t>(n)][i] != 0.0)
                trips.emplace_back(block * n + i, block * (n + 1) + i, upper[static_cast<std::size_t>(n)][i]);
        }
    }
    Eigen::SparseMatrix<double> out(rows(), rows());
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

std::size_t BlockTridiagonal::memory_bytes() const {
    const auto b = static_cast<std::size_t>(block);
    return static_cast<std::size_t>(slices()) * (b * b + 2 * b) * sizeof(double);
}

BlockTridiagonal assemble_L(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                            std::size_t memory_budget) {
    const int nt = problem.time.steps();
    const auto nx = static_cast<Eigen::Index>(problem.grid.size());
    const Eigen::Index blk = 2 * nx;
    // Dense blocks, their LU factors and the coupling columns: about 2.5 b^2 doubles per slice.
    const double need = static_cast<double>(nt + 1) * 2.5 * static_cast<double>(blk) * static_cast<double>(blk) * 8.0;
    if (need > static_cast<double>(memory_budget))
        throw BudgetExceeded("assemble_L: " + std::to_string(static_cast<long long>(need)) +
                             " bytes exceed the memory budget; use the matrix-free path");

    const auto coeffs = linear_coefficients(problem, data, base);
    const int d = problem.grid.dim();
    const double dt = problem.time.dt();
    std::vector<Eigen::MatrixXd> deriv;
    for (int a = 0; a < d; ++a) deriv.push_back(derivative_matrix(problem.grid, a));
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(nx, nx);
    for (const auto& da : deriv) lap.noalias() += da * da;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(nx, nx);

    BlockTridiagonal m;
    m.block = blk;
    m.diag.assign(static_cast<std::size_t>(nt + 1), Eigen::MatrixXd::Zero(blk, blk));
    m.lower.assign(static_cast<std::size_t>(nt + 1), Eigen::VectorXd::Zero(blk));
    m.upper.assign(static_cast<std::size_t>(nt + 1), Eigen::VectorXd::Zero(blk));
    for (int n = 0; n <= nt; ++n) {
        const LinearCoefficients& lc = coeffs[static_cast<std::size_t>(n)];
        Eigen::MatrixXd& D = m.diag[static_cast<std::size_t>(n)];
        if (n == 0) {
            D.topLeftCorner(nx, nx) = eye;
        } else {
            Eigen::MatrixXd ff = eye / dt - lap;
            Eigen::MatrixXd fv = Eigen::MatrixXd::Zero(nx, nx);
            for (int a = 0; a < d; ++a) {
                const auto ua = static_cast<std::size_t>(a);
                ff.noalias() -= deriv[ua] * lc.fp_f[ua].values.asDiagonal();
                for (int b = 0; b < d; ++b) {
                    const auto ub = static_cast<std::size_t>(b);
                    fv.noalias() -= deriv[ua] * (lc.fp_v[ua][ub].values.asDiagonal() * deriv[ub]);
                }
            }
            D.topLeftCorner(nx, nx) = ff;
            D.topRightCorner(nx, nx) = fv;
            m.lower[static_cast<std::size_t>(n)].head(nx).setConstant(-1.0 / dt);
        }
        if (n == nt) {
            D.bottomRightCorner(nx, nx) = eye;
        } else {
            D.bottomLeftCorner(nx, nx) = lc.hjb_f.values.asDiagonal();
            Eigen::MatrixXd vv = lap - eye / dt;
            for (int a = 0; a < d; ++a)
                vv.noalias() -= lc.hjb_v[static_cast<std::size_t>(a)].values.asDiagonal() * deriv[static_cast<std::size_t>(a)];
            D.bottomRightCorner(nx, nx) = vv;
            m.upper[static_cast<std::size_t>(n)].tail(nx).setConstant(1.0 / dt);
        }
    }
    return m;
}

BlockTridiagonalSolver::BlockTridiagonalSolver(const BlockTridiagonal& matrix) : matrix_(&matrix) {
    const int s = matrix.slices();
    const Eigen::Index b = matrix.block;
    lu_.reserve(static_cast<std::size_t>(s));
    coupling_.resize(static_cast<std::size_t>(s));
    upper_cols_.resize(static_cast<std::size_t>(s));
    for (int n = 0; n < s; ++n) {
        const auto un = static_cast<std::size_t>(n);
        Eigen::MatrixXd schur = matrix.diag[un];
        if (n > 0) {
            // S_n = D_n - diag(lower_n) S_{n-1}^{-1} diag(upper_{n-1}); only the nonzero
            // columns of upper_{n-1} contribute.
            const auto& cols = upper_cols_[un - 1];
            const Eigen::MatrixXd& x = coupling_[un - 1];
            const Eigen::VectorXd& lo = matrix.lower[un];
            for (std::size_t k = 0; k < cols.size(); ++k) schur.col(cols[k]) -= lo.cwiseProduct(x.col(static_cast<Eigen::Index>(k)));
        }
        lu_.emplace_back(schur);
        const double rc = lu_.back().rcond();
        if (!(rc > 1e3 * std::numeric_limits<double>::epsilon()))
            throw NumericalError("BlockTridiagonalSolver: singular pivot block at slice " + std::to_string(n));
        if (n + 1 < s) {
            const Eigen::VectorXd& up = matrix.upper[un];
            std::vector<Eigen::Index> cols;
            for (Eigen::Index j = 0; j < b; ++j)
                if (up[j] != 0.0) cols.push_back(j);
            Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(b, static_cast<Eigen::Index>(cols.size()));
            for (std::size_t k = 0; k < cols.size(); ++k) rhs(cols[k], static_cast<Eigen::Index>(k)) = up[cols[k]];
            coupling_[un] = lu_.back().solve(rhs);
            upper_cols_[un] = std::move(cols);
        }
    }
}

Eigen::VectorXd BlockTridiagonalSolver::solve(const Eigen::VectorXd& rhs) const {
    const BlockTridiagonal& a = *matrix_;
    const int s = a.slices();
    const Eigen::Index b = a.block;
    if (rhs.size() != a.rows()) throw std::invalid_argument("BlockTridiagonalSolver::solve: size mismatch");
    Eigen::VectorXd z(rhs.size());
    for (int n = 0; n < s; ++n) {
        Eigen::VectorXd y = rhs.segment(b * n, b);
        if (n > 0) y -= a.lower[static_cast<std::size_t>(n)].cwiseProduct(z.segment(b * (n - 1), b));
        z.segment(b * n, b) = lu_[static_cast<std::size_t>(n)].solve(y);
    }
    for (int n = s - 2; n >= 0; --n) {
        const auto& cols = upper_cols_[static_cast<std::size_t>(n)];
        Eigen::VectorXd next(static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) next[static_cast<Eigen::Index>(k)] = z[b * (n + 1) + cols[k]];
        z.segment(b * n, b) -= coupling_[static_cast<std::size_t>(n)] * next;
    }
    return z;
}

GmresResult gmres(const LinearMap& apply, const LinearMap& precondition, const Eigen::VectorXd& b,
                  const GmresOptions& options) {
    GmresResult res;
    res.x = Eigen::VectorXd::Zero(b.size());
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        res.converged = true;
        return res;
    }
    const int m = std::max(1, options.restart);
    Eigen::VectorXd r = b;
    double beta = bnorm;
    while (res.iterations < options.max_iterations) {
        Eigen::MatrixXd V(b.size(), m + 1);
        Eigen::MatrixXd Z(b.size(), m);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
        Eigen::VectorXd cs = Eigen::VectorXd::Zero(m), sn = Eigen::VectorXd::Zero(m);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(m + 1);
        V.col(0) = r / beta;
        g[0] = beta;
        int k = 0;
        for (; k < m && res.iterations < options.max_iterations; ++k, ++res.iterations) {
            Z.col(k) = precondition(V.col(k));
            Eigen::VectorXd w = apply(Z.col(k));
            for (int i = 0; i <= k; ++i) {
                H(i, k) = V.col(i).dot(w);
                w -= H(i, k) * V.col(i);
            }
            H(k + 1, k) = w.norm();
            if (H(k + 1, k) > 0.0) V.col(k + 1) = w / H(k + 1, k);
            for (int i = 0; i < k; ++i) {
                const double t = cs[i] * H(i, k) + sn[i] * H(i + 1, k);
                H(i + 1, k) = -sn[i] * H(i, k) + cs[i] * H(i + 1, k);
                H(i, k) = t;
            }
            const double den = std::hypot(H(k, k), H(k + 1, k));
            cs[k] = H(k, k) / den;
            sn[k] = H(k + 1, k) / den;
            H(k, k) = den;
            H(k + 1, k) = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            if (std::abs(g[k + 1]) <= options.relative_tolerance * bnorm) {
                ++k;
                ++res.iterations;
                break;
            }
        }
        const Eigen::VectorXd y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
        res.x += Z.leftCols(k) * y;
        r = b - apply(res.x);
        beta = r.norm();
        res.relative_residual = beta / bnorm;
        if (res.relative_residual <= options.relative_tolerance) {
            res.converged = true;
            break;
        }
    }
    return res;
}

Eigen::VectorXd heat_preconditioner(const PeriodicGrid& grid, const TimeGrid& time, const Eigen::VectorXd& r) {
    const int nt = time.steps();
    const double dt = time.dt();
    const auto nx = static_cast<Eigen::Index>(grid.size());
    Eigen::VectorXd x(r.size());
    Field prev(grid, r.segment(0, nx));
    x.segment(0, nx) = prev.values;
    for (int n = 1; n <= nt; ++n) {
        Field rhs(grid, r.segment(2 * nx * n, nx));
        rhs += (1.0 / dt) * prev;
        prev = shifted_inverse_laplacian(rhs, 1.0 / dt);
        x.segment(2 * nx * n, nx) = prev.values;
    }
    Field next(grid, r.segment(2 * nx * nt + nx, nx));
    x.segment(2 * nx * nt + nx, nx) = next.values;
    for (int n = nt - 1; n >= 0; --n) {
        // (v^{n+1} - v^n)/dt + Lap v^n = r  =>  (1/dt - Lap) v^n = v^{n+1}/dt - r
        Field rhs = (1.0 / dt) * next;
        rhs.values -= r.segment(2 * nx * n + nx, nx);
        next = shifted_inverse_laplacian(rhs, 1.0 / dt);
        x.segment(2 * nx * n + nx, nx) = next.values;
    }
    return x;
}

Eigen::VectorXd flatten(const Perturbation& p) { return flatten(SolutionPair{p.v, p.f}); }

Perturbation to_perturbation(const Eigen::VectorXd& x, const PeriodicGrid& grid, const TimeGrid& time) {
    SolutionPair s = unflatten(x, grid, time);
    return {std::move(s.u), std::move(s.m)};
}

Eigen::VectorXd flatten(const LinearizedRHS& rhs) {
    MFGResidual r{rhs.h, rhs.g, rhs.A, rhs.B};
    r.fp[0] = rhs.A;
    r.hjb[rhs.g.steps()] = rhs.B;
    return flatten(r);
}

Perturbation solve_linearized(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                              const LinearizedRHS& rhs, const LinearSolveOptions& options, LinearSolveInfo* info) {
    const Eigen::VectorXd b = flatten(rhs);
    const Eigen::Index blk = 2 * static_cast<Eigen::Index>(problem.grid.size());
    LinearMethod method = options.method;
    if (method == LinearMethod::Auto) method = blk <= options.direct_block_limit ? LinearMethod::Direct : LinearMethod::Krylov;

    LinearSolveInfo local;
    local.used = method;
    Eigen::VectorXd x;
    if (method == LinearMethod::Direct) {
        const BlockTridiagonal a = assemble_L(problem, data, base, options.memory_budget);
        const BlockTridiagonalSolver solver(a);
        x = solver.solve(b);
        const double bn = b.norm();
        local.relative_residual = bn > 0.0 ? (a.multiply(x) - b).norm() / bn : 0.0;
    } else {
        const auto coeffs = linear_coefficients(problem, data, base);
        const LinearMap op = [&](const Eigen::VectorXd& y) {
            return flatten(apply_with(problem, coeffs, to_perturbation(y, problem.grid, problem.time)));
        };
        const LinearMap pre = [&](const Eigen::VectorXd& y) { return heat_preconditioner(problem.grid, problem.time, y); };
        const GmresResult g = gmres(op, pre, b, options.gmres);
        if (!g.converged)
            throw NumericalError("solve_linearized: GMRES stalled at relative residual " + std::to_string(g.relative_residual));
        x = g.x;
        local.iterations = g.iterations;
        local.relative_residual = g.relative_residual;
    }
    if (!x.allFinite()) throw NumericalError("solve_linearized: non-finite solution");
    if (info) *info = local;
    return to_perturbation(x, problem.grid, problem.time);
}

EnergyIdentity energy_identity(const MFGProblem& problem, const LambdaData& data, const SolutionPair& base,
                               const Perturbation& dir) {
    const int nt = problem.time.steps();
    const double dt = problem.time.dt();
    if (dir.f[0].values.cwiseAbs().maxCoeff() != 0.0 || dir.v[nt].values.cwiseAbs().maxCoeff() != 0.0)
        throw std::invalid_argument("energy_identity: needs f(.,0) = 0 and v(.,T) = 0");
    const LinearizedImage img = apply_L(problem, data, base, dir);
    EnergyIdentity e;
    for (int n = 1; n <= nt; ++n) e.pairing += dt * inner(img.fp[n], dir.v[n]);
    for (int n = 0; n < nt; ++n) e.pairing += dt * inner(img.hjb[n], dir.f[n]);

    const double alpha = problem.alpha;
    const auto d = static_cast<std::size_t>(problem.grid.dim());
    const double vol = problem.grid.cell_volume();
    for (int n = 1; n < nt; ++n) {
        const SliceCoefficients c = slice_coefficients(problem, data, base.u[n], base.m[n], n);
        const VectorField dv = gradient(dir.v[n]);
        for (std::size_t i = 0; i < c.m.size(); ++i) {
            const double m = c.m_eff[i];
            const double f = dir.f[n][i];
            PVec q(static_cast<Eigen::Index>(d)), w(static_cast<Eigen::Index>(d));
            double qg = 0.0;
            for (std::size_t a = 0; a < d; ++a) {
                q[static_cast<Eigen::Index>(a)] = c.q[a][i];
                qg += c.q[a][i] * c.dph[a][i];
            }
            for (std::size_t a = 0; a < d; ++a)
                w[static_cast<Eigen::Index>(a)] = std::pow(m, 1.0 - alpha) * dv[a][i] - 0.5 * alpha * f * q[static_cast<Eigen::Index>(a)];
            const double qsq = q.dot(c.hess[i] * q);
            e.congestion_part += dt * vol * alpha * std::pow(m, alpha - 1.0) * f * f * (qg - c.h[i] - 0.25 * alpha * qsq);
            e.convexity_part += dt * vol * std::pow(m, alpha - 1.0) * w.dot(c.hess[i] * w);
            e.monotone_part += dt * vol * data.potential.slope(c.m[i]) * f * f;
        }
    }
    e.integrand = e.congestion_part + e.convexity_part + e.monotone_part;
    return e;
}

}  // namespace mfgc
