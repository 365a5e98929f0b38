#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "mfgc/linearized.hpp"

#include <cmath>

using namespace mfgc;
using fixtures::kPi;

namespace {

Perturbation random_direction(const MFGProblem& p, std::mt19937_64& rng, bool homogeneous = false) {
    Perturbation d = Perturbation::zero(p.grid, p.time);
    for (int n = 0; n <= p.time.steps(); ++n) {
        d.v[n] = fixtures::smooth_random(p.grid, rng, 1.0, 4);
        d.f[n] = fixtures::smooth_random(p.grid, rng, 1.0, 4);
    }
    if (homogeneous) {
        d.f[0] = Field(p.grid);
        d.v[p.time.steps()] = Field(p.grid);
    }
    return d;
}

Eigen::VectorXd residual_vector(const MFGProblem& p, const LambdaData& data, const SolutionPair& s) {
    return flatten(residual_full(p, data, s));
}

SolutionPair shifted(const SolutionPair& s, const Perturbation& d, double eps) {
    SolutionPair out = s;
    for (int n = 0; n <= s.u.steps(); ++n) {
        out.u[n] += eps * d.v[n];
        out.m[n] += eps * d.f[n];
    }
    return out;
}

}  // namespace

TEST_CASE("zero direction maps to zero") {
    const auto p = fixtures::reference_problem(16, 8);
    std::mt19937_64 rng(1);
    const auto base = fixtures::random_pair(p, rng);
    const auto img = apply_L(p, lambda_data(p, 0.4), base, Perturbation::zero(p.grid, p.time));
    CHECK(img.sup_norm() == 0.0);
}

TEST_CASE("directional derivative matches one-sided differences of the residual") {
    const auto p = fixtures::reference_problem(32, 16);
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const auto base = fixtures::random_pair(p, rng, 0.3);
        const auto data = lambda_data(p, 0.2 * trial);
        const auto dir = random_direction(p, rng);
        const Eigen::VectorXd r0 = residual_vector(p, data, base);
        const Eigen::VectorXd lin = flatten(apply_L(p, data, base, dir));
        std::vector<double> err;
        for (double eps : {1e-3, 1e-4, 1e-5}) {
            const Eigen::VectorXd fd = (residual_vector(p, data, shifted(base, dir, eps)) - r0) / eps;
            err.push_back((fd - lin).lpNorm<Eigen::Infinity>());
        }
        INFO("errors " << err[0] << " " << err[1] << " " << err[2]);
        CHECK(std::log10(err[0] / err[1]) >= 0.95);
        CHECK(std::log10(err[1] / err[2]) >= 0.95);
    }
}

TEST_CASE("constant-coefficient action at the explicit top pair") {
    auto p = fixtures::reference_problem(32, 8);
    p.alpha = 0.3;
    const auto base = fixtures::top_pair(p);
    const auto data = lambda_data(p, 1.0);
    const double gamma = p.hamiltonian.gamma();
    const Field c = sample(p.grid, [](const Eigen::VectorXd& x) { return std::cos(2 * kPi * x[0]); });
    const double k2 = 4 * kPi * kPi;

    Perturbation df = Perturbation::zero(p.grid, p.time);
    for (auto& s : df.f.slices) s = c;
    const auto a = apply_L(p, data, base, df);
    CHECK((a.fp[0].values - c.values).norm() < 1e-12);
    for (int n = 1; n <= 8; ++n) CHECK((a.fp[n].values - k2 * c.values).lpNorm<Eigen::Infinity>() < 1e-10);
    // -alpha m^{alpha-1} (H(0) - 0) + V'(1) with H(0) = 1 and arctan'(1) = 1/2
    for (int n = 0; n < 8; ++n) CHECK((a.hjb[n].values - (0.5 - p.alpha) * c.values).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(a.hjb[8].values.norm() == 0.0);

    Perturbation dv = Perturbation::zero(p.grid, p.time);
    for (auto& s : dv.v.slices) s = c;
    const auto b = apply_L(p, data, base, dv);
    for (int n = 1; n <= 8; ++n) CHECK((b.fp[n].values - gamma * k2 * c.values).lpNorm<Eigen::Infinity>() < 1e-9);
    for (int n = 0; n < 8; ++n) CHECK((b.hjb[n].values + k2 * c.values).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((b.hjb[8].values - c.values).norm() < 1e-12);
}

TEST_CASE("assembled matrix reproduces the matrix-free action") {
    for (int dim : {1, 2}) {
        const auto p = fixtures::reference_problem(dim == 1 ? 32 : 8, 8, 0.05, dim);
        std::mt19937_64 rng(17);
        const auto base = fixtures::random_pair(p, rng, 0.3);
        const auto data = lambda_data(p, 0.35);
        const BlockTridiagonal a = assemble_L(p, data, base);
        const Eigen::SparseMatrix<double> sp = a.to_sparse();
        for (int t = 0; t < 10; ++t) {
            const auto dir = random_direction(p, rng);
            const Eigen::VectorXd x = flatten(dir);
            const Eigen::VectorXd ref = flatten(apply_L(p, data, base, dir));
            CHECK((a.multiply(x) - ref).norm() <= 1e-12 * ref.norm());
            CHECK((sp * x - ref).norm() <= 1e-12 * ref.norm());
        }
    }
}

TEST_CASE("row nonzeros are bounded by one slice block plus one time neighbour") {
    std::vector<Eigen::Index> widest;
    for (int nt : {8, 32}) {
        const auto p = fixtures::reference_problem(16, nt);
        std::mt19937_64 rng(4);
        const auto base = fixtures::random_pair(p, rng);
        const auto sp = assemble_L(p, lambda_data(p, 0.0), base).to_sparse();
        const Eigen::SparseMatrix<double, Eigen::RowMajor> rows = sp;
        Eigen::Index w = 0;
        for (Eigen::Index r = 0; r < rows.outerSize(); ++r)
            w = std::max<Eigen::Index>(w, rows.outerIndexPtr()[r + 1] - rows.outerIndexPtr()[r]);
        CHECK(w <= 2 * 16 + 1);
        widest.push_back(w);
    }
    CHECK(widest[0] == widest[1]);
}

TEST_CASE("top-pair slice blocks decouple over Fourier modes") {
    const int n = 16;
    const auto p = fixtures::reference_problem(n, 4);
    const auto a = assemble_L(p, lambda_data(p, 1.0), fixtures::top_pair(p));
    // Real orthonormal Fourier basis as columns.
    Eigen::MatrixXd E(n, n);
    for (int j = 0; j < n; ++j) {
        const double x = static_cast<double>(j) / n;
        E(j, 0) = 1.0;
        for (int k = 1; k < n / 2; ++k) {
            E(j, 2 * k - 1) = std::sqrt(2.0) * std::cos(2 * kPi * k * x);
            E(j, 2 * k) = std::sqrt(2.0) * std::sin(2 * kPi * k * x);
        }
        E(j, n - 1) = std::cos(kPi * j);
    }
    E /= std::sqrt(static_cast<double>(n));
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    T.topLeftCorner(n, n) = E;
    T.bottomRightCorner(n, n) = E;
    auto mode_of = [&](int col) {
        const int c = col % n;
        return c == 0 ? 0 : (c == n - 1 ? n / 2 : (c + 1) / 2);
    };
    for (int s = 0; s < 5; ++s) {
        const Eigen::MatrixXd M = T.transpose() * a.diag[static_cast<std::size_t>(s)] * T;
        double off = 0.0;
        for (int i = 0; i < 2 * n; ++i)
            for (int j = 0; j < 2 * n; ++j)
                if (mode_of(i) != mode_of(j)) off = std::max(off, std::abs(M(i, j)));
        CHECK(off < 1e-9 * M.norm());
    }
}

TEST_CASE("linearity") {
    const auto p = fixtures::reference_problem(16, 8);
    std::mt19937_64 rng(8);
    const auto base = fixtures::random_pair(p, rng);
    const auto data = lambda_data(p, 0.1);
    const auto d1 = random_direction(p, rng), d2 = random_direction(p, rng);
    Perturbation comb = d1;
    for (int n = 0; n <= 8; ++n) {
        comb.v[n] = 2.0 * d1.v[n] + (-3.0) * d2.v[n];
        comb.f[n] = 2.0 * d1.f[n] + (-3.0) * d2.f[n];
    }
    const Eigen::VectorXd lhs = flatten(apply_L(p, data, base, comb));
    const Eigen::VectorXd rhs = 2.0 * flatten(apply_L(p, data, base, d1)) - 3.0 * flatten(apply_L(p, data, base, d2));
    CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
}

TEST_CASE("direct and Krylov solves agree") {
    for (int dim : {1, 2}) {
        const auto p = fixtures::reference_problem(dim == 1 ? 32 : 8, 16, 0.05, dim);
        std::mt19937_64 rng(12);
        const auto base = fixtures::random_pair(p, rng, 0.2);
        const auto data = lambda_data(p, 0.3);
        LinearizedRHS rhs = LinearizedRHS::zero(p.grid, p.time);
        for (int n = 0; n <= 16; ++n) {
            rhs.h[n] = fixtures::smooth_random(p.grid, rng, 1.0);
            rhs.g[n] = fixtures::smooth_random(p.grid, rng, 1.0);
        }
        rhs.A = fixtures::smooth_random(p.grid, rng, 0.1);
        rhs.B = fixtures::smooth_random(p.grid, rng, 0.1);

        LinearSolveOptions direct;
        direct.method = LinearMethod::Direct;
        LinearSolveInfo info;
        const auto x = solve_linearized(p, data, base, rhs, direct, &info);
        CHECK(info.relative_residual < 1e-12);
        const Eigen::VectorXd b = flatten(rhs);
        CHECK((flatten(apply_L(p, data, base, x)) - b).norm() <= 1e-11 * b.norm());

        LinearSolveOptions krylov;
        krylov.method = LinearMethod::Krylov;
        const auto y = solve_linearized(p, data, base, rhs, krylov, &info);
        CHECK(info.used == LinearMethod::Krylov);
        CHECK(info.iterations > 0);
        CHECK((flatten(x) - flatten(y)).norm() <= 1e-9 * flatten(x).norm());
    }
}

TEST_CASE("memory budget") {
    const auto p = fixtures::reference_problem(64, 64);
    CHECK_THROWS_AS(assemble_L(p, lambda_data(p, 1.0), fixtures::top_pair(p), 1000), BudgetExceeded);
}

TEST_CASE("energy identity of the linearization") {
    const auto p = fixtures::reference_problem(32, 16);
    std::mt19937_64 rng(31);
    for (double lam : {0.0, 0.5, 1.0}) {
        const auto base = fixtures::random_pair(p, rng, 0.2);
        const auto data = lambda_data(p, lam);
        const auto dir = random_direction(p, rng, true);
        const EnergyIdentity e = energy_identity(p, data, base, dir);
        CHECK(e.pairing == doctest::Approx(e.integrand).epsilon(1e-10));
        // The blend towards (1+|p|^2)^{gamma/2} has p.DpH - H = -1 at p = 0, so the congestion
        // summand alone is only signed for lambda <= 1/2; the full f^2 coefficient stays signed.
        if (lam <= 0.5) CHECK(e.congestion_part >= 0.0);
        CHECK(e.congestion_part + e.monotone_part >= 0.0);
        CHECK(e.convexity_part > 0.0);
        CHECK(e.monotone_part > 0.0);
    }
    CHECK_THROWS_AS(energy_identity(p, lambda_data(p, 0.0), fixtures::top_pair(p), random_direction(p, rng)),
                    std::invalid_argument);
}
