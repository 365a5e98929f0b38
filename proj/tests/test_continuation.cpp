#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "mfgc/continuation.hpp"

#include <chrono>
#include <cmath>

using namespace mfgc;
using fixtures::kPi;

namespace {

double sup_diff(const SolutionPair& a, const SolutionPair& b) {
    double e = 0.0;
    for (int n = 0; n <= a.u.steps(); ++n) {
        e = std::max(e, (a.u[n].values - b.u[n].values).cwiseAbs().maxCoeff());
        e = std::max(e, (a.m[n].values - b.m[n].values).cwiseAbs().maxCoeff());
    }
    return e;
}

SolutionPair perturb_u(SolutionPair s, const Field& du) {
    for (auto& slice : s.u.slices) slice += du;
    return s;
}

double mass_defect(const SolutionPair& s) {
    double e = 0.0;
    for (const auto& slice : s.m.slices) e = std::max(e, std::abs(integrate(slice) - 1.0));
    return e;
}

}  // namespace

TEST_CASE("trivial solution") {
    const auto p = fixtures::reference_problem(64, 64, 0.05);
    const auto start = std::chrono::steady_clock::now();
    const ContinuationState s = trivial_solution(p);
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 1.0);
    CHECK(s.lambda == 1.0);
    CHECK(s.residual_norm <= 1e-12);
    CHECK(mass_defect(s.pair) <= 1e-14);
    CHECK(s.pair.u[64].values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("config validation") {
    SolverConfig c;
    CHECK_NOTHROW(c.validate());
    c.dlambda_min = 0.3;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("dlambda"), std::invalid_argument);
    c = SolverConfig{};
    c.newton_tol = 0.0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("newton_tol"), std::invalid_argument);
}

TEST_CASE("newton at the exact solution takes no iterations") {
    const auto p = fixtures::reference_problem(32, 16);
    const auto r = newton_correct(p, lambda_data(p, 1.0), fixtures::top_pair(p), SolverConfig{});
    CHECK(r.diagnostics.converged);
    CHECK(r.diagnostics.iterations == 0);
}

TEST_CASE("newton from a perturbed top solution converges quadratically") {
    const auto p = fixtures::reference_problem(64, 64, 0.05);
    const Field du = sample(p.grid, [](const Eigen::VectorXd& x) { return 1e-3 * std::cos(2 * kPi * x[0]); });
    const auto r = newton_correct(p, lambda_data(p, 1.0), perturb_u(fixtures::top_pair(p), du), SolverConfig{});
    const auto& h = r.diagnostics.residual_history;
    CHECK(r.diagnostics.converged);
    CHECK(r.diagnostics.iterations <= 5);
    CHECK(h.back() <= 1e-10);
    std::string trace;
    for (double v : h) trace += std::to_string(v) + " ";
    INFO("history " << trace);
    // Quadratic contraction: r_{k+1} <= C r_k^2 on the last iterations (while above roundoff).
    REQUIRE(h.size() >= 3);
    for (std::size_t k = 1; k + 1 < h.size(); ++k)
        if (h[k + 1] > 1e-13) CHECK(h[k + 1] <= 10.0 * h[k] * h[k] / h[0]);
    CHECK(sup_diff(r.pair, fixtures::top_pair(p)) < 1e-10);
}

TEST_CASE("two perturbed starts reach the same solution") {
    const auto p = fixtures::reference_problem(32, 32, 0.05);
    std::mt19937_64 rng(4);
    SolverConfig cfg;
    for (double lam : {0.6, 0.0}) {
        // Reach lambda through a short path first, then restart Newton from two perturbations.
        const auto data = lambda_data(p, lam);
        const auto anchor = newton_correct(p, data, fixtures::top_pair(p), cfg);
        REQUIRE(anchor.diagnostics.converged);
        const auto a = newton_correct(p, data, perturb_u(anchor.pair, fixtures::smooth_random(p.grid, rng, 1e-2)), cfg);
        const auto b = newton_correct(p, data, perturb_u(anchor.pair, fixtures::smooth_random(p.grid, rng, 1e-2)), cfg);
        REQUIRE(a.diagnostics.converged);
        REQUIRE(b.diagnostics.converged);
        CHECK(sup_diff(a.pair, b.pair) <= 1e-8);
    }
}

TEST_CASE("reference path reaches lambda zero") {
    const auto p = fixtures::reference_problem(64, 64, 0.05);
    std::vector<std::string> log;
    const auto start = std::chrono::steady_clock::now();
    const PathResult path = solve_path(p, SolverConfig{}, [&](const ContinuationState& s) { log.push_back(progress_line(s)); });
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    MESSAGE("path of " << path.states.size() << " states in " << seconds << " s");
    REQUIRE(path.completed());
    CHECK(seconds < 60.0);
    CHECK(path.last().lambda == 0.0);
    CHECK(path.last().residual_norm <= 1e-8);
    CHECK(log.size() == path.states.size());
    CHECK(log.front().rfind("lambda=1 ", 0) == 0);
    for (std::size_t i = 0; i < path.states.size(); ++i) {
        const auto& s = path.states[i];
        CHECK(s.residual_norm <= SolverConfig{}.newton_tol);
        // The certificate is re-derivable from the state alone.
        CHECK(residual_full(p, lambda_data(p, s.lambda), s.pair).sup_norm() == doctest::Approx(s.residual_norm));
        CHECK(mass_defect(s.pair) <= 1e-10);
        CHECK(s.min_density > SolverConfig{}.m_positivity_margin);
        CHECK_FALSE(s.floor_activated);
        if (i > 0) CHECK(s.lambda < path.states[i - 1].lambda);
    }
}

TEST_CASE("fixed and adaptive schedules agree") {
    const auto p = fixtures::reference_problem(32, 32, 0.05);
    SolverConfig fixed;
    fixed.adaptive = false;
    fixed.dlambda_init = 0.1;
    fixed.dlambda_min = 0.1;
    const auto a = solve_path(p, fixed);
    const auto b = solve_path(p, SolverConfig{});
    REQUIRE(a.completed());
    REQUIRE(b.completed());
    CHECK(a.states.size() == 11);
    CHECK(sup_diff(a.last().pair, b.last().pair) <= 1e-6);
}

TEST_CASE("long horizons end in a structured outcome") {
    const auto p = fixtures::reference_problem(32, 32, 5.0);
    const auto guarded = solve_path(p, SolverConfig{});
    CHECK(guarded.status == PathStatus::HorizonGuard);
    CHECK(guarded.states.size() == 1);
    CHECK_FALSE(guarded.message.empty());

    SolverConfig open;
    open.max_horizon = 10.0;
    const auto run = solve_path(p, open);
    MESSAGE("T=5: " << std::string(path_status_name(run.status)) << " at lambda " << run.last().lambda << " " << run.message);
    for (const auto& s : run.states) CHECK(residual_full(p, lambda_data(p, s.lambda), s.pair).sup_norm() <= open.newton_tol);
    if (!run.completed()) {
        CHECK(run.status == PathStatus::StepUnderflow);
        CHECK(run.failed_lambda < run.last().lambda);
    }
}
