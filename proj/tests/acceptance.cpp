// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "fixtures.hpp"
#include "mfgc/continuation.hpp"
#include "mfgc/estimates.hpp"
#include "mfgc/galerkin.hpp"
#include "mfgc/mc_validate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace mfgc;
using fixtures::kPi;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
    if (!ok) ++failures;
    std::cout << (ok ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << detail << std::endl;
}

double mass_defect(const SolutionPair& s) {
    double e = 0.0;
    for (const auto& slice : s.m.slices) e = std::max(e, std::abs(integrate(slice) - 1.0));
    return e;
}

double sup_diff(const SolutionPair& a, const SolutionPair& b) {
    double e = 0.0;
    for (int n = 0; n <= a.u.steps(); ++n) {
        e = std::max(e, (a.u[n].values - b.u[n].values).cwiseAbs().maxCoeff());
        e = std::max(e, (a.m[n].values - b.m[n].values).cwiseAbs().maxCoeff());
    }
    return e;
}

struct Reference {
    MFGProblem problem = fixtures::reference_problem(64, 64, 0.05);
    MFGProblem fine = fixtures::reference_problem(128, 64, 0.05);
    PathResult path;
    PathResult fine_path;
    double solve_seconds = 0.0;
    double total_seconds = 0.0;
    EstimateReport estimates;
};

Reference& reference() {
    static Reference r = [] {
        Reference ref;
        const auto t0 = Clock::now();
        ref.path = solve_path(ref.problem, SolverConfig{});
        ref.solve_seconds = seconds_since(t0);
        ref.fine_path = solve_path(ref.fine, SolverConfig{});
        if (ref.path.completed() && ref.fine_path.completed())
            ref.estimates = run_estimates(ref.path.last().pair, ref.problem, lambda_data(ref.problem, 0.0),
                                          {&ref.fine, &ref.fine_path.last().pair});
        ref.total_seconds = seconds_since(t0);
        return ref;
    }();
    return r;
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

void criterion_1() {
    const auto p = fixtures::reference_problem(64, 64, 0.05);
    const auto t0 = Clock::now();
    const ContinuationState s = trivial_solution(p);
    const double r = residual_full(p, lambda_data(p, 1.0), s.pair).sup_norm();
    const double t = seconds_since(t0);
    report(1, "exact solution at lambda=1", r <= 1e-12 && t < 1.0,
           fmt("residual %.3e (<= 1e-12), %.3f s (< 1 s)", r, t));
}

void criterion_2() {
    const Reference& ref = reference();
    if (!ref.path.completed()) {
        report(2, "end-to-end continuation", false, "path stopped: " + ref.path.message);
        return;
    }
    const auto& last = ref.path.last();
    std::string failing;
    for (const auto& rec : ref.estimates.records)
        if (!rec.passed) failing += " " + rec.name;
    const bool ok = last.lambda == 0.0 && last.residual_norm <= 1e-8 && ref.total_seconds <= 60.0 &&
                    ref.fine_path.completed() && ref.estimates.all_passed();
    report(2, "end-to-end continuation", ok,
           fmt("lambda=%g residual %.3e (<= 1e-8), %zu states, solve %.2f s, solve+refinement+report %.2f s (<= 60 s), "
               "report %s",
               last.lambda, last.residual_norm, ref.path.states.size(), ref.solve_seconds, ref.total_seconds,
               ref.estimates.all_passed() ? "all-pass" : ("failing:" + failing).c_str()));
}

void criterion_3() {
    const Reference& ref = reference();
    double worst = 0.0;
    std::size_t count = 0;
    for (const auto* path : {&ref.path, &ref.fine_path})
        for (const auto& s : path->states) {
            worst = std::max(worst, mass_defect(s.pair));
            ++count;
        }
    report(3, "mass conservation", worst <= 1e-10,
           fmt("max |int m - 1| = %.3e over %zu accepted states (<= 1e-10)", worst, count));
}

Perturbation random_direction(const MFGProblem& p, std::mt19937_64& rng) {
    Perturbation d = Perturbation::zero(p.grid, p.time);
    for (int n = 0; n <= p.time.steps(); ++n) {
        d.v[n] = fixtures::smooth_random(p.grid, rng, 1.0, 4);
        d.f[n] = fixtures::smooth_random(p.grid, rng, 1.0, 4);
    }
    return d;
}

void criterion_4() {
    const auto p = fixtures::reference_problem(32, 16);
    std::mt19937_64 rng(7);
    double min_order = std::numeric_limits<double>::infinity();
    bool monotone = true;
    std::ostringstream orders, errors;
    for (int trial = 0; trial < 5; ++trial) {
        const auto base = fixtures::random_pair(p, rng, 0.3);
        const auto data = lambda_data(p, 0.2 * trial);
        const auto dir = random_direction(p, rng);
        const Eigen::VectorXd r0 = flatten(residual_full(p, data, base));
        const Eigen::VectorXd lin = flatten(apply_L(p, data, base, dir));
        // Central differences; roundoff floor eps_machine * |M| / eps.
        const double scale = std::max(r0.lpNorm<Eigen::Infinity>(), lin.lpNorm<Eigen::Infinity>());
        std::vector<double> err;
        std::vector<double> floor;
        for (double eps : {1e-3, 1e-4, 1e-5}) {
            SolutionPair plus = base, minus = base;
            for (int n = 0; n <= p.time.steps(); ++n) {
                plus.u[n] += eps * dir.v[n];
                plus.m[n] += eps * dir.f[n];
                minus.u[n] -= eps * dir.v[n];
                minus.m[n] -= eps * dir.f[n];
            }
            const Eigen::VectorXd fd =
                (flatten(residual_full(p, data, plus)) - flatten(residual_full(p, data, minus))) / (2.0 * eps);
            err.push_back((fd - lin).lpNorm<Eigen::Infinity>());
            floor.push_back(std::numeric_limits<double>::epsilon() * scale / eps);
        }
        for (std::size_t k = 0; k + 1 < err.size(); ++k) {
            if (err[k + 1] <= floor[k + 1]) break;  // plateau reached
            const double order = std::log10(err[k] / err[k + 1]);
            min_order = std::min(min_order, order);
            if (err[k + 1] > err[k]) monotone = false;
            orders << (orders.tellp() > 0 ? ", " : "") << fmt("%.4f", order);
        }
        errors << (trial ? "; " : "") << fmt("%.1e %.1e %.1e", err[0], err[1], err[2]);
    }
    report(4, "linearization consistency", min_order >= 1.0 && monotone,
           fmt("central-difference orders [%s], min %.4f (>= 1), %s; errors %s", orders.str().c_str(), min_order,
               monotone ? "never increasing" : "increased", errors.str().c_str()));
}

LinearizedRHS random_rhs(const MFGProblem& p, std::mt19937_64& rng, int kmax = 3) {
    LinearizedRHS rhs = LinearizedRHS::zero(p.grid, p.time);
    const Field h0 = fixtures::smooth_random(p.grid, rng, 1.0, kmax), h1 = fixtures::smooth_random(p.grid, rng, 1.0, kmax);
    const Field g0 = fixtures::smooth_random(p.grid, rng, 1.0, kmax), g1 = fixtures::smooth_random(p.grid, rng, 1.0, kmax);
    for (int n = 0; n <= p.time.steps(); ++n) {
        const double s = p.time.time(n) / p.time.horizon();
        rhs.h[n] = (1.0 - s) * h0 + s * h1;
        rhs.g[n] = std::cos(kPi * s) * g0 + s * g1;
    }
    rhs.A = fixtures::smooth_random(p.grid, rng, 0.5, kmax);
    rhs.B = fixtures::smooth_random(p.grid, rng, 0.5, kmax);
    return rhs;
}

double sup_l2(const Perturbation& x, const Perturbation& y) {
    double e = 0.0;
    for (int n = 0; n <= x.f.steps(); ++n) e = std::max({e, l2_norm(x.f[n] - y.f[n]), l2_norm(x.v[n] - y.v[n])});
    return e;
}

Perturbation project(const Perturbation& x, const FourierBasis& basis) {
    Perturbation out = x;
    for (int n = 0; n <= x.f.steps(); ++n) {
        out.f[n] = basis.reconstruct(basis.project(x.f[n]));
        out.v[n] = basis.reconstruct(basis.project(x.v[n]));
    }
    return out;
}

void criterion_5() {
    std::mt19937_64 rng(21);
    const auto coarse = fixtures::reference_problem(32, 32, 0.05);
    const auto fine = fixtures::reference_problem(32, 64, 0.05);
    const FourierBasis basis(coarse.grid, 8);
    bool ok = true;
    std::ostringstream detail;
    for (double lam : {1.0, 0.0}) {
        const auto seed = rng();
        std::mt19937_64 r1(seed), r2(seed), rb(seed + 1), rb2(seed + 1);
        const auto rhs_c = random_rhs(coarse, r1);
        const auto rhs_f = random_rhs(fine, r2);
        const auto base_c = lam == 1.0 ? fixtures::top_pair(coarse) : fixtures::random_pair(coarse, rb, 0.1);
        const auto base_f = lam == 1.0 ? fixtures::top_pair(fine) : fixtures::random_pair(fine, rb2, 0.1);
        const auto data = lambda_data(coarse, lam);
        const auto mono = solve_linearized(coarse, data, base_c, rhs_c);
        const auto mono_fine = solve_linearized(fine, lambda_data(fine, lam), base_f, rhs_f);
        const auto gal = solve_linearized_galerkin(coarse, data, base_c, basis, rhs_c);
        const auto richer = solve_linearized_galerkin(coarse, data, base_c, FourierBasis(coarse.grid, 12), rhs_c);
        Perturbation halved = Perturbation::zero(coarse.grid, coarse.time);
        for (int n = 0; n <= coarse.time.steps(); ++n) {
            halved.f[n] = mono_fine.f[2 * n];
            halved.v[n] = mono_fine.v[2 * n];
        }
        // Discretization error: time step (Nt vs 2 Nt) plus mode truncation (8 vs 12 modes).
        const double disc = sup_l2(mono, halved) + sup_l2(gal, project(richer, basis));
        const double gap = sup_l2(project(mono, basis), gal);
        ok = ok && gap <= 10.0 * disc;

        const auto zero = solve_galerkin(coarse, data, base_c, basis, LinearizedRHS::zero(coarse.grid, coarse.time));
        const double z = std::max(zero.trajectory.A.cwiseAbs().maxCoeff(), zero.trajectory.B.cwiseAbs().maxCoeff());
        ok = ok && z <= 1e-10;
        detail << fmt("lambda=%g gap %.3e vs 10x disc %.3e, homogeneous %.1e; ", lam, gap, 10.0 * disc, z);
    }
    report(5, "galerkin cross-validation", ok, detail.str() + "(N=8, d=1, homogeneous <= 1e-10)");
}

void criterion_6() {
    const auto p = fixtures::reference_problem(64, 32, 0.01);
    const auto data = lambda_data(p, 1.0);
    const auto base = fixtures::top_pair(p);
    const FourierBasis basis(p.grid, 8);
    std::mt19937_64 rng(100);
    double c = 0.0;
    bool finite = true;
    for (int trial = 0; trial < 20; ++trial) {
        const auto rhs = random_rhs(p, rng, 6);
        const auto sol = solve_galerkin(p, data, base, basis, rhs);
        const double ratio = energy_ratio(sol.trajectory, rhs).ratio();
        finite = finite && std::isfinite(ratio);
        c = std::max(c, ratio);
    }
    report(6, "energy estimate", finite && c > 0.0,
           fmt("achieved C = %.4f over 20 right-hand sides (N=8, T=0.01, lambda=1)", c));
}

void criterion_7() {
    const Reference& ref = reference();
    if (!ref.path.completed()) {
        report(7, "uniqueness", false, "reference path did not complete");
        return;
    }
    const MFGProblem& p = ref.problem;
    std::mt19937_64 rng(31);
    bool ok = true;
    std::ostringstream detail;
    for (double lam : {0.5, 0.0}) {
        const ContinuationState* anchor = nullptr;
        for (const auto& s : ref.path.states)
            if (s.lambda == lam) anchor = &s;
        if (!anchor) {
            report(7, "uniqueness", false, fmt("no accepted state at lambda=%g", lam));
            return;
        }
        const auto data = lambda_data(p, lam);
        auto start = [&] {
            SolutionPair s = anchor->pair;
            const Field du = fixtures::smooth_random(p.grid, rng, 1e-2);
            const Field dm = fixtures::smooth_random(p.grid, rng, 1e-2);
            for (int n = 0; n <= p.time.steps(); ++n) {
                s.u[n] += du;
                Field m = s.m[n] + dm;
                m.values.array() -= integrate(m) - integrate(s.m[n]);
                s.m[n] = m;
            }
            return s;
        };
        const auto a = newton_correct(p, data, start(), SolverConfig{});
        const auto b = newton_correct(p, data, start(), SolverConfig{});
        const double gap = sup_diff(a.pair, b.pair);
        const CheckRecord u = check_uniqueness_integrand(a.pair, p, data);
        ok = ok && a.diagnostics.converged && b.diagnostics.converged && gap <= 1e-6 && u.passed;
        detail << fmt("lambda=%g gap %.2e (<= 1e-6), integrand min %.3e %s; ", lam, gap, u.value("min_term_i_sampled"),
                      u.passed ? "pass" : ("fail at " + u.location).c_str());
        if (lam == 0.0) detail << fmt("alpha<4/gamma margin %.4f", u.value("alpha_margin"));
    }
    report(7, "uniqueness", ok, detail.str());
}

void criterion_8() {
    const Reference& ref = reference();
    double min_m = std::numeric_limits<double>::infinity();
    bool floor = false;
    for (const auto* path : {&ref.path, &ref.fine_path})
        for (const auto& s : path->states) {
            min_m = std::min(min_m, s.min_density);
            floor = floor || s.floor_activated;
        }
    if (!ref.path.completed() || !ref.fine_path.completed()) {
        report(8, "positivity", false, "reference paths did not complete");
        return;
    }
    const CheckRecord pos = check_positivity(ref.path.last().pair, ref.problem, {&ref.fine, &ref.fine_path.last().pair});
    const bool ok = min_m > 0.0 && !floor && pos.passed;
    report(8, "positivity", ok,
           fmt("min m %.4f over accepted states, floor %s, ||1/m||_inf %.6f, refinement change %.2e (< 5e-2)", min_m,
               floor ? "activated" : "never activated", pos.value("inv_m_sup"), pos.value("change_inv_m_sup")));
}

void criterion_9() {
    const Reference& ref = reference();
    const auto top_problem = fixtures::reference_problem(64, 64, 0.05);
    const ContinuationState top = trivial_solution(top_problem);
    SDEConfig cfg;
    cfg.paths = 100000;
    const MCEstimate uni = simulate(top_problem, lambda_data(top_problem, 1.0), top.pair, cfg);
    const auto l1_top = l1_distance(uni.density, top.pair.m);
    double worst_ratio = 0.0;
    for (std::size_t n = 0; n < l1_top.size(); ++n) worst_ratio = std::max(worst_ratio, l1_top[n] / uni.noise_floor[n]);
    const bool uniform_ok = worst_ratio <= 3.0;

    if (!ref.path.completed()) {
        report(9, "monte-carlo closure", false, "reference path did not complete");
        return;
    }
    const auto& pair = ref.path.last().pair;
    const auto data = lambda_data(ref.problem, 0.0);
    double worst[2] = {0.0, 0.0};
    int k = 0;
    for (std::int64_t m : {100000, 400000}) {
        cfg.paths = m;
        const auto l1 = l1_distance(simulate_density(ref.problem, data, pair, cfg), pair.m);
        worst[k++] = *std::max_element(l1.begin(), l1.end());
    }
    const double gain = worst[0] / worst[1];
    const bool ok = uniform_ok && worst[0] <= 5e-2 && gain >= 1.5 && gain <= 3.0;
    report(9, "monte-carlo closure", ok,
           fmt("lambda=1 max L1/noise floor %.3f (<= 3); lambda=0 max L1 %.4f at 1e5 (<= 5e-2), %.4f at 4e5, "
               "gain %.2f (in [1.5, 3])",
               worst_ratio, worst[0], worst[1], gain));
}

void criterion_10() {
    const PeriodicGrid g(1, 8);
    const Field a = sample(g, [](const Eigen::VectorXd& x) { return 1.0 + 0.3 * std::cos(2 * kPi * x[0]); });
    const LagrangianModel lag(3.0, a);
    const double gamma = 1.5;
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> vel(-2.0, 2.0);
    std::uniform_int_distribution<std::size_t> node(0, g.size() - 1);
    double dev = 0.0;
    for (int i = 0; i < 100; ++i) {
        PVec v(1);
        v[0] = vel(rng);
        const std::size_t x = node(rng);
        dev = std::max(dev, std::abs(double_legendre_transform(lag, x, v, 2.0, 41) - lag.eval(x, v)));
    }
    const GrowthConstants gc = transform_growth_constants(lag, gamma);
    const double lower = gc.lower_slope * gamma / 2.0, upper = 2.0 * gc.upper_slope * gamma;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double r = 10.0; r <= 100.0 + 1e-9; r += 5.0)
        for (std::size_t x = 0; x < g.size(); ++x) {
            PVec p(1);
            p[0] = r;
            const double speed = legendre_dual_speed(a[x], 3.0, r);
            const double ratio = legendre_transform(lag, x, p, 2.0 * speed + 2.0, 201) / (std::pow(r, gamma) / gamma);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
    const bool ok = dev <= 1e-6 && lo >= lower && hi <= upper;
    report(10, "legendre oracle", ok,
           fmt("double transform max deviation %.2e at 100 (x,v) (<= 1e-6); growth ratio in [%.4f, %.4f] "
               "within bounds [%.4f, %.4f] for |p| in [10, 100]",
               dev, lo, hi, lower, upper));
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
