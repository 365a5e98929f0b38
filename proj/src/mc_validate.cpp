#include "mfgc/mc_validate.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

namespace mfgc {

namespace {

// Periodic linear (cloud-in-cell) stencil of one point: up to 4 nodes and weights.
struct Stencil {
    std::size_t node[4];
    double weight[4];
    int count = 0;
};

Stencil stencil(const PeriodicGrid& g, const double* x) {
    const int n = g.points_per_dim();
    int base[2] = {0, 0};
    double frac[2] = {0.0, 0.0};
    for (int a = 0; a < g.dim(); ++a) {
        const double s = x[a] * n;
        const double f = std::floor(s);
        base[a] = static_cast<int>(f) % n;
        if (base[a] < 0) base[a] += n;
        frac[a] = s - f;
        assert(base[a] >= 0 && base[a] < n);
    }
    Stencil st;
    if (g.dim() == 1) {
        st.node[0] = static_cast<std::size_t>(base[0]);
        st.node[1] = static_cast<std::size_t>((base[0] + 1) % n);
        st.weight[0] = 1.0 - frac[0];
        st.weight[1] = frac[0];
        st.count = 2;
        return st;
    }
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const int k = 2 * i + j;
            st.node[k] = static_cast<std::size_t>(((base[0] + i) % n) * n + (base[1] + j) % n);
            st.weight[k] = (i ? frac[0] : 1.0 - frac[0]) * (j ? frac[1] : 1.0 - frac[1]);
        }
    st.count = 4;
    return st;
}

double wrap(double x) {
    x -= std::floor(x);
    return x >= 1.0 ? 0.0 : x;
}

// Piecewise-linear density through the node values; inverse CDF in 1-D, rejection in 2-D.
class InitialSampler {
public:
    explicit InitialSampler(const Field& m0) : m0_(m0) {
        const auto n = m0.size();
        if (m0.grid.dim() == 1) {
            cdf_.resize(n + 1, 0.0);
            for (std::size_t j = 0; j < n; ++j) cdf_[j + 1] = cdf_[j] + 0.5 * (m0[j] + m0[(j + 1) % n]);
        }
        peak_ = m0.values.maxCoeff();
    }

    template <typename Rng>
    void draw(Rng& rng, double* x) const {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const PeriodicGrid& g = m0_.grid;
        if (g.dim() == 1) {
            const double target = u(rng) * cdf_.back();
            const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
            const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()) - 1, m0_.size() - 1);
            const double a = m0_[j], b = m0_[(j + 1) % m0_.size()];
            const double w = (target - cdf_[j]) / (0.5 * (a + b));
            // Root of (b - a)/2 s^2 + a s = w (a + b)/2 in [0, 1], written without cancellation.
            const double s = w * (a + b) / (a + std::sqrt(a * a + (b - a) * (a + b) * w));
            x[0] = wrap((static_cast<double>(j) + std::clamp(s, 0.0, 1.0)) * g.spacing());
            return;
        }
        while (true) {
            x[0] = u(rng);
            x[1] = u(rng);
            const Stencil st = stencil(g, x);
            double v = 0.0;
            for (int k = 0; k < st.count; ++k) v += st.weight[k] * m0_[st.node[k]];
            if (u(rng) * peak_ <= v) return;
        }
    }

private:
    Field m0_;
    std::vector<double> cdf_;
    double peak_ = 1.0;
};

// Deposits of one batch: per slice, node sums of CIC weights.
std::vector<Eigen::VectorXd> run_batch(const MFGProblem& problem, const std::vector<VectorField>& drift,
                                       const InitialSampler& sampler, std::int64_t count, std::uint64_t seed,
                                       int batch, int substeps) {
    const int nt = problem.time.steps();
    const int d = problem.grid.dim();
    const auto nx = static_cast<Eigen::Index>(problem.grid.size());
    std::vector<Eigen::VectorXd> hist(static_cast<std::size_t>(nt + 1), Eigen::VectorXd::Zero(nx));
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(batch)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double h = problem.time.dt() / substeps;
    const double noise = std::sqrt(2.0 * h);

    auto deposit = [&](int n, const double* x) {
        const Stencil st = stencil(problem.grid, x);
        for (int k = 0; k < st.count; ++k) hist[static_cast<std::size_t>(n)][static_cast<Eigen::Index>(st.node[k])] += st.weight[k];
    };
    for (std::int64_t p = 0; p < count; ++p) {
        double x[2] = {0.0, 0.0};
        sampler.draw(rng, x);
        deposit(0, x);
        for (int n = 0; n < nt; ++n) {
            const VectorField& d0 = drift[static_cast<std::size_t>(n)];
            const VectorField& d1 = drift[static_cast<std::size_t>(n + 1)];
            for (int s = 0; s < substeps; ++s) {
                const double theta = static_cast<double>(s) / substeps;
                const Stencil st = stencil(problem.grid, x);
                double step[2] = {0.0, 0.0};
                for (int a = 0; a < d; ++a) {
                    double v0 = 0.0, v1 = 0.0;
                    for (int k = 0; k < st.count; ++k) {
                        v0 += st.weight[k] * d0[static_cast<std::size_t>(a)][st.node[k]];
                        v1 += st.weight[k] * d1[static_cast<std::size_t>(a)][st.node[k]];
                    }
                    step[a] = (1.0 - theta) * v0 + theta * v1;
                }
                for (int a = 0; a < d; ++a) x[a] = wrap(x[a] + step[a] * h + noise * normal(rng));
            }
            deposit(n + 1, x);
        }
    }
    return hist;
}

}  // namespace

void SDEConfig::validate() const {
    if (paths < 1) throw std::invalid_argument("SDEConfig: paths must be >= 1");
    if (substeps < 1) throw std::invalid_argument("SDEConfig: substeps must be >= 1");
    if (batches < 1) throw std::invalid_argument("SDEConfig: batches must be >= 1");
    if (threads < 0) throw std::invalid_argument("SDEConfig: threads must be >= 0");
}

MCEstimate simulate(const MFGProblem& problem, const LambdaData& data, const SolutionPair& pair, const SDEConfig& cfg) {
    cfg.validate();
    const int nt = problem.time.steps();
    if (!(pair.m.time == problem.time) || !(pair.u.time == problem.time))
        throw GridMismatch("simulate: pair time grid differs from the problem");
    require_same_grid(problem.grid, pair.m.grid(), "simulate");
    if (!(min_density(pair) > 0.0)) throw std::invalid_argument("simulate: density must be positive");

    // Feedback drift -(DpH_lambda(x, Q) + b_lambda) on every slice.
    std::vector<VectorField> drift;
    drift.reserve(static_cast<std::size_t>(nt + 1));
    for (int n = 0; n <= nt; ++n) {
        const SliceCoefficients c = slice_coefficients(problem, data, pair.u[n], pair.m[n], n);
        VectorField v = c.dph;
        for (std::size_t a = 0; a < v.size(); ++a) {
            v[a] += data.drift[a];
            v[a] *= -1.0;
        }
        drift.push_back(std::move(v));
    }
    const InitialSampler sampler(pair.m[0]);

    const int batches = static_cast<int>(std::min<std::int64_t>(cfg.batches, cfg.paths));
    std::vector<std::int64_t> sizes(static_cast<std::size_t>(batches), cfg.paths / batches);
    for (std::int64_t b = 0; b < cfg.paths % batches; ++b) ++sizes[static_cast<std::size_t>(b)];
    std::vector<std::vector<Eigen::VectorXd>> hists(static_cast<std::size_t>(batches));
    const int workers = std::max(1, std::min(batches, cfg.threads > 0 ? cfg.threads
                                                                      : static_cast<int>(std::thread::hardware_concurrency())));
    {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (int b = w; b < batches; b += workers)
                    hists[static_cast<std::size_t>(b)] =
                        run_batch(problem, drift, sampler, sizes[static_cast<std::size_t>(b)], cfg.seed, b, cfg.substeps);
            });
    }

    MCEstimate out;
    out.batches = batches;
    out.density = SpaceTimeField(problem.grid, problem.time);
    out.noise_floor.assign(static_cast<std::size_t>(nt + 1), 0.0);
    const double vol = problem.grid.cell_volume();
    const double total = static_cast<double>(cfg.paths);
    for (int n = 0; n <= nt; ++n) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.grid.size()));
        for (int b = 0; b < batches; ++b) sum += hists[static_cast<std::size_t>(b)][static_cast<std::size_t>(n)];
        out.density[n].values = sum / (total * vol);
        if (batches < 2) {
            out.noise_floor[static_cast<std::size_t>(n)] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        Eigen::VectorXd var = Eigen::VectorXd::Zero(sum.size());
        for (int b = 0; b < batches; ++b) {
            const Eigen::VectorXd dens =
                hists[static_cast<std::size_t>(b)][static_cast<std::size_t>(n)] / (static_cast<double>(sizes[static_cast<std::size_t>(b)]) * vol);
            var += (dens - out.density[n].values).cwiseAbs2();
        }
        var /= static_cast<double>(batches - 1);
        out.noise_floor[static_cast<std::size_t>(n)] = vol * (var / batches).cwiseSqrt().sum();
    }
    return out;
}

SpaceTimeField simulate_density(const MFGProblem& problem, const LambdaData& data, const SolutionPair& pair,
                                const SDEConfig& cfg) {
    return simulate(problem, data, pair, cfg).density;
}

std::vector<double> l1_distance(const SpaceTimeField& a, const SpaceTimeField& b) {
    if (!(a.time == b.time)) throw GridMismatch("l1_distance: time grids differ");
    require_same_grid(a.grid(), b.grid(), "l1_distance");
    std::vector<double> out;
    out.reserve(a.slices.size());
    for (int n = 0; n <= a.steps(); ++n) {
        Field d = a[n] - b[n];
        d.values = d.values.cwiseAbs();
        out.push_back(integrate(d));
    }
    return out;
}

}  // namespace mfgc
