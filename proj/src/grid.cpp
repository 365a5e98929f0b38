#include "mfgc/grid.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

namespace mfgc {

namespace {

using Complex = std::complex<double>;
using Spectrum = std::vector<Complex>;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int wavenumber(int j, int n) { return j <= n / 2 ? j : j - n; }

Eigen::FFT<double>& fft_engine() {
    thread_local Eigen::FFT<double> engine;
    return engine;
}

// In-place 1-D transform of a strided line.
void transform_line(Spectrum& data, std::size_t offset, std::size_t stride, int n, bool inverse) {
    Spectrum line(static_cast<std::size_t>(n));
    Spectrum out;
    for (int j = 0; j < n; ++j) line[static_cast<std::size_t>(j)] = data[offset + stride * static_cast<std::size_t>(j)];
    if (inverse) {
        fft_engine().inv(out, line);
    } else {
        fft_engine().fwd(out, line);
    }
    for (int j = 0; j < n; ++j) data[offset + stride * static_cast<std::size_t>(j)] = out[static_cast<std::size_t>(j)];
}

void transform(const PeriodicGrid& grid, Spectrum& data, bool inverse) {
    const int n = grid.points_per_dim();
    if (grid.dim() == 1) {
        transform_line(data, 0, 1, n, inverse);
        return;
    }
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t row = 0; row < un; ++row) transform_line(data, row * un, 1, n, inverse);
    for (std::size_t col = 0; col < un; ++col) transform_line(data, col, un, n, inverse);
}

Spectrum forward(const Field& f) {
    Spectrum s(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) s[i] = Complex(f[i], 0.0);
    transform(f.grid, s, false);
    return s;
}

Field backward(const PeriodicGrid& grid, Spectrum s) {
    transform(grid, s, true);
    Field out(grid);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s[i].real();
    return out;
}

// Integer wavevector of flat spectral index `i`.
std::array<int, 2> wavevector(const PeriodicGrid& grid, std::size_t i) {
    const int n = grid.points_per_dim();
    if (grid.dim() == 1) return {wavenumber(static_cast<int>(i), n), 0};
    const auto un = static_cast<std::size_t>(n);
    return {wavenumber(static_cast<int>(i / un), n), wavenumber(static_cast<int>(i % un), n)};
}

bool is_nyquist(int k, int n) { return 2 * k == n; }

template <typename Symbol>
Field apply_symbol(const Field& f, Symbol&& symbol) {
    Spectrum s = forward(f);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= symbol(wavevector(f.grid, i));
    return backward(f.grid, std::move(s));
}

void require_finite(const Field& f, const char* what) {
    if (!f.all_finite()) throw NumericalError(std::string(what) + ": non-finite input values");
}

}  // namespace

PeriodicGrid::PeriodicGrid(int dim, int points_per_dim) : dim_(dim), n_(points_per_dim) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("PeriodicGrid: dimension must be 1 or 2");
    if (points_per_dim < 2 || (points_per_dim & (points_per_dim - 1)) != 0)
        throw std::invalid_argument("PeriodicGrid: points per dimension must be a power of two >= 2");
}

double PeriodicGrid::cell_volume() const { return std::pow(spacing(), dim_); }

std::size_t PeriodicGrid::size() const {
    std::size_t total = 1;
    for (int a = 0; a < dim_; ++a) total *= static_cast<std::size_t>(n_);
    return total;
}

double PeriodicGrid::coordinate(std::size_t index, int axis) const {
    const auto un = static_cast<std::size_t>(n_);
    if (dim_ == 1) return static_cast<double>(index) * spacing();
    const std::size_t i = axis == 0 ? index / un : index % un;
    return static_cast<double>(i) * spacing();
}

TimeGrid::TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("TimeGrid: horizon must be positive");
    if (steps < 1) throw std::invalid_argument("TimeGrid: at least one time step required");
}

double TimeGrid::time(int n) const {
    if (n == steps_) return horizon_;
    return horizon_ * static_cast<double>(n) / static_cast<double>(steps_);
}

Field::Field(const PeriodicGrid& g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
    if (static_cast<std::size_t>(values.size()) != grid.size())
        throw GridMismatch("Field: value count does not match grid size");
}

Field Field::constant(const PeriodicGrid& g, double c) {
    return Field(g, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.size()), c));
}

Field& Field::operator+=(const Field& other) {
    require_same_grid(grid, other.grid, "Field +=");
    values += other.values;
    return *this;
}

Field& Field::operator-=(const Field& other) {
    require_same_grid(grid, other.grid, "Field -=");
    values -= other.values;
    return *this;
}

Field& Field::operator*=(double s) {
    values *= s;
    return *this;
}

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(double s, Field a) { return a *= s; }

SpaceTimeField::SpaceTimeField(const PeriodicGrid& grid, const TimeGrid& t)
    : time(t), slices(static_cast<std::size_t>(t.steps() + 1), Field(grid)) {}

double SpaceTimeField::sup_norm() const {
    double s = 0.0;
    for (const auto& f : slices) s = std::max(s, f.values.cwiseAbs().maxCoeff());
    return s;
}

bool SpaceTimeField::all_finite() const {
    return std::all_of(slices.begin(), slices.end(), [](const Field& f) { return f.all_finite(); });
}

void require_same_grid(const PeriodicGrid& a, const PeriodicGrid& b, const char* what) {
    if (!(a == b)) throw GridMismatch(std::string(what) + ": grids differ");
}

Field partial(const Field& f, int axis) {
    require_finite(f, "gradient");
    const int n = f.grid.points_per_dim();
    return apply_symbol(f, [&](const std::array<int, 2>& k) {
        const int ka = k[static_cast<std::size_t>(axis)];
        if (is_nyquist(ka, n)) return Complex(0.0, 0.0);
        return Complex(0.0, kTwoPi * ka);
    });
}

VectorField gradient(const Field& f) {
    VectorField g;
    g.reserve(static_cast<std::size_t>(f.grid.dim()));
    for (int a = 0; a < f.grid.dim(); ++a) g.push_back(partial(f, a));
    return g;
}

Field divergence(const VectorField& flux) {
    if (flux.empty()) throw std::invalid_argument("divergence: empty vector field");
    const PeriodicGrid& grid = flux.front().grid;
    if (static_cast<int>(flux.size()) != grid.dim())
        throw GridMismatch("divergence: component count differs from grid dimension");
    Field out(grid);
    for (std::size_t a = 0; a < flux.size(); ++a) {
        require_same_grid(grid, flux[a].grid, "divergence");
        out += partial(flux[a], static_cast<int>(a));
    }
    return out;
}

Field laplacian(const Field& f) {
    require_finite(f, "laplacian");
    const int n = f.grid.points_per_dim();
    const int d = f.grid.dim();
    return apply_symbol(f, [&](const std::array<int, 2>& k) {
        double s = 0.0;
        for (int a = 0; a < d; ++a) {
            const int ka = k[static_cast<std::size_t>(a)];
            if (!is_nyquist(ka, n)) s -= kTwoPi * kTwoPi * ka * ka;
        }
        return Complex(s, 0.0);
    });
}

Field shifted_inverse_laplacian(const Field& f, double shift) {
    if (!(shift > 0.0)) throw std::invalid_argument("shifted_inverse_laplacian: shift must be positive");
    require_finite(f, "shifted_inverse_laplacian");
    const int n = f.grid.points_per_dim();
    const int d = f.grid.dim();
    return apply_symbol(f, [&](const std::array<int, 2>& k) {
        double s = shift;
        for (int a = 0; a < d; ++a) {
            const int ka = k[static_cast<std::size_t>(a)];
            if (!is_nyquist(ka, n)) s += kTwoPi * kTwoPi * ka * ka;
        }
        return Complex(1.0 / s, 0.0);
    });
}

double integrate(const Field& f) { return f.grid.cell_volume() * f.values.sum(); }

double inner(const Field& f, const Field& g) {
    require_same_grid(f.grid, g.grid, "inner");
    return f.grid.cell_volume() * f.values.dot(g.values);
}

double l2_norm(const Field& f) { return std::sqrt(inner(f, f)); }

Field heat_step(const Field& f, double dt) {
    if (dt < 0.0) throw std::invalid_argument("heat_step: negative time step");
    require_finite(f, "heat_step");
    const int d = f.grid.dim();
    return apply_symbol(f, [&](const std::array<int, 2>& k) {
        double k2 = 0.0;
        for (int a = 0; a < d; ++a) k2 += static_cast<double>(k[static_cast<std::size_t>(a)]) * k[static_cast<std::size_t>(a)];
        return Complex(std::exp(-kTwoPi * kTwoPi * k2 * dt), 0.0);
    });
}

double heat_smoothing_norm(const Field& phi, double tau, double horizon, double q) {
    if (!(q > 1.0)) throw std::invalid_argument("heat_smoothing_norm: exponent q must exceed 1");
    if (phi.grid.dim() > 2) throw std::invalid_argument("heat_smoothing_norm: only d <= 2 supported");
    if (!(tau >= 0.0) || !(horizon >= tau)) throw std::invalid_argument("heat_smoothing_norm: need 0 <= tau <= T");
    require_finite(phi, "heat_smoothing_norm");
    if (phi.values.minCoeff() < -1e-12) throw std::invalid_argument("heat_smoothing_norm: phi must be nonnegative");
    if (integrate(phi) > 1.0 + 1e-10) throw std::invalid_argument("heat_smoothing_norm: ||phi||_1 must not exceed 1");

    const double span = horizon - tau;
    if (span == 0.0) return 0.0;

    auto inner_norm = [&](double s) {
        Field rho = heat_step(phi, s);
        double acc = 0.0;
        for (std::size_t i = 0; i < rho.size(); ++i) acc += std::pow(std::max(rho[i], 0.0), q);
        return std::pow(acc * phi.grid.cell_volume(), 1.0 / q);
    };

    // Geometrically graded panels resolve the initial layer; 5-point Gauss-Legendre per panel.
    static constexpr std::array<double, 5> nodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                                    0.5384693101056831, 0.9061798459386640};
    static constexpr std::array<double, 5> weights = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                                      0.4786286704993665, 0.2369268850561891};
    std::vector<double> breaks{0.0};
    double edge = span * 1e-8;
    while (edge < span) {
        breaks.push_back(edge);
        edge *= 2.0;
    }
    breaks.push_back(span);

    double total = 0.0;
    for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
        const double a = breaks[p];
        const double b = breaks[p + 1];
        const double half = 0.5 * (b - a);
        const double mid = 0.5 * (a + b);
        for (std::size_t j = 0; j < nodes.size(); ++j) total += weights[j] * half * inner_norm(mid + half * nodes[j]);
    }
    return total;
}

Eigen::MatrixXd derivative_matrix(const PeriodicGrid& grid, int axis) {
    const auto size = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd d(size, size);
    Field unit(grid);
    for (Eigen::Index j = 0; j < size; ++j) {
        unit.values.setZero();
        unit.values[j] = 1.0;
        d.col(j) = partial(unit, axis).values;
    }
    return d;
}

Field spectral_resample(const Field& f, const PeriodicGrid& target) {
    if (f.grid.dim() != target.dim()) throw GridMismatch("spectral_resample: dimension mismatch");
    const int ns = f.grid.points_per_dim();
    const int nt = target.points_per_dim();
    if (ns == nt) return f;

    const Spectrum src = forward(f);
    Spectrum dst(target.size(), Complex(0.0, 0.0));
    const int d = f.grid.dim();
    const double scale = std::pow(static_cast<double>(nt) / ns, d);
    const int kmax_common = std::min(ns, nt) / 2;

    auto index_of = [](int k, int n) { return static_cast<std::size_t>(k >= 0 ? k : k + n); };

    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto k = wavevector(f.grid, i);
        // Split each source Nyquist component evenly between +-n/2 of the target (upsampling);
        // fold components beyond the target band into its Nyquist (downsampling).
        std::vector<std::pair<std::array<int, 2>, double>> images{{k, 1.0}};
        for (int a = 0; a < d; ++a) {
            std::vector<std::pair<std::array<int, 2>, double>> next;
            for (auto [kv, w] : images) {
                const int ka = kv[static_cast<std::size_t>(a)];
                if (std::abs(ka) > kmax_common) continue;
                if (std::abs(ka) == kmax_common && ns < nt) {
                    auto plus = kv;
                    auto minus = kv;
                    plus[static_cast<std::size_t>(a)] = kmax_common;
                    minus[static_cast<std::size_t>(a)] = -kmax_common;
                    next.push_back({plus, 0.5 * w});
                    next.push_back({minus, 0.5 * w});
                } else {
                    next.push_back({kv, w});
                }
            }
            images = std::move(next);
        }
        for (auto [kv, w] : images) {
            std::size_t flat = index_of(kv[0], nt);
            if (d == 2) flat = flat * static_cast<std::size_t>(nt) + index_of(kv[1], nt);
            dst[flat] += w * scale * src[i];
        }
    }
    return backward(target, std::move(dst));
}

}  // namespace mfgc
