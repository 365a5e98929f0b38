#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgc {

/// Raised when a numerical kernel receives or produces non-finite data.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when two objects that must share a discretization do not.
struct GridMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Uniform periodic grid on the unit torus [0,1)^d, d in {1,2}.
/// Nodes are x_i = i*h with h = 1/N; node (i0, i1) in 2-D lives at flat index i0*N + i1.
class PeriodicGrid {
public:
    PeriodicGrid() = default;
    PeriodicGrid(int dim, int points_per_dim);

    int dim() const { return dim_; }
    int points_per_dim() const { return n_; }
    double spacing() const { return 1.0 / n_; }
    /// h^d, the quadrature weight of one node.
    double cell_volume() const;
    std::size_t size() const;

    /// Coordinate of node `index` along `axis`.
    double coordinate(std::size_t index, int axis) const;

    bool operator==(const PeriodicGrid&) const = default;

private:
    int dim_ = 1;
    int n_ = 2;
};

class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double horizon, int steps);

    double horizon() const { return horizon_; }
    int steps() const { return steps_; }
    double dt() const { return horizon_ / steps_; }
    /// t_n; t_0 = 0 and t_{steps} = horizon exactly.
    double time(int n) const;

    bool operator==(const TimeGrid&) const = default;

private:
    double horizon_ = 1.0;
    int steps_ = 1;
};

struct Field {
    PeriodicGrid grid;
    Eigen::VectorXd values;

    Field() = default;
    explicit Field(const PeriodicGrid& g) : grid(g), values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()))) {}
    Field(const PeriodicGrid& g, Eigen::VectorXd v);

    static Field constant(const PeriodicGrid& g, double c);

    double operator[](std::size_t i) const { return values[static_cast<Eigen::Index>(i)]; }
    double& operator[](std::size_t i) { return values[static_cast<Eigen::Index>(i)]; }
    std::size_t size() const { return static_cast<std::size_t>(values.size()); }

    bool all_finite() const { return values.allFinite(); }

    Field& operator+=(const Field& other);
    Field& operator-=(const Field& other);
    Field& operator*=(double s);
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(double s, Field a);

/// d component fields, one per coordinate direction.
using VectorField = std::vector<Field>;

struct SpaceTimeField {
    TimeGrid time;
    std::vector<Field> slices;

    SpaceTimeField() = default;
    SpaceTimeField(const PeriodicGrid& grid, const TimeGrid& time);

    const PeriodicGrid& grid() const { return slices.front().grid; }
    int steps() const { return time.steps(); }
    Field& operator[](int n) { return slices[static_cast<std::size_t>(n)]; }
    const Field& operator[](int n) const { return slices[static_cast<std::size_t>(n)]; }

    /// Largest absolute entry over every slice.
    double sup_norm() const;
    bool all_finite() const;
};

/// Sample a function of the node coordinates; `fn` receives a d-vector.
template <typename Fn>
Field sample(const PeriodicGrid& grid, Fn&& fn) {
    Field f(grid);
    Eigen::VectorXd x(grid.dim());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (int a = 0; a < grid.dim(); ++a) x[a] = grid.coordinate(i, a);
        f[i] = fn(x);
    }
    return f;
}

void require_same_grid(const PeriodicGrid& a, const PeriodicGrid& b, const char* what);

// Spectral (Fourier) operators. The first-derivative symbol drops the Nyquist mode so
// that every derivative stays real and the discrete operators are exactly skew-adjoint.

VectorField gradient(const Field& f);
Field partial(const Field& f, int axis);
Field divergence(const VectorField& flux);
/// Equal to divergence(gradient(f)); the Nyquist modes are annihilated.
Field laplacian(const Field& f);

/// Solves (shift - laplacian) u = f; shift > 0.
Field shifted_inverse_laplacian(const Field& f, double shift);

/// h^d * sum of values (rectangle rule, spectrally accurate on the torus).
double integrate(const Field& f);
/// Discrete L2 inner product h^d * sum f g.
double inner(const Field& f, const Field& g);
double l2_norm(const Field& f);

/// Exact heat propagator: Fourier mode k is scaled by exp(-4 pi^2 |k|^2 dt).
Field heat_step(const Field& f, double dt);

/// Mixed norm int_tau^T ( int rho^q dx )^{1/q} dt of the heat flow started from phi at
/// time tau. Requires phi >= 0, ||phi||_1 <= 1 and q > 1 (d <= 2).
double heat_smoothing_norm(const Field& phi, double tau, double horizon, double q);

/// Dense matrix of the spectral partial derivative along `axis` acting on grid vectors.
Eigen::MatrixXd derivative_matrix(const PeriodicGrid& grid, int axis);

/// Trigonometric interpolation of `f` onto a grid with the same dimension and more points.
Field spectral_resample(const Field& f, const PeriodicGrid& target);

}  // namespace mfgc
