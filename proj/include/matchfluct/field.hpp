#pragma once

#include "matchfluct/mollifier.hpp"
#include "matchfluct/torus.hpp"

#include <complex>
#include <iosfwd>
#include <mutex>
#include <string>
#include <vector>

namespace matchfluct {

using cplx = std::complex<double>;

// Truncated Fourier series on Q_L: u(x) = sum_k c(k) exp(i 2pi k.x / L), k in {-K..K}^d.
class SpectralField {
public:
    SpectralField() = default;
    SpectralField(const TorusDomain& dom, int K);

    const TorusDomain& domain() const { return dom_; }
    int cutoff() const { return K_; }
    int side() const { return 2 * K_ + 1; }
    std::size_t mode_count() const { return coef_.size(); }
    bool mean_zero() const;

    // Lexicographic order, first component most significant.
    std::size_t index(const std::array<int, 3>& k) const;
    std::array<int, 3> mode(std::size_t idx) const;
    Vec wavevector(std::size_t idx) const;  // 2 pi k / L

    cplx& operator[](std::size_t i) { return coef_[i]; }
    const cplx& operator[](std::size_t i) const { return coef_[i]; }
    cplx coefficient(const std::array<int, 3>& k) const { return coef_[index(k)]; }
    std::vector<cplx>& coefficients() { return coef_; }
    const std::vector<cplx>& coefficients() const { return coef_; }

    double conjugate_asymmetry() const;
    double value(const Vec& x) const;
    double mollified_value(const Mollifier& m, double eps, const Vec& x) const;
    // Sum of |c(k)|^2 |k|^2 L^d, i.e. the squared L^2 norm of the gradient on Q_L.
    double gradient_energy() const;

    SpectralField laplacian() const;
    SpectralField translated(const Vec& a) const;  // u(. - a)

    void dump(std::ostream& out) const;
    static SpectralField load(std::istream& in);

private:
    TorusDomain dom_;
    int K_ = 0;
    std::vector<cplx> coef_;
};

SpectralField atomic_fourier(const PointCloud& cloud, int K);
SpectralField solve_poisson(const SpectralField& rhs);

struct GradientValue {
    Vec value{0.0, 0.0, 0.0};
    double truncation_estimate = 0.0;
    bool truncation_warning = false;
};

GradientValue grad_mollified(const SpectralField& u, const Mollifier& m, double eps, const Vec& x);
Vec shift_u1_0(const SpectralField& u, const Mollifier& m);

// Mollified scalar values on the tensor lattice origin + spacing * i, i in [0,n_a).
std::vector<double> mollified_lattice_values(const SpectralField& u, const Mollifier& m, double eps,
                                             const Vec& origin, double spacing, const std::array<int, 3>& n);

// Whole-space Green function gradient, z / (omega_d |z|^d).
Vec green_gradient(const Vec& z, int d);
// Mass of the standard Gaussian N(0, I_d) inside the ball of radius t.
double gaussian_ball_mass(double t, int d);

// Gradient of (periodic Green function on Q_1) minus (whole-space Green function), tabulated on
// the closed unit cell and interpolated with a tensor cubic stencil.  H_L(z) = L^{1-d} H_1(z/L).
class GreenCorrectionTable {
public:
    static const GreenCorrectionTable& get(int d);
    explicit GreenCorrectionTable(int d);

    // z in the closed cell [-L/2, L/2]^d
    Vec eval(const Vec& z, double L) const;
    int nodes_per_side() const { return n_; }

private:
    int d_;
    int n_ = 0;        // cell divided into n_ intervals
    int stride_ = 0;   // n_ + 5 stored nodes per axis
    std::vector<double> data_;  // d values per node
};

// Mollified gradient of u^{R,L} for an atomic cloud.
class AtomicPoisson {
public:
    explicit AtomicPoisson(const PointCloud& cloud, double tol = 1e-13);

    const PointCloud& cloud() const { return *cloud_; }
    // Ewald split; accurate to about tol relative.
    Vec grad(double eps, const Vec& x) const;
    // Kernel-table path, requires eps < L/2; accuracy about 1e-8 relative.
    Vec grad_fast(double eps, const Vec& x) const;
    // Several scales at the same point with one pass over the atoms (kernel-table path).
    std::vector<Vec> grad_fast_multi(const std::vector<double>& eps, const Vec& x) const;

    // Periodic kernel grad G^L * eta_eps at displacement z (single unit source).
    static Vec kernel_fast(const Mollifier& m, const TorusDomain& dom, double eps, const Vec& z);

private:
    const PointCloud* cloud_;
    const Mollifier* m_;
    double sigma_ = 1.0;
    double cut_ = 8.0;
    mutable std::once_flag modes_once_;
    mutable std::vector<Vec> kvec_;
    mutable std::vector<cplx> kcoef_;  // S(k) * prefactor, k over a half space

    void build_modes() const;
};

// Gradient of u^{R,L} mollified at many scales on the full torus grid (spacing L/n), using the Ewald
// split with the Gaussian part evaluated by FFT.  Scales must not exceed max_eps.
class TorusGridSolver {
public:
    TorusGridSolver(const PointCloud& cloud, int n, double max_eps, double tol = 1e-10);

    int n() const { return n_; }
    double spacing() const { return h_; }
    std::size_t nodes() const { return raw_.size() / 3; }
    Vec node(std::size_t idx) const;

    // Fills out[3*idx + a] with component a of grad u_eps at node idx.
    void grad(double eps, std::vector<double>& out) const;
    // out[3*idx + a] = sum_i eta_eps(node - X_i) * w_i[a]
    void smooth(double eps, const std::vector<Vec>& w, std::vector<double>& out) const;
    // out[idx] = sum_i R^{-d} eta_eps(node - X_i)
    void density(double eps, std::vector<double>& out) const;

private:
    const PointCloud* cloud_;
    const Mollifier* m_;
    int d_, n_;
    double h_, max_eps_, sigma_;
    std::vector<double> raw_;
    // atom buckets, side >= max_eps
    int nb_ = 1;
    double bside_ = 1.0;
    std::vector<std::size_t> bstart_, bitems_;

    template <class F>
    void for_near(std::size_t node, double radius, F&& f) const;
};

// Vector test functions built from the bump profile: gradients of bumps and directional bumps.
struct BumpTerm {
    enum class Kind { Gradient, Directional } kind = Kind::Directional;
    double amplitude = 1.0;
    double radius = 1.0;
    Vec center{0.0, 0.0, 0.0};
    Vec direction{1.0, 0.0, 0.0};
};

class TestFunction {
public:
    TestFunction() = default;
    TestFunction(int d, std::string name, std::vector<BumpTerm> terms);

    static TestFunction gradient_bump(int d, double amplitude, double radius);
    static TestFunction directional_bump(int d, double amplitude, double radius, const Vec& direction);

    int dim() const { return d_; }
    const std::string& name() const { return name_; }
    Vec eval(const Vec& x) const;
    // f_hat(k) = int f(x) exp(-i k.x) dx, components 0..d-1
    std::array<cplx, 3> fourier(const Vec& k) const;
    Vec integral() const;
    double support_radius() const;
    double min_bump_radius() const;
    const std::vector<BumpTerm>& terms() const { return terms_; }
    TestFunction scaled(double a) const;
    // For a single gradient term f = grad g: the exact int g^2.
    double gradient_potential_l2sq() const;

private:
    int d_ = 2;
    std::string name_;
    std::vector<BumpTerm> terms_;
};

struct GffCovariance {
    std::string function;
    double value = 0.0;
    double value_coarse = 0.0;  // same integral at half the quadrature resolution
    double rel_change = 0.0;
    bool renormalized = false;
};

// int (phi^inf)^2 with -Lap phi = div f (d=2: f - eta int f), by quadrature of
// (2 pi)^{-d} int |k.f_hat|^2 / |k|^4 over the whole frequency space.
GffCovariance gff_variance(const TestFunction& f, int d, bool renormalize = false);

// phi^L on the n^d torus grid of Q_L together with int_{Q_L} (phi^L)^2.
struct PeriodicPotential {
    TorusDomain domain;
    int n = 0;
    std::vector<double> values;
    double l2sq = 0.0;

    // cubic interpolation on the periodic grid
    double eval(const Vec& x) const;
};

PeriodicPotential periodic_potential(const TestFunction& f, const TorusDomain& dom, int n, bool renormalize);

}  // namespace matchfluct
