#include "doctest.h"
#include "oracles.hpp"

#include "matchfluct/field.hpp"

#include <sstream>

using namespace matchfluct;

namespace {

double rel(const Vec& a, const Vec& b, int d) {
    double n = 0.0, m = 0.0;
    for (int i = 0; i < d; ++i) {
        n += (a[i] - b[i]) * (a[i] - b[i]);
        m += b[i] * b[i];
    }
    return std::sqrt(n / m);
}

// int g^2 for g = a * bump(|x| / rho), by radial quadrature
double bump_sq_integral(int d, double a, double rho) {
    using boost::math::quadrature::gauss_kronrod;
    double v = gauss_kronrod<double, 61>::integrate(
        [&](double s) { return std::pow(s, d - 1) * std::pow(oracle::bump(s), 2); }, 0.0, 1.0, 15, 1e-14);
    return a * a * std::pow(rho, d) * oracle::sphere_area(d) * v;
}

}  // namespace

TEST_CASE("atomic Fourier coefficients") {
    PointCloud one = make_cloud(TorusDomain(2, 1.0), 1.0, {Vec{0, 0, 0}});
    SpectralField w = atomic_fourier(one, 3);
    for (std::size_t i = 0; i < w.mode_count(); ++i) {
        if (i == w.index({0, 0, 0})) {
            CHECK(w[i] == cplx(0.0, 0.0));
            continue;
        }
        CHECK(std::abs(w[i] - cplx(1.0, 0.0)) < 1e-14);
    }
    CHECK(w.mean_zero());

    PointCloud two = make_cloud(TorusDomain(3, 4.0), 0.5, {Vec{0.3, -0.7, 0.2}, Vec{-0.3, 0.7, -0.2}});
    SpectralField t = atomic_fourier(two, 4);
    double im = 0.0;
    for (const auto& c : t.coefficients()) im = std::max(im, std::abs(c.imag()));
    CHECK(im < 1e-14);
    PointCloud c = sample_binomial(TorusDomain(3, 4.0), 1.0, 3);
    CHECK(atomic_fourier(c, 5).conjugate_asymmetry() < 1e-12);
}

TEST_CASE("Poisson solve: manufactured modes") {
    for (int d = 1; d <= 3; ++d) {
        TorusDomain dom(d, 7.0);
        SpectralField rhs(dom, 4);
        std::array<int, 3> k0{2, d > 1 ? -1 : 0, d > 2 ? 3 : 0};
        std::size_t i0 = rhs.index(k0);
        rhs[i0] = -norm2(rhs.wavevector(i0), d);
        SpectralField u = solve_poisson(rhs);
        for (std::size_t i = 0; i < u.mode_count(); ++i) CHECK(std::abs(u[i] - (i == i0 ? cplx(1.0) : cplx(0.0))) < 1e-12);
        SpectralField zero = solve_poisson(SpectralField(dom, 4));
        for (const auto& c : zero.coefficients()) CHECK(c == cplx(0.0));
    }
    // inverse check on random band-limited data
    TorusDomain dom(2, 5.0);
    SpectralField w(dom, 6);
    Rng rng(4);
    for (std::size_t i = 0; i < w.mode_count(); ++i)
        if (i != w.index({0, 0, 0})) w[i] = cplx(rng.normal(), rng.normal());
    SpectralField back = solve_poisson(w).laplacian();
    for (std::size_t i = 0; i < w.mode_count(); ++i) CHECK(std::abs(back[i] - w[i]) <= 1e-12 * std::abs(w[i]) + 1e-15);
    w[w.index({0, 0, 0})] = 1.0;
    CHECK_THROWS_AS(solve_poisson(w), UsageError);
}

TEST_CASE("mollified gradient: spectral path") {
    const auto& m2 = Mollifier::get(2);
    SpectralField zero(TorusDomain(2, 8.0), 8);
    CHECK(norm2(grad_mollified(zero, m2, 1.0, Vec{0.3, 0.1, 0}).value, 2) == 0.0);
    CHECK(norm2(shift_u1_0(zero, m2), 2) == 0.0);

    PointCloud c = sample_binomial(TorusDomain(2, 8.0), 1.0, 21);
    SpectralField u = solve_poisson(atomic_fourier(c, 48));
    Vec a{0.7, -1.1, 0};
    Vec x{1.3, 0.4, 0};
    Vec lhs = grad_mollified(u.translated(a), m2, 1.5, x).value;
    Vec rhs = grad_mollified(u, m2, 1.5, Vec{x[0] - a[0], x[1] - a[1], 0}).value;
    CHECK(rel(lhs, rhs, 2) < 1e-10);

    // linearity of the shift
    SpectralField u2 = u;
    for (auto& v : u2.coefficients()) v *= 2.5;
    Vec s1 = shift_u1_0(u, m2), s2 = shift_u1_0(u2, m2);
    CHECK(rel(s2, Vec{2.5 * s1[0], 2.5 * s1[1], 0}, 2) < 1e-14);

    // single atom against the periodic Green oracle
    TorusDomain dom(2, 32.0);
    PointCloud one = make_cloud(dom, 1.0 / 32.0, {Vec{0, 0, 0}});
    SpectralField u1 = solve_poisson(atomic_fourier(one, 512));
    const double w = std::pow(one.R, -1.0);
    Vec o = oracle::periodic_green_mollified(Vec{2, 0.5, 0}, 2, 32.0, 1.0, 8);
    Vec g = grad_mollified(u1, m2, 1.0, Vec{2, 0.5, 0}).value;
    CHECK(rel(g, Vec{w * o[0], w * o[1], 0}, 2) < 1e-6);
}

TEST_CASE("shift_u1_0 against real-space quadrature") {
    // d = 2, one atom at x0, L = 16: int eta(y) grad u(y) dy with grad u from the Green oracle
    TorusDomain dom(2, 16.0);
    Vec x0{2.5, 1.0, 0};
    PointCloud one = make_cloud(dom, 1.0 / 16.0, {x0});
    SpectralField u = solve_poisson(atomic_fourier(one, 384));
    Vec s = shift_u1_0(u, Mollifier::get(2));
    const auto& m = Mollifier::get(2);
    const double h = 1.0 / 400.0;
    Vec acc{0, 0, 0};
    for (double y0 = -1 + h / 2; y0 < 1; y0 += h)
        for (double y1 = -1 + h / 2; y1 < 1; y1 += h) {
            double e = m.eval(Vec{y0, y1, 0});
            if (e == 0.0) continue;
            Vec g = oracle::periodic_green(Vec{y0 - x0[0], y1 - x0[1], 0}, 2, 16.0, 6);
            acc[0] += e * g[0] * h * h;
            acc[1] += e * g[1] * h * h;
        }
    const double w = 16.0;  // R^{-d/2} with R = 1/16
    CHECK(rel(s, Vec{w * acc[0], w * acc[1], 0}, 2) < 1e-6);
}

TEST_CASE("Ewald and kernel-table paths against the Green oracle") {
    for (int d = 2; d <= 3; ++d) {
        TorusDomain dom(d, 32.0);
        PointCloud one = make_cloud(dom, 1.0 / 32.0, {Vec{0, 0, 0}});
        AtomicPoisson ap(one);
        const double w = std::pow(one.R, -0.5 * d);
        for (const Vec& x : {Vec{2, 0, 0}, Vec{0.4, -0.3, d > 2 ? 0.2 : 0.0}, Vec{9, 7, d > 2 ? -5 : 0.0}}) {
            Vec o = oracle::periodic_green_mollified(x, d, 32.0, 1.0, 8);
            for (auto& v : o) v *= w;
            CHECK(rel(ap.grad(1.0, x), o, d) < 1e-9);
            CHECK(rel(ap.grad_fast(1.0, x), o, d) < 1e-6);
        }
    }
}

TEST_CASE("kernel table, multi-scale and torus grid agree with Ewald") {
    for (int d = 2; d <= 3; ++d) {
        TorusDomain dom(d, 8.0);
        PointCloud c = sample_binomial(dom, 1.0, 77 + d);
        AtomicPoisson ap(c);
        std::vector<double> eps{0.25, 0.5, 1.0, 2.0};
        Vec x{0.3, -1.2, d > 2 ? 2.2 : 0.0};
        auto multi = ap.grad_fast_multi(eps, x);
        for (std::size_t k = 0; k < eps.size(); ++k) {
            Vec e = ap.grad(eps[k], x);
            CHECK(rel(ap.grad_fast(eps[k], x), e, d) < 1e-6);
            CHECK(rel(multi[k], e, d) < 1e-6);
        }
        TorusGridSolver grid(c, 64, 1.0);
        std::vector<double> g;
        grid.grad(0.5, g);
        for (std::size_t idx : {std::size_t{0}, std::size_t{1234}, grid.nodes() - 7}) {
            Vec e = ap.grad(0.5, grid.node(idx));
            CHECK(rel(Vec{g[3 * idx], g[3 * idx + 1], g[3 * idx + 2]}, e, d) < 1e-7);
        }
        // density integrates to the atom count times the atom mass
        std::vector<double> rho;
        grid.density(1.0, rho);
        double tot = 0.0;
        for (double v : rho) tot += v * std::pow(grid.spacing(), d);
        CHECK(tot == doctest::Approx(dom.volume()).epsilon(1e-4));
    }
}

TEST_CASE("rescaling identity grad u^{R,L}(x) = R^{d/2-1} grad u^{1,LR}(Rx)") {
    for (int d = 2; d <= 3; ++d) {
        const double R = 2.0, L = 4.0;
        PointCloud c = sample_binomial(TorusDomain(d, L), R, 5 + d);
        std::vector<Vec> pts = c.points;
        for (auto& p : pts)
            for (int a = 0; a < d; ++a) p[a] *= R;
        PointCloud big = make_cloud(TorusDomain(d, L * R), 1.0, pts);
        AtomicPoisson a(c), b(big);
        Vec x{0.3, -0.4, d > 2 ? 0.1 : 0.0};
        Vec lhs = a.grad(0.5, x);
        Vec rhs = b.grad(0.5 * R, Vec{R * x[0], R * x[1], R * x[2]});
        for (auto& v : rhs) v *= std::pow(R, 0.5 * d - 1.0);
        CHECK(rel(lhs, rhs, d) < 1e-8);
    }
}

TEST_CASE("mean of the gradient vanishes") {
    PointCloud c = sample_binomial(TorusDomain(2, 6.0), 1.0, 2);
    SpectralField u = solve_poisson(atomic_fourier(c, 16));
    CHECK(std::abs(u[u.index({0, 0, 0})]) == 0.0);
    TorusGridSolver grid(c, 48, 1.0);
    std::vector<double> g;
    grid.grad(1.0, g);
    double m0 = 0.0, m1 = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        m0 += g[3 * i];
        m1 += g[3 * i + 1];
        scale += std::abs(g[3 * i]);
    }
    CHECK(std::abs(m0) < 1e-5 * scale);
    CHECK(std::abs(m1) < 1e-5 * scale);
}

TEST_CASE("field dump round trip") {
    PointCloud c = sample_binomial(TorusDomain(3, 3.0), 1.0, 12);
    SpectralField u = solve_poisson(atomic_fourier(c, 5));
    std::stringstream ss;
    u.dump(ss);
    CHECK(ss.str().size() == 16 + 16 * u.mode_count());
    SpectralField v = SpectralField::load(ss);
    CHECK(v.cutoff() == 5);
    CHECK(v.domain().L == 3.0);
    CHECK(v.coefficients() == u.coefficients());
    std::stringstream bad("xx");
    CHECK_THROWS(SpectralField::load(bad));
}

TEST_CASE("GFF variance") {
    TestFunction g3 = TestFunction::gradient_bump(3, 1.0, 1.5);
    GffCovariance v = gff_variance(g3, 3);
    double exact = bump_sq_integral(3, 1.0, 1.5);
    // the gradient term's potential is a * bump(|x| / rho) (unnormalized profile)
    CHECK(v.value == doctest::Approx(exact).epsilon(1e-6));
    CHECK(g3.gradient_potential_l2sq() == doctest::Approx(exact).epsilon(1e-8));

    TestFunction zero = TestFunction::gradient_bump(3, 0.0, 1.5);
    CHECK(gff_variance(zero, 3).value == doctest::Approx(0.0));

    TestFunction dir = TestFunction::directional_bump(3, 1.0, 1.0, Vec{1, 0, 0});
    TestFunction dir2 = TestFunction::directional_bump(3, 2.0, 1.0, Vec{1, 0, 0});
    double a = gff_variance(dir, 3).value, b = gff_variance(dir2, 3).value;
    CHECK(b == doctest::Approx(4.0 * a).epsilon(1e-10));

    // phi for f = a bump(|x|/rho) e is e.grad Phi with -Lap Phi = a bump, so
    // int phi^2 = (1/3) int |grad Phi|^2 = M^2 / (12 pi rho) (1 + int_0^1 F(t)^2 / t^2 dt), F the mass fraction
    {
        using boost::math::quadrature::gauss_kronrod;
        const double rho = 2.0;
        double M = 4.0 * std::numbers::pi * std::pow(rho, 3) *
                   gauss_kronrod<double, 61>::integrate([](double s) { return s * s * oracle::bump(s); }, 0.0, 1.0, 15, 1e-14);
        double in = gauss_kronrod<double, 31>::integrate(
            [](double t) { return t == 0.0 ? 0.0 : std::pow(oracle::bump_mass(3, t), 2) / (t * t); }, 0.0, 1.0, 8, 1e-10);
        double expect = M * M / (12.0 * std::numbers::pi * rho) * (1.0 + in);
        TestFunction f = TestFunction::directional_bump(3, 1.0, rho, Vec{1, 0, 0});
        GffCovariance g = gff_variance(f, 3);
        CHECK(g.value == doctest::Approx(expect).epsilon(1e-6));
        CHECK(g.rel_change < 1e-8);
    }

    TestFunction d2 = TestFunction::directional_bump(2, 1.0, 1.0, Vec{1, 0, 0});
    CHECK_THROWS_AS(gff_variance(d2, 2), UsageError);
    // a unit-radius directional bump is eta times a vector, which the renormalization removes entirely
    CHECK(gff_variance(d2, 2, true).value == doctest::Approx(0.0).scale(1.0));
    TestFunction d2w = TestFunction::directional_bump(2, 1.0, 1.5, Vec{1, 0, 0});
    CHECK(gff_variance(d2w, 2, true).value > 1e-4);

    // the periodic potential approaches the whole-space one as the box grows
    TestFunction g2 = TestFunction::gradient_bump(2, 1.0, 1.0);
    PeriodicPotential pp = periodic_potential(g2, TorusDomain(2, 16.0), 256, false);
    CHECK(pp.l2sq == doctest::Approx(bump_sq_integral(2, 1.0, 1.0)).epsilon(1e-3));
}
