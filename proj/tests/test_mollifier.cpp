#include "doctest.h"
#include "oracles.hpp"

#include "matchfluct/mollifier.hpp"

using namespace matchfluct;

TEST_CASE("unit mass and support") {
    for (int d = 1; d <= 3; ++d) {
        const auto& m = Mollifier::get(d);
        // independent radial quadrature of the normalized profile
        using boost::math::quadrature::gauss_kronrod;
        double mass = gauss_kronrod<double, 61>::integrate(
            [&](double s) { return Mollifier::sphere_area(d) * std::pow(s, d - 1) * m.radial(s); }, 0.0, 1.0, 15, 1e-14);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(m.radial(2.0) == 0.0);
        CHECK(m.eval(Vec{2.0, 0, 0}, 1.0) == 0.0);
        CHECK(m.radial(0.3) > 0.0);
        for (double t : {0.1, 0.5, 0.9}) CHECK(m.mass(t) == doctest::Approx(oracle::bump_mass(d, t)).epsilon(1e-9));
        CHECK(m.mass(1.5) == 1.0);
    }
}

TEST_CASE("scaling of eta_eps") {
    const auto& m = Mollifier::get(3);
    Vec x{0.1, -0.2, 0.05};
    for (double eps : {0.5, 1.0, 2.0}) {
        Vec y{x[0] / eps, x[1] / eps, x[2] / eps};
        CHECK(m.eval(x, eps) == doctest::Approx(std::pow(eps, -3) * m.eval(y, 1.0)).epsilon(1e-14));
    }
}

TEST_CASE("Fourier transform") {
    for (int d = 1; d <= 3; ++d) {
        const auto& m = Mollifier::get(d);
        CHECK(m.hat_radial(0.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m.hat_radial(3.0, 0.5) == doctest::Approx(m.hat_radial(1.5, 1.0)).epsilon(1e-14));
        for (double k = 0.0; k < m.hat_extent(); k += 0.37) CHECK(std::abs(m.hat_radial(k)) <= 1.0 + 1e-12);
    }
    // radial Hankel transforms in d = 2, 3 by direct quadrature
    using boost::math::quadrature::gauss_kronrod;
    for (double k : {0.7, 4.0, 11.0}) {
        const auto& m2 = Mollifier::get(2);
        const auto& m3 = Mollifier::get(3);
        double h2 = gauss_kronrod<double, 61>::integrate(
            [&](double r) { return 2.0 * std::numbers::pi * r * m2.radial(r) * std::cyl_bessel_j(0.0, k * r); }, 0.0, 1.0, 15,
            1e-14);
        double h3 = gauss_kronrod<double, 61>::integrate(
            [&](double r) { return 4.0 * std::numbers::pi * r * r * m3.radial(r) * std::sin(k * r) / (k * r); }, 0.0, 1.0,
            15, 1e-14);
        CHECK(m2.hat_radial(k) == doctest::Approx(h2).epsilon(1e-7).scale(1e-9));
        CHECK(m3.hat_radial(k) == doctest::Approx(h3).epsilon(1e-7).scale(1e-9));
    }
    // d = 1 against direct quadrature of int eta(x) cos(kx)
    const auto& m1 = Mollifier::get(1);
    for (double k : {0.5, 2.0, 7.0, 15.0}) {
        double v = gauss_kronrod<double, 61>::integrate([&](double x) { return 2.0 * m1.radial(x) * std::cos(k * x); }, 0.0,
                                                         1.0, 15, 1e-14);
        CHECK(m1.hat_radial(k) == doctest::Approx(v).epsilon(1e-8).scale(1.0));
    }
}

TEST_CASE("grid convolution agrees with spectral multiplication") {
    // d = 1: f(x) = cos(k x), (f * eta_eps)(x) = hat(k eps) cos(k x)
    const auto& m = Mollifier::get(1);
    const double k = 2.3, eps = 0.7, x0 = 0.4, h = 1e-4;
    double acc = 0.0;
    for (double y = -eps + 0.5 * h; y < eps; y += h) acc += m.radial(std::abs(y), eps) * std::cos(k * (x0 - y)) * h;
    CHECK(acc == doctest::Approx(m.hat_radial(k, eps) * std::cos(k * x0)).epsilon(1e-6));
}

TEST_CASE("L^p norms of the profile") {
    const auto& m = Mollifier::get(2);
    using boost::math::quadrature::gauss_kronrod;
    double v = gauss_kronrod<double, 61>::integrate(
        [&](double s) { return 2.0 * std::numbers::pi * s * std::pow(m.radial(s), 2.0); }, 0.0, 1.0, 15, 1e-14);
    CHECK(m.lp_power(2.0) == doctest::Approx(v).epsilon(1e-8));
}
