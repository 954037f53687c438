#include "doctest.h"

#include "matchfluct/mollifier.hpp"
#include "matchfluct/sobolev.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

using namespace matchfluct;

namespace {

PointwiseSampler dirac(int d) {
    return PointwiseSampler(d, 1, [d](double eps, const Vec& x, double* out) { out[0] = Mollifier::get(d).eval(x, eps); });
}

// Squared W^{gamma,2} norm of the 1D cubic B-spline with knot spacing a, from its Fourier transform.
double bspline_norm_fourier(double a, double gamma) {
    const int k = static_cast<int>(std::floor(gamma));
    const double s = gamma - k;
    const double cs = -4.0 * boost::math::tgamma(-2.0 * s) * std::cos(std::numbers::pi * s);
    auto fhat2 = [a](double xi) {
        double t = 0.5 * a * xi;
        double sc = t == 0.0 ? 1.0 : std::sin(t) / t;
        return a * a * std::pow(sc, 8);
    };
    auto integrand = [&](double xi) {
        double w = 0.0;
        for (int j = 0; j <= k; ++j) w += std::pow(xi, 2 * j);
        w += cs * std::pow(xi, 2 * (k + s));
        return w * fhat2(xi);
    };
    using boost::math::quadrature::gauss_kronrod;
    double v = 0.0;
    const double step = 2.0 * std::numbers::pi / a;
    for (int i = 0; i < 4000; ++i) v += gauss_kronrod<double, 31>::integrate(integrand, i * step, (i + 1) * step, 5, 1e-13);
    return std::sqrt(2.0 * v / (2.0 * std::numbers::pi));
}

}  // namespace

TEST_CASE("norm specification") {
    NormSpec s;
    s.gamma = 1.0;
    CHECK_THROWS_AS(s.validate(), UsageError);
    s.gamma = 0.75;
    CHECK_NOTHROW(s.validate());
    auto g = log_uniform_grid(1.0 / 64.0, 1.0, 7);
    CHECK(g.front() == 1.0 / 64.0);
    CHECK(g.back() == 1.0);
    CHECK(g[1] / g[0] == doctest::Approx(2.0));
    s.scales = {0.5, 0.25};
    CHECK_THROWS_AS(s.validate(), UsageError);
}

TEST_CASE("zero and constant fields") {
    NormSpec s;
    s.ell = 1.0;
    s.eps_min = 1.0 / 16.0;
    s.n_scales = 25;
    PointwiseSampler zero(2, 2, [](double, const Vec&, double* o) { o[0] = o[1] = 0.0; });
    CHECK(multiscale_norm(zero, s).total == 0.0);

    // u_eps = 1 on B_2: value = |B_2| (1 - eps_min^{p gamma}) / (p gamma) up to quadrature
    PointwiseSampler one(2, 1, [](double, const Vec&, double* o) { o[0] = 1.0; });
    NormEstimate e = multiscale_norm(one, s);
    const double pg = s.p * s.gamma;
    const double expect = std::numbers::pi * 4.0 * (1.0 - std::pow(s.eps_min, pg)) / pg;
    CHECK(e.total == doctest::Approx(expect).epsilon(0.02));
    CHECK(e.radius == 2.0);
}

TEST_CASE("Dirac: per-scale slope and convergence flip") {
    for (double p : {2.0, 1.5}) {
        const int d = 2;
        NormSpec s;
        s.p = p;
        s.ell = 0.5;
        s.eps_min = 1.0 / 32.0;
        s.n_scales = 12;
        const double crit = d * (1.0 - 1.0 / p);
        s.gamma = crit - 0.15;
        NormEstimate below = multiscale_norm(dirac(d), s);
        CHECK(below.slope == doctest::Approx(-d * (p - 1.0)).epsilon(0.1 / (d * (p - 1.0))));
        CHECK_FALSE(below.converges);
        s.gamma = crit + 0.15;
        CHECK(multiscale_norm(dirac(d), s).converges);
    }
}

TEST_CASE("norm is nonincreasing in gamma") {
    NormSpec s;
    s.ell = 0.5;
    s.eps_min = 1.0 / 16.0;
    s.n_scales = 10;
    double prev = INFINITY;
    for (double g : {0.25, 0.5, 1.5, 2.5}) {
        s.gamma = g;
        double t = multiscale_norm(dirac(2), s).total;
        CHECK(t <= prev);
        prev = t;
    }
}

TEST_CASE("mollified form") {
    NormSpec s;
    s.ell = 0.5;
    s.n_scales = 6;
    PointwiseSampler f(2, 1, [](double eps, const Vec& x, double* o) { o[0] = std::cos(x[0]) * eps; });
    NormEstimate at1 = mollified_field_norm(f, s, 1.0);
    CHECK(at1.per_scale.size() == 1);
    CHECK(at1.total == at1.head);
    CHECK(at1.radius == 1.5);
    NormEstimate at_half = mollified_field_norm(f, s, 0.5);
    CHECK(at_half.per_scale.front().eps == 0.5);
    CHECK(at_half.total > at_half.head);
    CHECK_THROWS_AS(mollified_field_norm(f, s, 0.0), UsageError);
}

TEST_CASE("B-spline bump norm against the Fourier form (1D, q = 2)") {
    for (double gamma : {0.75, 1.25}) {
        double n = bspline_bump_norm(1, 0.5, gamma, 2.0), exact = bspline_norm_fourier(0.5, gamma);
        CHECK(n == doctest::Approx(exact).epsilon(0.02));
    }
    CHECK_THROWS_AS(bspline_bump_norm(2, 0.5, 3.5, 2.0), UsageError);
    CHECK(bspline_bump(2, 0.5, Vec{0, 0, 0}) == doctest::Approx(4.0 / 9.0));
    CHECK(bspline_bump(2, 0.5, Vec{1.0, 0, 0}) == 0.0);
}

TEST_CASE("dual norm oracle") {
    GridField u;
    u.d = 2;
    u.ell = 1.0;
    u.n = 17;
    u.components = 1;
    u.values.assign(u.size(), 0.0);
    NormSpec s;
    s.gamma = 0.5;
    s.ell = 1.0;
    CHECK(dual_norm_oracle(u, s) == 0.0);
    double lp = 0.0;
    const double h = u.spacing();
    for (std::size_t i = 0; i < u.size(); ++i) {
        Vec x = u.node(i);
        u.values[i] = std::cos(3 * x[0]) * std::exp(-x[1] * x[1]);
        lp += u.values[i] * u.values[i] * h * h;
    }
    double a = dual_norm_oracle(u, s);
    CHECK(a > 0.0);
    // the test functions have unit norm, which dominates their L^2 norm
    CHECK(a <= std::sqrt(lp) * 1.05);
    for (auto& v : u.values) v *= 2.0;
    CHECK(dual_norm_oracle(u, s) == doctest::Approx(2.0 * a).epsilon(1e-12));
    u.n = 40;
    CHECK_THROWS_AS(dual_norm_oracle(u, s), UsageError);
}
