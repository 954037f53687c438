#include "doctest.h"

#include "matchfluct/displacement.hpp"

using namespace matchfluct;

namespace {

// Plan that keeps every atom in place: the atoms sit at the cell centers.
TransportPlan identity_plan(const TorusDomain& dom, double h) {
    AtomicMeasure leb = discretize_lebesgue(dom, h);
    TransportPlan p;
    p.source = leb;
    p.target = leb;
    for (std::size_t i = 0; i < leb.size(); ++i) p.triples.push_back(Triple{i, i, leb.masses[i], 0.0, {0, 0, 0}});
    return p;
}

}  // namespace

TEST_CASE("identity plan has zero displacement and zero residual against u = 0") {
    TorusDomain dom(2, 4.0);
    TransportPlan p = identity_plan(dom, 0.5);
    DisplacementObservable Z(p, 2.0);
    GradientSource zero = GradientSource::zero(dom);
    const auto& m = Mollifier::get(2);
    for (auto var : {ResidualVariant::A, ResidualVariant::B})
        CHECK(linearization_residual(Z, zero, m, 1.0, Vec{0.3, 0.1, 0}, var) == 0.0);
    CHECK(Z.apply([](const Vec& x) { return Vec{1.0 + x[0], x[1], 0}; }) == 0.0);
    CHECK(sup_displacement(Z, zero, m, 1.0) == 0.0);
}

TEST_CASE("Z(f) and its mollification against direct sums") {
    TorusDomain dom(2, 4.0);
    PointCloud c = sample_binomial(dom, 1.0, 13);
    TransportPlan plan = optimal_matching(c, 0.5, SolverMode::Exact);
    const double R = 1.0;
    DisplacementObservable Z(plan, R);
    const auto& m = Mollifier::get(2);

    auto f = [](const Vec& x) { return Vec{std::sin(x[0]), std::cos(x[1]), 0}; };
    double direct = 0.0;
    for (const auto& t : plan.triples) {
        Vec v = plan.displacement(t), fx = f(plan.source.points[t.i]);
        direct += t.mass * (fx[0] * v[0] + fx[1] * v[1]);
    }
    CHECK(Z.apply(f) == doctest::Approx(direct).epsilon(1e-12));

    // linearity
    auto g = [](const Vec& x) { return Vec{x[1], 1.0, 0}; };
    double lin = Z.apply([&](const Vec& x) {
        Vec a = f(x), b = g(x);
        return Vec{2 * a[0] - b[0], 2 * a[1] - b[1], 0};
    });
    CHECK(lin == doctest::Approx(2 * Z.apply(f) - Z.apply(g)).epsilon(1e-12));

    Vec x{0.7, -1.9, 0};
    const double r = 1.3;
    Vec brute{0, 0, 0};
    double rho = 0.0;
    for (const auto& t : plan.triples) {
        const Vec& X = plan.source.points[t.i];
        double e = m.eval(min_image(X, x, dom), r);
        Vec v = plan.displacement(t);
        brute[0] += t.mass * e * v[0];
        brute[1] += t.mass * e * v[1];
    }
    for (const auto& X : c.points) rho += c.atom_mass() * m.eval(min_image(X, x, dom), r);
    Vec zm = z_mollified(Z, m, r, x);
    CHECK(zm[0] == doctest::Approx(brute[0]).epsilon(1e-12));
    CHECK(zm[1] == doctest::Approx(brute[1]).epsilon(1e-12));
    CHECK(Z.density(m, r, x) == doctest::Approx(rho).epsilon(1e-12));

    // residual definitions
    AtomicPoisson ap(c);
    GradientSource u = GradientSource::atomic(ap);
    Vec gu = ap.grad_fast(r, x);
    double ra = std::hypot(zm[0] - rho * gu[0], zm[1] - rho * gu[1]);
    double rb = std::hypot(zm[0] - gu[0], zm[1] - gu[1]);
    CHECK(linearization_residual(Z, u, m, r, x, ResidualVariant::A) == doctest::Approx(ra).epsilon(1e-10));
    CHECK(linearization_residual(Z, u, m, r, x, ResidualVariant::B) == doctest::Approx(rb).epsilon(1e-10));

    // renormalized d = 2 field
    Vec g1 = ap.grad_fast(1.0, Vec{0, 0, 0});
    Vec rz = renormalized_z_mollified(Z, u, m, r, x);
    CHECK(rz[0] == doctest::Approx(zm[0] - rho * g1[0]).epsilon(1e-10));

    // a gradient source on another torus is refused
    GradientSource other = GradientSource::zero(TorusDomain(2, 8.0));
    CHECK_THROWS_AS(linearization_residual(Z, other, m, r, x), UsageError);
}

TEST_CASE("R scaling of Z") {
    // The same geometric plan read at intensity R carries the factor R^{d/2} and atom masses R^{-d}.
    TorusDomain dom(3, 2.0);
    PointCloud c = sample_binomial(dom, 2.0, 3);
    TransportPlan plan = optimal_matching(c, 0.25, SolverMode::Exact);
    DisplacementObservable Z(plan, 2.0);
    double direct = 0.0;
    for (const auto& t : plan.triples) direct += t.mass * plan.displacement(t)[0];
    CHECK(Z.apply([](const Vec&) { return Vec{1, 0, 0}; }) == doctest::Approx(std::pow(2.0, 1.5) * direct).epsilon(1e-12));
}
