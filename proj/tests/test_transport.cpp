#include "doctest.h"
#include "oracles.hpp"

#include "matchfluct/transport.hpp"

#include <sstream>

using namespace matchfluct;

namespace {

AtomicMeasure uniform_atoms(const TorusDomain& dom, std::vector<Vec> pts) {
    AtomicMeasure m;
    m.domain = dom;
    m.masses.assign(pts.size(), 1.0 / static_cast<double>(pts.size()));
    m.points = std::move(pts);
    return m;
}

std::vector<Vec> random_points(Rng& rng, const TorusDomain& dom, std::size_t n) {
    std::vector<Vec> p(n);
    for (auto& x : p)
        for (int a = 0; a < dom.d; ++a) x[a] = dom.L * (rng.uniform() - 0.5);
    return p;
}

double brute(const AtomicMeasure& s, const AtomicMeasure& t) {
    std::vector<std::vector<double>> c(s.size(), std::vector<double>(t.size()));
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j) c[i][j] = pair_cost(s.points[i], t.points[j], s.domain, s.periodic);
    return oracle::assignment_by_permutations(c);
}

void check_marginals(const TransportPlan& p, double tol) {
    auto rs = p.row_sums(), cs = p.column_sums();
    for (std::size_t i = 0; i < rs.size(); ++i) CHECK(rs[i] == doctest::Approx(p.source.masses[i]).epsilon(tol));
    for (std::size_t j = 0; j < cs.size(); ++j) CHECK(cs[j] == doctest::Approx(p.target.masses[j]).epsilon(tol));
}

}  // namespace

TEST_CASE("Lebesgue discretization") {
    AtomicMeasure m = discretize_lebesgue(TorusDomain(2, 2.0), 1.0);
    REQUIRE(m.size() == 4);
    for (double w : m.masses) CHECK(w == 1.0);
    CHECK(m.points[0][0] == -0.5);
    CHECK(m.points[0][1] == -0.5);
    CHECK(discretize_lebesgue(TorusDomain(3, 4.0), 0.5).total() == doctest::Approx(64.0));
    AtomicMeasure one = discretize_lebesgue(TorusDomain(2, 3.0), 3.0);
    REQUIRE(one.size() == 1);
    CHECK(one.masses[0] == 9.0);
    CHECK(one.points[0] == Vec{0, 0, 0});
}

TEST_CASE("exact coupling: small cases") {
    TorusDomain d1(1, 1.0);
    AtomicMeasure s = uniform_atoms(d1, {Vec{-0.4, 0, 0}, Vec{0.1, 0, 0}});
    AtomicMeasure t = uniform_atoms(d1, {Vec{-0.3, 0, 0}, Vec{0.2, 0, 0}});
    TransportPlan p = solve_coupling(s, t, SolverMode::Exact);
    CHECK(p.cost == doctest::Approx(0.01).epsilon(1e-12));
    AtomicMeasure a = uniform_atoms(d1, {Vec{0.45, 0, 0}}), b = uniform_atoms(d1, {Vec{-0.45, 0, 0}});
    TransportPlan w = solve_coupling(a, b, SolverMode::Exact);
    CHECK(w.cost == doctest::Approx(0.01).epsilon(1e-12));
    REQUIRE(w.triples.size() == 1);
    Vec v = w.displacement(w.triples[0]);
    CHECK(v[0] == doctest::Approx(0.1));

    AtomicMeasure bad = a;
    bad.masses[0] = 2.0;
    CHECK_THROWS_AS(solve_coupling(bad, b, SolverMode::Exact), UsageError);
}

TEST_CASE("exact coupling equals the permutation minimum") {
    Rng rng(2024);
    TorusDomain dom(2, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t n = 1 + trial % 7;
        AtomicMeasure s = uniform_atoms(dom, random_points(rng, dom, n)), t = uniform_atoms(dom, random_points(rng, dom, n));
        TransportPlan p = solve_coupling(s, t, SolverMode::Exact);
        CHECK(std::abs(p.cost - brute(s, t)) < 1e-12);
        check_marginals(p, 1e-12);
    }
}

TEST_CASE("exact coupling with unequal masses against a linear program by hand") {
    // two sources, three targets on a line: optimal plan is monotone
    TorusDomain dom(1, 10.0);
    AtomicMeasure s, t;
    s.domain = t.domain = dom;
    s.periodic = t.periodic = false;
    s.points = {Vec{0, 0, 0}, Vec{1, 0, 0}};
    s.masses = {0.5, 0.5};
    t.points = {Vec{0, 0, 0}, Vec{0.5, 0, 0}, Vec{1, 0, 0}};
    t.masses = {0.25, 0.5, 0.25};
    TransportPlan p = solve_coupling(s, t, SolverMode::Exact);
    CHECK(p.cost == doctest::Approx(0.25 * 0.25 + 0.25 * 0.25).epsilon(1e-12));
    check_marginals(p, 1e-12);
}

TEST_CASE("auction and entropic costs lie within their gaps of the exact cost") {
    Rng rng(31);
    TorusDomain dom(2, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        AtomicMeasure s = uniform_atoms(dom, random_points(rng, dom, 6)), t = uniform_atoms(dom, random_points(rng, dom, 6));
        double ex = solve_coupling(s, t, SolverMode::Exact).cost;
        TransportPlan au = solve_coupling(s, t, SolverMode::Auction);
        CHECK(au.cost >= ex - 1e-12);
        CHECK(au.cost <= ex + au.gap + 1e-12);
        check_marginals(au, 1e-12);
        TransportPlan en = solve_coupling(s, t, SolverMode::Entropic);
        CHECK(en.cost >= ex - 1e-10);
        CHECK(en.cost <= ex + en.gap + 1e-10);
        check_marginals(en, 1e-9);
    }
}

TEST_CASE("optimal matching") {
    // the grid itself
    TorusDomain dom(2, 2.0);
    std::vector<Vec> centers;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) centers.push_back(Vec{-0.75 + 0.5 * i, -0.75 + 0.5 * j, 0});
    PointCloud grid = make_cloud(dom, 2.0, centers);
    for (auto mode : {SolverMode::Exact, SolverMode::Auction}) {
        TransportPlan p = optimal_matching(grid, 0.5, mode);
        CHECK(p.cost == doctest::Approx(0.0).scale(1.0));
    }

    PointCloud one = make_cloud(TorusDomain(2, 1.0), 1.0, {Vec{0.2, -0.3, 0}});
    TransportPlan p1 = optimal_matching(one, 1.0, SolverMode::Exact);
    REQUIRE(p1.triples.size() == 1);
    CHECK(p1.cost == doctest::Approx(0.04 + 0.09));

    CHECK(cells_per_atom(TorusDomain(2, 4.0), 1.0, 0.5) == 4);
    CHECK_THROWS_AS(cells_per_atom(TorusDomain(2, 4.0), 1.0, 0.3), UsageError);

    for (int seed = 0; seed < 4; ++seed) {
        PointCloud c = sample_binomial(TorusDomain(2, 4.0), 1.0, seed);
        TransportPlan ex = optimal_matching(c, 0.5, SolverMode::Exact);
        TransportPlan au = optimal_matching(c, 0.5, SolverMode::Auction);
        CHECK(au.cost >= ex.cost - 1e-9);
        CHECK(au.cost <= ex.cost + au.gap + 1e-9);
        check_marginals(au, 1e-12);
        check_marginals(ex, 1e-12);
    }
    PointCloud c3 = sample_binomial(TorusDomain(3, 3.0), 1.0, 9);
    TransportPlan e3 = optimal_matching(c3, 0.5, SolverMode::Exact), a3 = optimal_matching(c3, 0.5, SolverMode::Auction);
    CHECK(a3.cost <= e3.cost + a3.gap + 1e-9);
    CHECK(a3.cost >= e3.cost - 1e-9);
}

TEST_CASE("exact mode size bound") {
    PointCloud c = sample_binomial(TorusDomain(2, 16.0), 1.0, 1);
    CHECK_THROWS_AS(optimal_matching(c, 0.25, SolverMode::Exact), UsageError);
}

TEST_CASE("local Wasserstein distance") {
    TorusDomain dom(2, 8.0);
    PointCloud empty = make_cloud(dom, 1.0, {Vec{3.5, 3.5, 0}});
    CHECK(local_wasserstein_sq(empty, 2.0, Vec{0, 0, 0}, 0.5) == 0.0);

    // one unit-mass atom at the center of Q_1: value -> int_{Q_1} |y|^2 = d / 12
    PointCloud one = make_cloud(dom, 1.0, {Vec{0, 0, 0}});
    double v = local_wasserstein_sq(one, 1.0, Vec{0, 0, 0}, 1.0 / 32.0);
    double quad = 0.0;
    const int n = 32;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double x = -0.5 + (i + 0.5) / n, y = -0.5 + (j + 0.5) / n;
            quad += (x * x + y * y) / (n * n);
        }
    CHECK(v == doctest::Approx(quad).epsilon(1e-12));
    CHECK(quad == doctest::Approx(2.0 / 12.0).epsilon(1e-3));

    std::vector<Vec> centers;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) centers.push_back(Vec{-3.5 + i, -3.5 + j, 0});
    PointCloud lattice = make_cloud(dom, 1.0, centers);
    CHECK(local_wasserstein_sq(lattice, 4.0, Vec{0, 0, 0}, 1.0) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("sorted matching in 1D") {
    SortedMatching1D m = sorted_matching_1d(std::vector<double>{0.9, 0.1, 0.5});
    CHECK(m.sorted == std::vector<double>{0.1, 0.5, 0.9});
    CHECK(m.order == std::vector<std::size_t>{1, 2, 0});
    CHECK(m.path.size() == 3);
    CHECK(m.path[0] == doctest::Approx(std::sqrt(3.0) * (0.1 - 1.0 / 3.0)));
    // cost: sum int_{(i-1)/n}^{i/n} (x - X_(i))^2 dx by midpoint quadrature
    double q = 0.0;
    const int k = 300000;
    for (int s = 0; s < k; ++s) {
        double x = (s + 0.5) / k;
        double X = m.sorted[std::min<std::size_t>(2, static_cast<std::size_t>(x * 3))];
        q += (x - X) * (x - X) / k;
    }
    CHECK(m.cost == doctest::Approx(q).epsilon(1e-8));
    SortedMatching1D a = sorted_matching_1d(64, 5), b = sorted_matching_1d(64, 5);
    CHECK(a.sorted == b.sorted);
}

TEST_CASE("rate function and r_*") {
    CHECK(beta_rate(3, 10.0) == 1.0);
    CHECK(beta_rate(2, std::exp(1.0) - 1.0) == doctest::Approx(1.0));
    CHECK(rstar_from_theta(2, 4.0 * std::log(2.0) / std::log(3.0)) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(rstar_from_theta(3, 9.0) == doctest::Approx(3.0));
    CHECK(rstar_from_theta(3, 0.2) == 1.0);
    CHECK(rstar_from_theta(2, 0.0) == 1.0);

    PointCloud c = sample_binomial(TorusDomain(2, 8.0), 1.0, 3);
    ThetaResult th = theta_and_rstar(c, 0.5);
    CHECK(th.scales.size() == 3);  // r = 2, 4, 8
    double mx = 0.0;
    for (const auto& s : th.scales) mx = std::max(mx, s.theta);
    CHECK(th.theta == doctest::Approx(mx));
    CHECK(th.rstar >= 1.0);
}

TEST_CASE("plan CSV") {
    PointCloud one = make_cloud(TorusDomain(2, 1.0), 1.0, {Vec{0.2, -0.3, 0}});
    std::ostringstream os;
    write_plan_csv(optimal_matching(one, 0.5, SolverMode::Exact), os);
    std::string s = os.str();
    CHECK(s.rfind("i,j,mass,sqdist,shift1,shift2\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 5);
}
