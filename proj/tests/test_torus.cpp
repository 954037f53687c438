#include "doctest.h"

#include "matchfluct/torus.hpp"

#include <set>

using namespace matchfluct;

TEST_CASE("wrap uses the half-open cube") {
    CHECK(wrap_coord(2.5, 4.0) == doctest::Approx(-1.5));
    CHECK(wrap_coord(-2.0, 4.0) == -2.0);
    CHECK(wrap_coord(0.5, 1.0) == -0.5);
    CHECK(wrap_coord(2.0, 4.0) == -2.0);
    Rng rng(3);
    TorusDomain dom(3, 5.0);
    for (int i = 0; i < 1000; ++i) {
        Vec x{20 * rng.uniform() - 10, 20 * rng.uniform() - 10, 20 * rng.uniform() - 10};
        Vec w = wrap(x, dom);
        CHECK(wrap(w, dom) == w);
        for (int a = 0; a < 3; ++a) {
            CHECK(w[a] >= -2.5);
            CHECK(w[a] < 2.5);
        }
    }
}

TEST_CASE("periodic distance") {
    TorusDomain d1(1, 4.0);
    CHECK(periodic_sqdist(Vec{0, 0, 0}, Vec{3, 0, 0}, d1) == doctest::Approx(1.0));
    CHECK(periodic_sqdist(Vec{1.3, 0, 0}, Vec{1.3, 0, 0}, d1) == 0.0);
    TorusDomain d2(2, 2.0);
    CHECK(periodic_sqdist(Vec{0.9, 0.9, 0}, Vec{-0.9, -0.9, 0}, d2) == doctest::Approx(0.08).epsilon(1e-12));

    // metric axioms on random triples
    Rng rng(11);
    TorusDomain d3(3, 3.0);
    auto pt = [&] { return Vec{3 * rng.uniform() - 1.5, 3 * rng.uniform() - 1.5, 3 * rng.uniform() - 1.5}; };
    for (int i = 0; i < 500; ++i) {
        Vec x = pt(), y = pt(), z = pt();
        double xy = std::sqrt(periodic_sqdist(x, y, d3)), yz = std::sqrt(periodic_sqdist(y, z, d3)),
               xz = std::sqrt(periodic_sqdist(x, z, d3));
        CHECK(xy == doctest::Approx(std::sqrt(periodic_sqdist(y, x, d3))).epsilon(1e-14));
        CHECK(xz <= xy + yz + 1e-12);
    }
}

TEST_CASE("binomial sampling") {
    PointCloud c = sample_binomial(TorusDomain(2, 2.0), 2.0, 7);
    CHECK(c.size() == 16);
    for (const auto& x : c.points)
        for (int a = 0; a < 2; ++a) {
            CHECK(x[a] >= -1.0);
            CHECK(x[a] < 1.0);
        }
    CHECK(sample_binomial(TorusDomain(1, 8.0), 1.0, 0).size() == 8);

    PointCloud a = sample_binomial(TorusDomain(3, 4.0), 1.0, 42), b = sample_binomial(TorusDomain(3, 4.0), 1.0, 42);
    CHECK(a.points == b.points);
    CHECK(sample_binomial(TorusDomain(3, 4.0), 1.0, 43).points != a.points);

    CHECK_THROWS_AS(sample_binomial(TorusDomain(2, 3.0), 0.5, 1), UsageError);

    // total mass L^d
    CHECK(c.size() * c.atom_mass() == doctest::Approx(4.0));
}

TEST_CASE("binomial sampling fills octants uniformly") {
    for (int d = 1; d <= 3; ++d) {
        TorusDomain dom(d, d == 1 ? 16384.0 : d == 2 ? 128.0 : 24.0);
        PointCloud c = sample_binomial(dom, 1.0, 99);
        const std::size_t n = c.size(), cells = std::size_t{1} << d;
        std::vector<double> cnt(cells, 0.0);
        for (const auto& x : c.points) {
            std::size_t k = 0;
            for (int a = 0; a < d; ++a) k = 2 * k + (x[a] >= 0.0);
            cnt[k] += 1.0;
        }
        const double p = 1.0 / cells, se = std::sqrt(n * p * (1 - p));
        for (double v : cnt) CHECK(std::abs(v - n * p) <= 3.0 * se);
    }
}

TEST_CASE("restrict_cube") {
    TorusDomain dom(2, 8.0);
    PointCloud one = make_cloud(dom, 1.0 / 8.0, {Vec{0, 0, 0}});
    CHECK(restrict_cube(one, 1.0, Vec{0, 0, 0}).count() == 1);

    PointCloud c = sample_binomial(dom, 1.0, 5);
    CHECK(restrict_cube(c, 8.0, Vec{0, 0, 0}).count() == c.size());

    PointCloud edge = make_cloud(dom, 1.0, {Vec{3.9, 0.0, 0}});
    auto f = restrict_cube(edge, 1.0, Vec{-4.0, 0.0, 0});
    REQUIRE(f.count() == 1);
    CHECK(f.points[0][0] == doctest::Approx(-4.1));

    // brute force over shifted copies
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        Vec ctr{8 * rng.uniform() - 4, 8 * rng.uniform() - 4, 0};
        double r = 0.5 + 3 * rng.uniform();
        std::set<std::size_t> expect;
        for (std::size_t i = 0; i < c.size(); ++i)
            for (int sx = -1; sx <= 1; ++sx)
                for (int sy = -1; sy <= 1; ++sy) {
                    double x = c.points[i][0] + 8 * sx - ctr[0], y = c.points[i][1] + 8 * sy - ctr[1];
                    if (x >= -r / 2 && x < r / 2 && y >= -r / 2 && y < r / 2) expect.insert(i);
                }
        auto got = restrict_cube(c, r, ctr);
        CHECK(std::set<std::size_t>(got.index.begin(), got.index.end()) == expect);
    }
}

TEST_CASE("neighbour grid matches brute force") {
    for (int d = 1; d <= 3; ++d) {
        TorusDomain dom(d, 6.0);
        PointCloud c = sample_binomial(dom, 2.0, 17 + d);
        NeighborGrid g(c.points, dom, 0.7);
        Rng rng(d);
        for (int t = 0; t < 30; ++t) {
            Vec x{6 * rng.uniform() - 3, d > 1 ? 6 * rng.uniform() - 3 : 0, d > 2 ? 6 * rng.uniform() - 3 : 0};
            double rad = 0.2 + 2 * rng.uniform();
            std::set<std::size_t> got, expect;
            g.near(x, rad, [&](std::size_t i, const Vec&, double) { got.insert(i); });
            for (std::size_t i = 0; i < c.size(); ++i)
                if (periodic_sqdist(c.points[i], x, dom) <= rad * rad) expect.insert(i);
            CHECK(got == expect);
        }
    }
}

TEST_CASE("seed mixing is a pure function of its keys") {
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    Rng a(5, 9), b(mix_seed(5, 9));
    CHECK(a.next() == b.next());
}
