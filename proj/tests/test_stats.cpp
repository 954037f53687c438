#include "doctest.h"

#include "matchfluct/stats.hpp"

#include <random>

using namespace matchfluct;

TEST_CASE("mean and standard error") {
    MeanSE m = mean_se({1.0, 2.0, 3.0, 4.0});
    CHECK(m.mean == 2.5);
    CHECK(m.var == doctest::Approx(5.0 / 3.0));
    CHECK(m.se == doctest::Approx(std::sqrt(5.0 / 12.0)));
    CHECK(m.count == 4);
}

TEST_CASE("least squares") {
    std::vector<double> x{0, 1, 2, 3, 4}, y;
    for (double v : x) y.push_back(3.0 - 2.0 * v);
    Fit f = ols(x, y);
    CHECK(f.slope == doctest::Approx(-2.0));
    CHECK(f.intercept == doctest::Approx(3.0));
    CHECK(f.r2 == doctest::Approx(1.0));
    CHECK(f.slope_se == doctest::Approx(0.0).scale(1.0));

    std::mt19937_64 g(1);
    std::normal_distribution<double> n(0.0, 0.1);
    std::vector<double> xs, ys;
    for (int i = 0; i < 200; ++i) {
        xs.push_back(i / 20.0);
        ys.push_back(1.0 + 0.5 * xs.back() + n(g));
    }
    Fit h = ols(xs, ys);
    CHECK(h.ci_lo < 0.5);
    CHECK(h.ci_hi > 0.5);
    CHECK(h.residuals.size() == 200);
}

TEST_CASE("distribution helpers") {
    CHECK(binomial_pmf(4, 1, 0.25) == doctest::Approx(27.0 / 64.0).epsilon(1e-14));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));

    // observed = expected gives statistic 0 and p-value 1
    std::vector<double> prob{0.25, 0.5, 0.25}, obs{25, 50, 25};
    ChiSquare c = chi_square_gof(obs, prob);
    CHECK(c.statistic == doctest::Approx(0.0).scale(1.0));
    CHECK(c.p_value == doctest::Approx(1.0));
    CHECK(c.dof == 2);
    // hand computation: (30-25)^2/25 + (40-50)^2/50 + (30-25)^2/25 = 4
    ChiSquare d = chi_square_gof({30, 40, 30}, prob);
    CHECK(d.statistic == doctest::Approx(4.0));
    CHECK(d.p_value == doctest::Approx(std::exp(-2.0)).epsilon(1e-10));
}

TEST_CASE("variance and third cumulant") {
    std::mt19937_64 g(7);
    std::normal_distribution<double> n(0.0, 2.0);
    std::vector<double> x(20000);
    for (auto& v : x) v = n(g);
    MeanSE v = variance_se(x);
    CHECK(std::abs(v.mean - 4.0) < 4.0 * v.se);
    MeanSE k3 = third_cumulant(x);
    CHECK(std::abs(k3.mean) < 4.0 * k3.se);
}
