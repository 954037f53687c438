#pragma once

#include <cstddef>
#include <vector>

namespace matchfluct {

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
    double var = 0.0;  // unbiased sample variance
    std::size_t count = 0;
};

MeanSE mean_se(const std::vector<double>& x);

// Sample variance with a delta-method standard error (uses the fourth central moment).
MeanSE variance_se(const std::vector<double>& x);

// Third cumulant (k3 estimator); the standard error assumes Gaussian data.
MeanSE third_cumulant(const std::vector<double>& x);

struct Fit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
    double r2 = 0.0;
    double ci_lo = 0.0;  // 95% confidence interval for the slope
    double ci_hi = 0.0;
    std::size_t n = 0;
    std::vector<double> residuals;
};

// Ordinary least squares y = intercept + slope x; weights optional (empty = unweighted).
Fit ols(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w = {});

struct ChiSquare {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    int bins = 0;
};

// Goodness of fit of observed counts against probabilities; adjacent bins pooled until expected >= min_expected.
ChiSquare chi_square_gof(const std::vector<double>& observed, const std::vector<double>& prob, double min_expected = 5.0);

double normal_quantile(double u);
double binomial_pmf(std::size_t N, std::size_t n, double p);

}  // namespace matchfluct
