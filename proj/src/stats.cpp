#include "matchfluct/stats.hpp"

#include "matchfluct/torus.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>

namespace matchfluct {

MeanSE mean_se(const std::vector<double>& x) {
    MeanSE r;
    r.count = x.size();
    if (x.empty()) return r;
    double s = 0.0;
    for (double v : x) s += v;
    r.mean = s / x.size();
    if (x.size() > 1) {
        double q = 0.0;
        for (double v : x) q += (v - r.mean) * (v - r.mean);
        r.var = q / (x.size() - 1);
        r.se = std::sqrt(r.var / x.size());
    }
    return r;
}

MeanSE variance_se(const std::vector<double>& x) {
    MeanSE m = mean_se(x);
    MeanSE r;
    r.count = x.size();
    if (x.size() < 2) return r;
    const double n = static_cast<double>(x.size());
    double m4 = 0.0;
    for (double v : x) m4 += std::pow(v - m.mean, 4);
    m4 /= n;
    r.mean = m.var;
    r.var = std::max(0.0, m4 - m.var * m.var * (n - 3.0) / (n - 1.0));
    r.se = std::sqrt(r.var / n);
    return r;
}

MeanSE third_cumulant(const std::vector<double>& x) {
    MeanSE m = mean_se(x);
    MeanSE r;
    r.count = x.size();
    const double n = static_cast<double>(x.size());
    if (n < 3) return r;
    double m3 = 0.0;
    for (double v : x) m3 += std::pow(v - m.mean, 3);
    m3 /= n;
    r.mean = n * n / ((n - 1) * (n - 2)) * m3;
    // Var(k3) ~ 6 sigma^6 / n for Gaussian samples
    double s2 = m.var;
    r.se = std::sqrt(6.0 * s2 * s2 * s2 / n);
    r.var = r.se * r.se * n;
    return r;
}

Fit ols(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w) {
    if (x.size() != y.size() || x.size() < 2) throw Error("ols needs at least two matching points");
    if (!w.empty() && w.size() != x.size()) throw Error("ols weight vector has the wrong length");
    const std::size_t n = x.size();
    auto wt = [&](std::size_t i) { return w.empty() ? 1.0 : w[i]; };
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += wt(i);
        sx += wt(i) * x[i];
        sy += wt(i) * y[i];
    }
    double mx = sx / sw, my = sy / sw, sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += wt(i) * (x[i] - mx) * (x[i] - mx);
        sxy += wt(i) * (x[i] - mx) * (y[i] - my);
        syy += wt(i) * (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw Error("ols needs at least two distinct abscissae");
    Fit f;
    f.n = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - (f.intercept + f.slope * x[i]);
        f.residuals.push_back(r);
        sse += wt(i) * r * r;
    }
    f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    if (n > 2) {
        double s2 = sse / (n - 2);
        f.slope_se = std::sqrt(s2 / sxx);
        f.intercept_se = std::sqrt(s2 * (1.0 / sw + mx * mx / sxx));
        boost::math::students_t t(static_cast<double>(n - 2));
        double q = boost::math::quantile(boost::math::complement(t, 0.025));
        f.ci_lo = f.slope - q * f.slope_se;
        f.ci_hi = f.slope + q * f.slope_se;
    } else {
        f.ci_lo = f.ci_hi = f.slope;
    }
    return f;
}

ChiSquare chi_square_gof(const std::vector<double>& observed, const std::vector<double>& prob, double min_expected) {
    if (observed.size() != prob.size()) throw Error("chi-square: observed and expected differ in length");
    double total = 0.0;
    for (double o : observed) total += o;
    std::vector<double> o2, e2;
    double ao = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        ao += observed[i];
        ae += prob[i] * total;
        if (ae >= min_expected) {
            o2.push_back(ao);
            e2.push_back(ae);
            ao = ae = 0.0;
        }
    }
    if (!o2.empty()) {
        o2.back() += ao;
        e2.back() += ae;
    }
    ChiSquare r;
    r.bins = static_cast<int>(o2.size());
    for (std::size_t i = 0; i < o2.size(); ++i) r.statistic += (o2[i] - e2[i]) * (o2[i] - e2[i]) / e2[i];
    r.dof = r.bins - 1;
    if (r.dof >= 1) {
        boost::math::chi_squared dist(r.dof);
        r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
    }
    return r;
}

double normal_quantile(double u) { return boost::math::quantile(boost::math::normal(), u); }

double binomial_pmf(std::size_t N, std::size_t n, double p) {
    return boost::math::pdf(boost::math::binomial(static_cast<double>(N), p), static_cast<double>(n));
}

}  // namespace matchfluct
