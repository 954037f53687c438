#pragma once

#include "matchfluct/field.hpp"
#include "matchfluct/harness.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace matchfluct::detail {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Stopwatch {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

inline ExperimentSummary start_summary(const ExperimentSpec& spec) {
    spec.validate();
    ExperimentSummary s;
    s.spec = spec;
    return s;
}

inline void add_row(ExperimentSummary& s, const std::string& q, double L, double R, double scale, double p, double value,
                    double se, std::size_t count) {
    s.rows.push_back(Row{L, R, scale, p, q, value, se, count});
}

inline void add_mean_row(ExperimentSummary& s, const std::string& q, double L, double R, double scale, double p,
                         const std::vector<double>& x) {
    MeanSE m = mean_se(x);
    add_row(s, q, L, R, scale, p, m.mean, m.se, m.count);
}

// (E|x|^p)^{1/p} with a delta-method standard error.
inline void add_pmoment_row(ExperimentSummary& s, const std::string& q, double L, double R, double scale, double p,
                            const std::vector<double>& absval) {
    std::vector<double> pw(absval.size());
    for (std::size_t i = 0; i < absval.size(); ++i) pw[i] = std::pow(absval[i], p);
    MeanSE m = mean_se(pw);
    double v = std::pow(m.mean, 1.0 / p);
    double se = m.mean > 0.0 ? v / (p * m.mean) * m.se : 0.0;
    add_row(s, q, L, R, scale, p, v, se, m.count);
}

inline FitRecord fit_record(const std::string& name, const std::string& x, const std::string& y, double L, double R,
                            const std::vector<double>& xs, const std::vector<double>& ys) {
    FitRecord f;
    f.name = name;
    f.x = x;
    f.y = y;
    f.L = L;
    f.R = R;
    f.fit = ols(xs, ys);
    return f;
}

inline std::vector<double> column(const std::vector<std::vector<double>>& m, std::size_t j) {
    std::vector<double> c(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) c[i] = m[i][j];
    return c;
}

inline TestFunction parse_test_function(const std::string& spec, int d) {
    std::string name = spec;
    double rho = 2.0;
    if (auto c = spec.find(':'); c != std::string::npos) {
        name = spec.substr(0, c);
        try {
            rho = std::stod(spec.substr(c + 1));
        } catch (const std::exception&) {
            throw UsageError("bad radius in test function '" + spec + "'");
        }
    }
    if (name == "grad_bump") return TestFunction::gradient_bump(d, 1.0, rho);
    if (name == "dir_bump") return TestFunction::directional_bump(d, 1.0, rho, Vec{1.0, 0.0, 0.0});
    throw UsageError("unknown test function '" + name + "' (grad_bump[:radius] | dir_bump[:radius])");
}

}  // namespace matchfluct::detail
