#include "matchfluct/mollifier.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>

namespace matchfluct {

namespace {

using GL10 = boost::math::quadrature::gauss<double, 10>;
using GL20 = boost::math::quadrature::gauss<double, 20>;
using GL32 = boost::math::quadrature::gauss<double, 32>;

// Composite Gauss-Legendre on [a,b] with `panels` panels of rule Q.
template <class Q, class F>
double composite(F&& f, double a, double b, int panels) {
    const auto& x = Q::abscissa();
    const auto& w = Q::weights();
    double h = (b - a) / panels, s = 0.0;
    for (int p = 0; p < panels; ++p) {
        double mid = a + (p + 0.5) * h, half = 0.5 * h;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] == 0.0) {
                s += w[i] * half * f(mid);
            } else {
                s += w[i] * half * (f(mid - half * x[i]) + f(mid + half * x[i]));
            }
        }
    }
    return s;
}

// Nodes and weights of a composite rule, materialized.
template <class Q>
void composite_nodes(double a, double b, int panels, std::vector<double>& nodes, std::vector<double>& weights) {
    const auto& x = Q::abscissa();
    const auto& w = Q::weights();
    double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        double mid = a + (p + 0.5) * h, half = 0.5 * h;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] == 0.0) {
                nodes.push_back(mid);
                weights.push_back(w[i] * half);
            } else {
                nodes.push_back(mid - half * x[i]);
                weights.push_back(w[i] * half);
                nodes.push_back(mid + half * x[i]);
                weights.push_back(w[i] * half);
            }
        }
    }
}

double hermite(double y0, double y1, double g0, double g1, double h, double u) {
    double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * y0 + (u3 - 2 * u2 + u) * h * g0 + (-2 * u3 + 3 * u2) * y1 + (u3 - u2) * h * g1;
}

constexpr int kMassPanels = 2048;
constexpr double kXiMax = 1200.0;
constexpr double kDxi = 0.025;

}  // namespace

double Mollifier::sphere_area(int d) {
    switch (d) {
        case 1: return 2.0;
        case 2: return 2.0 * std::numbers::pi;
        case 3: return 4.0 * std::numbers::pi;
    }
    throw UsageError("dimension must be 1, 2 or 3");
}

double Mollifier::profile(double t) {
    if (t >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - t * t));
}

Mollifier::Mollifier(int d) : d_(d) {
    if (d < 1 || d > 3) throw UsageError("mollifier dimension must be 1, 2 or 3");
    build_mass_table();
    build_fourier_table();
}

const Mollifier& Mollifier::get(int d) {
    static std::once_flag flags[3];
    static std::unique_ptr<Mollifier> inst[3];
    if (d < 1 || d > 3) throw UsageError("mollifier dimension must be 1, 2 or 3");
    std::call_once(flags[d - 1], [d] { inst[d - 1] = std::make_unique<Mollifier>(d); });
    return *inst[d - 1];
}

void Mollifier::build_mass_table() {
    const double om = sphere_area(d_);
    dt_ = 1.0 / kMassPanels;
    mass_v_.assign(kMassPanels + 1, 0.0);
    auto f = [this](double t) { return profile(t) * std::pow(t, d_ - 1); };
    double acc = 0.0;
    for (int i = 0; i < kMassPanels; ++i) {
        acc += composite<GL10>(f, i * dt_, (i + 1) * dt_, 1);
        mass_v_[i + 1] = acc;
    }
    c_ = 1.0 / (om * acc);
    for (auto& v : mass_v_) v *= om * c_;
}

double Mollifier::mass(double t) const {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    double x = t / dt_;
    int i = std::min(static_cast<int>(x), kMassPanels - 1);
    double u = x - i;
    const double om = sphere_area(d_);
    double t0 = i * dt_, t1 = (i + 1) * dt_;
    double g0 = om * c_ * profile(t0) * std::pow(t0, d_ - 1);
    double g1 = om * c_ * profile(t1) * std::pow(t1, d_ - 1);
    return hermite(mass_v_[i], mass_v_[i + 1], g0, g1, dt_, u);
}

double Mollifier::radial(double s, double eps) const {
    double t = s / eps;
    if (t >= 1.0) return 0.0;
    return c_ * profile(t) / std::pow(eps, d_);
}

double Mollifier::eval(const Vec& x, double eps) const { return radial(std::sqrt(norm2(x, d_)), eps); }

void Mollifier::build_fourier_table() {
    // Project eta onto a line, P(s) = integral of eta over the orthogonal hyperplane, then
    // hat(xi) = 2 * int_0^1 P(s) cos(xi s) ds in every dimension.
    std::vector<double> s, w;
    composite_nodes<GL32>(0.0, 1.0, 64, s, w);
    std::vector<double> P(s.size());
    for (std::size_t q = 0; q < s.size(); ++q) {
        double sq = s[q];
        if (d_ == 1) {
            P[q] = c_ * profile(sq);
        } else if (d_ == 2) {
            double a = std::sqrt(std::max(0.0, 1.0 - sq * sq));
            P[q] = 2.0 * c_ * composite<GL20>([sq](double y) { return profile(std::sqrt(sq * sq + y * y)); }, 0.0, a, 8);
        } else {
            P[q] = std::numbers::pi * c_ *
                   composite<GL20>([](double v) { return profile(std::sqrt(v)); }, sq * sq, 1.0, 8);
        }
    }
    xi_max_ = kXiMax;
    dxi_ = kDxi;
    const int n = static_cast<int>(std::lround(xi_max_ / dxi_)) + 1;
    hat_v_.assign(n, 0.0);
    hat_g_.assign(n, 0.0);
    constexpr int reseed = 256;
    for (std::size_t q = 0; q < s.size(); ++q) {
        const double a = 2.0 * w[q] * P[q], sq = s[q];
        const std::complex<double> step = std::polar(1.0, dxi_ * sq);
        std::complex<double> z;
        for (int j = 0; j < n; ++j) {
            if (j % reseed == 0) z = std::polar(1.0, j * dxi_ * sq);
            hat_v_[j] += a * z.real();
            hat_g_[j] -= a * sq * z.imag();
            z *= step;
        }
    }
}

double Mollifier::hat_radial(double kabs, double eps) const {
    double xi = std::abs(kabs) * eps;
    if (xi >= xi_max_) return 0.0;
    double x = xi / dxi_;
    int i = static_cast<int>(x);
    if (i >= static_cast<int>(hat_v_.size()) - 1) return 0.0;
    return hermite(hat_v_[i], hat_v_[i + 1], hat_g_[i], hat_g_[i + 1], dxi_, x - i);
}

double Mollifier::hat(const Vec& k, double eps) const { return hat_radial(std::sqrt(norm2(k, d_)), eps); }

double Mollifier::lp_power(double p) const {
    const double om = sphere_area(d_);
    auto f = [&](double t) { return std::pow(c_ * profile(t), p) * std::pow(t, d_ - 1); };
    return om * composite<GL20>(f, 0.0, 1.0, 256);
}

}  // namespace matchfluct
