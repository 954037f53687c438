#pragma once
// Independent reference computations used by the unit tests and the acceptance binary.

#include "matchfluct/torus.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>
#include <vector>

namespace oracle {

using matchfluct::Vec;

// Minimum over all permutations of sum_i c[i][perm[i]] / n.
inline double assignment_by_permutations(const std::vector<std::vector<double>>& c) {
    const std::size_t n = c.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += c[i][perm[i]];
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(n);
}

// Unnormalized bump exp(-1/(1-t^2)).
inline double bump(double t) { return t < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

inline double sphere_area(int d) { return d == 1 ? 2.0 : d == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi; }

// Fraction of the normalized bump's mass inside radius t.
inline double bump_mass(int d, double t) {
    using boost::math::quadrature::gauss_kronrod;
    auto f = [d](double s) { return std::pow(s, d - 1) * bump(s); };
    double total = gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-14);
    if (t >= 1.0) return 1.0;
    return gauss_kronrod<double, 61>::integrate(f, 0.0, t, 15, 1e-14) / total;
}

// Field of a whole-space unit charge, z / (omega_d |z|^d).
inline Vec point_field(const Vec& z, int d) {
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) r2 += z[a] * z[a];
    double s = 1.0 / (sphere_area(d) * std::pow(r2, 0.5 * d));
    return Vec{z[0] * s, d > 1 ? z[1] * s : 0.0, d > 2 ? z[2] * s : 0.0};
}

namespace detail {

// d = 2: F with d^2F/da db = a / (a^2 + b^2).
inline double f2(double a, double b) {
    double r2 = a * a + b * b;
    return 0.5 * b * std::log(r2) + (a == 0.0 ? 0.0 : a * std::atan(b / a));
}

inline double log_b_plus_rho(double a, double b, double c) {
    double rho = std::sqrt(a * a + b * b + c * c);
    if (b >= 0.0) return std::log(b + rho);
    return std::log(a * a + c * c) - std::log(rho - b);
}

// d = 3: F with d^3F/da db dc = a / rho^3.
inline double f3(double a, double b, double c) {
    double rho = std::sqrt(a * a + b * b + c * c);
    double g = b * log_b_plus_rho(a, c, b) + c * log_b_plus_rho(a, b, c);
    if (a != 0.0) g -= a * std::atan(b * c / (a * rho));
    return -g;
}

}  // namespace detail

// Field at z of unit charge spread uniformly on the cube [-h, h]^d centered at 0 (closed form).
inline Vec box_field(const Vec& z, int d, double h) {
    Vec e{0.0, 0.0, 0.0};
    const double vol = std::pow(2.0 * h, d);
    for (int comp = 0; comp < d; ++comp) {
        // rotate so the requested component is first
        int ax[3] = {comp, (comp + 1) % d, (comp + 2) % d};
        double lo[3], hi[3];
        for (int k = 0; k < d; ++k) {
            lo[k] = z[ax[k]] - h;
            hi[k] = z[ax[k]] + h;
        }
        double acc = 0.0;
        if (d == 2) {
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    double s = (i ? 1.0 : -1.0) * (j ? 1.0 : -1.0);
                    acc += s * detail::f2(i ? hi[0] : lo[0], j ? hi[1] : lo[1]);
                }
        } else {
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k) {
                        double s = (i ? 1.0 : -1.0) * (j ? 1.0 : -1.0) * (k ? 1.0 : -1.0);
                        acc += s * detail::f3(i ? hi[0] : lo[0], j ? hi[1] : lo[1], k ? hi[2] : lo[2]);
                    }
        }
        e[comp] = acc / (sphere_area(d) * vol);
    }
    return e;
}

// Gradient of the periodic Green function (Laplacian = delta - L^{-d}) at displacement z, as a sum of
// neutral cells (unit charge minus its uniform cube) over |k|_inf <= M.
inline Vec periodic_green_sum(const Vec& z, int d, double L, int M) {
    Vec g{0.0, 0.0, 0.0};
    const int m2 = d > 1 ? M : 0, m3 = d > 2 ? M : 0;
    for (int i = -M; i <= M; ++i)
        for (int j = -m2; j <= m2; ++j)
            for (int k = -m3; k <= m3; ++k) {
                Vec w{z[0] + i * L, z[1] + j * L, z[2] + k * L};
                Vec p = point_field(w, d), b = box_field(w, d, 0.5 * L);
                for (int a = 0; a < d; ++a) g[a] += p[a] - b[a];
            }
    return g;
}

// Richardson extrapolation of the cell sum, assuming a tail ~ M^{-3}.
inline Vec periodic_green(const Vec& z, int d, double L, int M = 24) {
    Vec a = periodic_green_sum(z, d, L, M), b = periodic_green_sum(z, d, L, 2 * M);
    Vec g{0.0, 0.0, 0.0};
    for (int c = 0; c < d; ++c) g[c] = (8.0 * b[c] - a[c]) / 7.0;
    return g;
}

// grad G_L * eta_eps at z for the radial bump: Newton's theorem for the whole-space part, mean
// value property for the harmonic remainder.  Valid for eps + |z| < L / 2.
inline Vec periodic_green_mollified(const Vec& z, int d, double L, double eps, int M = 24) {
    Vec g = periodic_green(z, d, L, M);
    double r = 0.0;
    for (int a = 0; a < d; ++a) r += z[a] * z[a];
    r = std::sqrt(r);
    Vec p = point_field(z, d);
    double miss = 1.0 - bump_mass(d, r / eps);
    for (int a = 0; a < d; ++a) g[a] -= miss * p[a];
    return g;
}

}  // namespace oracle
