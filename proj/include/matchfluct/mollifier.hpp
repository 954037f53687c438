#pragma once

#include "matchfluct/torus.hpp"

#include <vector>

namespace matchfluct {

// The standard bump exp(-1/(1-t^2)) on the unit ball, normalized to unit mass in R^d.
class Mollifier {
public:
    explicit Mollifier(int d);

    // Shared instance per dimension; built once, immutable afterwards.
    static const Mollifier& get(int d);

    int dim() const { return d_; }
    double normalization() const { return c_; }
    const char* profile_name() const { return "exp(-1/(1-t^2)) on |x|<1"; }

    static double profile(double t);

    // eta_eps at a point with |x| = s
    double radial(double s, double eps = 1.0) const;
    double eval(const Vec& x, double eps = 1.0) const;

    // Fourier transform of eta_eps at wavenumber |k|; zero beyond the table extent.
    double hat_radial(double kabs, double eps = 1.0) const;
    double hat(const Vec& k, double eps = 1.0) const;
    double hat_extent() const { return xi_max_; }

    // M(t) = mass of eta inside the ball of radius t (1 for t >= 1).
    double mass(double t) const;

    // integral of eta^p over R^d
    double lp_power(double p) const;

    // omega_d: surface measure of the unit sphere (2, 2pi, 4pi)
    static double sphere_area(int d);

private:
    int d_;
    double c_ = 1.0;
    double xi_max_ = 0.0;
    double dxi_ = 0.0;
    std::vector<double> hat_v_, hat_g_;
    double dt_ = 0.0;
    std::vector<double> mass_v_;

    void build_mass_table();
    void build_fourier_table();
};

}  // namespace matchfluct
