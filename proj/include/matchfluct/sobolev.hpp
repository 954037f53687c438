#pragma once

#include "matchfluct/torus.hpp"

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace matchfluct {

struct NormSpec {
    double gamma = 0.75;
    double p = 2.0;
    double ell = 4.0;
    std::vector<double> scales;  // explicit grid; empty means n_scales log-uniform points on [eps_min, 1]
    double eps_min = 1.0 / 64.0;
    int n_scales = 24;
    double spacing = 0.0;        // 0: min(eps/4, ell/16) per scale

    void validate() const;
    std::vector<double> grid() const;
};

std::vector<double> log_uniform_grid(double lo, double hi, int n);

struct ScaleValue {
    double eps = 0.0;
    double value = 0.0;  // int over the ball of |u_eps|^p
    double spacing = 0.0;
    std::size_t points = 0;
};

struct NormEstimate {
    NormSpec spec;
    double radius = 0.0;  // spatial ball radius (2 ell, or 3 ell for the mollified form)
    double t = 0.0;       // mollified form only
    double head = 0.0;    // t^{p gamma} int |u_t|^p (mollified form)
    std::vector<ScaleValue> per_scale;
    double total = 0.0;   // p-th power, no root taken
    double slope = 0.0;   // small-eps log-log slope of the per-scale value
    double slope_se = 0.0;
    bool converges = true;  // p gamma + slope > 0

    nlohmann::json to_json() const;
};

// Cubic lattice origin + spacing * i, i in [0, n)^d.
struct Lattice {
    int d = 2;
    Vec origin{0.0, 0.0, 0.0};
    double spacing = 1.0;
    int n = 1;

    std::size_t size() const;
    Vec point(std::size_t idx) const;
};

class FieldSampler {
public:
    virtual ~FieldSampler() = default;
    virtual int dim() const = 0;
    virtual int components() const = 0;
    // out[idx * components() + c] = component c of u_eps at lattice point idx
    virtual void sample(double eps, const Lattice& lat, std::vector<double>& out) const = 0;
    // Positive when the sampler only knows the field on the grid (spacing) Z^d; lattices must then be
    // made of grid nodes.
    virtual double grid_spacing() const { return 0.0; }
};

class PointwiseSampler : public FieldSampler {
public:
    using Fn = std::function<void(double eps, const Vec& x, double* out)>;
    PointwiseSampler(int d, int components, Fn fn) : d_(d), c_(components), fn_(std::move(fn)) {}
    int dim() const override { return d_; }
    int components() const override { return c_; }
    void sample(double eps, const Lattice& lat, std::vector<double>& out) const override;

private:
    int d_, c_;
    Fn fn_;
};

// Eq. (multiscale): int_0^1 eps^{p gamma} int_{B_{2 ell}} |u_eps|^p deps/eps, trapezoid in log eps.
NormEstimate multiscale_norm(const FieldSampler& u, const NormSpec& spec);

// t^{p gamma} int_{B_{3 ell}} |u_t|^p + int_t^1 eps^{p gamma} int_{B_{3 ell}} |u_eps|^p deps/eps, 0 < t <= 1.
NormEstimate mollified_field_norm(const FieldSampler& u, const NormSpec& spec, double t);

// Field values on the nodes -ell + i * 2 ell / (n - 1) of [-ell, ell]^d.
struct GridField {
    int d = 2;
    double ell = 1.0;
    int n = 2;
    int components = 1;
    std::vector<double> values;  // values[idx * components + c]

    double spacing() const { return 2.0 * ell / (n - 1); }
    std::size_t size() const;
    Vec node(std::size_t idx) const;
};

// W^{gamma,q} norm of the tensor cubic B-spline bump with knot spacing a (support [-2a, 2a]^d).
double bspline_bump_norm(int d, double a, double gamma, double q);
// The bump itself.
double bspline_bump(int d, double a, const Vec& x);

// Lower bound on the dual W^{-gamma,p}(B_ell) norm by a finite dictionary of normalized bumps.
double dual_norm_oracle(const GridField& u, const NormSpec& spec);

}  // namespace matchfluct
