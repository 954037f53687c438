#pragma once

#include "matchfluct/field.hpp"
#include "matchfluct/transport.hpp"

#include <functional>

namespace matchfluct {

// A source of mollified gradients grad u_eps(x) on a given torus.
struct GradientSource {
    TorusDomain domain;
    std::function<Vec(double, const Vec&)> eval;

    static GradientSource spectral(const SpectralField& u, const Mollifier& m);
    // Kernel-table path when eps < L/2, Ewald otherwise.
    static GradientSource atomic(const AtomicPoisson& ap);
    static GradientSource zero(const TorusDomain& dom);
};

enum class ResidualVariant {
    A,  // |Z_r(x) - mu_r(x) grad u_r(x)|; at x = 0 the annealed linearization quantity
    B,  // |Z_r(x) - grad u_r(x)|
};

// Z^{R,L} of a plan between mu^{R,L} and (discretized) Lebesgue measure.
class DisplacementObservable {
public:
    DisplacementObservable(const TransportPlan& plan, double R);

    const TorusDomain& domain() const { return dom_; }
    double R() const { return R_; }
    int dim() const { return dom_.d; }
    const std::vector<Vec>& atoms() const { return atoms_; }
    // sum_j mass_ij (y_j - x_i) per source atom
    const std::vector<Vec>& atom_displacement() const { return disp_; }

    // R^{d/2} sum mass <f(x_i), y_j - x_i>
    double apply(const std::function<Vec(const Vec&)>& f) const;
    // sum mass eta_r(x_i - x) (y_j - x_i), no R^{d/2}
    Vec mollified(const Mollifier& m, double r, const Vec& x) const;
    // mu_r(x) = sum_i R^{-d} eta_r(X_i - x)
    double density(const Mollifier& m, double r, const Vec& x) const;

    struct TripleView {
        std::size_t atom;
        double mass;
        Vec v;  // wrapped y - x
    };
    const std::vector<TripleView>& triples() const { return triples_; }

private:
    TorusDomain dom_;
    double R_;
    std::vector<Vec> atoms_;
    std::vector<Vec> disp_;
    std::vector<TripleView> triples_;
    NeighborGrid grid_;
};

Vec z_mollified(const DisplacementObservable& Z, const Mollifier& m, double r, const Vec& x);

double linearization_residual(const DisplacementObservable& Z, const GradientSource& u, const Mollifier& m, double r,
                              const Vec& x, ResidualVariant variant = ResidualVariant::A);

// d = 2: R^{d/2} Z_eps(x) - mu_eps(x) grad u_1(0)
Vec renormalized_z_mollified(const DisplacementObservable& Z, const GradientSource& u, const Mollifier& m, double eps,
                             const Vec& x);

// max |(y - x) - R^{-d/2} grad u_r(0)| over triples with x in B_r(0)
double sup_displacement(const DisplacementObservable& Z, const GradientSource& u, const Mollifier& m, double r);

}  // namespace matchfluct
