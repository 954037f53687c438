#include "matchfluct/displacement.hpp"

#include <cmath>

namespace matchfluct {

namespace {

void check_domain(const TorusDomain& a, const TorusDomain& b) {
    if (a.d != b.d || std::abs(a.L - b.L) > 1e-12 * a.L) throw UsageError("displacement and field live on different tori");
}

}  // namespace

GradientSource GradientSource::spectral(const SpectralField& u, const Mollifier& m) {
    return {u.domain(), [&u, &m](double eps, const Vec& x) { return grad_mollified(u, m, eps, x).value; }};
}

GradientSource GradientSource::atomic(const AtomicPoisson& ap) {
    return {ap.cloud().domain, [&ap](double eps, const Vec& x) {
                return eps < 0.5 * ap.cloud().domain.L ? ap.grad_fast(eps, x) : ap.grad(eps, x);
            }};
}

GradientSource GradientSource::zero(const TorusDomain& dom) {
    return {dom, [](double, const Vec&) { return Vec{0.0, 0.0, 0.0}; }};
}

DisplacementObservable::DisplacementObservable(const TransportPlan& plan, double R)
    : dom_(plan.source.domain), R_(R), atoms_(plan.source.points), disp_(plan.source.size(), Vec{0.0, 0.0, 0.0}),
      grid_(atoms_, dom_, std::max(0.5, 1.0 / R)) {
    if (!(R > 0.0)) throw UsageError("intensity R must be positive");
    triples_.reserve(plan.triples.size());
    for (const auto& t : plan.triples) {
        Vec v = plan.displacement(t);
        for (int a = 0; a < dom_.d; ++a) disp_[t.i][a] += t.mass * v[a];
        triples_.push_back({t.i, t.mass, v});
    }
}

double DisplacementObservable::apply(const std::function<Vec(const Vec&)>& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) s += dot(f(atoms_[i]), disp_[i], dom_.d);
    return std::pow(R_, 0.5 * dom_.d) * s;
}

Vec DisplacementObservable::mollified(const Mollifier& m, double r, const Vec& x) const {
    if (!(r > 0.0)) throw UsageError("mollification scale must be positive");
    Vec out{0.0, 0.0, 0.0};
    grid_.near(x, r, [&](std::size_t i, const Vec&, double s2) {
        double w = m.radial(std::sqrt(s2), r);
        for (int a = 0; a < dom_.d; ++a) out[a] += w * disp_[i][a];
    });
    return out;
}

double DisplacementObservable::density(const Mollifier& m, double r, const Vec& x) const {
    double s = 0.0;
    grid_.near(x, r, [&](std::size_t, const Vec&, double s2) { s += m.radial(std::sqrt(s2), r); });
    return s * std::pow(R_, -dom_.d);
}

Vec z_mollified(const DisplacementObservable& Z, const Mollifier& m, double r, const Vec& x) {
    return Z.mollified(m, r, x);
}

double linearization_residual(const DisplacementObservable& Z, const GradientSource& u, const Mollifier& m, double r,
                              const Vec& x, ResidualVariant variant) {
    check_domain(Z.domain(), u.domain);
    const int d = Z.dim();
    Vec z = Z.mollified(m, r, x);
    Vec g = u.eval(r, x);
    double w = variant == ResidualVariant::A ? Z.density(m, r, x) : 1.0;
    double scale = std::pow(Z.R(), 0.5 * d);
    double s = 0.0;
    for (int a = 0; a < d; ++a) {
        double t = scale * z[a] - w * g[a];
        s += t * t;
    }
    return std::sqrt(s);
}

Vec renormalized_z_mollified(const DisplacementObservable& Z, const GradientSource& u, const Mollifier& m, double eps,
                             const Vec& x) {
    if (Z.dim() != 2) throw UsageError("the renormalized displacement is defined for d = 2 only");
    check_domain(Z.domain(), u.domain);
    Vec shift = u.eval(1.0, Vec{0.0, 0.0, 0.0});
    Vec z = Z.mollified(m, eps, x);
    double mu = Z.density(m, eps, x);
    double scale = Z.R();
    Vec out{0.0, 0.0, 0.0};
    for (int a = 0; a < 2; ++a) out[a] = scale * z[a] - mu * shift[a];
    return out;
}

double sup_displacement(const DisplacementObservable& Z, const GradientSource& u, const Mollifier& m, double r) {
    (void)m;
    check_domain(Z.domain(), u.domain);
    const int d = Z.dim();
    Vec h = u.eval(r, Vec{0.0, 0.0, 0.0});
    double back = std::pow(Z.R(), -0.5 * d);
    double best = 0.0;
    for (const auto& t : Z.triples()) {
        if (norm2(Z.atoms()[t.atom], d) >= r * r) continue;
        double s = 0.0;
        for (int a = 0; a < d; ++a) {
            double q = t.v[a] - back * h[a];
            s += q * q;
        }
        best = std::max(best, std::sqrt(s));
    }
    return best;
}

}  // namespace matchfluct
