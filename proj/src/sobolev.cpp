#include "matchfluct/sobolev.hpp"

#include "matchfluct/mollifier.hpp"
#include "matchfluct/stats.hpp"

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

namespace matchfluct {

namespace {

bool is_integer(double g) { return std::abs(g - std::round(g)) < 1e-12; }

// Integral of |u_eps|^p over B_rho by the lattice rule.
ScaleValue ball_integral(const FieldSampler& u, const NormSpec& spec, double eps, double rho) {
    const int d = u.dim();
    double s = spec.spacing > 0.0 ? spec.spacing : std::min(eps / 4.0, spec.ell / 16.0);
    const double g = u.grid_spacing();
    Lattice lat;
    lat.d = d;
    if (g > 0.0) {
        s = spec.spacing > 0.0 ? std::max(g, std::round(spec.spacing / g) * g) : g;
    }
    if (s > 0.5 * eps * (1.0 + 1e-12))
        throw UsageError("quadrature spacing " + std::to_string(s) + " is coarser than eps/2 at eps = " + std::to_string(eps));
    lat.spacing = s;
    if (g > 0.0) {
        int m = static_cast<int>(std::floor(rho / s + 1e-9));
        lat.n = 2 * m + 1;
        for (int a = 0; a < d; ++a) lat.origin[a] = -m * s;
    } else {
        int m = static_cast<int>(std::ceil(rho / s - 1e-9));
        lat.n = 2 * m;
        for (int a = 0; a < d; ++a) lat.origin[a] = -(m - 0.5) * s;
    }
    std::vector<double> vals;
    u.sample(eps, lat, vals);
    const int c = u.components();
    ScaleValue sv;
    sv.eps = eps;
    sv.spacing = s;
    const double rho2 = rho * rho * (1.0 + 1e-12);
    const double cell = std::pow(s, d);
    double acc = 0.0;
    for (std::size_t i = 0; i < lat.size(); ++i) {
        Vec x = lat.point(i);
        if (norm2(x, d) > rho2) continue;
        double q = 0.0;
        for (int k = 0; k < c; ++k) q += vals[i * c + k] * vals[i * c + k];
        acc += spec.p == 2.0 ? q : std::pow(q, 0.5 * spec.p);
        ++sv.points;
    }
    sv.value = acc * cell;
    return sv;
}

double log_trapezoid(const std::vector<ScaleValue>& v, double pg) {
    double t = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        double h = std::log(v[i].eps / v[i - 1].eps);
        t += 0.5 * h * (std::pow(v[i].eps, pg) * v[i].value + std::pow(v[i - 1].eps, pg) * v[i - 1].value);
    }
    return t;
}

void fit_small_scales(NormEstimate& est) {
    const auto& v = est.per_scale;
    std::size_t k = std::max<std::size_t>(4, v.size() / 3);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < v.size() && x.size() < k; ++i) {
        if (!(v[i].value > 0.0)) continue;
        x.push_back(std::log(v[i].eps));
        y.push_back(std::log(v[i].value));
    }
    if (x.size() >= 3) {
        Fit f = ols(x, y);
        est.slope = f.slope;
        est.slope_se = f.slope_se;
    }
    est.converges = est.spec.p * est.spec.gamma + est.slope > 0.0;
}

}  // namespace

void NormSpec::validate() const {
    if (!(gamma > 0.0)) throw UsageError("gamma must be positive");
    if (is_integer(gamma))
        throw UsageError("integer gamma is excluded: the fractional Sobolev scale is only used for gamma not in N");
    if (!(p >= 1.0)) throw UsageError("p must be at least 1");
    if (!(ell > 0.0)) throw UsageError("ell must be positive");
    if (spacing < 0.0) throw UsageError("spacing must be nonnegative");
    if (!scales.empty()) {
        for (std::size_t i = 0; i < scales.size(); ++i) {
            if (!(scales[i] > 0.0 && scales[i] <= 1.0)) throw UsageError("scales must lie in (0, 1]");
            if (i > 0 && !(scales[i] > scales[i - 1])) throw UsageError("scale grid must be strictly increasing");
        }
    } else {
        if (!(eps_min > 0.0 && eps_min < 1.0)) throw UsageError("eps_min must lie in (0, 1)");
        if (n_scales < 2) throw UsageError("need at least two scales");
    }
}

std::vector<double> log_uniform_grid(double lo, double hi, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

std::vector<double> NormSpec::grid() const { return scales.empty() ? log_uniform_grid(eps_min, 1.0, n_scales) : scales; }

std::size_t Lattice::size() const {
    std::size_t s = 1;
    for (int a = 0; a < d; ++a) s *= static_cast<std::size_t>(n);
    return s;
}

Vec Lattice::point(std::size_t idx) const {
    Vec x{0.0, 0.0, 0.0};
    for (int a = d - 1; a >= 0; --a) {
        x[a] = origin[a] + spacing * static_cast<double>(idx % n);
        idx /= n;
    }
    return x;
}

void PointwiseSampler::sample(double eps, const Lattice& lat, std::vector<double>& out) const {
    out.assign(lat.size() * c_, 0.0);
    for (std::size_t i = 0; i < lat.size(); ++i) fn_(eps, lat.point(i), &out[i * c_]);
}

nlohmann::json NormEstimate::to_json() const {
    nlohmann::json j;
    j["spec"] = {{"gamma", spec.gamma}, {"p", spec.p}, {"ell", spec.ell}, {"spacing", spec.spacing}};
    j["radius"] = radius;
    if (t > 0.0) {
        j["t"] = t;
        j["head"] = head;
    }
    auto& tab = j["per_scale"] = nlohmann::json::array();
    for (const auto& s : per_scale)
        tab.push_back({{"eps", s.eps}, {"value", s.value}, {"spacing", s.spacing}, {"points", s.points}});
    j["total"] = total;
    j["small_scale_slope"] = slope;
    j["small_scale_slope_se"] = slope_se;
    j["converges"] = converges;
    return j;
}

NormEstimate multiscale_norm(const FieldSampler& u, const NormSpec& spec) {
    spec.validate();
    NormEstimate est;
    est.spec = spec;
    est.radius = 2.0 * spec.ell;
    for (double eps : spec.grid()) est.per_scale.push_back(ball_integral(u, spec, eps, est.radius));
    est.total = log_trapezoid(est.per_scale, spec.p * spec.gamma);
    fit_small_scales(est);
    return est;
}

NormEstimate mollified_field_norm(const FieldSampler& u, const NormSpec& spec, double t) {
    spec.validate();
    if (!(t > 0.0) || t > 1.0) throw UsageError("the mollification scale t must lie in (0, 1]");
    NormEstimate est;
    est.spec = spec;
    est.t = t;
    est.radius = 3.0 * spec.ell;
    const double pg = spec.p * spec.gamma;
    std::vector<double> g = t < 1.0 ? log_uniform_grid(t, 1.0, std::max(spec.n_scales, 2)) : std::vector<double>{1.0};
    for (double eps : g) est.per_scale.push_back(ball_integral(u, spec, eps, est.radius));
    est.head = std::pow(t, pg) * est.per_scale.front().value;
    est.total = est.head + log_trapezoid(est.per_scale, pg);
    if (est.per_scale.size() >= 3) fit_small_scales(est);
    return est;
}

// ---------------------------------------------------------------- dual oracle

namespace {

// cubic B-spline on [-2, 2] and its derivatives
double bs(double t, int der) {
    double a = std::abs(t), sg = t < 0.0 ? -1.0 : 1.0;
    if (a >= 2.0) return 0.0;
    if (a < 1.0) {
        switch (der) {
            case 0: return 2.0 / 3.0 - a * a + 0.5 * a * a * a;
            case 1: return sg * (-2.0 * a + 1.5 * a * a);
            case 2: return -2.0 + 3.0 * a;
            default: return sg * 3.0;
        }
    }
    double b = 2.0 - a;
    switch (der) {
        case 0: return b * b * b / 6.0;
        case 1: return -sg * 0.5 * b * b;
        case 2: return b;
        default: return -sg;
    }
}

// All partial derivatives of order k of the bump at x, as a flat list (with multiplicity).
void bump_derivs(int d, double a, const Vec& x, int k, std::vector<double>& out) {
    out.clear();
    int total = 1;
    for (int i = 0; i < k; ++i) total *= d;
    for (int m = 0; m < total; ++m) {
        int ord[3] = {0, 0, 0};
        int q = m;
        for (int i = 0; i < k; ++i) {
            ++ord[q % d];
            q /= d;
        }
        double v = 1.0;
        for (int ax = 0; ax < d; ++ax) v *= bs(x[ax] / a, ord[ax]) * std::pow(a, -ord[ax]);
        out.push_back(v);
    }
}

double frob(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double sphere_cos_moment(int d, double q) {
    return std::tgamma(0.5 * d) * std::tgamma(0.5 * (q + 1.0)) / (std::sqrt(std::numbers::pi) * std::tgamma(0.5 * (d + q)));
}

}  // namespace

double bspline_bump(int d, double a, const Vec& x) {
    double v = 1.0;
    for (int ax = 0; ax < d; ++ax) v *= bs(x[ax] / a, 0);
    return v;
}

double bspline_bump_norm(int d, double a, double gamma, double q) {
    static std::mutex mu;
    static std::map<std::tuple<int, double, double, double>, double> cache;
    {
        std::lock_guard<std::mutex> lk(mu);
        auto it = cache.find({d, a, gamma, q});
        if (it != cache.end()) return it->second;
    }
    if (d < 1 || d > 3) throw UsageError("dimension must be 1, 2 or 3");
    const int k = static_cast<int>(std::floor(gamma));
    const double s = gamma - k;
    if (k > 2) throw UsageError("the B-spline dictionary supports gamma < 3");
    const int per = 4;             // lattice points per knot interval
    const int pad = 8;             // padding nodes on each side
    const int ns = 4 * per + 1;    // support nodes per axis
    const int nb = ns + 2 * pad;   // padded box nodes per axis
    const double delta = a / per;
    const double cell = std::pow(delta, d);
    auto count = [&](int n) {
        std::size_t c = 1;
        for (int i = 0; i < d; ++i) c *= static_cast<std::size_t>(n);
        return c;
    };
    auto coords = [&](std::size_t idx, int n, int off) {
        Vec x{0.0, 0.0, 0.0};
        for (int ax = d - 1; ax >= 0; --ax) {
            x[ax] = (static_cast<double>(idx % n) - off) * delta;
            idx /= n;
        }
        return x;
    };
    const std::size_t S = count(ns);
    const int half = ns / 2;
    std::vector<std::vector<double>> g(S);  // k-th derivative tensor per support node
    std::vector<Vec> xs(S);
    double lower = 0.0;
    std::vector<double> tmp;
    for (std::size_t i = 0; i < S; ++i) {
        xs[i] = coords(i, ns, half);
        for (int j = 0; j <= k; ++j) {
            bump_derivs(d, a, xs[i], j, tmp);
            double f = frob(tmp);
            lower += std::pow(f, q) * cell;
        }
        bump_derivs(d, a, xs[i], k, g[i]);
    }
    // Gagliardo seminorm of the k-th derivatives; the kernel depends on the integer offset only
    const double expo = d + s * q;
    const int span = nb - 1, tw = 2 * span + 1;
    auto koff = [&](const int* o) {
        std::size_t idx = 0;
        for (int ax = 0; ax < d; ++ax) idx = idx * tw + static_cast<std::size_t>(o[ax] + span);
        return idx;
    };
    std::vector<double> K(count(tw), 0.0);
    for (std::size_t idx = 0; idx < K.size(); ++idx) {
        std::size_t r = idx;
        double r2 = 0.0;
        for (int ax = 0; ax < d; ++ax) {
            double o = static_cast<double>(static_cast<int>(r % tw) - span);
            r /= tw;
            r2 += o * o;
        }
        K[idx] = r2 > 0.0 ? std::pow(r2 * delta * delta, -0.5 * expo) * cell : 0.0;
    }
    std::vector<std::array<int, 3>> is(S);
    for (std::size_t i = 0; i < S; ++i)
        for (int ax = 0; ax < d; ++ax) is[i][ax] = static_cast<int>(std::lround(xs[i][ax] / delta));
    double semi = 0.0;
    std::vector<double> inner(S, 0.0);  // sum of K over support nodes != i
    for (std::size_t i = 0; i < S; ++i) {
        for (std::size_t j = 0; j < S; ++j) {
            if (j == i) continue;
            int o[3] = {is[j][0] - is[i][0], is[j][1] - is[i][1], is[j][2] - is[i][2]};
            double kk = K[koff(o)];
            inner[i] += kk;
            if (j < i) continue;
            double diff = 0.0;
            for (std::size_t c = 0; c < g[i].size(); ++c) diff += (g[i][c] - g[j][c]) * (g[i][c] - g[j][c]);
            semi += 2.0 * (q == 2.0 ? diff : std::pow(diff, 0.5 * q)) * kk * cell;
        }
    }
    // pairs with one point outside the support: inside the padded box by summation, beyond it by the
    // ball-complement bound
    const int hb = half + pad;
    const double box_half = (hb + 0.5) * delta;
    const double omega = Mollifier::sphere_area(d);
    for (std::size_t i = 0; i < S; ++i) {
        double gi = std::pow(frob(g[i]), q);
        if (gi == 0.0) continue;
        double ksum = -inner[i];
        int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
        for (int ax = 0; ax < d; ++ax) {
            lo[ax] = -hb - is[i][ax];
            hi[ax] = hb - is[i][ax];
        }
        int o[3] = {0, 0, 0};
        for (o[0] = lo[0]; o[0] <= hi[0]; ++o[0])
            for (o[1] = lo[1]; o[1] <= hi[1]; ++o[1])
                for (o[2] = lo[2]; o[2] <= hi[2]; ++o[2]) ksum += K[koff(o)];
        double dist = box_half;
        for (int ax = 0; ax < d; ++ax) dist = std::min(dist, box_half - std::abs(xs[i][ax]));
        ksum += omega * std::pow(dist, -s * q) / (s * q);
        semi += 2.0 * gi * ksum * cell;
    }
    // self cells: |grad g . z|^q |z|^{-d-sq} over a ball of the cell's volume
    const double rc = delta * std::pow(std::tgamma(0.5 * d + 1.0) / std::pow(std::numbers::pi, 0.5 * d), 1.0 / d);
    const double self_factor = sphere_cos_moment(d, q) * omega * std::pow(rc, q * (1.0 - s)) / (q * (1.0 - s));
    for (std::size_t i = 0; i < S; ++i) {
        bump_derivs(d, a, xs[i], k + 1, tmp);
        semi += std::pow(frob(tmp), q) * self_factor * cell;
    }
    double norm = std::pow(lower + semi, 1.0 / q);
    std::lock_guard<std::mutex> lk(mu);
    cache[{d, a, gamma, q}] = norm;
    return norm;
}

std::size_t GridField::size() const {
    std::size_t s = 1;
    for (int a = 0; a < d; ++a) s *= static_cast<std::size_t>(n);
    return s;
}

Vec GridField::node(std::size_t idx) const {
    Vec x{0.0, 0.0, 0.0};
    const double h = spacing();
    for (int a = d - 1; a >= 0; --a) {
        x[a] = -ell + h * static_cast<double>(idx % n);
        idx /= n;
    }
    return x;
}

double dual_norm_oracle(const GridField& u, const NormSpec& spec) {
    spec.validate();
    if (u.n < 2 || u.n > 33) throw UsageError("dual_norm_oracle accepts at most 33 nodes per axis");
    if (u.values.size() != u.size() * u.components) throw UsageError("grid field value count mismatch");
    if (!(spec.p > 1.0)) throw UsageError("dual_norm_oracle needs p > 1");
    const int d = u.d;
    const double q = spec.p / (spec.p - 1.0);
    const double h = u.spacing();
    const double cell = std::pow(h, d);
    double best = 0.0;
    for (int w : {1, 2, 4}) {
        const double a = w * h;
        const double reach = 2.0 * a;
        if (reach * std::sqrt(static_cast<double>(d)) >= u.ell) continue;
        const double nv = bspline_bump_norm(d, a, spec.gamma, q);
        const int span = 2 * w;  // support half-width in nodes
        for (std::size_t c = 0; c < u.size(); ++c) {
            Vec xc = u.node(c);
            if (std::sqrt(norm2(xc, d)) + reach * std::sqrt(static_cast<double>(d)) > u.ell) continue;
            int ci[3] = {0, 0, 0};
            std::size_t r = c;
            for (int ax = d - 1; ax >= 0; --ax) {
                ci[ax] = static_cast<int>(r % u.n);
                r /= u.n;
            }
            std::vector<double> acc(u.components, 0.0);
            const int L0 = 2 * span + 1;
            const int L1 = d >= 2 ? L0 : 1, L2 = d >= 3 ? L0 : 1;
            for (int i0 = 0; i0 < L0; ++i0)
                for (int i1 = 0; i1 < L1; ++i1)
                    for (int i2 = 0; i2 < L2; ++i2) {
                        int off[3] = {i0 - span, d >= 2 ? i1 - span : 0, d >= 3 ? i2 - span : 0};
                        Vec z{off[0] * h, off[1] * h, off[2] * h};
                        double v = bspline_bump(d, a, z);
                        if (v == 0.0) continue;
                        std::size_t idx = 0;
                        for (int ax = 0; ax < d; ++ax) idx = idx * u.n + static_cast<std::size_t>(ci[ax] + off[ax]);
                        for (int m = 0; m < u.components; ++m) acc[m] += u.values[idx * u.components + m] * v;
                    }
            for (int m = 0; m < u.components; ++m) best = std::max(best, std::abs(acc[m]) * cell / nv);
        }
    }
    return best;
}

}  // namespace matchfluct
