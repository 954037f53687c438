#include "common.hpp"

#include "matchfluct/displacement.hpp"
#include "matchfluct/sobolev.hpp"

#include <map>

namespace matchfluct {

using namespace detail;

namespace {

// Z_eps - grad u_eps on the torus grid, or its renormalized d = 2 form
//   Z_eps - mu_eps grad u_1(0) - (grad u_eps - grad u_1(0)).
// Node fields are cached per scale so several (p, gamma) pairs reuse them.
class DecaySampler : public FieldSampler {
public:
    DecaySampler(const TorusGridSolver& g, int d, std::vector<Vec> weights, bool renormalized, const Vec& g1)
        : g_(g), d_(d), w_(std::move(weights)), renorm_(renormalized), g1_(g1) {}

    int dim() const override { return d_; }
    int components() const override { return d_; }
    double grid_spacing() const override { return g_.spacing(); }

    void sample(double eps, const Lattice& lat, std::vector<double>& out) const override {
        const std::vector<double>& f = field(eps);
        const int n = g_.n(), d = d_;
        const double h = g_.spacing(), L = h * n;
        out.assign(lat.size() * d, 0.0);
        for (std::size_t i = 0; i < lat.size(); ++i) {
            Vec x = lat.point(i);
            std::size_t idx = 0;
            for (int a = 0; a < d; ++a) {
                long k = std::lround((x[a] + 0.5 * L) / h);
                idx = idx * n + static_cast<std::size_t>(((k % n) + n) % n);
            }
            for (int a = 0; a < d; ++a) out[i * d + a] = f[3 * idx + a];
        }
    }

private:
    const TorusGridSolver& g_;
    int d_;
    std::vector<Vec> w_;
    bool renorm_;
    Vec g1_;
    mutable std::map<double, std::vector<double>> cache_;

    const std::vector<double>& field(double eps) const {
        auto it = cache_.find(eps);
        if (it != cache_.end()) return it->second;
        std::vector<double> z, gu, mu;
        g_.smooth(eps, w_, z);
        g_.grad(eps, gu);
        if (renorm_) g_.density(eps, mu);
        for (std::size_t idx = 0; idx < g_.nodes(); ++idx)
            for (int a = 0; a < 3; ++a) {
                double v = z[3 * idx + a] - gu[3 * idx + a];
                if (renorm_) v += (1.0 - mu[idx]) * g1_[a];
                z[3 * idx + a] = v;
            }
        return cache_.emplace(eps, std::move(z)).first->second;
    }
};

int grid_nodes(const ExperimentSpec& spec, double L, double R) {
    if (spec.grid > 0) return static_cast<int>(spec.grid);
    // at least 48 nodes so the Ewald split fits in the cell
    int n = std::max(48, static_cast<int>(std::ceil(4.0 * L * R)));
    return n + (n % 2);
}

}  // namespace

ExperimentSummary sobolev_decay_scan(const ExperimentSpec& spec) {
    Stopwatch sw;
    ExperimentSummary s = start_summary(spec);
    const int d = spec.d;
    if (d < 2) throw UsageError("sobolev_decay_scan needs d >= 2");
    const std::string variant = spec.variant.empty() ? (d == 2 ? "renormalized" : "mollified") : spec.variant;
    if (variant != "mollified" && variant != "renormalized") throw UsageError("unknown variant '" + variant + "'");
    if (variant == "renormalized" && d != 2) throw UsageError("the renormalized variant is defined for d = 2");
    const bool renorm = variant == "renormalized";
    s.extra["variant"] = variant;
    s.extra["h_units"] = "matching cell size is h / R";

    const std::string fname = spec.functions.empty() ? "grad_bump:2" : spec.functions.front();
    const TestFunction f = parse_test_function(fname, d);
    const bool law_check = d == 3 || norm2(f.integral(), d) < 1e-24;
    GffCovariance target;
    if (law_check) {
        target = gff_variance(f, d);
        s.extra["final_law_target"] = {{"function", fname}, {"value", target.value}};
    }

    const std::size_t ng = spec.gamma.size(), np = spec.p.size();
    std::uint64_t cell = 0;
    for (double L : spec.L) {
        // per R: mean norm for each (p, gamma) and its replicas
        std::vector<double> logR;
        std::vector<std::vector<MeanSE>> means;
        for (double R : spec.R) {
            const TorusDomain dom(d, L);
            const double h = spec.h.front() / R;
            const int n = grid_nodes(spec, L, R);
            const double t = 1.0 / R;
            int nsc = std::max(2, 1 + static_cast<int>(std::lround(4.0 * std::log2(R))));
            // layout: [norm per (p, gamma)][head per (p, gamma)][Z(f)]
            std::vector<std::vector<double>> out(spec.replicas);
            parallel_for(spec.replicas, [&](std::size_t rep) {
                PointCloud c = sample_binomial(dom, R, replica_seed(spec.seed, cell, rep));
                TransportPlan plan = optimal_matching(c, h, spec.mode);
                DisplacementObservable Z(plan, R);
                const double w = std::pow(R, 0.5 * d);
                std::vector<Vec> wts = Z.atom_displacement();
                for (auto& v : wts)
                    for (auto& x : v) x *= w;
                Vec g1{0.0, 0.0, 0.0};
                if (renorm) {
                    AtomicPoisson ap(c);
                    g1 = ap.grad_fast(1.0, Vec{0.0, 0.0, 0.0});
                }
                TorusGridSolver grid(c, n, 1.0);
                DecaySampler u(grid, d, std::move(wts), renorm, g1);
                std::vector<double> v(2 * np * ng + 1, 0.0);
                for (std::size_t ip = 0; ip < np; ++ip)
                    for (std::size_t ig = 0; ig < ng; ++ig) {
                        NormSpec ns;
                        ns.p = spec.p[ip];
                        ns.gamma = spec.gamma[ig];
                        ns.ell = spec.ell;
                        ns.n_scales = nsc;
                        NormEstimate e = mollified_field_norm(u, ns, t);
                        v[ip * ng + ig] = e.total;
                        v[np * ng + ip * ng + ig] = e.head;
                    }
                if (law_check) v[2 * np * ng] = Z.apply([&](const Vec& x) { return f.eval(x); });
                out[rep] = std::move(v);
            }, spec.threads);

            logR.push_back(std::log(R));
            means.emplace_back();
            for (std::size_t ip = 0; ip < np; ++ip)
                for (std::size_t ig = 0; ig < ng; ++ig) {
                    const double p = spec.p[ip], g = spec.gamma[ig];
                    const std::string tag = "[gamma=" + format_number(g) + "]";
                    MeanSE m = mean_se(column(out, ip * ng + ig));
                    means.back().push_back(m);
                    add_row(s, "norm" + tag, L, R, t, p, m.mean, m.se, m.count);
                    add_mean_row(s, "head" + tag, L, R, t, p, column(out, np * ng + ip * ng + ig));
                    if (d == 3) {
                        double pred = std::pow(R, -0.5 * p) * (1.0 + std::pow(R, p * (1.0 - g)));
                        add_row(s, "predicted_shape" + tag, L, R, t, p, pred, 0.0, 0);
                    } else {
                        double lr = std::log(std::max(R * spec.ell, 2.0)) / R;
                        add_row(s, "predicted_shape" + tag, L, R, t, p, std::pow(lr, p) * (1.0 + std::pow(R, p * (1.0 - g))),
                                0.0, 0);
                    }
                }
            if (law_check) {
                std::vector<double> zf = column(out, 2 * np * ng);
                MeanSE m = mean_se(zf);
                MeanSE v = variance_se(zf);
                add_row(s, "final_law:mean", L, R, kNaN, 2.0, m.mean, m.se, m.count);
                add_row(s, "final_law:variance", L, R, kNaN, 2.0, v.mean, v.se, v.count);
                add_row(s, "final_law:variance_ratio", L, R, kNaN, 2.0, v.mean / target.value, v.se / target.value, v.count);
            }
            ++cell;
        }
        // decay across R relative to the first R
        for (std::size_t ip = 0; ip < np; ++ip)
            for (std::size_t ig = 0; ig < ng; ++ig) {
                const double p = spec.p[ip], g = spec.gamma[ig];
                const std::string tag = "[gamma=" + format_number(g) + "]";
                const std::size_t k = ip * ng + ig;
                const MeanSE& m0 = means.front()[k];
                std::vector<double> ly;
                bool decreasing = true;
                for (std::size_t j = 0; j < means.size(); ++j) {
                    const MeanSE& mj = means[j][k];
                    ly.push_back(std::log(mj.mean));
                    if (j > 0) {
                        double ratio = mj.mean / m0.mean;
                        double se = ratio * std::hypot(mj.se / mj.mean, m0.se / m0.mean);
                        add_row(s, "norm_ratio" + tag, L, spec.R[j], 1.0 / spec.R[j], p, ratio, se, mj.count);
                        decreasing = decreasing && mj.mean < means[j - 1][k].mean;
                    }
                }
                add_row(s, "monotone_decreasing" + tag, L, kNaN, kNaN, p, decreasing ? 1.0 : 0.0, kNaN, means.size());
                if (means.size() >= 2)
                    s.fits.push_back(fit_record("log_norm_vs_log_R" + tag + "[p=" + format_number(p) + "]", "log R",
                                                "log E norm^p", L, kNaN, logR, ly));
            }
    }
    s.wall_time = sw.seconds();
    return s;
}

}  // namespace matchfluct
