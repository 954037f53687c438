#include "common.hpp"

#include "matchfluct/field.hpp"

#include <algorithm>

namespace matchfluct {

using namespace detail;

namespace {

void check_scales(const ExperimentSpec& spec, double L, double frac) {
    for (double r : spec.r)
        if (r > frac * L * (1.0 + 1e-12))
            throw UsageError(spec.scan + ": scale r = " + format_number(r) + " exceeds L/" + format_number(1.0 / frac));
}

// 1D W_2 distance between the empirical law of x and N(0, s2), by sorted quantiles.
double w2_to_gaussian(std::vector<double> x, double s2) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size()), s = std::sqrt(s2);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double q = s * normal_quantile((i + 0.5) / n);
        acc += (x[i] - q) * (x[i] - q);
    }
    return std::sqrt(acc / n);
}

}  // namespace

ExperimentSummary moment_scan_W(const ExperimentSpec& spec) {
    Stopwatch sw;
    ExperimentSummary s = start_summary(spec);
    const int d = spec.d;
    const auto& m = Mollifier::get(d);
    std::uint64_t cell = 0;
    for (double L : spec.L)
        for (double R : spec.R) {
            check_scales(spec, L, 0.25);
            const TorusDomain dom(d, L);
            const double N = static_cast<double>(binomial_count(dom, R));
            const double w = std::pow(R, -0.5 * d);
            std::vector<std::vector<double>> W(spec.replicas);
            parallel_for(spec.replicas, [&](std::size_t rep) {
                PointCloud c = sample_binomial(dom, R, replica_seed(spec.seed, cell, rep));
                std::vector<double> acc(spec.r.size(), 0.0);
                for (const auto& X : c.points) {
                    double rad = std::sqrt(norm2(X, d));
                    for (std::size_t k = 0; k < spec.r.size(); ++k)
                        if (rad < spec.r[k]) acc[k] += m.radial(rad, spec.r[k]);
                }
                for (std::size_t k = 0; k < spec.r.size(); ++k) acc[k] = w * (acc[k] - N / dom.volume());
                W[rep] = std::move(acc);
            }, spec.threads);
            std::vector<double> lr, ly;
            for (std::size_t k = 0; k < spec.r.size(); ++k) {
                const double r = spec.r[k];
                std::vector<double> x = column(W, k), x2(x.size()), ax(x.size());
                for (std::size_t i = 0; i < x.size(); ++i) {
                    x2[i] = x[i] * x[i];
                    ax[i] = std::abs(x[i]);
                }
                add_mean_row(s, "mean", L, R, r, kNaN, x);
                MeanSE m2 = mean_se(x2);
                add_row(s, "second_moment", L, R, r, 2.0, m2.mean, m2.se, m2.count);
                // exact variance of the iid sum
                double oracle = w * w * N * (std::pow(r, -d) * m.lp_power(2.0) / dom.volume() - 1.0 / (dom.volume() * dom.volume()));
                add_row(s, "oracle_variance", L, R, r, 2.0, oracle, 0.0, 0);
                add_row(s, "variance_ratio", L, R, r, 2.0, m2.mean / oracle, m2.se / oracle, m2.count);
                for (double p : spec.p) add_pmoment_row(s, "moment", L, R, r, p, ax);
                lr.push_back(std::log(r));
                ly.push_back(0.5 * std::log(m2.mean));
            }
            if (lr.size() >= 2) s.fits.push_back(fit_record("rms_vs_r", "log r", "log E[W_r^2]^(1/2)", L, R, lr, ly));
            ++cell;
        }
    s.wall_time = sw.seconds();
    return s;
}

ExperimentSummary moment_scan_grad_u(const ExperimentSpec& spec) {
    Stopwatch sw;
    ExperimentSummary s = start_summary(spec);
    const int d = spec.d;
    std::uint64_t cell = 0;
    for (double L : spec.L)
        for (double R : spec.R) {
            check_scales(spec, L, 0.25);
            const TorusDomain dom(d, L);
            const std::size_t nr = spec.r.size();
            // per replica: d components per scale, then |increment|^2 per scale
            std::vector<std::vector<double>> G(spec.replicas);
            parallel_for(spec.replicas, [&](std::size_t rep) {
                PointCloud c = sample_binomial(dom, R, replica_seed(spec.seed, cell, rep));
                AtomicPoisson ap(c);
                auto g = ap.grad_fast_multi(spec.r, Vec{0.0, 0.0, 0.0});
                std::vector<double> out;
                for (std::size_t k = 0; k < nr; ++k)
                    for (int a = 0; a < d; ++a) out.push_back(g[k][a]);
                for (std::size_t k = 0; k < nr; ++k) {
                    Vec x{spec.r[k], 0.0, 0.0};
                    Vec h = ap.grad_fast(spec.r[k], x);
                    double q = 0.0;
                    for (int a = 0; a < d; ++a) q += (h[a] - g[k][a]) * (h[a] - g[k][a]);
                    out.push_back(q);
                }
                G[rep] = std::move(out);
            }, spec.threads);
            std::vector<double> lx, ly, llx, lly;
            for (std::size_t k = 0; k < nr; ++k) {
                const double r = spec.r[k];
                std::vector<double> sq(spec.replicas, 0.0), ab(spec.replicas);
                for (int a = 0; a < d; ++a) {
                    std::vector<double> comp = column(G, k * d + a);
                    add_mean_row(s, "mean_" + std::to_string(a + 1), L, R, r, kNaN, comp);
                    for (std::size_t i = 0; i < comp.size(); ++i) sq[i] += comp[i] * comp[i];
                }
                for (std::size_t i = 0; i < sq.size(); ++i) ab[i] = std::sqrt(sq[i]);
                MeanSE m2 = mean_se(sq);
                add_row(s, "second_moment", L, R, r, 2.0, m2.mean, m2.se, m2.count);
                for (double p : spec.p) add_pmoment_row(s, "moment", L, R, r, p, ab);
                add_mean_row(s, "increment_sq", L, R, r, 2.0, column(G, nr * d + k));
                lx.push_back(std::log(L / r));
                ly.push_back(m2.mean);
                llx.push_back(std::log(r));
                lly.push_back(0.5 * std::log(m2.mean));
            }
            if (lx.size() >= 2) {
                if (d == 2)
                    s.fits.push_back(fit_record("second_moment_vs_log_L_over_r", "log(L/r)", "E|grad u_r(0)|^2", L, R, lx, ly));
                s.fits.push_back(fit_record("rms_vs_r", "log r", "log E|grad u_r(0)|^2^(1/2)", L, R, llx, lly));
            }
            ++cell;
        }
    s.wall_time = sw.seconds();
    return s;
}

ExperimentSummary clt_shift_scan(const ExperimentSpec& spec) {
    Stopwatch sw;
    ExperimentSummary s = start_summary(spec);
    std::uint64_t cell = 0;
    std::map<double, std::pair<std::vector<double>, std::vector<double>>> per_R;  // R -> (log L, sigma2)
    for (double L : spec.L)
        for (double R : spec.R) {
            if (L < 4.0) throw UsageError("clt_shift_scan needs L >= 4");
            const TorusDomain dom(2, L);
            std::vector<std::vector<double>> G(spec.replicas);
            parallel_for(spec.replicas, [&](std::size_t rep) {
                PointCloud c = sample_binomial(dom, R, replica_seed(spec.seed, cell, rep));
                AtomicPoisson ap(c);
                Vec g = ap.grad_fast(1.0, Vec{0.0, 0.0, 0.0});
                G[rep] = {g[0], g[1]};
            }, spec.threads);
            std::vector<double> g1 = column(G, 0), g2 = column(G, 1), half_sq(G.size()), cross(G.size());
            for (std::size_t i = 0; i < G.size(); ++i) {
                half_sq[i] = 0.5 * (g1[i] * g1[i] + g2[i] * g2[i]);
                cross[i] = g1[i] * g2[i];
            }
            MeanSE s2 = mean_se(half_sq);
            add_row(s, "sigma2", L, R, 1.0, 2.0, s2.mean, s2.se, s2.count);
            add_mean_row(s, "mean_1", L, R, 1.0, kNaN, g1);
            add_mean_row(s, "mean_2", L, R, 1.0, kNaN, g2);
            MeanSE cv = mean_se(cross);
            add_row(s, "cov12", L, R, 1.0, 2.0, cv.mean, cv.se, cv.count);
            add_row(s, "cov12_z", L, R, 1.0, 2.0, cv.se > 0.0 ? cv.mean / cv.se : 0.0, 0.0, cv.count);
            add_row(s, "w2_gauss_1", L, R, 1.0, 2.0, w2_to_gaussian(g1, s2.mean), kNaN, g1.size());
            add_row(s, "w2_gauss_2", L, R, 1.0, 2.0, w2_to_gaussian(g2, s2.mean), kNaN, g2.size());
            per_R[R].first.push_back(std::log(L));
            per_R[R].second.push_back(s2.mean);
            ++cell;
        }
    for (const auto& [R, xy] : per_R)
        if (xy.first.size() >= 2)
            s.fits.push_back(fit_record("sigma2_vs_log_L", "log L", "sigma2 = E|grad u_1(0)|^2 / 2", 0.0, R, xy.first, xy.second));
    s.wall_time = sw.seconds();
    return s;
}

ExperimentSummary gff_convergence_scan(const ExperimentSpec& spec) {
    Stopwatch sw;
    ExperimentSummary s = start_summary(spec);
    const int d = spec.d;
    const bool renorm = d == 2;
    std::vector<TestFunction> fs;
    for (const auto& name : spec.functions) fs.push_back(parse_test_function(name, d));
    std::vector<GffCovariance> targets;
    for (std::size_t i = 0; i < fs.size(); ++i) {
        targets.push_back(gff_variance(fs[i], d, renorm));
        s.extra["targets"][spec.functions[i]] = {{"value", targets.back().value},
                                                 {"coarse_value", targets.back().value_coarse},
                                                 {"quadrature_rel_change", targets.back().rel_change}};
    }
    std::uint64_t cell = 0;
    for (double L : spec.L)
        for (double R : spec.R) {
            const TorusDomain dom(d, L);
            std::vector<PeriodicPotential> pots;
            for (const auto& f : fs) {
                if (f.support_radius() > 0.25 * L) throw UsageError("test function support too large for the box");
                int n = static_cast<int>(spec.grid);
                if (n == 0) {
                    n = 8;
                    while (L / n > f.min_bump_radius() / 8.0 && n < (d == 3 ? 128 : 1024)) n *= 2;
                }
                pots.push_back(periodic_potential(f, dom, n, renorm));
            }
            const double w = std::pow(R, -0.5 * d);
            std::vector<std::vector<double>> V(spec.replicas);
            parallel_for(spec.replicas, [&](std::size_t rep) {
                PointCloud c = sample_binomial(dom, R, replica_seed(spec.seed, cell, rep));
                std::vector<double> out(fs.size(), 0.0);
                for (std::size_t i = 0; i < fs.size(); ++i) {
                    double acc = 0.0;
                    for (const auto& X : c.points) acc += pots[i].eval(X);
                    out[i] = w * acc;
                }
                V[rep] = std::move(out);
            }, spec.threads);
            for (std::size_t i = 0; i < fs.size(); ++i) {
                const std::string& fn = spec.functions[i];
                std::vector<double> x = column(V, i);
                const double target = targets[i].value;
                add_mean_row(s, fn + ":mean", L, R, kNaN, kNaN, x);
                MeanSE var = variance_se(x);
                add_row(s, fn + ":variance", L, R, kNaN, 2.0, var.mean, var.se, var.count);
                add_row(s, fn + ":target", L, R, kNaN, 2.0, target, 0.0, 0);
                add_row(s, fn + ":target_periodic", L, R, kNaN, 2.0, pots[i].l2sq, 0.0, 0);
                add_row(s, fn + ":variance_ratio", L, R, kNaN, 2.0, var.mean / target, var.se / target, var.count);
                MeanSE k3 = third_cumulant(x);
                add_row(s, fn + ":third_cumulant", L, R, kNaN, 3.0, k3.mean, k3.se, k3.count);
                for (double lam : spec.lambda) {
                    std::vector<double> e(x.size());
                    for (std::size_t j = 0; j < x.size(); ++j) e[j] = std::exp(lam * x[j]);
                    MeanSE me = mean_se(e);
                    double ref = std::exp(0.5 * lam * lam * target);
                    add_row(s, fn + ":mgf_ratio", L, R, lam, kNaN, me.mean / ref, me.se / ref, me.count);
                }
            }
            ++cell;
        }
    if (spec.z_replicas > 0) {
        // displacement side on the first cell
        const double L = spec.L.front(), R = spec.R.front();
        const TorusDomain dom(d, L);
        std::vector<std::vector<double>> V(spec.z_replicas);
        parallel_for(spec.z_replicas, [&](std::size_t rep) {
            PointCloud c = sample_binomial(dom, R, replica_seed(spec.seed, 1000003, rep));
            TransportPlan plan = optimal_matching(c, spec.h.front(), spec.mode);
            const double w = std::pow(R, 0.5 * d);
            std::vector<double> out(fs.size(), 0.0);
            std::vector<Vec> agg(c.size(), Vec{0.0, 0.0, 0.0});
            for (const auto& t : plan.triples) {
                Vec v = plan.displacement(t);
                for (int a = 0; a < d; ++a) agg[t.i][a] += t.mass * v[a];
            }
            for (std::size_t i = 0; i < fs.size(); ++i) {
                Vec I = fs[i].integral();
                const auto& m = Mollifier::get(d);
                double acc = 0.0;
                for (std::size_t k = 0; k < c.size(); ++k) {
                    Vec f = fs[i].eval(c.points[k]);
                    if (renorm) {
                        double e = m.eval(c.points[k], 1.0);
                        for (int a = 0; a < d; ++a) f[a] -= e * I[a];
                    }
                    acc += dot(f, agg[k], d);
                }
                out[i] = w * acc;
            }
            V[rep] = std::move(out);
        }, spec.threads);
        for (std::size_t i = 0; i < fs.size(); ++i) {
            MeanSE var = variance_se(column(V, i));
            add_row(s, spec.functions[i] + ":z_variance", L, R, kNaN, 2.0, var.mean, var.se, var.count);
            add_row(s, spec.functions[i] + ":z_variance_ratio", L, R, kNaN, 2.0, var.mean / targets[i].value,
                    var.se / targets[i].value, var.count);
        }
    }
    s.wall_time = sw.seconds();
    return s;
}

}  // namespace matchfluct
