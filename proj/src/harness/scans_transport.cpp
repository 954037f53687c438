#include "common.hpp"

#include "matchfluct/displacement.hpp"
#include "matchfluct/field.hpp"

#include <algorithm>
#include <sstream>

namespace matchfluct {

using namespace detail;

namespace {

std::vector<Vec> evaluation_points(int d, double L, std::size_t count) {
    std::vector<Vec> pts;
    if (count == 1) return {Vec{0.0, 0.0, 0.0}};
    for (std::size_t m = 0; m < (1u << d); ++m) {
        Vec x{0.0, 0.0, 0.0};
        for (int a = 0; a < d; ++a)
            if (m >> a & 1u) x[a] = -0.5 * L;
        pts.push_back(x);
    }
    return pts;
}

// Largest dyadic scale whose local problem fits the exact solver at cell size h.
double feasible_rmax(int d, double L, double R, double h, std::size_t limit) {
    double best = 0.0;
    for (double r = 2.0; r <= L * (1 + 1e-12); r *= 2.0) {
        double cells = std::pow(r / h, d), atoms = 2.0 * std::pow(R * r, d) + 16.0;
        if (cells + atoms <= static_cast<double>(limit)) best = r;
    }
    return best;
}

std::string tagged(const std::string& q, std::size_t hi, double h) {
    return hi == 0 ? q : q + "[h=" + format_number(h) + "]";
}

}  // namespace

ExperimentSummary linearization_scan(const ExperimentSpec& spec) {
    Stopwatch sw;
    ExperimentSummary s = start_summary(spec);
    const int d = spec.d;
    const auto& m = Mollifier::get(d);
    const SolverOptions opt;
    std::uint64_t cell = 0;
    for (double L : spec.L)
        for (double R : spec.R) {
            for (double r : spec.r)
                if (r < 1.0 || r > L / 4.0 * (1 + 1e-12)) throw UsageError("linearization_scan needs 1 <= r <= L/4");
            const TorusDomain dom(d, L);
            const auto xs = evaluation_points(d, L, spec.x_points);
            const std::size_t nr = spec.r.size(), nx = xs.size();
            const double rmax = spec.theta_h > 0.0 ? feasible_rmax(d, L, R, spec.theta_h, opt.exact_limit) : 0.0;
            for (std::size_t hi = 0; hi < spec.h.size(); ++hi) {
                const double h = spec.h[hi];
                // layout per replica: [variant a: nr*nx][variant b: nr*nx][sup: nr][cost, gap, cs][rstar, hypstart]
                std::vector<std::vector<double>> out(spec.replicas);
                parallel_for(spec.replicas, [&](std::size_t rep) {
                    PointCloud c = sample_binomial(dom, R, replica_seed(spec.seed, cell, rep));
                    TransportPlan plan = optimal_matching(c, h, spec.mode);
                    DisplacementObservable Z(plan, R);
                    AtomicPoisson ap(c);
                    GradientSource u = GradientSource::atomic(ap);
                    std::vector<double> v;
                    for (auto var : {ResidualVariant::A, ResidualVariant::B})
                        for (double r : spec.r)
                            for (const auto& x : xs) v.push_back(linearization_residual(Z, u, m, r, x, var));
                    for (double r : spec.r) v.push_back(sup_displacement(Z, u, m, r));
                    v.push_back(plan.cost);
                    v.push_back(plan.gap);
                    v.push_back(plan.cs_residual);
                    if (rmax >= 2.0) {
                        ThetaResult th = theta_and_rstar(c, spec.theta_h, opt, rmax);
                        v.push_back(th.rstar);
                        double lhs = plan.cost / dom.volume();
                        double rhs = th.rstar * th.rstar * beta_rate(std::max(d, 2), L / th.rstar);
                        v.push_back(lhs <= rhs ? 1.0 : 0.0);
                    } else {
                        v.push_back(kNaN);
                        v.push_back(kNaN);
                    }
                    out[rep] = std::move(v);
                }, spec.threads);

                std::vector<double> lr, ly, lb;
                std::vector<double> shape;
                const std::size_t base_sup = 2 * nr * nx, base_meta = base_sup + nr;
                for (std::size_t k = 0; k < nr; ++k) {
                    const double r = spec.r[k];
                    for (int var = 0; var < 2; ++var) {
                        for (double p : spec.p) {
                            std::vector<double> per(spec.replicas, 0.0);
                            for (std::size_t i = 0; i < spec.replicas; ++i) {
                                for (std::size_t j = 0; j < nx; ++j) per[i] += std::pow(out[i][var * nr * nx + k * nx + j], p);
                                per[i] /= static_cast<double>(nx);
                            }
                            MeanSE mp = mean_se(per);
                            double val = std::pow(mp.mean, 1.0 / p);
                            double se = mp.mean > 0.0 ? val / (p * mp.mean) * mp.se : 0.0;
                            add_row(s, tagged(var == 0 ? "residual_a" : "residual_b", hi, h), L, R, r, p, val, se, mp.count);
                            if (var == 0 && p == spec.p.front()) {
                                lr.push_back(std::log(r));
                                ly.push_back(std::log(val));
                                double beta = d == 2 ? std::log1p(r) : 1.0;
                                lb.push_back(std::log(beta / r));
                                shape.push_back(val * r / beta);
                                add_row(s, tagged("shape_ratio", hi, h), L, R, r, p, val * r / beta, se * r / beta, mp.count);
                            }
                        }
                    }
                    add_mean_row(s, tagged("sup_displacement", hi, h), L, R, r, kNaN, column(out, base_sup + k));
                }
                add_mean_row(s, tagged("cost", hi, h), L, R, kNaN, kNaN, column(out, base_meta));
                add_mean_row(s, tagged("plan_gap", hi, h), L, R, kNaN, kNaN, column(out, base_meta + 1));
                add_mean_row(s, tagged("cs_residual", hi, h), L, R, kNaN, kNaN, column(out, base_meta + 2));
                if (rmax >= 2.0) {
                    std::vector<double> rs = column(out, base_meta + 3), hyp = column(out, base_meta + 4);
                    add_mean_row(s, tagged("rstar", hi, h), L, R, kNaN, kNaN, rs);
                    add_mean_row(s, tagged("hypothesis_start_holds", hi, h), L, R, kNaN, kNaN, hyp);
                    // quenched envelope: residual / (r_*^2 beta(r/r_*) / r) on replicas with r >= r_*
                    for (std::size_t k = 0; k < nr; ++k) {
                        const double r = spec.r[k];
                        std::vector<double> ratio;
                        for (std::size_t i = 0; i < spec.replicas; ++i) {
                            double rst = rs[i];
                            if (!(r >= rst && rst < L)) continue;
                            double env = rst * rst * (d == 2 ? std::log1p(r / rst) : 1.0) / r;
                            double res = 0.0;
                            for (std::size_t j = 0; j < nx; ++j) res = std::max(res, out[i][k * nx + j]);
                            ratio.push_back(res / env);
                        }
                        if (!ratio.empty()) {
                            add_mean_row(s, tagged("envelope_ratio", hi, h), L, R, r, kNaN, ratio);
                            add_row(s, tagged("envelope_ratio_max", hi, h), L, R, r, kNaN,
                                    *std::max_element(ratio.begin(), ratio.end()), kNaN, ratio.size());
                        }
                    }
                    s.extra["rstar_scales"] = {{"theta_h", spec.theta_h}, {"r_max", rmax}};
                }
                if (lr.size() >= 2) {
                    FitRecord f = fit_record(tagged("residual_vs_r", hi, h), "log r", "log E|residual_a|^p^(1/p)", L, R, lr, ly);
                    s.fits.push_back(f);
                    s.fits.push_back(fit_record(tagged("residual_vs_beta_over_r", hi, h), "log(beta(r)/r)",
                                                "log E|residual_a|^p^(1/p)", L, R, lb, ly));
                    double mx = *std::max_element(shape.begin(), shape.end()), mn = *std::min_element(shape.begin(), shape.end());
                    add_row(s, tagged("shape_max_over_min", hi, h), L, R, kNaN, spec.p.front(), mn > 0.0 ? mx / mn : kNaN, kNaN,
                            spec.replicas);
                }
            }
            ++cell;
        }
    s.wall_time = sw.seconds();
    return s;
}

ExperimentSummary concentration_scan(const ExperimentSpec& spec) {
    Stopwatch sw;
    ExperimentSummary s = start_summary(spec);
    const int d = spec.d;
    if (d < 2) throw UsageError("concentration_scan needs d >= 2");
    const SolverOptions opt;
    const double h = spec.h.front();
    std::uint64_t cell = 0;
    for (double L : spec.L)
        for (double R : spec.R) {
            for (double r : spec.r) {
                double l2 = std::log2(r);
                if (std::abs(l2 - std::round(l2)) > 1e-12 || r > L / 2.0 * (1 + 1e-12))
                    throw UsageError("concentration_scan needs dyadic r <= L/2");
            }
            const TorusDomain dom(d, L);
            const std::size_t N = binomial_count(dom, R);
            const std::size_t nr = spec.r.size();
            const double rmax = spec.theta_h > 0.0 ? feasible_rmax(d, L, R, spec.theta_h, opt.exact_limit) : 0.0;
            // layout: [count: nr][normalized cost: nr][theta, rstar]
            std::vector<std::vector<double>> out(spec.replicas);
            parallel_for(spec.replicas, [&](std::size_t rep) {
                PointCloud c = sample_binomial(dom, R, replica_seed(spec.seed, cell, rep));
                std::vector<double> v;
                const Vec origin{0.0, 0.0, 0.0};
                for (double r : spec.r) v.push_back(static_cast<double>(restrict_cube(c, r, origin).count()));
                for (double r : spec.r) {
                    double rd = std::pow(r, d);
                    v.push_back(local_wasserstein_sq(c, r, origin, h, opt) / (rd * beta_rate(d, rd)));
                }
                if (rmax >= 2.0) {
                    ThetaResult th = theta_and_rstar(c, spec.theta_h, opt, rmax);
                    v.push_back(th.theta);
                    v.push_back(th.rstar);
                } else {
                    v.push_back(kNaN);
                    v.push_back(kNaN);
                }
                out[rep] = std::move(v);
            }, spec.threads);

            std::vector<double> chx, chy;
            for (std::size_t k = 0; k < nr; ++k) {
                const double r = spec.r[k];
                const double pr = std::pow(r / L, d);
                std::vector<double> counts = column(out, k);
                std::vector<double> hist(N + 1, 0.0), prob(N + 1, 0.0);
                for (double c : counts) hist[static_cast<std::size_t>(c)] += 1.0;
                for (std::size_t n = 0; n <= N; ++n) prob[n] = binomial_pmf(N, n, pr);
                ChiSquare cs = chi_square_gof(hist, prob);
                add_row(s, "chi2_statistic", L, R, r, kNaN, cs.statistic, kNaN, counts.size());
                add_row(s, "chi2_dof", L, R, r, kNaN, cs.dof, kNaN, counts.size());
                add_row(s, "chi2_p_value", L, R, r, kNaN, cs.p_value, kNaN, counts.size());
                // Chernoff guard
                const double vol = std::pow(R * r, d);
                std::vector<double> outside(counts.size());
                for (std::size_t i = 0; i < counts.size(); ++i) {
                    double q = counts[i] / vol;
                    outside[i] = (q < 0.5 || q > 2.0) ? 1.0 : 0.0;
                }
                MeanSE fo = mean_se(outside);
                add_row(s, "chernoff_frequency", L, R, r, kNaN, fo.mean, fo.se, fo.count);
                if (fo.mean > 0.0) {
                    chx.push_back(std::pow(r, d));
                    chy.push_back(std::log(fo.mean));
                }
                // tail of the normalized cost
                std::vector<double> th = column(out, nr + k);
                MeanSE mt = mean_se(th);
                add_row(s, "normalized_cost", L, R, r, kNaN, mt.mean, mt.se, mt.count);
                const double step = 0.5 * mt.mean;
                std::vector<double> mx, my;
                nlohmann::json table = nlohmann::json::array();
                for (int j = 1; step > 0.0; ++j) {
                    double M = j * step;
                    std::size_t exceed = 0;
                    for (double t : th) exceed += t >= M;
                    if (exceed < 10) break;
                    double fr = static_cast<double>(exceed) / th.size();
                    add_row(s, "tail_frequency:M=" + format_number(M), L, R, r, kNaN, fr,
                            std::sqrt(fr * (1.0 - fr) / th.size()), exceed);
                    table.push_back({{"M", M}, {"exceedances", exceed}, {"frequency", fr}});
                    mx.push_back(M);
                    my.push_back(std::log(fr));
                }
                std::ostringstream key;
                key << "tail_table_L" << format_number(L) << "_R" << format_number(R) << "_r" << format_number(r);
                s.extra[key.str()] = table;
                if (mx.size() >= 3) s.fits.push_back(fit_record("tail_log_frequency_vs_M_r=" + format_number(r), "M",
                                                                "log P[normalized cost >= M]", L, R, mx, my));
            }
            if (chx.size() >= 2)
                s.fits.push_back(fit_record("chernoff_log_frequency_vs_volume", "r^d", "log P[mu(Q_r)/r^d outside [1/2,2]]", L,
                                            R, chx, chy));
            if (rmax >= 2.0) {
                std::vector<double> theta = column(out, 2 * nr), rs = column(out, 2 * nr + 1), em(rs.size());
                for (std::size_t i = 0; i < rs.size(); ++i) {
                    double b = d == 2 ? std::log1p(rs[i]) : 1.0;
                    em[i] = std::exp(spec.rate_c * rs[i] * rs[i] / b);
                }
                add_mean_row(s, "theta_L", L, R, kNaN, kNaN, theta);
                add_mean_row(s, "rstar", L, R, kNaN, kNaN, rs);
                add_mean_row(s, "rstar_exp_moment", L, R, spec.rate_c, kNaN, em);
                std::sort(rs.begin(), rs.end());
                s.extra["rstar_quantiles_L" + format_number(L)] = {
                    {"q50", rs[rs.size() / 2]}, {"q90", rs[rs.size() * 9 / 10]}, {"max", rs.back()}, {"r_max", rmax}};
            }
            ++cell;
        }
    s.wall_time = sw.seconds();
    return s;
}

ExperimentSummary bridge_scan(const ExperimentSpec& spec) {
    Stopwatch sw;
    ExperimentSummary s = start_summary(spec);
    s.spec.d = 1;
    const std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};
    const std::vector<std::pair<double, double>> pairs{{0.5, 0.5}, {0.25, 0.75}, {0.25, 0.25}, {0.75, 0.75}, {0.25, 0.5},
                                                       {0.5, 0.75}, {0.0, 0.5}};
    std::uint64_t cell = 0;
    for (double nd : spec.n) {
        const std::size_t n = static_cast<std::size_t>(std::llround(nd));
        if (n < 4) throw UsageError("bridge_scan needs n >= 4");
        std::vector<std::vector<double>> out(spec.replicas);
        parallel_for(spec.replicas, [&](std::size_t rep) {
            SortedMatching1D sm = sorted_matching_1d(n, replica_seed(spec.seed, cell, rep));
            std::vector<double> v;
            for (double t : times) {
                std::size_t i = static_cast<std::size_t>(std::llround(t * n));
                v.push_back(i == 0 ? 0.0 : sm.path[i - 1]);
            }
            v.push_back(sm.sorted[n / 2 - 1]);  // X_(n/2)
            v.push_back(sm.cost);
            out[rep] = std::move(v);
        }, spec.threads);
        auto idx = [&](double t) {
            return static_cast<std::size_t>(std::find(times.begin(), times.end(), t) - times.begin());
        };
        double maxdev = 0.0;
        for (const auto& [a, b] : pairs) {
            std::vector<double> xa = column(out, idx(a)), xb = column(out, idx(b)), prod(xa.size());
            MeanSE ma = mean_se(xa), mb = mean_se(xb);
            for (std::size_t i = 0; i < xa.size(); ++i) prod[i] = (xa[i] - ma.mean) * (xb[i] - mb.mean);
            MeanSE c = mean_se(prod);
            double cov = c.mean * xa.size() / std::max<double>(1.0, xa.size() - 1.0);
            double target = std::min(a, b) - a * b;
            std::string tag = "(" + format_number(a) + "," + format_number(b) + ")";
            add_row(s, "cov" + tag, nd, kNaN, kNaN, kNaN, cov, c.se, c.count);
            add_row(s, "cov_target" + tag, nd, kNaN, kNaN, kNaN, target, 0.0, 0);
            maxdev = std::max(maxdev, std::abs(cov - target));
        }
        add_row(s, "max_abs_deviation", nd, kNaN, kNaN, kNaN, maxdev, kNaN, spec.replicas);
        std::vector<double> mid = column(out, times.size());
        MeanSE mm = mean_se(mid);
        add_row(s, "order_statistic_mean", nd, kNaN, static_cast<double>(n / 2), kNaN, mm.mean, mm.se, mm.count);
        add_row(s, "order_statistic_target", nd, kNaN, static_cast<double>(n / 2), kNaN, (n / 2) / (n + 1.0), 0.0, 0);
        add_mean_row(s, "cost", nd, kNaN, kNaN, kNaN, column(out, times.size() + 1));
        ++cell;
    }
    s.wall_time = sw.seconds();
    return s;
}

}  // namespace matchfluct
