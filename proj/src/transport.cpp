#include "matchfluct/transport.hpp"

#include <algorithm>
#include <charconv>
#include <string_view>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>

namespace matchfluct {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t ipow(std::size_t b, int e) {
    std::size_t r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

void check_balance(const AtomicMeasure& a, const AtomicMeasure& b) {
    if (a.domain.d != b.domain.d) throw UsageError("measures live in different dimensions");
    double ta = a.total(), tb = b.total();
    if (std::abs(ta - tb) > 1e-9 * std::max(ta, tb)) throw UsageError("mass mismatch between source and target");
    for (double m : a.masses)
        if (!(m > 0.0)) throw UsageError("atomic masses must be positive");
    for (double m : b.masses)
        if (!(m > 0.0)) throw UsageError("atomic masses must be positive");
}

TransportPlan make_plan(const AtomicMeasure& s, const AtomicMeasure& t, SolverMode mode) {
    TransportPlan p;
    p.source = s;
    p.target = t;
    p.solver = mode;
    return p;
}

void add_triple(TransportPlan& plan, std::size_t i, std::size_t j, double mass) {
    Triple tr;
    tr.i = i;
    tr.j = j;
    tr.mass = mass;
    tr.sqdist = pair_cost(plan.source.points[i], plan.target.points[j], plan.source.domain, plan.source.periodic, &tr.shift);
    plan.cost += mass * tr.sqdist;
    plan.triples.push_back(tr);
}

// ---------------------------------------------------------------- successive shortest paths

TransportPlan solve_exact(const AtomicMeasure& S, const AtomicMeasure& T) {
    const std::size_t nS = S.size(), nT = T.size(), V = nS + nT;
    std::vector<double> C(nS * nT);
    for (std::size_t i = 0; i < nS; ++i)
        for (std::size_t j = 0; j < nT; ++j) C[i * nT + j] = pair_cost(S.points[i], T.points[j], S.domain, S.periodic);
    std::vector<double> sup = S.masses, dem = T.masses;
    double mmax = 0.0;
    for (double m : sup) mmax = std::max(mmax, m);
    for (double m : dem) mmax = std::max(mmax, m);
    const double tol = 1e-13 * mmax;
    std::vector<double> flow(nS * nT, 0.0), pi(V, 0.0), dist(V);
    std::vector<int> parent(V);
    std::vector<char> done(V);
    using Item = std::pair<double, std::size_t>;
    for (;;) {
        bool active = false;
        for (double s : sup) active |= s > tol;
        if (!active) break;
        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(parent.begin(), parent.end(), -1);
        std::fill(done.begin(), done.end(), 0);
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
        for (std::size_t i = 0; i < nS; ++i)
            if (sup[i] > tol) {
                dist[i] = 0.0;
                pq.push({0.0, i});
            }
        std::size_t sink = V;
        while (!pq.empty()) {
            auto [dv, v] = pq.top();
            pq.pop();
            if (done[v] || dv > dist[v]) continue;
            done[v] = 1;
            if (v < nS) {
                const double* row = &C[v * nT];
                for (std::size_t j = 0; j < nT; ++j) {
                    std::size_t w = nS + j;
                    if (done[w]) continue;
                    double nd = dv + std::max(0.0, row[j] + pi[v] - pi[w]);
                    if (nd < dist[w]) {
                        dist[w] = nd;
                        parent[w] = static_cast<int>(v);
                        pq.push({nd, w});
                    }
                }
            } else {
                std::size_t j = v - nS;
                if (dem[j] > tol) {
                    sink = v;
                    break;
                }
                for (std::size_t i = 0; i < nS; ++i) {
                    if (done[i] || flow[i * nT + j] <= tol) continue;
                    double nd = dv + std::max(0.0, -C[i * nT + j] + pi[v] - pi[i]);
                    if (nd < dist[i]) {
                        dist[i] = nd;
                        parent[i] = static_cast<int>(v);
                        pq.push({nd, i});
                    }
                }
            }
        }
        if (sink == V) throw Error("transport solver found no augmenting path (unbalanced input?)");
        const double D = dist[sink];
        for (std::size_t v = 0; v < V; ++v) pi[v] += done[v] ? std::min(dist[v], D) : D;
        // bottleneck along the path
        double delta = dem[sink - nS];
        std::size_t v = sink;
        while (parent[v] >= 0) {
            std::size_t u = static_cast<std::size_t>(parent[v]);
            if (u >= nS) delta = std::min(delta, flow[v * nT + (u - nS)]);  // reverse arc target u -> source v
            v = u;
        }
        delta = std::min(delta, sup[v]);
        sup[v] -= delta;
        dem[sink - nS] -= delta;
        v = sink;
        while (parent[v] >= 0) {
            std::size_t u = static_cast<std::size_t>(parent[v]);
            if (u < nS)
                flow[u * nT + (v - nS)] += delta;
            else
                flow[v * nT + (u - nS)] -= delta;
            v = u;
        }
    }
    TransportPlan plan = make_plan(S, T, SolverMode::Exact);
    for (std::size_t i = 0; i < nS; ++i)
        for (std::size_t j = 0; j < nT; ++j)
            if (flow[i * nT + j] > tol) add_triple(plan, i, j, flow[i * nT + j]);
    return plan;
}

// ---------------------------------------------------------------- auction

// Persons have unit multiplicity; object o owns cap[o] slots, each with its own price, kept in a
// min-heap so a bid always displaces the cheapest slot.
class Auction {
public:
    Auction(std::size_t persons, const std::vector<std::size_t>& cap) : P_(persons), cap_(cap) {
        off_.assign(cap.size() + 1, 0);
        for (std::size_t o = 0; o < cap.size(); ++o) off_[o + 1] = off_[o] + cap[o];
        if (off_.back() != persons) throw Error("auction capacities do not match the number of persons");
        price_.assign(persons, 0.0);
        owner_.assign(persons, -1);
        held_.assign(persons, -1);
        slot_.assign(persons, 0);
    }

    double min_price(std::size_t o) const { return price_[off_[o]]; }
    double second_price(std::size_t o) const {
        std::size_t c = cap_[o];
        if (c < 2) return kInf;
        double s = price_[off_[o] + 1];
        if (c > 2) s = std::min(s, price_[off_[o] + 2]);
        return s;
    }
    int held(std::size_t p) const { return held_[p]; }
    double paid(std::size_t p) const { return price_[slot_[p]]; }
    std::size_t persons() const { return P_; }
    std::size_t objects() const { return cap_.size(); }
    double price_sum() const { return std::accumulate(price_.begin(), price_.end(), 0.0); }

    // One epsilon phase.  prov.scan(p, f) calls f(o, cost) for the candidates of p; prov.cost(o, p).
    template <class Prov>
    void phase(const Prov& prov, double eps, double fallback_gap) {
        std::vector<std::size_t> stack;
        stack.reserve(P_);
        for (std::size_t p = 0; p < P_; ++p) {
            if (held_[p] >= 0) {
                double best = -kInf;
                prov.scan(p, [&](std::size_t o, double c) { best = std::max(best, -c - min_price(o)); });
                double mine = -prov.cost(static_cast<std::size_t>(held_[p]), p) - paid(p);
                if (mine >= best - eps) continue;
                owner_[slot_[p]] = -1;
                held_[p] = -1;
            }
            stack.push_back(p);
        }
        while (!stack.empty()) {
            std::size_t p = stack.back();
            stack.pop_back();
            double b1 = -kInf, b2 = -kInf, c1 = 0.0;
            std::size_t o1 = 0;
            prov.scan(p, [&](std::size_t o, double c) {
                double v = -c - min_price(o);
                if (v > b1) {
                    b2 = b1;
                    b1 = v;
                    o1 = o;
                    c1 = c;
                } else if (v > b2) {
                    b2 = v;
                }
            });
            if (b1 == -kInf) throw Error("auction person without candidates");
            b2 = std::max(b2, -c1 - second_price(o1));
            if (b2 == -kInf) b2 = b1 - fallback_gap;
            double inc = b1 - b2 + eps;
            std::size_t root = off_[o1];
            int q = owner_[root];
            if (q >= 0) {
                held_[q] = -1;
                stack.push_back(static_cast<std::size_t>(q));
            }
            owner_[root] = static_cast<int>(p);
            price_[root] += inc;
            held_[p] = static_cast<int>(o1);
            slot_[p] = root;
            sift_down(o1);
        }
    }

private:
    std::size_t P_;
    std::vector<std::size_t> cap_, off_;
    std::vector<double> price_;
    std::vector<int> owner_;
    std::vector<int> held_;
    std::vector<std::size_t> slot_;

    void place(std::size_t s, double pr, int ow) {
        price_[s] = pr;
        owner_[s] = ow;
        if (ow >= 0) slot_[static_cast<std::size_t>(ow)] = s;
    }

    void sift_down(std::size_t o) {
        const std::size_t base = off_[o], n = cap_[o];
        std::size_t k = 0;
        double pr = price_[base];
        int ow = owner_[base];
        for (;;) {
            std::size_t c = 2 * k + 1;
            if (c >= n) break;
            if (c + 1 < n && price_[base + c + 1] < price_[base + c]) ++c;
            if (price_[base + c] >= pr) break;
            place(base + k, price_[base + c], owner_[base + c]);
            k = c;
        }
        place(base + k, pr, ow);
    }
};

struct AuctionStats {
    double primal = 0.0;  // sum of costs of held objects
    double dual = 0.0;    // sum_p pi_p + sum of slot prices (benefit form)
    double cs = 0.0;
};

template <class Prov>
AuctionStats auction_stats(const Auction& a, const Prov& prov, std::vector<double>* pi_out = nullptr) {
    AuctionStats st;
    double pis = 0.0;
    if (pi_out) pi_out->assign(a.persons(), 0.0);
    for (std::size_t p = 0; p < a.persons(); ++p) {
        double best = -kInf;
        prov.scan(p, [&](std::size_t o, double c) { best = std::max(best, -c - a.min_price(o)); });
        double c = prov.cost(static_cast<std::size_t>(a.held(p)), p);
        st.primal += c;
        pis += best;
        st.cs = std::max(st.cs, best - (-c - a.paid(p)));
        if (pi_out) (*pi_out)[p] = best;
    }
    st.dual = pis + a.price_sum();
    return st;
}

std::vector<double> eps_schedule(double start, double final_eps) {
    std::vector<double> e;
    double x = std::max(start, final_eps);
    for (;;) {
        e.push_back(x);
        if (x <= final_eps) break;
        x = std::max(x / 4.0, final_eps);
    }
    return e;
}

// Integer multiplicities of the masses in units of q, or empty when not commensurate.
std::vector<std::size_t> multiplicities(const std::vector<double>& m, double q) {
    std::vector<std::size_t> out;
    for (double x : m) {
        double r = x / q, rr = std::round(r);
        if (rr < 1.0 || std::abs(r - rr) > 1e-9 * rr) return {};
        out.push_back(static_cast<std::size_t>(rr));
    }
    return out;
}

struct DenseProvider {
    const std::vector<double>* C;  // objects x persons
    std::size_t P;
    std::size_t O;
    template <class F>
    void scan(std::size_t p, F&& f) const {
        for (std::size_t o = 0; o < O; ++o) f(o, (*C)[o * P + p]);
    }
    double cost(std::size_t o, std::size_t p) const { return (*C)[o * P + p]; }
};

TransportPlan solve_auction(const AtomicMeasure& S, const AtomicMeasure& T, const SolverOptions& opt) {
    double q = std::min(*std::min_element(S.masses.begin(), S.masses.end()),
                        *std::min_element(T.masses.begin(), T.masses.end()));
    std::vector<std::size_t> capS, capT;
    for (int div = 1; div <= 64 && (capS.empty() || capT.empty()); ++div) {
        capS = multiplicities(S.masses, q / div);
        capT = multiplicities(T.masses, q / div);
        if (!capS.empty() && !capT.empty()) q /= div;
    }
    if (capS.empty() || capT.empty()) throw UsageError("auction mode needs commensurate masses");
    // persons: expanded target units; objects: sources with capacities
    std::vector<std::size_t> owner_of_unit;
    for (std::size_t j = 0; j < T.size(); ++j)
        for (std::size_t u = 0; u < capT[j]; ++u) owner_of_unit.push_back(j);
    const std::size_t P = owner_of_unit.size(), O = S.size();
    std::vector<double> C(O * P);
    double cmax = 0.0;
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t p = 0; p < P; ++p) {
            C[o * P + p] = pair_cost(S.points[o], T.points[owner_of_unit[p]], S.domain, S.periodic);
            cmax = std::max(cmax, C[o * P + p]);
        }
    // Real-valued costs admit no separation bound, so the default is a tiny relative epsilon.
    const double fin = opt.final_eps > 0.0 ? opt.final_eps : 1e-10 * std::max(cmax, 1e-300) / static_cast<double>(P);
    Auction a(P, capS);
    DenseProvider prov{&C, P, O};
    for (double e : eps_schedule(std::max(cmax / 8.0, fin), fin)) a.phase(prov, e, cmax + 1.0);
    AuctionStats st = auction_stats(a, prov);
    TransportPlan plan = make_plan(S, T, SolverMode::Auction);
    std::vector<double> agg(O * T.size(), 0.0);
    for (std::size_t p = 0; p < P; ++p) agg[static_cast<std::size_t>(a.held(p)) * T.size() + owner_of_unit[p]] += q;
    for (std::size_t i = 0; i < O; ++i)
        for (std::size_t j = 0; j < T.size(); ++j)
            if (agg[i * T.size() + j] > 0.0) add_triple(plan, i, j, agg[i * T.size() + j]);
    plan.gap = std::max(0.0, (st.dual + st.primal)) * q;
    plan.cs_residual = st.cs;
    plan.final_eps = fin;
    return plan;
}

// ---------------------------------------------------------------- entropic

TransportPlan solve_entropic(const AtomicMeasure& S, const AtomicMeasure& T, const SolverOptions& opt) {
    const std::size_t n = S.size(), m = T.size();
    std::vector<double> C(n * m);
    double cmax = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            C[i * m + j] = pair_cost(S.points[i], T.points[j], S.domain, S.periodic);
            cmax = std::max(cmax, C[i * m + j]);
        }
    const double lam = opt.entropic_reg * std::max(cmax, 1e-12);
    const auto& a = S.masses;
    const auto& b = T.masses;
    const double total = S.total();
    std::vector<double> f(n, 0.0), g(m, 0.0);
    auto lse_row = [&](std::size_t i) {
        double mx = -kInf;
        for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, (g[j] - C[i * m + j]) / lam);
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += b[j] * std::exp((g[j] - C[i * m + j]) / lam - mx);
        return mx + std::log(s);
    };
    auto lse_col = [&](std::size_t j) {
        double mx = -kInf;
        for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, (f[i] - C[i * m + j]) / lam);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a[i] * std::exp((f[i] - C[i * m + j]) / lam - mx);
        return mx + std::log(s);
    };
    // plan P_ij = a_i b_j exp((f_i + g_j - C_ij)/lam)
    std::vector<double> Pm(n * m);
    auto build = [&] {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) Pm[i * m + j] = a[i] * b[j] * std::exp((f[i] + g[j] - C[i * m + j]) / lam);
    };
    for (int it = 0; it < opt.entropic_max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) f[i] = -lam * lse_row(i);
        for (std::size_t j = 0; j < m; ++j) g[j] = -lam * lse_col(j);
        if (it % 10 == 9) {
            build();
            double err = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double r = 0.0;
                for (std::size_t j = 0; j < m; ++j) r += Pm[i * m + j];
                err += std::abs(r - a[i]);
            }
            if (err < 1e-12 * total) break;
        }
    }
    build();
    // round onto the transport polytope
    std::vector<double> r(n, 0.0), c(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += Pm[i * m + j];
        double x = s > 0.0 ? std::min(a[i] / s, 1.0) : 0.0;
        for (std::size_t j = 0; j < m; ++j) Pm[i * m + j] *= x;
    }
    for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += Pm[i * m + j];
        double y = s > 0.0 ? std::min(b[j] / s, 1.0) : 0.0;
        for (std::size_t i = 0; i < n; ++i) Pm[i * m + j] *= y;
    }
    double er = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += Pm[i * m + j];
        r[i] = std::max(0.0, a[i] - s);
        er += r[i];
    }
    for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += Pm[i * m + j];
        c[j] = std::max(0.0, b[j] - s);
    }
    if (er > 0.0)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) Pm[i * m + j] += r[i] * c[j] / er;
    TransportPlan plan = make_plan(S, T, SolverMode::Entropic);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (Pm[i * m + j] > 0.0) add_triple(plan, i, j, Pm[i * m + j]);
    // dual bound from the c-transform of f
    double dual = 0.0;
    for (std::size_t i = 0; i < n; ++i) dual += a[i] * f[i];
    for (std::size_t j = 0; j < m; ++j) {
        double gj = kInf;
        for (std::size_t i = 0; i < n; ++i) gj = std::min(gj, C[i * m + j] - f[i]);
        dual += b[j] * gj;
    }
    plan.gap = std::max(0.0, plan.cost - dual);
    return plan;
}

// ---------------------------------------------------------------- geometric auction for matchings

struct GridProvider {
    int d;
    int m;   // cells per axis
    int bc;  // cells per block side
    int nbk; // blocks per axis
    double h, L;
    bool shifted;  // candidate images stored relative to the block (valid when lists are local)
    const std::vector<Vec>* atoms;
    TorusDomain dom;
    std::vector<std::size_t> start;
    std::vector<std::size_t> obj;
    std::vector<Vec> img;

    Vec cell(std::size_t p) const {
        Vec y{0.0, 0.0, 0.0};
        for (int a = d - 1; a >= 0; --a) {
            y[a] = -0.5 * L + (static_cast<double>(p % m) + 0.5) * h;
            p /= m;
        }
        return y;
    }
    std::size_t block(std::size_t p) const {
        std::size_t ci[3] = {0, 0, 0};
        for (int a = d - 1; a >= 0; --a) {
            ci[a] = p % m;
            p /= m;
        }
        std::size_t b = 0;
        for (int a = 0; a < d; ++a) b = b * nbk + ci[a] / bc;
        return b;
    }
    template <class F>
    void scan(std::size_t p, F&& f) const {
        std::size_t b = block(p);
        Vec y = cell(p);
        if (shifted) {
            for (std::size_t k = start[b]; k < start[b + 1]; ++k) {
                const Vec& x = img[k];
                double s = 0.0;
                for (int a = 0; a < d; ++a) {
                    double t = x[a] - y[a];
                    s += t * t;
                }
                f(obj[k], s);
            }
        } else {
            for (std::size_t k = start[b]; k < start[b + 1]; ++k) f(obj[k], periodic_sqdist((*atoms)[obj[k]], y, dom));
        }
    }
    double cost(std::size_t o, std::size_t p) const { return periodic_sqdist((*atoms)[o], cell(p), dom); }

    void block_box(std::size_t b, Vec& center, double& halfdiag) const {
        std::size_t bi[3] = {0, 0, 0};
        for (int a = d - 1; a >= 0; --a) {
            bi[a] = b % nbk;
            b /= nbk;
        }
        double hd = 0.0;
        center = Vec{0.0, 0.0, 0.0};
        for (int a = 0; a < d; ++a) {
            double lo = -0.5 * L + static_cast<double>(bi[a] * bc) * h;
            double hi = std::min(lo + bc * h, 0.5 * L);
            center[a] = 0.5 * (lo + hi);
            hd += 0.25 * (hi - lo) * (hi - lo);
        }
        halfdiag = std::sqrt(hd);
    }

    void build(const NeighborGrid& buckets, double rho) {
        std::size_t nblocks = ipow(nbk, d);
        start.assign(nblocks + 1, 0);
        obj.clear();
        img.clear();
        double maxhd = 0.0;
        for (std::size_t b = 0; b < nblocks; ++b) {
            Vec c;
            double hd;
            block_box(b, c, hd);
            maxhd = std::max(maxhd, hd);
        }
        shifted = rho + 2.0 * maxhd < 0.5 * L;
        for (std::size_t b = 0; b < nblocks; ++b) {
            Vec c;
            double hd;
            block_box(b, c, hd);
            buckets.near(c, rho + hd, [&](std::size_t i, const Vec& z, double) {
                obj.push_back(i);
                Vec x{0.0, 0.0, 0.0};
                for (int a = 0; a < d; ++a) x[a] = c[a] + z[a];
                img.push_back(x);
            });
            start[b + 1] = obj.size();
        }
    }
};

// Checks that no atom outside a block's list beats the best in-list value of any person in it.
bool certify(const GridProvider& prov, const Auction& a, const std::vector<double>& pi, const NeighborGrid& buckets,
             double rho) {
    const int d = prov.d;
    const std::size_t nblocks = ipow(prov.nbk, d);
    std::vector<double> pimin(nblocks, kInf);
    const std::size_t P = pi.size();
    for (std::size_t p = 0; p < P; ++p) {
        std::size_t b = prov.block(p);
        pimin[b] = std::min(pimin[b], pi[p]);
    }
    // best value -price over each atom bucket
    std::vector<double> bbest(buckets.count(), -kInf);
    for (std::size_t b = 0; b < buckets.count(); ++b)
        for (const std::size_t* it = buckets.begin(b); it != buckets.end(b); ++it) bbest[b] = std::max(bbest[b], -a.min_price(*it));
    double gbest = *std::max_element(bbest.begin(), bbest.end());
    const int nb = buckets.per_axis();
    const double bs = buckets.side();
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
        Vec c;
        double hd;
        prov.block_box(blk, c, hd);
        // outside atoms are farther than rho from every person of the block
        if (-rho * rho + gbest <= pimin[blk]) continue;
        for (std::size_t b = 0; b < buckets.count(); ++b) {
            // lower bound on the distance from the block center to the bucket box
            std::size_t r = b;
            double dd = 0.0;
            for (int ax = d - 1; ax >= 0; --ax) {
                int bi = static_cast<int>(r % nb);
                r /= nb;
                double lo = -0.5 * prov.L + bi * bs, hi = lo + bs;
                double mid = wrap_coord(0.5 * (lo + hi) - c[ax], prov.L);
                double gap = std::max(0.0, std::abs(mid) - 0.5 * bs);
                dd += gap * gap;
            }
            double lb = std::max(std::sqrt(dd) - hd, rho);
            if (-lb * lb + bbest[b] <= pimin[blk]) continue;
            for (const std::size_t* it = buckets.begin(b); it != buckets.end(b); ++it) {
                const Vec& X = (*prov.atoms)[*it];
                double dc = std::sqrt(periodic_sqdist(X, c, prov.dom));
                if (dc <= rho + hd) continue;  // in the list
                double l = std::max(dc - hd, 0.0);
                if (-l * l - a.min_price(*it) <= pimin[blk]) continue;
                // exact check over the block's persons
                for (std::size_t p = 0; p < P; ++p) {
                    if (prov.block(p) != blk) continue;
                    if (-prov.cost(*it, p) - a.min_price(*it) > pi[p] + 1e-12) return false;
                }
            }
        }
    }
    return true;
}

TransportPlan matching_auction(const PointCloud& cloud, double h, std::size_t k, const SolverOptions& opt) {
    const auto& dom = cloud.domain;
    const int d = dom.d;
    const int m = static_cast<int>(std::lround(dom.L / h));
    GridProvider prov;
    prov.d = d;
    prov.m = m;
    prov.h = h;
    prov.L = dom.L;
    prov.atoms = &cloud.points;
    prov.dom = dom;
    const double spacing = 1.0 / cloud.R;  // typical inter-atom distance
    double rho = (d == 3 ? 2.5 : d == 2 ? 3.0 : 4.0) * spacing;
    rho = std::max(rho, 2.0 * h);
    prov.bc = std::max(1, static_cast<int>(std::floor(0.4 * rho / h)));
    prov.bc = std::min(prov.bc, m);
    prov.nbk = (m + prov.bc - 1) / prov.bc;
    const std::size_t P = ipow(m, d);
    NeighborGrid buckets(cloud.points, dom, std::max(0.5 * rho, h));
    prov.build(buckets, std::min(rho, 0.75 * dom.L));
    std::vector<std::size_t> cap(cloud.size(), k);
    Auction a(P, cap);
    const double fin = opt.final_eps > 0.0 ? opt.final_eps : h * h / 16.0 * 0.999;
    double cmax = std::pow(rho + prov.bc * h * std::sqrt(double(d)), 2);
    for (double e : eps_schedule(cmax / 8.0, fin)) a.phase(prov, e, cmax);
    std::vector<double> pi;
    AuctionStats st = auction_stats(a, prov, &pi);
    while (!certify(prov, a, pi, buckets, rho)) {
        if (rho >= 0.75 * dom.L) throw Error("auction certificate failed with full candidate lists");
        rho = std::min(rho * 1.5, 0.75 * dom.L);
        NeighborGrid wider(cloud.points, dom, std::max(0.5 * rho, h));
        buckets = wider;
        prov.build(buckets, rho);
        cmax = std::pow(rho + prov.bc * h * std::sqrt(double(d)), 2);
        a.phase(prov, fin, cmax);
        st = auction_stats(a, prov, &pi);
    }
    AtomicMeasure src = cloud_measure(cloud);
    AtomicMeasure tgt = discretize_lebesgue(dom, h);
    TransportPlan plan = make_plan(src, tgt, SolverMode::Auction);
    plan.triples.reserve(P);
    const double q = std::pow(h, d);
    for (std::size_t p = 0; p < P; ++p) add_triple(plan, static_cast<std::size_t>(a.held(p)), p, q);
    plan.gap = std::max(0.0, st.dual + st.primal) * q;
    plan.cs_residual = st.cs;
    plan.final_eps = fin;
    plan.h = h;
    return plan;
}

}  // namespace

double AtomicMeasure::total() const {
    double s = 0.0;
    for (double m : masses) s += m;
    return s;
}

SolverMode parse_solver_mode(const std::string& s) {
    if (s == "exact") return SolverMode::Exact;
    if (s == "auction") return SolverMode::Auction;
    if (s == "entropic") return SolverMode::Entropic;
    throw UsageError("unknown transport mode '" + s + "' (exact|auction|entropic)");
}

const char* solver_name(SolverMode m) {
    switch (m) {
        case SolverMode::Exact: return "exact";
        case SolverMode::Auction: return "auction";
        case SolverMode::Entropic: return "entropic+rounded";
    }
    return "?";
}

double pair_cost(const Vec& x, const Vec& y, const TorusDomain& dom, bool periodic, std::array<int, 3>* shift) {
    double s = 0.0;
    for (int a = 0; a < dom.d; ++a) {
        double t = y[a] - x[a];
        double v = periodic ? wrap_coord(t, dom.L) : t;
        if (shift) (*shift)[a] = periodic ? static_cast<int>(std::lround((v - t) / dom.L)) : 0;
        s += v * v;
    }
    return s;
}

Vec TransportPlan::displacement(const Triple& t) const {
    Vec v{0.0, 0.0, 0.0};
    const auto& x = source.points[t.i];
    const auto& y = target.points[t.j];
    for (int a = 0; a < source.domain.d; ++a) v[a] = y[a] + source.domain.L * t.shift[a] - x[a];
    return v;
}

std::vector<double> TransportPlan::row_sums() const {
    std::vector<double> r(source.size(), 0.0);
    for (const auto& t : triples) r[t.i] += t.mass;
    return r;
}

std::vector<double> TransportPlan::column_sums() const {
    std::vector<double> c(target.size(), 0.0);
    for (const auto& t : triples) c[t.j] += t.mass;
    return c;
}

AtomicMeasure discretize_lebesgue(const TorusDomain& dom, double h) {
    if (!(h > 0.0)) throw UsageError("quantization spacing h must be positive");
    double r = dom.L / h, rr = std::round(r);
    if (rr < 1.0 || std::abs(r - rr) > 1e-9 * rr) throw UsageError("L/h must be a positive integer");
    const int m = static_cast<int>(rr);
    AtomicMeasure out;
    out.domain = dom;
    const std::size_t n = ipow(m, dom.d);
    out.points.resize(n, Vec{0.0, 0.0, 0.0});
    out.masses.assign(n, std::pow(h, dom.d));
    for (std::size_t idx = 0; idx < n; ++idx) {
        std::size_t r2 = idx;
        for (int a = dom.d - 1; a >= 0; --a) {
            out.points[idx][a] = -0.5 * dom.L + (static_cast<double>(r2 % m) + 0.5) * h;
            r2 /= m;
        }
    }
    return out;
}

AtomicMeasure cloud_measure(const PointCloud& cloud) {
    AtomicMeasure a;
    a.domain = cloud.domain;
    a.points = cloud.points;
    a.masses.assign(cloud.size(), cloud.atom_mass());
    return a;
}

TransportPlan solve_coupling(const AtomicMeasure& source, const AtomicMeasure& target, SolverMode mode,
                             const SolverOptions& opt) {
    check_balance(source, target);
    if (source.periodic != target.periodic) throw UsageError("source and target disagree on periodicity");
    switch (mode) {
        case SolverMode::Exact:
            if (source.size() + target.size() > opt.exact_limit)
                throw UsageError("exact transport refused: " + std::to_string(source.size() + target.size()) +
                                 " atoms exceed the limit of " + std::to_string(opt.exact_limit));
            return solve_exact(source, target);
        case SolverMode::Auction: return solve_auction(source, target, opt);
        case SolverMode::Entropic: return solve_entropic(source, target, opt);
    }
    throw UsageError("unknown solver mode");
}

std::size_t cells_per_atom(const TorusDomain& dom, double R, double h) {
    double k = std::pow(h * R, -dom.d), kr = std::round(k);
    if (kr < 1.0 || std::abs(k - kr) > 1e-9 * kr)
        throw UsageError("h^{-d} R^{-d} must be a positive integer (cells per atom), got " + std::to_string(k));
    return static_cast<std::size_t>(kr);
}

TransportPlan optimal_matching(const PointCloud& cloud, double h, SolverMode mode, const SolverOptions& opt) {
    std::size_t k = cells_per_atom(cloud.domain, cloud.R, h);
    AtomicMeasure tgt = discretize_lebesgue(cloud.domain, h);
    TransportPlan plan;
    if (mode == SolverMode::Auction) {
        plan = matching_auction(cloud, h, k, opt);
    } else {
        plan = solve_coupling(cloud_measure(cloud), tgt, mode, opt);
    }
    plan.h = h;
    return plan;
}

double local_wasserstein_sq(const PointCloud& cloud, double r, const Vec& center, double h, const SolverOptions& opt) {
    const auto& dom = cloud.domain;
    CubeFragment frag = restrict_cube(cloud, r, center);
    if (frag.count() == 0) return 0.0;
    double cr = r / h, crr = std::round(cr);
    if (crr < 1.0 || std::abs(cr - crr) > 1e-9 * crr) throw UsageError("r/h must be a positive integer");
    const int m = static_cast<int>(crr);
    AtomicMeasure src, tgt;
    src.domain = tgt.domain = dom;
    src.periodic = tgt.periodic = false;
    src.points = frag.points;
    const double am = cloud.atom_mass();
    src.masses.assign(frag.count(), am);
    const std::size_t C = ipow(m, dom.d);
    const double cm = am * static_cast<double>(frag.count()) / static_cast<double>(C);
    tgt.points.resize(C, Vec{0.0, 0.0, 0.0});
    tgt.masses.assign(C, cm);
    for (std::size_t idx = 0; idx < C; ++idx) {
        std::size_t q = idx;
        for (int a = dom.d - 1; a >= 0; --a) {
            tgt.points[idx][a] = center[a] - 0.5 * r + (static_cast<double>(q % m) + 0.5) * h;
            q /= m;
        }
    }
    return solve_coupling(src, tgt, SolverMode::Exact, opt).cost;
}

SortedMatching1D sorted_matching_1d(const std::vector<double>& points) {
    SortedMatching1D out;
    const std::size_t n = points.size();
    out.order.resize(n);
    std::iota(out.order.begin(), out.order.end(), 0);
    std::stable_sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
    const double sn = std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double x = points[out.order[i]];
        out.sorted.push_back(x);
        double ti = static_cast<double>(i + 1) / n, lo = static_cast<double>(i) / n;
        out.t.push_back(ti);
        out.path.push_back(sn * (x - ti));
        // int_lo^ti (s - x)^2 ds
        out.cost += (std::pow(ti - x, 3) - std::pow(lo - x, 3)) / 3.0;
    }
    return out;
}

SortedMatching1D sorted_matching_1d(std::size_t n, std::uint64_t seed) {
    Rng rng(seed, 0xb41d6eULL);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform();
    return sorted_matching_1d(x);
}

double beta_rate(int d, double r) {
    if (r < 0.0) throw UsageError("beta needs r >= 0");
    if (d >= 3) return 1.0;
    if (d == 2) return std::log1p(r);
    throw UsageError("the rate function is defined for d >= 2");
}

double rstar_from_theta(int d, double theta) {
    if (d >= 3) return std::max(1.0, std::sqrt(std::max(theta, 0.0)));
    const double target = theta / std::log(2.0);
    auto g = [](double r) { return r * r / std::log1p(r); };
    if (target <= g(1.0)) return 1.0;
    double lo = 1.0, hi = 2.0;
    while (g(hi) < target) hi *= 2.0;
    while (hi - lo > 1e-12 * hi) {
        double mid = 0.5 * (lo + hi);
        (g(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

ThetaResult theta_and_rstar(const PointCloud& cloud, double h, const SolverOptions& opt, double r_max) {
    const auto& dom = cloud.domain;
    if (dom.L < 2.0) throw UsageError("theta_and_rstar needs L >= 2");
    ThetaResult res;
    const Vec origin{0.0, 0.0, 0.0};
    const double top = r_max > 0.0 ? std::min(r_max, dom.L) : dom.L;
    for (double r = 2.0; r <= top * (1 + 1e-12); r *= 2.0) {
        ThetaScale s;
        s.r = r;
        s.count = restrict_cube(cloud, r, origin).count();
        s.cost = local_wasserstein_sq(cloud, r, origin, h, opt);
        double rd = std::pow(r, dom.d);
        s.theta = s.cost / (rd * beta_rate(dom.d, rd));
        res.theta = std::max(res.theta, s.theta);
        res.scales.push_back(s);
    }
    res.rstar = rstar_from_theta(dom.d, res.theta);
    return res;
}

void write_plan_csv(const TransportPlan& plan, std::ostream& out) {
    const int d = plan.source.domain.d;
    out << "i,j,mass,sqdist";
    for (int a = 0; a < d; ++a) out << ",shift" << (a + 1);
    out << "\n";
    char buf[64];
    for (const auto& t : plan.triples) {
        out << t.i << ',' << t.j;
        for (double v : {t.mass, t.sqdist}) {
            auto r = std::to_chars(buf, buf + sizeof buf, v);
            out << ',' << std::string_view(buf, r.ptr - buf);
        }
        for (int a = 0; a < d; ++a) out << ',' << t.shift[a];
        out << "\n";
    }
}

}  // namespace matchfluct
