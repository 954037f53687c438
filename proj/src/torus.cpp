#include "matchfluct/torus.hpp"

#include <cmath>
#include <string>

namespace matchfluct {

TorusDomain::TorusDomain(int dim, double side) : d(dim), L(side) {
    if (dim < 1 || dim > 3) throw UsageError("dimension must be 1, 2 or 3, got " + std::to_string(dim));
    if (!(side > 0.0) || !std::isfinite(side)) throw UsageError("side length L must be positive");
}

double TorusDomain::volume() const { return std::pow(L, d); }

double wrap_coord(double x, double L) {
    double y = x - L * std::floor(x / L + 0.5);
    // floating point can land exactly on the excluded upper face
    if (y >= 0.5 * L) y -= L;
    if (y < -0.5 * L) y += L;
    return y;
}

Vec wrap(const Vec& x, const TorusDomain& dom) {
    Vec out{0.0, 0.0, 0.0};
    for (int a = 0; a < dom.d; ++a) out[a] = wrap_coord(x[a], dom.L);
    return out;
}

Vec min_image(const Vec& a, const Vec& b, const TorusDomain& dom) {
    Vec out{0.0, 0.0, 0.0};
    for (int k = 0; k < dom.d; ++k) out[k] = wrap_coord(a[k] - b[k], dom.L);
    return out;
}

double periodic_sqdist(const Vec& x, const Vec& y, const TorusDomain& dom) {
    double s = 0.0;
    for (int k = 0; k < dom.d; ++k) {
        double t = wrap_coord(x[k] - y[k], dom.L);
        s += t * t;
    }
    return s;
}

double norm2(const Vec& v, int d) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += v[k] * v[k];
    return s;
}

double dot(const Vec& a, const Vec& b, int d) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += a[k] * b[k];
    return s;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
    // splitmix64 finalizer applied to a combination of both words
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (key + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

double PointCloud::atom_mass() const { return std::pow(R, -domain.d); }

std::size_t binomial_count(const TorusDomain& dom, double R) {
    if (!(R > 0.0)) throw UsageError("intensity R must be positive");
    double n = std::pow(R * dom.L, dom.d);
    double rn = std::round(n);
    if (rn < 1.0 || std::abs(n - rn) > 1e-9 * std::max(1.0, rn))
        throw UsageError("(RL)^d = " + std::to_string(n) + " is not a positive integer");
    return static_cast<std::size_t>(rn);
}

PointCloud sample_binomial(const TorusDomain& dom, double R, std::uint64_t seed) {
    std::size_t n = binomial_count(dom, R);
    PointCloud c;
    c.domain = dom;
    c.R = R;
    c.seed = seed;
    c.points.resize(n, Vec{0.0, 0.0, 0.0});
    Rng rng(seed, 0x70c1dULL);
    for (auto& p : c.points)
        for (int a = 0; a < dom.d; ++a) p[a] = wrap_coord((rng.uniform() - 0.5) * dom.L, dom.L);
    return c;
}

PointCloud make_cloud(const TorusDomain& dom, double R, std::vector<Vec> pts) {
    PointCloud c;
    c.domain = dom;
    c.R = R;
    for (auto& p : pts) p = wrap(p, dom);
    c.points = std::move(pts);
    return c;
}

CubeFragment restrict_cube(const PointCloud& cloud, double r, const Vec& center) {
    const auto& dom = cloud.domain;
    if (!(r > 0.0) || r > dom.L * (1 + 1e-12)) throw UsageError("restrict_cube needs 0 < r <= L");
    CubeFragment out;
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        Vec rel = min_image(cloud.points[i], center, dom);
        bool inside = true;
        for (int a = 0; a < dom.d && inside; ++a) inside = rel[a] >= -0.5 * r && rel[a] < 0.5 * r;
        if (!inside) continue;
        Vec p{0.0, 0.0, 0.0};
        for (int a = 0; a < dom.d; ++a) p[a] = center[a] + rel[a];
        out.points.push_back(p);
        out.index.push_back(i);
    }
    return out;
}

NeighborGrid::NeighborGrid(const std::vector<Vec>& pts, const TorusDomain& dom, double side) : pts_(&pts), dom_(dom) {
    const int cap = dom.d == 1 ? 1 << 16 : dom.d == 2 ? 1024 : 128;
    nb_ = std::clamp(static_cast<int>(std::floor(dom.L / side)), 1, cap);
    side_ = dom.L / nb_;
    std::size_t nbk = 1;
    for (int a = 0; a < dom.d; ++a) nbk *= static_cast<std::size_t>(nb_);
    start_.assign(nbk + 1, 0);
    for (const auto& x : pts) ++start_[bucket(x) + 1];
    for (std::size_t b = 0; b < nbk; ++b) start_[b + 1] += start_[b];
    items_.resize(pts.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < pts.size(); ++i) items_[fill[bucket(pts[i])]++] = i;
}

std::size_t NeighborGrid::bucket(const Vec& x) const {
    std::size_t b = 0;
    for (int a = 0; a < dom_.d; ++a) b = b * nb_ + static_cast<std::size_t>(axis_index(x[a]));
    return b;
}

int NeighborGrid::axis_index(double x) const {
    return std::clamp(static_cast<int>(std::floor((wrap_coord(x, dom_.L) + 0.5 * dom_.L) / side_)), 0, nb_ - 1);
}

}  // namespace matchfluct
