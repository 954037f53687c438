#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace matchfluct {

// Points live in R^3 storage; components beyond d are kept at zero.
using Vec = std::array<double, 3>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Usage / configuration errors (CLI maps these to exit code 2).
class UsageError : public Error {
public:
    using Error::Error;
};

struct TorusDomain {
    int d = 2;
    double L = 1.0;

    TorusDomain() = default;
    TorusDomain(int dim, double side);

    double volume() const;
};

// Per-coordinate canonical representative in [-L/2, L/2).
double wrap_coord(double x, double L);
Vec wrap(const Vec& x, const TorusDomain& dom);

// Minimum image difference a - b, each component in [-L/2, L/2].
Vec min_image(const Vec& a, const Vec& b, const TorusDomain& dom);
double periodic_sqdist(const Vec& x, const Vec& y, const TorusDomain& dom);

double norm2(const Vec& v, int d);
double dot(const Vec& a, const Vec& b, int d);

// Splittable seeding: a replica stream is a pure function of (seed, keys...).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t stream) : eng_(mix_seed(seed, stream)) {}

    std::uint64_t next() { return eng_(); }
    // uniform on [0,1) with 53 random bits, independent of the standard library's distributions
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double normal();

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct PointCloud {
    TorusDomain domain;
    double R = 1.0;
    std::uint64_t seed = 0;
    std::vector<Vec> points;

    std::size_t size() const { return points.size(); }
    double atom_mass() const;
};

// (RL)^d as an integer, or throws UsageError.
std::size_t binomial_count(const TorusDomain& dom, double R);

PointCloud sample_binomial(const TorusDomain& dom, double R, std::uint64_t seed);
PointCloud make_cloud(const TorusDomain& dom, double R, std::vector<Vec> pts);

struct CubeFragment {
    std::vector<Vec> points;       // unwrapped around the cube center
    std::vector<std::size_t> index; // source atom indices
    std::size_t count() const { return points.size(); }
};

CubeFragment restrict_cube(const PointCloud& cloud, double r, const Vec& center);

// Uniform bucket grid over the torus for fixed-radius neighbour queries.
class NeighborGrid {
public:
    NeighborGrid(const std::vector<Vec>& pts, const TorusDomain& dom, double side);

    std::size_t bucket(const Vec& x) const;
    int axis_index(double x) const;
    int per_axis() const { return nb_; }
    double side() const { return side_; }
    std::size_t count() const { return start_.size() - 1; }
    const std::size_t* begin(std::size_t b) const { return items_.data() + start_[b]; }
    const std::size_t* end(std::size_t b) const { return items_.data() + start_[b + 1]; }

    // f(index, min-image displacement point - x, squared distance) for points within radius of x
    template <class F>
    void near(const Vec& x, double radius, F&& f) const {
        const int d = dom_.d;
        const int layers = static_cast<int>(std::ceil(radius / side_));
        const int span = std::min(2 * layers + 1, nb_);
        int lo[3] = {0, 0, 0}, cnt[3] = {1, 1, 1};
        for (int a = 0; a < d; ++a) {
            lo[a] = span == nb_ ? 0 : axis_index(x[a]) - layers;
            cnt[a] = span;
        }
        const double r2 = radius * radius;
        for (int i0 = 0; i0 < cnt[0]; ++i0)
            for (int i1 = 0; i1 < cnt[1]; ++i1)
                for (int i2 = 0; i2 < cnt[2]; ++i2) {
                    const int ii[3] = {lo[0] + i0, lo[1] + i1, lo[2] + i2};
                    std::size_t b = 0;
                    for (int a = 0; a < d; ++a) b = b * nb_ + static_cast<std::size_t>(((ii[a] % nb_) + nb_) % nb_);
                    for (const std::size_t* it = begin(b); it != end(b); ++it) {
                        Vec z = min_image((*pts_)[*it], x, dom_);
                        double s = norm2(z, d);
                        if (s <= r2) f(*it, z, s);
                    }
                }
    }

private:
    const std::vector<Vec>* pts_;
    TorusDomain dom_;
    int nb_ = 1;
    double side_ = 1.0;
    std::vector<std::size_t> start_, items_;
};

}  // namespace matchfluct
