#pragma once

#include "matchfluct/torus.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace matchfluct {

struct AtomicMeasure {
    TorusDomain domain;
    std::vector<Vec> points;
    std::vector<double> masses;
    bool periodic = true;  // false: Euclidean cost, no wrapping

    std::size_t size() const { return points.size(); }
    double total() const;
};

enum class SolverMode { Exact, Auction, Entropic };

SolverMode parse_solver_mode(const std::string& s);
const char* solver_name(SolverMode m);

struct Triple {
    std::size_t i = 0;  // source index
    std::size_t j = 0;  // target index
    double mass = 0.0;
    double sqdist = 0.0;
    std::array<int, 3> shift{0, 0, 0};  // y - x + L*shift realizes the cost
};

struct TransportPlan {
    AtomicMeasure source, target;
    std::vector<Triple> triples;
    double cost = 0.0;
    SolverMode solver = SolverMode::Exact;
    double h = 0.0;
    // Upper bound on cost - optimal cost (0 for exact mode).
    double gap = 0.0;
    // Auction: largest complementary slackness violation per unit of mass.
    double cs_residual = 0.0;
    double final_eps = 0.0;

    // y_j + L*shift - x_i
    Vec displacement(const Triple& t) const;
    std::vector<double> row_sums() const;
    std::vector<double> column_sums() const;
};

struct SolverOptions {
    std::size_t exact_limit = 4096;  // sources + targets
    double final_eps = 0.0;          // auction; 0 picks the default
    double entropic_reg = 1e-3;      // relative to the largest cost
    int entropic_max_iter = 200000;
};

// Squared cost between two points under the measure's geometry, with the realizing shift.
double pair_cost(const Vec& x, const Vec& y, const TorusDomain& dom, bool periodic, std::array<int, 3>* shift = nullptr);

AtomicMeasure discretize_lebesgue(const TorusDomain& dom, double h);
AtomicMeasure cloud_measure(const PointCloud& cloud);

TransportPlan solve_coupling(const AtomicMeasure& source, const AtomicMeasure& target, SolverMode mode,
                             const SolverOptions& opt = {});

// Cells per atom, h^{-d} R^{-d}, or throws when it is not an integer.
std::size_t cells_per_atom(const TorusDomain& dom, double R, double h);

TransportPlan optimal_matching(const PointCloud& cloud, double h, SolverMode mode, const SolverOptions& opt = {});

double local_wasserstein_sq(const PointCloud& cloud, double r, const Vec& center, double h,
                            const SolverOptions& opt = {});

struct SortedMatching1D {
    std::vector<double> sorted;     // order statistics
    std::vector<std::size_t> order; // order[i] = index of the i-th smallest point
    std::vector<double> t;          // i/n, i = 1..n
    std::vector<double> path;       // sqrt(n) (X_(i) - i/n)
    double cost = 0.0;              // sum_i int_{(i-1)/n}^{i/n} |x - X_(i)|^2 dx
};

SortedMatching1D sorted_matching_1d(const std::vector<double>& points);
SortedMatching1D sorted_matching_1d(std::size_t n, std::uint64_t seed);

double beta_rate(int d, double r);

struct ThetaScale {
    double r = 0.0;
    std::size_t count = 0;
    double cost = 0.0;   // W^2 on the cube
    double theta = 0.0;  // cost / (r^d beta(r^d))
};

struct ThetaResult {
    double theta = 0.0;
    double rstar = 1.0;
    std::vector<ThetaScale> scales;
};

double rstar_from_theta(int d, double theta);
// Dyadic scales 2 <= r <= min(L, r_max) (r_max = 0: L).
ThetaResult theta_and_rstar(const PointCloud& cloud, double h, const SolverOptions& opt = {}, double r_max = 0.0);

void write_plan_csv(const TransportPlan& plan, std::ostream& out);

}  // namespace matchfluct
