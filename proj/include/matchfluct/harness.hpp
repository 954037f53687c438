#pragma once

#include "matchfluct/stats.hpp"
#include "matchfluct/transport.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace matchfluct {

// Worker count: MATCHFLUCT_THREADS if set, else the hardware concurrency.
unsigned worker_count();

// Runs f(i) for i in [0, n) on up to `threads` workers (0 = worker_count()).  Results must be
// written to per-index slots; the first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f, unsigned threads = 0);

struct ExperimentSpec {
    std::string name;  // section name, used for output file stems
    std::string scan;
    int d = 2;
    std::vector<double> L{16.0};
    std::vector<double> R{1.0};
    std::vector<double> r;  // mollification scales (r or eps)
    std::vector<double> p{2.0};
    std::vector<double> h{0.25};
    std::vector<double> gamma{0.75};
    std::vector<double> lambda{-1.0, -0.5, 0.5, 1.0};
    std::vector<double> n;  // bridge sizes
    std::vector<std::string> functions;
    double ell = 4.0;
    std::size_t replicas = 100;
    std::uint64_t seed = 1;
    SolverMode mode = SolverMode::Auction;
    std::size_t grid = 0;         // grid nodes per axis where a scan needs one (0 = automatic)
    std::size_t x_points = 1;     // linearization: evaluation points per replica (1 or 2^d)
    std::size_t z_replicas = 0;   // gff: displacement-side replicas
    double rate_c = 0.1;          // concentration: exponent in E exp(c r_*^2 / beta(r_*))
    double theta_h = 0.5;         // concentration: cell size for the r_* computation
    std::string variant = "";     // sobolev: "mollified" (1/R-mollified) or "renormalized" (d = 2)
    unsigned threads = 0;

    void validate() const;
};

// One CSV row; NaN fields are written empty.
struct Row {
    double L = 0.0, R = 0.0, scale = 0.0, p = 0.0;
    std::string quantity;
    double value = 0.0, se = 0.0;
    std::size_t count = 0;
};

struct FitRecord {
    std::string name;
    std::string x, y;  // descriptions of the abscissa and ordinate
    double L = 0.0, R = 0.0;
    Fit fit;
};

struct ExperimentSummary {
    ExperimentSpec spec;
    std::vector<Row> rows;
    std::vector<FitRecord> fits;
    nlohmann::json extra = nlohmann::json::object();
    std::string config_hash;
    double wall_time = 0.0;

    const Row* find(const std::string& quantity, double L, double R, double scale, double p = -1.0) const;
    const FitRecord* find_fit(const std::string& name, double L = -1.0, double R = -1.0) const;

    void write_csv(std::ostream& out) const;
    std::string csv() const;
    nlohmann::json to_json() const;
};

ExperimentSummary moment_scan_W(const ExperimentSpec& spec);
ExperimentSummary moment_scan_grad_u(const ExperimentSpec& spec);
ExperimentSummary linearization_scan(const ExperimentSpec& spec);
ExperimentSummary clt_shift_scan(const ExperimentSpec& spec);
ExperimentSummary gff_convergence_scan(const ExperimentSpec& spec);
ExperimentSummary concentration_scan(const ExperimentSpec& spec);
ExperimentSummary sobolev_decay_scan(const ExperimentSpec& spec);
ExperimentSummary bridge_scan(const ExperimentSpec& spec);

const std::vector<std::string>& scan_names();
ExperimentSummary run_scan(const ExperimentSpec& spec);

// Seed of replica `rep` in cell `cell` of a scan.
std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t cell, std::uint64_t rep);

// Shortest round-trip decimal form; NaN becomes the empty string.
std::string format_number(double v);

}  // namespace matchfluct
