#include "matchfluct/harness.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#ifndef MATCHFLUCT_GIT_REV
#define MATCHFLUCT_GIT_REV "unknown"
#endif

namespace matchfluct {

unsigned worker_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MATCHFLUCT_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<unsigned>(std::min<long>(v, 1024));
    }
    return hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f, unsigned threads) {
    if (threads == 0) threads = worker_count();
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                if (failed.load()) return;
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!error) error = std::current_exception();
                    failed = true;
                    return;
                }
            }
        });
    pool.clear();
    if (error) std::rethrow_exception(error);
}

std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t cell, std::uint64_t rep) {
    return mix_seed(mix_seed(seed, cell + 1), rep + 1);
}

std::string format_number(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

const std::vector<std::string>& scan_names() {
    static const std::vector<std::string> names{"moment_scan_W",  "moment_scan_grad_u", "linearization_scan",
                                                "clt_shift_scan", "gff_convergence_scan", "concentration_scan",
                                                "sobolev_decay_scan", "bridge_scan"};
    return names;
}

void ExperimentSpec::validate() const {
    bool known = false;
    for (const auto& s : scan_names()) known |= s == scan;
    if (!known) throw UsageError("unknown scan '" + scan + "'");
    if (d < 1 || d > 3) throw UsageError("d must be 1, 2 or 3");
    if (replicas == 0) throw UsageError("replicas must be positive");
    auto nonempty = [&](const std::vector<double>& v, const char* key) {
        if (v.empty()) throw UsageError(std::string("list '") + key + "' must not be empty");
        for (double x : v)
            if (!(x > 0.0) && std::string(key) != "lambda") throw UsageError(std::string("entries of '") + key + "' must be positive");
    };
    if (scan == "bridge_scan") {
        nonempty(n, "n");
        return;
    }
    nonempty(L, "L");
    nonempty(R, "R");
    nonempty(p, "p");
    for (double l : L)
        for (double rr : R) binomial_count(TorusDomain(d, l), rr);
    if (scan == "moment_scan_W" || scan == "moment_scan_grad_u" || scan == "linearization_scan" ||
        scan == "concentration_scan")
        nonempty(r, "r");
    if (scan == "linearization_scan" || scan == "concentration_scan" || scan == "sobolev_decay_scan") nonempty(h, "h");
    if (scan == "gff_convergence_scan" && functions.empty()) throw UsageError("gff_convergence_scan needs 'functions'");
    if (scan == "clt_shift_scan" && d != 2) throw UsageError("clt_shift_scan is defined for d = 2");
    if (x_points != 1 && x_points != (1u << d)) throw UsageError("x_points must be 1 or 2^d");
}

const Row* ExperimentSummary::find(const std::string& quantity, double L, double R, double scale, double p) const {
    auto eq = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
    for (const auto& r : rows)
        if (r.quantity == quantity && eq(r.L, L) && eq(r.R, R) && eq(r.scale, scale) && (p < 0.0 || eq(r.p, p))) return &r;
    return nullptr;
}

const FitRecord* ExperimentSummary::find_fit(const std::string& name, double L, double R) const {
    for (const auto& f : fits)
        if (f.name == name && (L < 0.0 || f.L == L) && (R < 0.0 || f.R == R)) return &f;
    return nullptr;
}

void ExperimentSummary::write_csv(std::ostream& out) const {
    out << "# matchfluct " << spec.scan << " name=" << spec.name << " config_hash=" << config_hash << "\n";
    out << "scan,d,L,R,scale,p,quantity,value,se,count\n";
    for (const auto& r : rows) {
        out << spec.scan << ',' << spec.d << ',' << format_number(r.L) << ',' << format_number(r.R) << ','
            << format_number(r.scale) << ',' << format_number(r.p) << ',' << r.quantity << ',' << format_number(r.value)
            << ',' << format_number(r.se) << ',' << r.count << "\n";
    }
}

std::string ExperimentSummary::csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
}

nlohmann::json ExperimentSummary::to_json() const {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["scan"] = spec.scan;
    j["name"] = spec.name;
    j["d"] = spec.d;
    j["replicas"] = spec.replicas;
    j["seed"] = spec.seed;
    auto& fa = j["fits"] = nlohmann::json::array();
    for (const auto& f : fits) {
        nlohmann::json e{{"name", f.name},
                         {"x", f.x},
                         {"y", f.y},
                         {"slope", num(f.fit.slope)},
                         {"slope_se", num(f.fit.slope_se)},
                         {"ci95", {num(f.fit.ci_lo), num(f.fit.ci_hi)}},
                         {"intercept", num(f.fit.intercept)},
                         {"intercept_se", num(f.fit.intercept_se)},
                         {"r2", num(f.fit.r2)},
                         {"points", f.fit.n}};
        if (f.L > 0.0) e["L"] = f.L;
        if (f.R > 0.0) e["R"] = f.R;
        auto& res = e["residuals"] = nlohmann::json::array();
        for (double r : f.fit.residuals) res.push_back(num(r));
        fa.push_back(e);
    }
    j["extra"] = extra;
    j["metadata"] = {{"git_revision", MATCHFLUCT_GIT_REV}, {"config_hash", config_hash}, {"wall_time_s", wall_time}};
    return j;
}

ExperimentSummary run_scan(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.scan == "moment_scan_W") return moment_scan_W(spec);
    if (spec.scan == "moment_scan_grad_u") return moment_scan_grad_u(spec);
    if (spec.scan == "linearization_scan") return linearization_scan(spec);
    if (spec.scan == "clt_shift_scan") return clt_shift_scan(spec);
    if (spec.scan == "gff_convergence_scan") return gff_convergence_scan(spec);
    if (spec.scan == "concentration_scan") return concentration_scan(spec);
    if (spec.scan == "sobolev_decay_scan") return sobolev_decay_scan(spec);
    return bridge_scan(spec);
}

}  // namespace matchfluct
