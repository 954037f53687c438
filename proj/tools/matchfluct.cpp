// matchfluct command-line tool: sample | match | poisson | norm | experiment

#include "matchfluct/config.hpp"
#include "matchfluct/displacement.hpp"
#include "matchfluct/field.hpp"
#include "matchfluct/harness.hpp"
#include "matchfluct/sobolev.hpp"
#include "matchfluct/transport.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace matchfluct;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string tool_version() { return std::string(kVersion) + "+" + MATCHFLUCT_GIT_REV; }

std::string utc_now() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(path, mode);
    if (!f) throw Error("cannot write " + path);
    return f;
}

void write_points(const PointCloud& c, std::ostream& out) {
    const int d = c.domain.d;
    for (int a = 0; a < d; ++a) out << (a ? "," : "") << 'x' << a + 1;
    out << '\n';
    for (const auto& x : c.points) {
        for (int a = 0; a < d; ++a) out << (a ? "," : "") << format_number(x[a]);
        out << '\n';
    }
}

PointCloud read_points(const std::string& path, double L, double R) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot read " + path);
    std::string line;
    if (!std::getline(f, line)) throw Error(path + ": empty point file");
    const int d = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    if (d < 1 || d > 3 || line.rfind("x1", 0) != 0) throw Error(path + ": header must be x1[,x2[,x3]]");
    TorusDomain dom(d, L);
    std::vector<Vec> pts;
    int ln = 1;
    while (std::getline(f, line)) {
        ++ln;
        if (line.empty()) continue;
        std::istringstream is(line);
        Vec x{0.0, 0.0, 0.0};
        std::string tok;
        int a = 0;
        while (std::getline(is, tok, ',')) {
            if (a >= d) throw Error(path + ":" + std::to_string(ln) + ": too many columns");
            try {
                x[a++] = std::stod(tok);
            } catch (const std::exception&) {
                throw Error(path + ":" + std::to_string(ln) + ": bad number '" + tok + "'");
            }
        }
        if (a != d) throw Error(path + ":" + std::to_string(ln) + ": expected " + std::to_string(d) + " columns");
        pts.push_back(wrap(x, dom));
    }
    return make_cloud(dom, R, std::move(pts));
}

struct CloudFlags {
    int d = 2;
    double L = 8.0;
    double R = 1.0;
    std::uint64_t seed = 1;
    std::string points;

    void add(CLI::App* app) {
        app->add_option("-d,--dim", d, "dimension (1, 2 or 3)")->check(CLI::Range(1, 3));
        app->add_option("-L,--side", L, "torus side length");
        app->add_option("-R,--density", R, "intensity scale; (RL)^d points");
        app->add_option("--seed", seed, "random seed");
        app->add_option("--points", points, "read points from a CSV file instead of sampling");
    }
    PointCloud cloud() const {
        if (!points.empty()) return read_points(points, L, R);
        return sample_binomial(TorusDomain(d, L), R, seed);
    }
};

Vec parse_point(const std::string& s, int d) {
    Vec x{0.0, 0.0, 0.0};
    std::istringstream is(s);
    std::string tok;
    int a = 0;
    while (std::getline(is, tok, ',')) {
        if (a >= d) throw UsageError("point '" + s + "' has more than d coordinates");
        try {
            x[a++] = std::stod(tok);
        } catch (const std::exception&) {
            throw UsageError("bad coordinate in '" + s + "'");
        }
    }
    if (a != d) throw UsageError("point '" + s + "' needs " + std::to_string(d) + " coordinates");
    return x;
}

nlohmann::json vec_json(const Vec& v, int d) {
    auto j = nlohmann::json::array();
    for (int a = 0; a < d; ++a) j.push_back(v[a]);
    return j;
}

// Scalar field or its gradient sampled from a Fourier dump.
class SpectralSampler : public FieldSampler {
public:
    SpectralSampler(const SpectralField& u, bool gradient) : m_(Mollifier::get(u.domain().d)) {
        const int d = u.domain().d;
        if (!gradient) {
            parts_.push_back(u);
            return;
        }
        for (int a = 0; a < d; ++a) {
            SpectralField g = u;
            for (std::size_t i = 0; i < g.mode_count(); ++i) g[i] *= cplx(0.0, u.wavevector(i)[a]);
            parts_.push_back(std::move(g));
        }
    }
    int dim() const override { return parts_.front().domain().d; }
    int components() const override { return static_cast<int>(parts_.size()); }
    void sample(double eps, const Lattice& lat, std::vector<double>& out) const override {
        const int c = components();
        std::array<int, 3> n{1, 1, 1};
        for (int a = 0; a < lat.d; ++a) n[a] = lat.n;
        out.assign(lat.size() * c, 0.0);
        for (int k = 0; k < c; ++k) {
            std::vector<double> v = mollified_lattice_values(parts_[k], m_, eps, lat.origin, lat.spacing, n);
            for (std::size_t i = 0; i < v.size(); ++i) out[i * c + k] = v[i];
        }
    }

private:
    const Mollifier& m_;
    std::vector<SpectralField> parts_;
};

int cmd_sample(const CloudFlags& cf, const std::string& out) {
    PointCloud c = sample_binomial(TorusDomain(cf.d, cf.L), cf.R, cf.seed);
    if (out.empty() || out == "-") {
        write_points(c, std::cout);
        std::cerr << c.size() << "\n";
    } else {
        auto f = open_out(out);
        write_points(c, f);
        if (!f) throw Error("write failed: " + out);
        std::cout << c.size() << "\n";
    }
    return 0;
}

int cmd_match(const CloudFlags& cf, double h, const std::string& mode, const std::string& out) {
    PointCloud c = cf.cloud();
    TransportPlan plan = optimal_matching(c, h, parse_solver_mode(mode));
    if (!out.empty()) {
        auto f = open_out(out);
        write_plan_csv(plan, f);
        if (!f) throw Error("write failed: " + out);
    }
    nlohmann::json j{{"solver", solver_name(plan.solver)},
                     {"atoms", c.size()},
                     {"cells", plan.target.size()},
                     {"h", h},
                     {"cost", plan.cost},
                     {"gap", plan.gap},
                     {"cs_residual", plan.cs_residual},
                     {"final_eps", plan.final_eps},
                     {"triples", plan.triples.size()}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_poisson(const CloudFlags& cf, int K, double eps, const std::vector<std::string>& at, const std::string& out) {
    PointCloud c = cf.cloud();
    const int d = c.domain.d;
    SpectralField u = solve_poisson(atomic_fourier(c, K));
    if (!out.empty()) {
        auto f = open_out(out, std::ios::out | std::ios::binary);
        u.dump(f);
        if (!f) throw Error("write failed: " + out);
    }
    AtomicPoisson ap(c);
    const auto& m = Mollifier::get(d);
    nlohmann::json pts = nlohmann::json::array();
    std::vector<std::string> where = at.empty() ? std::vector<std::string>{} : at;
    std::vector<Vec> xs;
    for (const auto& s : where) xs.push_back(parse_point(s, d));
    if (xs.empty()) xs.push_back(Vec{0.0, 0.0, 0.0});
    for (const auto& x : xs) {
        GradientValue g = grad_mollified(u, m, eps, x);
        pts.push_back({{"x", vec_json(x, d)},
                       {"grad_spectral", vec_json(g.value, d)},
                       {"truncation_estimate", g.truncation_estimate},
                       {"grad_atomic", vec_json(ap.grad(eps, x), d)}});
    }
    nlohmann::json j{{"d", d}, {"L", c.domain.L}, {"R", c.R}, {"atoms", c.size()}, {"K", K}, {"eps", eps}, {"points", pts}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_norm(const std::string& in, NormSpec ns, bool gradient, const std::string& out) {
    ns.validate();
    std::ifstream f(in, std::ios::binary);
    if (!f) throw UsageError("cannot read " + in);
    SpectralField u = SpectralField::load(f);
    SpectralSampler s(u, gradient);
    NormEstimate e = multiscale_norm(s, ns);
    nlohmann::json j = e.to_json();
    j["input"] = in;
    j["field"] = gradient ? "gradient" : "value";
    std::cout << j.dump(2) << "\n";
    if (!out.empty()) {
        auto o = open_out(out);
        o << j.dump(2) << "\n";
        if (!o) throw Error("write failed: " + out);
    }
    return 0;
}

int cmd_experiment(const std::string& path, const std::string& dir_override) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot read " + path);
    RunConfig cfg = parse_config(f);
    const fs::path dir = dir_override.empty() ? fs::path(cfg.output_dir) : fs::path(dir_override);
    std::vector<fs::path> written;
    const std::string started = utc_now();
    try {
        fs::create_directories(dir);
        nlohmann::json outputs = nlohmann::json::array();
        for (const auto& spec : cfg.scans) {
            std::cerr << "[" << spec.name << "] " << spec.scan << " ..." << std::flush;
            ExperimentSummary s = run_scan(spec);
            s.config_hash = cfg.hash;
            fs::path csv = dir / (spec.name + ".csv"), js = dir / (spec.name + ".json");
            {
                written.push_back(csv);
                auto o = open_out(csv.string());
                s.write_csv(o);
                if (!o) throw Error("write failed: " + csv.string());
            }
            {
                written.push_back(js);
                auto o = open_out(js.string());
                o << s.to_json().dump(2) << "\n";
                if (!o) throw Error("write failed: " + js.string());
            }
            std::cerr << " " << s.wall_time << " s\n";
            outputs.push_back({{"name", spec.name}, {"scan", spec.scan}, {"seed", spec.seed}, {"csv", csv.string()},
                               {"json", js.string()}, {"wall_time_s", s.wall_time}});
        }
        nlohmann::json manifest{{"config", path},
                                {"config_hash", cfg.hash},
                                {"seed", cfg.seed},
                                {"tool_version", tool_version()},
                                {"started", started},
                                {"finished", utc_now()},
                                {"outputs", outputs}};
        fs::path mp = dir / "manifest.json";
        written.push_back(mp);
        auto o = open_out(mp.string());
        o << manifest.dump(2) << "\n";
        if (!o) throw Error("write failed: " + mp.string());
        std::cout << mp.string() << "\n";
    } catch (...) {
        std::error_code ec;
        for (const auto& p : written) fs::remove(p, ec);
        throw;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"matchfluct: fluctuations of random matchings on the torus"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);

    CloudFlags sample_flags, match_flags, poisson_flags;
    std::string sample_out, match_out, poisson_out, norm_in, norm_out, config, out_dir, mode = "exact";
    double cell = 0.25, eps = 1.0;
    int K = 32;
    std::vector<std::string> at;
    NormSpec ns;
    std::string field_kind = "value";

    auto* sample = app.add_subcommand("sample", "sample a binomial point cloud");
    sample_flags.add(sample);
    sample->add_option("-o,--out", sample_out, "output CSV (default stdout)");

    auto* match = app.add_subcommand("match", "optimal coupling of a cloud with Lebesgue measure");
    match_flags.add(match);
    match->add_option("--cell", cell, "Lebesgue discretization cell size h");
    match->add_option("--mode", mode, "exact | auction | entropic");
    match->add_option("-o,--out", match_out, "plan CSV");

    auto* poisson = app.add_subcommand("poisson", "solve the Poisson equation for a cloud");
    poisson_flags.add(poisson);
    poisson->add_option("-K,--cutoff", K, "Fourier cutoff")->check(CLI::PositiveNumber);
    poisson->add_option("--eps", eps, "mollification scale")->check(CLI::PositiveNumber);
    poisson->add_option("--at", at, "evaluation point x1,..,xd (repeatable)");
    poisson->add_option("-o,--out", poisson_out, "binary Fourier dump of u");

    auto* norm = app.add_subcommand("norm", "multiscale negative Sobolev norm of a field dump");
    norm->add_option("-i,--input", norm_in, "binary Fourier dump")->required();
    norm->add_option("--gamma", ns.gamma, "regularity index, not an integer");
    norm->add_option("-p", ns.p, "integrability exponent");
    norm->add_option("--ell", ns.ell, "ball radius");
    norm->add_option("--eps-min", ns.eps_min, "smallest scale");
    norm->add_option("--scales", ns.n_scales, "number of scales");
    norm->add_option("--spacing", ns.spacing, "quadrature spacing (0 = automatic)");
    norm->add_option("--field", field_kind, "value | gradient")->check(CLI::IsMember({"value", "gradient"}));
    norm->add_option("-o,--out", norm_out, "JSON output");

    auto* exp = app.add_subcommand("experiment", "run the scans listed in a config file");
    exp->add_option("config", config, "config file")->required();
    exp->add_option("--output-dir", out_dir, "override output_dir from the config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*sample) return cmd_sample(sample_flags, sample_out);
        if (*match) return cmd_match(match_flags, cell, mode, match_out);
        if (*poisson) return cmd_poisson(poisson_flags, K, eps, at, poisson_out);
        if (*norm) return cmd_norm(norm_in, ns, field_kind == "gradient", norm_out);
        if (*exp) return cmd_experiment(config, out_dir);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
