#include "matchfluct/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <set>
#include <sstream>

namespace matchfluct {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t section_seed(std::uint64_t seed, const std::string& name) { return mix_seed(seed, fnv1a(name)); }

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void fail(int line, const std::string& msg) { throw UsageError("line " + std::to_string(line) + ": " + msg); }

double to_double(const std::string& v, int line, const std::string& key) {
    double x = 0.0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail(line, "key '" + key + "': '" + v + "' is not a number");
    return x;
}

std::uint64_t to_uint(const std::string& v, int line, const std::string& key) {
    std::uint64_t x = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
        fail(line, "key '" + key + "': '" + v + "' is not a nonnegative integer");
    return x;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) {
        std::string t = trim(cur);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::vector<double> to_list(const std::string& v, int line, const std::string& key) {
    std::vector<double> out;
    for (const auto& t : split_list(v)) out.push_back(to_double(t, line, key));
    if (out.empty()) fail(line, "key '" + key + "' needs at least one value");
    return out;
}

void set_key(ExperimentSpec& s, const std::string& key, const std::string& v, int line) {
    if (key == "scan") s.scan = v;
    else if (key == "d") s.d = static_cast<int>(to_uint(v, line, key));
    else if (key == "L") s.L = to_list(v, line, key);
    else if (key == "R") s.R = to_list(v, line, key);
    else if (key == "r") s.r = to_list(v, line, key);
    else if (key == "p") s.p = to_list(v, line, key);
    else if (key == "h") s.h = to_list(v, line, key);
    else if (key == "gamma") s.gamma = to_list(v, line, key);
    else if (key == "lambda") s.lambda = to_list(v, line, key);
    else if (key == "n") s.n = to_list(v, line, key);
    else if (key == "functions") s.functions = split_list(v);
    else if (key == "ell") s.ell = to_double(v, line, key);
    else if (key == "replicas") s.replicas = to_uint(v, line, key);
    else if (key == "seed") s.seed = to_uint(v, line, key);
    else if (key == "mode") {
        try {
            s.mode = parse_solver_mode(v);
        } catch (const Error& e) {
            fail(line, e.what());
        }
    } else if (key == "grid") s.grid = to_uint(v, line, key);
    else if (key == "x_points") s.x_points = to_uint(v, line, key);
    else if (key == "z_replicas") s.z_replicas = to_uint(v, line, key);
    else if (key == "rate_c") s.rate_c = to_double(v, line, key);
    else if (key == "theta_h") s.theta_h = to_double(v, line, key);
    else if (key == "variant") s.variant = v;
    else if (key == "threads") s.threads = static_cast<unsigned>(to_uint(v, line, key));
    else fail(line, "unknown key '" + key + "'");
}

// "8, 16" and "8,16" hash alike.
std::string normalize_list(const std::string& v) {
    std::string out;
    std::size_t start = 0;
    while (true) {
        auto c = v.find(',', start);
        out += trim(std::string_view(v).substr(start, c == std::string::npos ? std::string::npos : c - start));
        if (c == std::string::npos) break;
        out += ',';
        start = c + 1;
    }
    return out;
}

}  // namespace

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::ostringstream canon;
    std::string raw;
    int line = 0;
    ExperimentSpec* cur = nullptr;
    std::vector<int> sect_line, seed_line;
    std::vector<bool> has_seed;
    std::set<std::string> names;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw.substr(0, raw.find('#')));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(line, "malformed section header");
            std::string name = trim(s.substr(1, s.size() - 2));
            if (name.empty()) fail(line, "empty section name");
            if (!names.insert(name).second) fail(line, "duplicate section '" + name + "'");
            cfg.scans.emplace_back();
            cur = &cfg.scans.back();
            cur->name = name;
            sect_line.push_back(line);
            has_seed.push_back(false);
            canon << '[' << name << "]\n";
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos) fail(line, "expected 'key = value'");
        std::string key = trim(s.substr(0, eq)), val = trim(s.substr(eq + 1));
        if (key.empty()) fail(line, "missing key");
        if (val.empty()) fail(line, "key '" + key + "' has no value");
        canon << key << '=' << normalize_list(val) << '\n';
        if (!cur) {
            if (key == "seed") cfg.seed = to_uint(val, line, key);
            else if (key == "output_dir") cfg.output_dir = val;
            else if (key == "threads") cfg.threads = static_cast<unsigned>(to_uint(val, line, key));
            else fail(line, "unknown top-level key '" + key + "'");
            continue;
        }
        set_key(*cur, key, val, line);
        if (key == "seed") has_seed.back() = true;
    }
    if (cfg.scans.empty()) throw UsageError("line " + std::to_string(line) + ": no scan sections");
    for (std::size_t i = 0; i < cfg.scans.size(); ++i) {
        auto& sp = cfg.scans[i];
        if (sp.scan.empty()) fail(sect_line[i], "section '" + sp.name + "' has no 'scan' key");
        if (!has_seed[i]) sp.seed = cfg.seed;
        sp.seed = section_seed(sp.seed, sp.name);
        if (sp.threads == 0) sp.threads = cfg.threads;
        try {
            sp.validate();
        } catch (const UsageError& e) {
            fail(sect_line[i], "section '" + sp.name + "': " + e.what());
        }
    }
    cfg.canonical = canon.str();
    cfg.hash = hex64(fnv1a(cfg.canonical));
    return cfg;
}

RunConfig parse_config_text(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

}  // namespace matchfluct
