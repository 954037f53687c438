#pragma once

#include "matchfluct/harness.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace matchfluct {

std::uint64_t fnv1a(std::string_view s);
std::string hex64(std::uint64_t v);

// Experiment configuration: top-level `seed` / `output_dir` / `threads`, then one
// `[name]` section of `key = value` lines per scan.  `#` starts a comment.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = ".";
    unsigned threads = 0;
    std::vector<ExperimentSpec> scans;
    std::string canonical;  // normalized text the hash is taken over
    std::string hash;
};

// Throws UsageError("line N: ...") on any schema violation.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_text(const std::string& text);

// The seed a section's scan runs with: mixes the run seed with the section name.
std::uint64_t section_seed(std::uint64_t seed, const std::string& name);

}  // namespace matchfluct
