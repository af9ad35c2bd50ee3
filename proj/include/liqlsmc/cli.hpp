#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "liqlsmc/evaluate.hpp"
#include "liqlsmc/lsmc.hpp"
#include "liqlsmc/model.hpp"

namespace liqlsmc {

/// Invalid, missing or unknown configuration key.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& key, const std::string& reason)
        : std::invalid_argument("config key '" + key + "': " + reason), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// One documented key of the flat config schema.
struct ConfigKey {
    std::string name;
    std::string default_value;  // empty with required = true means the key must be supplied
    bool required = false;
    std::string doc;
};

const std::vector<ConfigKey>& config_schema();

using ConfigValues = std::map<std::string, std::string>;

/// Parses `key = value` lines; '#' starts a comment. Duplicate keys are an error.
ConfigValues parse_config_text(const std::string& text);

/// Applies `key=value` overrides on top of `values`.
ConfigValues apply_overrides(ConfigValues values, const std::vector<std::string>& overrides);

struct RunConfig {
    SolveConfig solve;
    ExogenousModel model;
    std::uint64_t eval_seed = 2;
    std::size_t eval_paths = 0;
    std::string output_dir;
    std::string policy_path;
    std::string prices_csv;
    std::string var1_path;
    std::size_t asset_index = 0;
    SweepAxis sweep_axis = SweepAxis::VolDay;
    std::vector<double> sweep_values;
    std::vector<std::size_t> benchmark_paths;
    std::size_t benchmark_iterations = 3;
    bool benchmark_klp = true;
    ConfigValues resolved;  // every schema key with its effective value
};

/// Validates every key (unknown keys rejected, required keys present, values
/// typed) before anything is computed.
RunConfig resolve_config(const ConfigValues& values);

/// The resolved configuration as `key = value` lines in schema order.
std::string render_config(const RunConfig& rc);

const std::vector<std::string>& commands();

/// Runs one command. Returns the process exit status; errors are reported on `err`.
int run(const std::string& command, const std::string& config_path, const std::vector<std::string>& overrides,
        bool dry_run, std::ostream& out, std::ostream& err);

}  // namespace liqlsmc
