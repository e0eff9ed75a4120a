// Run configuration for the command-line driver: provider selection,
// routing condition, and the reproducibility echo that lands in run
// ledgers. Secrets travel only through environment variables.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <dualtrace/encode.hpp>

namespace dualtrace::cli {

struct Config {
    std::string provider = "mock"; // "mock" | "http"
    std::string base_url;
    std::string model;
    std::string api_key;           // secret; never serialized or echoed
    std::string key_source = "none"; // provenance tag, e.g. "env:DUALTRACE_API_KEY"
    int call_timeout_seconds = 300;
    int max_retries = 2;
    std::int64_t stall_window_ms = 30000;
    int parallel = 1;
    std::string condition = "c6"; // c6 | c7 | c4
    std::uint64_t seed = 42;
    std::filesystem::path store_dir = "memory_store";
};

/// Defaults, then the optional JSON config file, then environment
/// overrides (DUALTRACE_BASE_URL, DUALTRACE_MODEL, DUALTRACE_API_KEY).
/// Unknown file keys are rejected, as is an `api_key` entry: keys are
/// accepted only from the environment so they cannot end up in committed
/// config files. Throws SchemaError for file problems and ValidationError
/// for out-of-range values.
Config load_config(const std::optional<std::filesystem::path>& file);

/// Maps a condition label to its encode config; ValidationError otherwise.
encode::ConditionConfig condition_from_name(const std::string& name);

/// Settings echoed into the teach ledger's config line, excluding both
/// secrets (the key is represented by key_source) and the fields the
/// harness already writes itself (condition, scheme, parallel,
/// stall window, seed).
std::map<std::string, std::string> config_echo(const Config& config);

} // namespace dualtrace::cli
