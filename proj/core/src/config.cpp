#include <dualtrace/config.hpp>

#include <dualtrace/errors.hpp>

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <set>

namespace dualtrace::cli {

namespace {

using nlohmann::json;

const std::set<std::string> kKnownKeys = {
    "provider",    "base_url", "model",     "call_timeout_seconds", "max_retries",
    "stall_window_ms", "parallel", "condition", "seed",                 "store_dir"};

void apply_file(Config& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.good()) throw StoreError("cannot read config file '" + path.string() + "'");
    json root = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (root.is_discarded() || !root.is_object())
        throw SchemaError("config file '" + path.string() + "' is not a JSON object");

    for (const auto& [key, value] : root.items()) {
        if (key == "api_key")
            throw ValidationError(
                "config files must not carry api_key; set DUALTRACE_API_KEY instead");
        if (!kKnownKeys.count(key))
            throw SchemaError("unknown config key '" + key + "'");
        try {
            if (key == "provider")
                config.provider = value.get<std::string>();
            else if (key == "base_url")
                config.base_url = value.get<std::string>();
            else if (key == "model")
                config.model = value.get<std::string>();
            else if (key == "call_timeout_seconds")
                config.call_timeout_seconds = value.get<int>();
            else if (key == "max_retries")
                config.max_retries = value.get<int>();
            else if (key == "stall_window_ms")
                config.stall_window_ms = value.get<std::int64_t>();
            else if (key == "parallel")
                config.parallel = value.get<int>();
            else if (key == "condition")
                config.condition = value.get<std::string>();
            else if (key == "seed")
                config.seed = value.get<std::uint64_t>();
            else if (key == "store_dir")
                config.store_dir = value.get<std::string>();
        } catch (const json::exception&) {
            throw SchemaError("config key '" + key + "' has the wrong type");
        }
    }
}

void apply_environment(Config& config) {
    if (const char* value = std::getenv("DUALTRACE_BASE_URL")) config.base_url = value;
    if (const char* value = std::getenv("DUALTRACE_MODEL")) config.model = value;
    if (const char* value = std::getenv("DUALTRACE_API_KEY"); value && *value) {
        config.api_key = value;
        config.key_source = "env:DUALTRACE_API_KEY";
    }
}

void validate(const Config& config) {
    if (config.provider != "mock" && config.provider != "http")
        throw ValidationError("provider must be 'mock' or 'http', got '" + config.provider + "'");
    if (config.parallel < 1) throw ValidationError("parallel must be at least 1");
    if (config.call_timeout_seconds < 1)
        throw ValidationError("call_timeout_seconds must be positive");
    if (config.max_retries < 0) throw ValidationError("max_retries must be non-negative");
    if (config.stall_window_ms < 1) throw ValidationError("stall_window_ms must be positive");
    condition_from_name(config.condition);
}

} // namespace

Config load_config(const std::optional<std::filesystem::path>& file) {
    Config config;
    if (file) apply_file(config, *file);
    apply_environment(config);
    validate(config);
    return config;
}

encode::ConditionConfig condition_from_name(const std::string& name) {
    if (name == "c6") return encode::ConditionConfig::c6();
    if (name == "c7") return encode::ConditionConfig::c7();
    if (name == "c4") return encode::ConditionConfig::c4();
    throw ValidationError("unknown condition '" + name + "' (expected c6, c7, or c4)");
}

std::map<std::string, std::string> config_echo(const Config& config) {
    std::map<std::string, std::string> echo;
    echo["provider"] = config.provider;
    if (!config.base_url.empty()) echo["base_url"] = config.base_url;
    if (!config.model.empty()) echo["model"] = config.model;
    echo["key_source"] = config.key_source;
    echo["call_timeout_seconds"] = std::to_string(config.call_timeout_seconds);
    echo["max_retries"] = std::to_string(config.max_retries);
    echo["store_dir"] = config.store_dir.string();
    return echo;
}

} // namespace dualtrace::cli
