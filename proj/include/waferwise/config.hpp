#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "waferwise/fabsim.hpp"

namespace waferwise::config {

enum class ValueType { String, Int, Double, Bool, List };

struct KeyInfo {
    std::string key;  // "section.name"
    ValueType type = ValueType::String;
    std::string default_value;
    std::string help;
    bool echoed = true;  // runtime-only keys (e.g. run.jobs) do not affect artifacts
};

/// Every accepted key with its default, in echo order.
const std::vector<KeyInfo>& known_keys();

/// Key-value run configuration. Files use `[section]` headers and `name = value` lines;
/// `#` and `;` start comments. Unknown keys and malformed values throw Error("invalid_config")
/// naming the key.
class RunConfig {
public:
    RunConfig();

    void load_text(std::string_view text, std::string_view source = "<config>");
    void load_file(const std::filesystem::path& path);
    /// key is "section.name".
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    long long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    /// Comma-separated, trimmed, empty items dropped.
    std::vector<std::string> get_list(const std::string& key) const;

    /// Resolved configuration of every echoed key, loadable by load_text.
    std::string resolved_text(std::string_view header_comment) const;

private:
    std::map<std::string, std::string> values_;
};

/// Generator configuration from the [synth] keys.
fabsim::ScenarioConfig scenario_from(const RunConfig& config);

}  // namespace waferwise::config
