#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "meshflow/errors.hpp"
#include "meshflow/residence.hpp"
#include "meshflow/synth.hpp"

namespace meshflow {

// Minimal TOML subset: [sections], key = value with string / number / bool /
// flat array values, # comments. Enough for pipeline.toml and synth specs;
// unknown keys are rejected so every threshold has one auditable home.

struct TomlValue {
    enum class Kind { string, number, boolean, array } kind = Kind::string;
    std::string str;
    double num = 0.0;
    bool flag = false;
    std::vector<TomlValue> items;
};

class TomlTable {
public:
    static TomlTable parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    static TomlTable parse(const std::string& text, const std::string& name = "") {
        TomlTable t;
        std::string section;
        std::istringstream in(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string s = strip_comment(line);
            s = trim(s);
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw ConfigError(name + ":" + std::to_string(line_no) +
                                      ": malformed section header");
                section = trim(s.substr(1, s.size() - 2));
                continue;
            }
            std::size_t eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError(name + ":" + std::to_string(line_no) +
                                  ": expected key = value");
            std::string key = trim(s.substr(0, eq));
            std::string value = trim(s.substr(eq + 1));
            if (key.empty() || value.empty())
                throw ConfigError(name + ":" + std::to_string(line_no) +
                                  ": empty key or value");
            std::string full = section.empty() ? key : section + "." + key;
            if (t.values_.count(full))
                throw ConfigError(name + ": duplicate key " + full);
            t.values_[full] = parse_value(value, name, line_no);
        }
        return t;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    const std::map<std::string, TomlValue>& values() const { return values_; }

    std::string get_string(const std::string& key, const std::string& dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        if (it->second.kind != TomlValue::Kind::string)
            throw ConfigError(key + ": expected a string");
        return it->second.str;
    }

    double get_number(const std::string& key, double dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        if (it->second.kind != TomlValue::Kind::number)
            throw ConfigError(key + ": expected a number");
        return it->second.num;
    }

    bool get_bool(const std::string& key, bool dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        if (it->second.kind != TomlValue::Kind::boolean)
            throw ConfigError(key + ": expected a boolean");
        return it->second.flag;
    }

    std::vector<std::string> get_string_array(
        const std::string& key, const std::vector<std::string>& dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        if (it->second.kind != TomlValue::Kind::array)
            throw ConfigError(key + ": expected an array");
        std::vector<std::string> out;
        for (const auto& v : it->second.items) {
            if (v.kind != TomlValue::Kind::string)
                throw ConfigError(key + ": expected an array of strings");
            out.push_back(v.str);
        }
        return out;
    }

    /// Every present key must be in `known`; unknown keys are config errors.
    void reject_unknown(const std::set<std::string>& known) const {
        for (const auto& [key, _] : values_)
            if (!known.count(key))
                throw ConfigError("unknown config key '" + key + "'");
    }

private:
    static std::string strip_comment(const std::string& s) {
        bool in_string = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') in_string = !in_string;
            if (s[i] == '#' && !in_string) return s.substr(0, i);
        }
        return s;
    }

    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    static TomlValue parse_value(const std::string& v, const std::string& name,
                                 std::size_t line_no) {
        TomlValue out;
        if (v.front() == '"') {
            if (v.size() < 2 || v.back() != '"')
                throw ConfigError(name + ":" + std::to_string(line_no) +
                                  ": unterminated string");
            out.kind = TomlValue::Kind::string;
            out.str = v.substr(1, v.size() - 2);
            return out;
        }
        if (v == "true" || v == "false") {
            out.kind = TomlValue::Kind::boolean;
            out.flag = v == "true";
            return out;
        }
        if (v.front() == '[') {
            if (v.back() != ']')
                throw ConfigError(name + ":" + std::to_string(line_no) +
                                  ": unterminated array");
            out.kind = TomlValue::Kind::array;
            std::string inner = trim(v.substr(1, v.size() - 2));
            if (inner.empty()) return out;
            std::size_t start = 0;
            bool in_string = false;
            for (std::size_t i = 0; i <= inner.size(); ++i) {
                if (i < inner.size() && inner[i] == '"') in_string = !in_string;
                if (i == inner.size() || (inner[i] == ',' && !in_string)) {
                    out.items.push_back(
                        parse_value(trim(inner.substr(start, i - start)), name,
                                    line_no));
                    start = i + 1;
                }
            }
            return out;
        }
        auto num = parse_double(v);
        if (!num)
            throw ConfigError(name + ":" + std::to_string(line_no) +
                              ": cannot parse value '" + v + "'");
        out.kind = TomlValue::Kind::number;
        out.num = *num;
        return out;
    }

    std::map<std::string, TomlValue> values_;
};

// ---------------------------------------------------------------------------
// Pipeline configuration.

struct PipelineConfig {
    // inputs
    std::string events_path, edges_path, geodb_path, countries_path,
        dyads_path, users_path;
    std::string out_dir = "out";

    // ingest
    bool strict = false;
    double min_population = 1'000'000;
    std::vector<std::string> exclude = {"SO", "MM", "PS"};

    // residence
    ResidenceConfig residence;

    // densities
    double edge_floor = 1.0;

    // netstats
    std::size_t k_top = 100;
    std::size_t layout_top = 1000;
    std::uint64_t layout_seed = 1;
    double betweenness_eps = 1e-9;

    // partition
    std::size_t walktrap_steps = 4;
    std::uint64_t spinglass_seed = 1;
    int spinglass_spins = 25;
    double spinglass_gamma = 1.0;

    // qap
    std::size_t qap_permutations = 10000;
    std::uint64_t qap_seed = 1;
    unsigned qap_threads = 1;
    std::string qap_absent_policy = "zero";  // or "drop"

    // regress
    bool reml = false;
    bool shared_country_effect = false;
    std::string impute = "mean";  // or "min"

    std::optional<WorldSpec> synth;

    std::string config_digest;  // filled by the loader
};

inline const std::set<std::string>& pipeline_known_keys() {
    static const std::set<std::string> keys = {
        "inputs.events", "inputs.edges", "inputs.geodb", "inputs.countries",
        "inputs.dyads", "inputs.users",
        "output.dir",
        "ingest.strict", "ingest.min_population", "ingest.exclude",
        "residence.max_speed_kmh", "residence.min_valid_days",
        "residence.min_country_users",
        "densities.edge_floor",
        "netstats.k_top", "netstats.layout_top", "netstats.layout_seed",
        "netstats.betweenness_epsilon",
        "partition.walktrap_steps", "partition.spinglass_seed",
        "partition.spinglass_spins", "partition.spinglass_gamma",
        "qap.permutations", "qap.seed", "qap.threads", "qap.absent_policy",
        "regress.reml", "regress.shared_country_effect", "regress.impute",
        "synth.n_countries", "synth.population_min", "synth.population_max",
        "synth.n_civilizations", "synth.base_log_density",
        "synth.civilization_bonus", "synth.within_country_bonus",
        "synth.distance_decay", "synth.coverage_min", "synth.coverage_max",
        "synth.snowball_seeds", "synth.seed",
    };
    return keys;
}

inline PipelineConfig pipeline_config_from_toml(const TomlTable& t) {
    t.reject_unknown(pipeline_known_keys());
    PipelineConfig c;
    c.events_path = t.get_string("inputs.events", "");
    c.edges_path = t.get_string("inputs.edges", "");
    c.geodb_path = t.get_string("inputs.geodb", "");
    c.countries_path = t.get_string("inputs.countries", "");
    c.dyads_path = t.get_string("inputs.dyads", "");
    c.users_path = t.get_string("inputs.users", "");
    c.out_dir = t.get_string("output.dir", c.out_dir);

    c.strict = t.get_bool("ingest.strict", c.strict);
    c.min_population = t.get_number("ingest.min_population", c.min_population);
    c.exclude = t.get_string_array("ingest.exclude", c.exclude);

    c.residence.max_speed_kmh =
        t.get_number("residence.max_speed_kmh", c.residence.max_speed_kmh);
    c.residence.min_valid_days =
        t.get_number("residence.min_valid_days", c.residence.min_valid_days);
    c.residence.min_country_users = static_cast<std::size_t>(t.get_number(
        "residence.min_country_users",
        static_cast<double>(c.residence.min_country_users)));

    c.edge_floor = t.get_number("densities.edge_floor", c.edge_floor);

    c.k_top = static_cast<std::size_t>(
        t.get_number("netstats.k_top", static_cast<double>(c.k_top)));
    c.layout_top = static_cast<std::size_t>(
        t.get_number("netstats.layout_top", static_cast<double>(c.layout_top)));
    c.layout_seed = static_cast<std::uint64_t>(
        t.get_number("netstats.layout_seed", static_cast<double>(c.layout_seed)));
    c.betweenness_eps =
        t.get_number("netstats.betweenness_epsilon", c.betweenness_eps);

    c.walktrap_steps = static_cast<std::size_t>(t.get_number(
        "partition.walktrap_steps", static_cast<double>(c.walktrap_steps)));
    c.spinglass_seed = static_cast<std::uint64_t>(t.get_number(
        "partition.spinglass_seed", static_cast<double>(c.spinglass_seed)));
    c.spinglass_spins = static_cast<int>(t.get_number(
        "partition.spinglass_spins", static_cast<double>(c.spinglass_spins)));
    c.spinglass_gamma =
        t.get_number("partition.spinglass_gamma", c.spinglass_gamma);

    c.qap_permutations = static_cast<std::size_t>(t.get_number(
        "qap.permutations", static_cast<double>(c.qap_permutations)));
    c.qap_seed = static_cast<std::uint64_t>(
        t.get_number("qap.seed", static_cast<double>(c.qap_seed)));
    c.qap_threads = static_cast<unsigned>(
        t.get_number("qap.threads", static_cast<double>(c.qap_threads)));
    c.qap_absent_policy = t.get_string("qap.absent_policy", c.qap_absent_policy);

    c.reml = t.get_bool("regress.reml", c.reml);
    c.shared_country_effect =
        t.get_bool("regress.shared_country_effect", c.shared_country_effect);
    c.impute = t.get_string("regress.impute", c.impute);

    if (t.has("synth.n_countries")) {
        WorldSpec w;
        w.n_countries = static_cast<int>(t.get_number(
            "synth.n_countries", static_cast<double>(w.n_countries)));
        w.population_min = t.get_number("synth.population_min", w.population_min);
        w.population_max = t.get_number("synth.population_max", w.population_max);
        w.n_civilizations = static_cast<int>(t.get_number(
            "synth.n_civilizations", static_cast<double>(w.n_civilizations)));
        w.base_log_density =
            t.get_number("synth.base_log_density", w.base_log_density);
        w.civilization_bonus =
            t.get_number("synth.civilization_bonus", w.civilization_bonus);
        w.within_country_bonus =
            t.get_number("synth.within_country_bonus", w.within_country_bonus);
        w.distance_decay = t.get_number("synth.distance_decay", w.distance_decay);
        w.coverage_min = t.get_number("synth.coverage_min", w.coverage_min);
        w.coverage_max = t.get_number("synth.coverage_max", w.coverage_max);
        w.snowball_seeds = static_cast<int>(t.get_number(
            "synth.snowball_seeds", static_cast<double>(w.snowball_seeds)));
        w.seed = static_cast<std::uint64_t>(
            t.get_number("synth.seed", static_cast<double>(w.seed)));
        c.synth = w;
    }

    // domain checks before any stage writes anything
    if (c.residence.max_speed_kmh <= 0)
        throw ConfigError("residence.max_speed_kmh must be positive");
    if (c.residence.min_valid_days < 0)
        throw ConfigError("residence.min_valid_days must be nonnegative");
    if (c.residence.min_country_users < 1)
        throw ConfigError("residence.min_country_users must be >= 1");
    if (c.edge_floor < 1)
        throw ConfigError("densities.edge_floor must be >= 1");
    if (c.k_top < 1) throw ConfigError("netstats.k_top must be >= 1");
    if (c.qap_permutations < 1)
        throw ConfigError("qap.permutations must be >= 1");
    if (c.qap_absent_policy != "zero" && c.qap_absent_policy != "drop")
        throw ConfigError("qap.absent_policy must be \"zero\" or \"drop\"");
    if (c.impute != "mean" && c.impute != "min")
        throw ConfigError("regress.impute must be \"mean\" or \"min\"");
    if (c.walktrap_steps < 1)
        throw ConfigError("partition.walktrap_steps must be >= 1");
    if (c.spinglass_spins < 2)
        throw ConfigError("partition.spinglass_spins must be >= 2");
    return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    PipelineConfig c = pipeline_config_from_toml(TomlTable::parse_file(path));
    // digest of the raw config text, for the run manifest
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : ss.str()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(h));
    c.config_digest = buf;
    return c;
}

}  // namespace meshflow
