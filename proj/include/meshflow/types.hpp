#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "meshflow/errors.hpp"
#include "meshflow/geo.hpp"

namespace meshflow {

using CountryCode = std::string;  // ISO-3166 alpha-2
using UserId = std::string;

// ---------------------------------------------------------------------------
// Civilizations (Huntington's eight blocks, Russett-Oneal-Cox coding).

enum class Civilization : int {
    African = 0,
    Buddhist,
    Hindu,
    Islamic,
    LatinAmerican,
    Orthodox,
    Sinic,
    Western,
};

inline constexpr int kNumCivilizations = 8;

inline const std::array<const char*, kNumCivilizations>& civilization_names() {
    static const std::array<const char*, kNumCivilizations> names = {
        "African",  "Buddhist", "Hindu", "Islamic",
        "Latin American", "Orthodox", "Sinic", "Western"};
    return names;
}

inline const char* to_string(Civilization c) {
    return civilization_names()[static_cast<int>(c)];
}

inline Civilization parse_civilization(std::string_view label) {
    const auto& names = civilization_names();
    for (int i = 0; i < kNumCivilizations; ++i)
        if (label == names[i]) return static_cast<Civilization>(i);
    // tolerate the no-space spelling used by some upstream tables
    if (label == "LatinAmerican") return Civilization::LatinAmerican;
    throw DataError("unknown civilization label '" + std::string(label) + "'");
}

// ---------------------------------------------------------------------------
// Login events. Location is either an IPv4 address (resolved against the geo
// table) or direct coordinates with a country code.

using Ipv4 = std::uint32_t;

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;
    CountryCode country;

    bool operator==(const GeoPoint&) const = default;
};

struct EventRecord {
    UserId user_id;
    double timestamp = 0.0;  // UTC seconds
    std::variant<Ipv4, GeoPoint> location;

    bool has_ip() const { return std::holds_alternative<Ipv4>(location); }
    Ipv4 ip() const { return std::get<Ipv4>(location); }
    const GeoPoint& point() const { return std::get<GeoPoint>(location); }

    bool operator==(const EventRecord&) const = default;
};

struct EdgeRecord {
    UserId sender;
    UserId recipient;
    long long count = 1;

    bool operator==(const EdgeRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Geo database: IPv4 ranges mapped to a country + representative coordinates.

struct GeoRange {
    Ipv4 ip_lo = 0;
    Ipv4 ip_hi = 0;
    CountryCode country;
    double lat = 0.0;
    double lon = 0.0;
};

// ---------------------------------------------------------------------------
// Country registry.

struct CountryMeta {
    CountryCode code;
    std::string name;
    double population = 0.0;  // adults
    Civilization civilization = Civilization::Western;
    double gdp_per_capita = 0.0;  // 2011 USD
    std::optional<double> pdi, idv, mas, uai;  // Hofstede, 0-100 scales
    std::optional<double> gen_trust;
    std::set<std::string> languages;  // ISO codes
    std::string region;
    bool eea_member = false;
    LatLon centroid;
    bool excluded = false;  // exclusion list or population floor
};

class CountryRegistry {
public:
    /// Throws on duplicate code.
    std::size_t add(CountryMeta meta) {
        auto [it, inserted] = index_.emplace(meta.code, rows_.size());
        if (!inserted)
            throw DataError("duplicate country code '" + meta.code + "'");
        rows_.push_back(std::move(meta));
        return rows_.size() - 1;
    }

    std::size_t size() const { return rows_.size(); }
    const CountryMeta& at(std::size_t i) const { return rows_.at(i); }
    CountryMeta& at(std::size_t i) { return rows_.at(i); }

    const CountryMeta* find(const CountryCode& code) const {
        auto it = index_.find(code);
        return it == index_.end() ? nullptr : &rows_[it->second];
    }

    std::optional<std::size_t> index_of(const CountryCode& code) const {
        auto it = index_.find(code);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::vector<CountryMeta>& rows() const { return rows_; }

    /// Codes of countries surviving the exclusion list + population floor,
    /// in registry (file) order.
    std::vector<CountryCode> included_codes() const {
        std::vector<CountryCode> out;
        for (const auto& m : rows_)
            if (!m.excluded) out.push_back(m.code);
        return out;
    }

private:
    std::vector<CountryMeta> rows_;
    std::map<CountryCode, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Dyad-level covariates (trade, contiguity, flights, ...), keyed by the
// canonical (a < b) country pair.

struct PairKey {
    CountryCode a, b;

    PairKey() = default;
    PairKey(CountryCode x, CountryCode y) {
        if (x <= y) {
            a = std::move(x);
            b = std::move(y);
        } else {
            a = std::move(y);
            b = std::move(x);
        }
    }

    bool same_country() const { return a == b; }
    auto operator<=>(const PairKey&) const = default;
};

struct DyadMeta {
    PairKey pair;
    std::optional<double> trade_flow;  // 2011 USD; missing -> imputation
    double total_trade_a = 0.0;        // filled from the dyadic table
    double total_trade_b = 0.0;
    bool colonial_link = false;
    bool commonwealth_link = false;
    bool contiguous = false;
    bool visa_required = false;
    double direct_flights = 0.0;
    std::optional<double> distance_km;  // centroid distance when absent
};

using DyadTable = std::map<PairKey, DyadMeta>;

}  // namespace meshflow
