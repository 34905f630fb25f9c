#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "meshflow/csv.hpp"
#include "meshflow/types.hpp"

namespace meshflow {

// ---------------------------------------------------------------------------
// Parsing policy. Every input row is either yielded or counted as rejected;
// strict mode turns a bad row into a fatal error.

struct FormatConfig {
    bool strict = false;
};

struct ParseStats {
    std::size_t total = 0;
    std::size_t yielded = 0;
    std::size_t rejected = 0;
};

namespace detail {

inline bool reject(const CsvReader& r, const FormatConfig& cfg,
                   ParseStats& stats, const std::string& why) {
    if (cfg.strict) bad_row(r, why);
    ++stats.rejected;
    return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// IPv4 helpers: dotted-quad or plain integer notation.

inline std::optional<Ipv4> parse_ipv4(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.find('.') == std::string_view::npos) {
        auto v = parse_int(s);
        if (!v || *v < 0 || *v > 0xffffffffll) return std::nullopt;
        return static_cast<Ipv4>(*v);
    }
    std::vector<std::string_view> parts;
    split_fields(s, '.', parts);
    if (parts.size() != 4) return std::nullopt;
    Ipv4 ip = 0;
    for (auto p : parts) {
        auto v = parse_int(p);
        if (!v || *v < 0 || *v > 255) return std::nullopt;
        ip = (ip << 8) | static_cast<Ipv4>(*v);
    }
    return ip;
}

inline std::string format_ipv4(Ipv4 ip) {
    return std::to_string((ip >> 24) & 0xff) + "." +
           std::to_string((ip >> 16) & 0xff) + "." +
           std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

// ---------------------------------------------------------------------------
// Event log. Two accepted headers:
//   user_id,timestamp,ip
//   user_id,timestamp,lat,lon,country

using EventSink = std::function<void(const EventRecord&)>;

inline ParseStats parse_event_log(const std::string& path,
                                  const FormatConfig& cfg,
                                  const EventSink& sink) {
    CsvReader reader(path);
    ParseStats stats;
    std::size_t c_user = reader.column("user_id");
    std::size_t c_time = reader.column("timestamp");
    bool ip_form = reader.has_column("ip");
    std::size_t c_ip = 0, c_lat = 0, c_lon = 0, c_country = 0;
    if (ip_form) {
        c_ip = reader.column("ip");
    } else {
        c_lat = reader.column("lat");
        c_lon = reader.column("lon");
        c_country = reader.column("country");
    }
    std::size_t want = ip_form ? 3 : 5;

    std::vector<std::string_view> f;
    while (reader.next(f)) {
        ++stats.total;
        if (f.size() < want) {
            detail::reject(reader, cfg, stats, "too few fields");
            continue;
        }
        EventRecord rec;
        rec.user_id = std::string(f[c_user]);
        auto ts = parse_double(f[c_time]);
        if (rec.user_id.empty() || !ts || !std::isfinite(*ts) || *ts < 0) {
            detail::reject(reader, cfg, stats, "bad user id or timestamp");
            continue;
        }
        rec.timestamp = *ts;
        if (ip_form) {
            auto ip = parse_ipv4(f[c_ip]);
            if (!ip) {
                detail::reject(reader, cfg, stats, "unparseable ip");
                continue;
            }
            rec.location = *ip;
        } else {
            auto lat = parse_double(f[c_lat]);
            auto lon = parse_double(f[c_lon]);
            if (!lat || !lon || *lat < -90 || *lat > 90 || *lon < -180 ||
                *lon > 180 || f[c_country].empty()) {
                detail::reject(reader, cfg, stats, "bad coordinates or country");
                continue;
            }
            rec.location = GeoPoint{*lat, *lon, std::string(f[c_country])};
        }
        ++stats.yielded;
        sink(rec);
    }
    return stats;
}

inline std::vector<EventRecord> load_events(const std::string& path,
                                            const FormatConfig& cfg,
                                            ParseStats* stats_out = nullptr) {
    std::vector<EventRecord> out;
    ParseStats stats =
        parse_event_log(path, cfg, [&](const EventRecord& r) { out.push_back(r); });
    if (stats_out) *stats_out = stats;
    return out;
}

inline void write_event_log(std::ostream& out,
                            const std::vector<EventRecord>& events) {
    CsvWriter w(out);
    bool ip_form = events.empty() || events.front().has_ip();
    if (ip_form) {
        w.row("user_id", "timestamp", "ip");
        for (const auto& e : events)
            w.row(e.user_id, e.timestamp, format_ipv4(e.ip()));
    } else {
        w.row("user_id", "timestamp", "lat", "lon", "country");
        for (const auto& e : events) {
            const auto& p = e.point();
            w.row(e.user_id, e.timestamp, p.lat, p.lon, p.country);
        }
    }
}

// ---------------------------------------------------------------------------
// Directed edge list: sender,recipient,count.

inline std::vector<EdgeRecord> load_edges(const std::string& path,
                                          const FormatConfig& cfg,
                                          ParseStats* stats_out = nullptr) {
    CsvReader reader(path);
    ParseStats stats;
    std::size_t c_s = reader.column("sender");
    std::size_t c_r = reader.column("recipient");
    std::size_t c_n = reader.column("count");
    std::vector<EdgeRecord> out;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        ++stats.total;
        if (f.size() <= std::max({c_s, c_r, c_n})) {
            detail::reject(reader, cfg, stats, "too few fields");
            continue;
        }
        auto n = parse_int(f[c_n]);
        if (f[c_s].empty() || f[c_r].empty() || f[c_s] == f[c_r] || !n || *n < 1) {
            detail::reject(reader, cfg, stats, "bad edge record");
            continue;
        }
        out.push_back({std::string(f[c_s]), std::string(f[c_r]), *n});
        ++stats.yielded;
    }
    if (stats_out) *stats_out = stats;
    return out;
}

// ---------------------------------------------------------------------------
// Geo database: ip_lo,ip_hi,country,lat,lon. Lookup by binary search over
// ranges sorted by ip_lo; overlap is a construction-time fatal.

class GeoTable {
public:
    explicit GeoTable(std::vector<GeoRange> ranges) : ranges_(std::move(ranges)) {
        std::sort(ranges_.begin(), ranges_.end(),
                  [](const GeoRange& a, const GeoRange& b) {
                      return a.ip_lo < b.ip_lo;
                  });
        for (std::size_t i = 0; i < ranges_.size(); ++i) {
            if (ranges_[i].ip_lo > ranges_[i].ip_hi)
                throw DataError("geo range with ip_lo > ip_hi: " +
                                format_ipv4(ranges_[i].ip_lo));
            if (i > 0 && ranges_[i].ip_lo <= ranges_[i - 1].ip_hi)
                throw DataError("overlapping geo ranges at " +
                                format_ipv4(ranges_[i].ip_lo));
        }
    }

    /// Unique range containing ip, or nullptr if no range covers it.
    const GeoRange* lookup(Ipv4 ip) const {
        auto it = std::upper_bound(ranges_.begin(), ranges_.end(), ip,
                                   [](Ipv4 v, const GeoRange& r) {
                                       return v < r.ip_lo;
                                   });
        if (it == ranges_.begin()) return nullptr;
        --it;
        return ip <= it->ip_hi ? &*it : nullptr;
    }

    std::size_t size() const { return ranges_.size(); }
    const std::vector<GeoRange>& ranges() const { return ranges_; }

private:
    std::vector<GeoRange> ranges_;
};

inline GeoTable load_geodb(const std::string& path) {
    CsvReader reader(path);
    std::size_t c_lo = reader.column("ip_lo");
    std::size_t c_hi = reader.column("ip_hi");
    std::size_t c_country = reader.column("country");
    std::size_t c_lat = reader.column("lat");
    std::size_t c_lon = reader.column("lon");
    std::vector<GeoRange> ranges;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        if (f.size() < 5) detail::bad_row(reader, "too few fields");
        auto lo = parse_ipv4(f[c_lo]);
        auto hi = parse_ipv4(f[c_hi]);
        auto lat = parse_double(f[c_lat]);
        auto lon = parse_double(f[c_lon]);
        if (!lo || !hi || f[c_country].empty())
            detail::bad_row(reader, "bad geo range");
        GeoRange r;
        r.ip_lo = *lo;
        r.ip_hi = *hi;
        r.country = std::string(f[c_country]);
        // coordinates may be blank; residence falls back to country centroids
        r.lat = lat.value_or(std::nan(""));
        r.lon = lon.value_or(std::nan(""));
        ranges.push_back(r);
    }
    return GeoTable(std::move(ranges));
}

// ---------------------------------------------------------------------------
// Country table.

struct CountryFilterConfig {
    double min_population = 1'000'000;  // "more than 1m inhabitants"
    std::vector<CountryCode> excluded = {"SO", "MM", "PS"};
};

inline CountryRegistry load_country_table(const std::string& path,
                                          const CountryFilterConfig& filter = {}) {
    CsvReader reader(path);
    std::size_t c_code = reader.column("code");
    std::size_t c_name = reader.column("name");
    std::size_t c_pop = reader.column("population");
    std::size_t c_civ = reader.column("civilization");
    std::size_t c_gdp = reader.column("gdp");
    std::size_t c_pdi = reader.column("pdi");
    std::size_t c_idv = reader.column("idv");
    std::size_t c_mas = reader.column("mas");
    std::size_t c_uai = reader.column("uai");
    std::size_t c_trust = reader.column("trust");
    std::size_t c_langs = reader.column("languages");
    std::size_t c_region = reader.column("region");
    std::size_t c_eea = reader.column("eea");
    std::size_t c_lat = reader.column("lat");
    std::size_t c_lon = reader.column("lon");

    auto hofstede = [&](std::string_view s) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        auto v = parse_double(s);
        if (!v || *v < 0 || *v > 120) detail::bad_row(reader, "score out of range");
        return v;
    };

    CountryRegistry registry;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        if (f.size() < 15) detail::bad_row(reader, "too few fields");
        CountryMeta m;
        m.code = std::string(f[c_code]);
        m.name = std::string(f[c_name]);
        auto pop = parse_double(f[c_pop]);
        if (m.code.empty() || !pop || *pop <= 0)
            detail::bad_row(reader, "bad code or population");
        m.population = *pop;
        m.civilization = parse_civilization(f[c_civ]);
        m.gdp_per_capita = parse_double(f[c_gdp]).value_or(0.0);
        m.pdi = hofstede(f[c_pdi]);
        m.idv = hofstede(f[c_idv]);
        m.mas = hofstede(f[c_mas]);
        m.uai = hofstede(f[c_uai]);
        if (!f[c_trust].empty()) m.gen_trust = parse_double(f[c_trust]);
        if (!f[c_langs].empty()) {
            std::vector<std::string_view> langs;
            split_fields(f[c_langs], ';', langs);
            for (auto l : langs)
                if (!l.empty()) m.languages.insert(std::string(l));
        }
        m.region = std::string(f[c_region]);
        m.eea_member = f[c_eea] == "1" || f[c_eea] == "true";
        m.centroid.lat = parse_double(f[c_lat]).value_or(0.0);
        m.centroid.lon = parse_double(f[c_lon]).value_or(0.0);
        m.excluded = m.population < filter.min_population ||
                     std::find(filter.excluded.begin(), filter.excluded.end(),
                               m.code) != filter.excluded.end();
        registry.add(std::move(m));
    }
    return registry;
}

// ---------------------------------------------------------------------------
// Self-reported residence: user_id,country.

inline std::map<UserId, CountryCode> load_self_reports(const std::string& path) {
    CsvReader reader(path);
    std::size_t c_user = reader.column("user_id");
    std::size_t c_country = reader.column("country");
    std::map<UserId, CountryCode> out;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        if (f.size() < 2 || f[c_user].empty())
            detail::bad_row(reader, "bad self-report row");
        out[std::string(f[c_user])] = std::string(f[c_country]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dyadic covariates: a,b,trade_flow,colonial,commonwealth,contiguous,visa,
// flights,distance_km. Country totals are the sums of dyadic flows over all
// partners (total trade = imports + exports).

inline DyadTable load_dyad_table(const std::string& path,
                                 const CountryRegistry& registry) {
    CsvReader reader(path);
    std::size_t c_a = reader.column("a");
    std::size_t c_b = reader.column("b");
    std::size_t c_flow = reader.column("trade_flow");
    std::size_t c_col = reader.column("colonial");
    std::size_t c_cw = reader.column("commonwealth");
    std::size_t c_cont = reader.column("contiguous");
    std::size_t c_visa = reader.column("visa");
    std::size_t c_fl = reader.column("flights");
    std::size_t c_dist = reader.column("distance_km");

    auto flag = [](std::string_view s) { return s == "1" || s == "true"; };

    DyadTable table;
    std::map<CountryCode, double> totals;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        if (f.size() < 9) detail::bad_row(reader, "too few fields");
        if (f[c_a].empty() || f[c_b].empty() || f[c_a] == f[c_b])
            detail::bad_row(reader, "bad pair");
        DyadMeta d;
        d.pair = PairKey(std::string(f[c_a]), std::string(f[c_b]));
        if (!f[c_flow].empty()) {
            auto flow = parse_double(f[c_flow]);
            if (!flow || *flow < 0) detail::bad_row(reader, "bad trade flow");
            d.trade_flow = flow;
        }
        d.colonial_link = flag(f[c_col]);
        d.commonwealth_link = flag(f[c_cw]);
        d.contiguous = flag(f[c_cont]);
        d.visa_required = flag(f[c_visa]);
        auto flights = parse_double(f[c_fl]);
        if (!flights || *flights < 0) detail::bad_row(reader, "bad flight count");
        d.direct_flights = *flights;
        if (!f[c_dist].empty()) {
            auto dist = parse_double(f[c_dist]);
            if (!dist || *dist < 0) detail::bad_row(reader, "bad distance");
            d.distance_km = dist;
        }
        if (table.count(d.pair)) detail::bad_row(reader, "duplicate pair");
        if (d.trade_flow) {
            totals[d.pair.a] += *d.trade_flow;
            totals[d.pair.b] += *d.trade_flow;
        }
        table.emplace(d.pair, std::move(d));
    }
    for (auto& [key, d] : table) {
        d.total_trade_a = totals.count(key.a) ? totals[key.a] : 0.0;
        d.total_trade_b = totals.count(key.b) ? totals[key.b] : 0.0;
        if (!d.distance_km) {
            const CountryMeta* a = registry.find(key.a);
            const CountryMeta* b = registry.find(key.b);
            if (a && b)
                d.distance_km = haversine_km(a->centroid, b->centroid);
        }
    }
    return table;
}

}  // namespace meshflow
