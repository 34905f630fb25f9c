#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "meshflow/geo.hpp"
#include "meshflow/ingest.hpp"
#include "meshflow/types.hpp"

namespace meshflow {

// Residence inference: split each user's login history into spells (maximal
// same-country runs), invalidate spells around implausibly fast transitions,
// take the country with the greatest cumulative valid duration, and accept
// the user only when that country matches the self-report.

struct ResidenceConfig {
    double max_speed_kmh = 1000.0;   // transitions faster than this are invalid
    double min_valid_days = 90.0;    // cumulative valid-spell duration floor
    std::size_t min_country_users = 100;
};

inline constexpr double kSecondsPerDay = 86400.0;

struct ResolvedEvent {
    double timestamp = 0.0;
    CountryCode country;
    LatLon pos;
};

struct Spell {
    UserId user_id;
    CountryCode country;
    double start = 0.0;
    double end = 0.0;
    bool valid = true;
    LatLon first_pos;  // boundary coordinates for the speed check
    LatLon last_pos;
    std::size_t n_events = 0;

    double duration_days() const { return (end - start) / kSecondsPerDay; }
};

enum class ResidenceReason { ok, below_90_days, discordant, no_events };

inline const char* to_string(ResidenceReason r) {
    switch (r) {
        case ResidenceReason::ok: return "ok";
        case ResidenceReason::below_90_days: return "below_90_days";
        case ResidenceReason::discordant: return "discordant";
        case ResidenceReason::no_events: return "no_events";
    }
    return "?";
}

struct ResidenceResult {
    UserId user_id;
    std::optional<CountryCode> geolocated_country;
    std::optional<CountryCode> self_reported_country;
    bool accepted = false;
    ResidenceReason reason = ResidenceReason::no_events;
    double valid_days = 0.0;
};

// ---------------------------------------------------------------------------
// Event resolution: IP events via the geo table (range coordinates, falling
// back to the country centroid when the range has none), coordinate events
// pass through.

using EventResolver =
    std::function<std::optional<ResolvedEvent>(const EventRecord&)>;

inline EventResolver make_resolver(const GeoTable& geo,
                                   const CountryRegistry& registry) {
    return [&geo, &registry](const EventRecord& e) -> std::optional<ResolvedEvent> {
        ResolvedEvent r;
        r.timestamp = e.timestamp;
        if (e.has_ip()) {
            const GeoRange* range = geo.lookup(e.ip());
            if (!range) return std::nullopt;
            r.country = range->country;
            if (std::isfinite(range->lat) && std::isfinite(range->lon)) {
                r.pos = {range->lat, range->lon};
            } else {
                const CountryMeta* meta = registry.find(range->country);
                if (!meta) return std::nullopt;
                r.pos = meta->centroid;
            }
        } else {
            r.country = e.point().country;
            r.pos = {e.point().lat, e.point().lon};
        }
        if (!registry.find(r.country)) return std::nullopt;
        return r;
    };
}

// ---------------------------------------------------------------------------
// Spells: maximal runs of consecutive same-country events. Duration is
// last event time minus first event time of the run (gaps within a run
// count toward the duration).

inline std::vector<Spell> build_spells(const UserId& user,
                                       const std::vector<ResolvedEvent>& events) {
    std::vector<Spell> spells;
    for (const auto& e : events) {
        if (!spells.empty() && spells.back().country == e.country) {
            Spell& s = spells.back();
            s.end = e.timestamp;
            s.last_pos = e.pos;
            ++s.n_events;
        } else {
            Spell s;
            s.user_id = user;
            s.country = e.country;
            s.start = s.end = e.timestamp;
            s.first_pos = s.last_pos = e.pos;
            s.n_events = 1;
            spells.push_back(s);
        }
    }
    return spells;
}

/// Implied speed of the transition between two consecutive spells, km/h.
/// Zero elapsed time with nonzero distance reads as infinite.
inline double transition_speed_kmh(const Spell& from, const Spell& to) {
    double dist = haversine_km(from.last_pos, to.first_pos);
    double hours = (to.start - from.end) / 3600.0;
    if (hours <= 0.0) return dist > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return dist / hours;
}

/// Flags spells adjacent to a transition faster than max_speed_kmh as
/// invalid. A transition at exactly the threshold is valid.
inline void validate_transitions(std::vector<Spell>& spells,
                                 double max_speed_kmh) {
    for (std::size_t i = 0; i + 1 < spells.size(); ++i) {
        if (transition_speed_kmh(spells[i], spells[i + 1]) > max_speed_kmh) {
            spells[i].valid = false;
            spells[i + 1].valid = false;
        }
    }
}

// ---------------------------------------------------------------------------
// Modal-country selection and acceptance.

inline ResidenceResult infer_residence(
    const UserId& user, const std::vector<Spell>& spells,
    const std::optional<CountryCode>& self_report,
    const ResidenceConfig& cfg = {}) {
    ResidenceResult res;
    res.user_id = user;
    res.self_reported_country = self_report;
    if (spells.empty()) {
        res.reason = ResidenceReason::no_events;
        return res;
    }

    struct Tally {
        double duration = 0.0;
        double first_seen = std::numeric_limits<double>::infinity();
    };
    std::map<CountryCode, Tally> tally;
    double total_valid = 0.0;
    for (const auto& s : spells) {
        if (!s.valid) continue;
        double d = s.end - s.start;
        Tally& t = tally[s.country];
        t.duration += d;
        t.first_seen = std::min(t.first_seen, s.start);
        total_valid += d;
    }
    res.valid_days = total_valid / kSecondsPerDay;

    if (res.valid_days < cfg.min_valid_days) {
        res.reason = ResidenceReason::below_90_days;
        return res;
    }

    // modal country: greatest cumulative valid duration; ties broken by
    // earlier first observation, then lexicographic code
    const CountryCode* modal = nullptr;
    const Tally* best = nullptr;
    for (const auto& [code, t] : tally) {
        bool better = !best || t.duration > best->duration ||
                      (t.duration == best->duration &&
                       (t.first_seen < best->first_seen ||
                        (t.first_seen == best->first_seen && code < *modal)));
        if (better) {
            modal = &code;
            best = &t;
        }
    }
    res.geolocated_country = *modal;

    if (!self_report || *self_report != *modal) {
        res.reason = ResidenceReason::discordant;
        return res;
    }
    res.accepted = true;
    res.reason = ResidenceReason::ok;
    return res;
}

// ---------------------------------------------------------------------------
// Whole-dataset driver.

struct ResidenceOutcome {
    std::vector<ResidenceResult> results;       // one per user, user order
    std::size_t dropped_events = 0;             // unresolvable events
    std::map<CountryCode, std::size_t> accepted_by_country;
};

inline ResidenceOutcome infer_all(const std::vector<EventRecord>& events,
                                  const EventResolver& resolver,
                                  const std::map<UserId, CountryCode>& self_reports,
                                  const ResidenceConfig& cfg = {}) {
    ResidenceOutcome out;
    std::map<UserId, std::vector<ResolvedEvent>> by_user;
    for (const auto& e : events) {
        auto r = resolver(e);
        if (!r) {
            ++out.dropped_events;
            continue;
        }
        by_user[e.user_id].push_back(*r);
    }
    // users mentioned only in the self-report table still get a (no_events)
    // result so that yielded + rejected accounting stays total
    for (const auto& [user, country] : self_reports)
        by_user.try_emplace(user);

    for (auto& [user, evs] : by_user) {
        std::sort(evs.begin(), evs.end(),
                  [](const ResolvedEvent& a, const ResolvedEvent& b) {
                      return std::tie(a.timestamp, a.country, a.pos.lat, a.pos.lon) <
                             std::tie(b.timestamp, b.country, b.pos.lat, b.pos.lon);
                  });
        std::vector<Spell> spells = build_spells(user, evs);
        validate_transitions(spells, cfg.max_speed_kmh);
        std::optional<CountryCode> self;
        if (auto it = self_reports.find(user); it != self_reports.end())
            self = it->second;
        ResidenceResult r = infer_residence(user, spells, self, cfg);
        if (r.accepted) ++out.accepted_by_country[*r.geolocated_country];
        out.results.push_back(std::move(r));
    }
    return out;
}

/// Countries retaining at least min_users accepted users.
inline std::vector<CountryCode> apply_country_threshold(
    const std::map<CountryCode, std::size_t>& accepted_by_country,
    std::size_t min_users) {
    std::vector<CountryCode> retained;
    for (const auto& [code, n] : accepted_by_country)
        if (n >= min_users) retained.push_back(code);
    return retained;
}

}  // namespace meshflow
