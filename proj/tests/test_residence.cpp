#include <catch2/catch_amalgamated.hpp>

#include "meshflow/residence.hpp"
#include "meshflow/rng.hpp"

using namespace meshflow;

namespace {

ResolvedEvent ev(double day, const char* country, double lat = 0, double lon = 0) {
    return {day * kSecondsPerDay, country, {lat, lon}};
}

std::vector<Spell> spells_of(const std::vector<ResolvedEvent>& events) {
    return build_spells("u", events);
}

}  // namespace

TEST_CASE("single-country run is one spell with gap-inclusive duration",
          "[residence]") {
    auto spells = spells_of({ev(0, "XX"), ev(4, "XX"), ev(10, "XX")});
    REQUIRE(spells.size() == 1);
    CHECK(spells[0].country == "XX");
    CHECK(spells[0].duration_days() == Catch::Approx(10.0));
    CHECK(spells[0].n_events == 3);
}

TEST_CASE("country change splits the run", "[residence]") {
    auto spells =
        spells_of({ev(0, "XX"), ev(1, "XX"), ev(2, "YY"), ev(3, "YY")});
    REQUIRE(spells.size() == 2);
    CHECK(spells[0].country == "XX");
    CHECK(spells[1].country == "YY");
}

TEST_CASE("spell replay reproduces the country sequence", "[residence]") {
    Rng rng = make_rng(4242);
    const std::vector<std::string> countries = {"AA", "BB", "CC", "DD"};
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<ResolvedEvent> events;
        double t = 0;
        for (int i = 0; i < 50; ++i) {
            t += uniform_real(rng, 0.1, 5.0);
            events.push_back(ev(t, countries[uniform_index(rng, 4)].c_str()));
        }
        auto spells = spells_of(events);
        // replay: expanding each spell by its event count rebuilds the sequence
        std::vector<std::string> replay;
        for (const auto& s : spells)
            for (std::size_t k = 0; k < s.n_events; ++k) replay.push_back(s.country);
        REQUIRE(replay.size() == events.size());
        for (std::size_t k = 0; k < events.size(); ++k)
            REQUIRE(replay[k] == events[k].country);
        // and consecutive spells always differ in country
        for (std::size_t k = 0; k + 1 < spells.size(); ++k)
            REQUIRE(spells[k].country != spells[k + 1].country);
    }
}

TEST_CASE("implied speed gates transitions", "[residence]") {
    // ~8000 km apart on the equator, one hour apart: far over the ceiling
    double lon_8000 = 8000.0 / kEarthRadiusKm * 180.0 / M_PI;
    auto fast = spells_of(
        {ev(0, "XX", 0, 0), ev(1.0 / 24, "YY", 0, lon_8000)});
    REQUIRE(fast.size() == 2);
    double speed = transition_speed_kmh(fast[0], fast[1]);
    CHECK(speed == Catch::Approx(8000.0).epsilon(1e-6));
    validate_transitions(fast, 1000.0);
    CHECK_FALSE(fast[0].valid);
    CHECK_FALSE(fast[1].valid);

    // ~500 km in one hour: fine
    double lon_500 = 500.0 / kEarthRadiusKm * 180.0 / M_PI;
    auto slow = spells_of({ev(0, "XX", 0, 0), ev(1.0 / 24, "YY", 0, lon_500)});
    validate_transitions(slow, 1000.0);
    CHECK(slow[0].valid);
    CHECK(slow[1].valid);

    // identical coordinates: zero distance, zero speed
    auto still = spells_of({ev(0, "XX", 10, 20), ev(5, "YY", 10, 20)});
    CHECK(transition_speed_kmh(still[0], still[1]) == 0.0);
    validate_transitions(still, 1000.0);
    CHECK(still[0].valid);

    // zero elapsed time with distance reads as infinite speed
    auto instant = spells_of({ev(0, "XX", 0, 0), ev(0, "YY", 0, 10)});
    CHECK(std::isinf(transition_speed_kmh(instant[0], instant[1])));
}

TEST_CASE("boundary: a transition at exactly the ceiling is valid",
          "[residence]") {
    auto pair = spells_of({ev(0, "XX", 0, 0), ev(1.0 / 24, "YY", 0, 5.0)});
    double speed = transition_speed_kmh(pair[0], pair[1]);
    auto exact = pair;
    validate_transitions(exact, speed);  // threshold equals the speed
    CHECK(exact[0].valid);
    CHECK(exact[1].valid);
    auto below = pair;
    validate_transitions(below, std::nextafter(speed, 0.0));
    CHECK_FALSE(below[0].valid);
    CHECK_FALSE(below[1].valid);
}

TEST_CASE("lowering the speed ceiling never revalidates a spell",
          "[residence]") {
    Rng rng = make_rng(31337);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ResolvedEvent> events;
        double t = 0;
        for (int i = 0; i < 30; ++i) {
            t += uniform_real(rng, 0.01, 2.0);
            events.push_back(ev(t, uniform_index(rng, 2) ? "AA" : "BB",
                                uniform_real(rng, -60, 60),
                                uniform_real(rng, -180, 180)));
        }
        auto loose = spells_of(events);
        auto strict = loose;
        validate_transitions(loose, 2000.0);
        validate_transitions(strict, 500.0);
        for (std::size_t k = 0; k < loose.size(); ++k)
            if (!loose[k].valid) REQUIRE_FALSE(strict[k].valid);
    }
}

TEST_CASE("modal country and the 90-day rule", "[residence]") {
    ResidenceConfig cfg;

    SECTION("accepted when modal matches self-report") {
        auto spells = spells_of({ev(0, "XX"), ev(100, "XX"), ev(101, "YY"),
                                 ev(111, "YY")});
        validate_transitions(spells, 1e9);
        auto r = infer_residence("u", spells, CountryCode("XX"), cfg);
        CHECK(r.accepted);
        CHECK(r.reason == ResidenceReason::ok);
        CHECK(*r.geolocated_country == "XX");
        CHECK(r.valid_days == Catch::Approx(110.0));
    }
    SECTION("89 cumulative days is below the floor") {
        auto spells = spells_of({ev(0, "XX"), ev(89, "XX")});
        auto r = infer_residence("u", spells, CountryCode("XX"), cfg);
        CHECK_FALSE(r.accepted);
        CHECK(r.reason == ResidenceReason::below_90_days);
    }
    SECTION("exactly 90 days is accepted") {
        auto spells = spells_of({ev(0, "XX"), ev(90, "XX")});
        auto r = infer_residence("u", spells, CountryCode("XX"), cfg);
        CHECK(r.accepted);
        CHECK(r.valid_days == Catch::Approx(90.0));
    }
    SECTION("discordant self-report rejects") {
        auto spells = spells_of({ev(0, "XX"), ev(100, "XX")});
        auto r = infer_residence("u", spells, CountryCode("YY"), cfg);
        CHECK_FALSE(r.accepted);
        CHECK(r.reason == ResidenceReason::discordant);
        CHECK(*r.geolocated_country == "XX");
    }
    SECTION("missing self-report rejects") {
        auto spells = spells_of({ev(0, "XX"), ev(100, "XX")});
        auto r = infer_residence("u", spells, std::nullopt, cfg);
        CHECK(r.reason == ResidenceReason::discordant);
    }
    SECTION("no events") {
        auto r = infer_residence("u", {}, CountryCode("XX"), cfg);
        CHECK(r.reason == ResidenceReason::no_events);
    }
    SECTION("invalid spells do not count toward the floor") {
        auto spells = spells_of({ev(0, "XX"), ev(100, "XX")});
        spells[0].valid = false;
        auto r = infer_residence("u", spells, CountryCode("XX"), cfg);
        CHECK(r.reason == ResidenceReason::below_90_days);
    }
    SECTION("duration ties break by first observation then code") {
        auto spells = spells_of({ev(0, "YY"), ev(50, "YY"), ev(60, "XX"),
                                 ev(110, "XX")});
        validate_transitions(spells, 1e9);
        auto r = infer_residence("u", spells, CountryCode("YY"), cfg);
        CHECK(r.accepted);  // equal 50-day durations; YY seen first
        CHECK(*r.geolocated_country == "YY");
    }
}

TEST_CASE("accepted users always carry at least the day floor", "[residence]") {
    Rng rng = make_rng(55);
    ResidenceConfig cfg;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<ResolvedEvent> events;
        double t = 0;
        for (int i = 0; i < 20; ++i) {
            t += uniform_real(rng, 1.0, 30.0);
            events.push_back(ev(t, uniform_index(rng, 2) ? "AA" : "BB"));
        }
        auto spells = spells_of(events);
        validate_transitions(spells, cfg.max_speed_kmh);
        auto r = infer_residence("u", spells, CountryCode("AA"), cfg);
        if (r.accepted) REQUIRE(r.valid_days >= cfg.min_valid_days);
    }
}

TEST_CASE("country threshold drops small countries", "[residence]") {
    std::map<CountryCode, std::size_t> counts = {{"XX", 100}, {"YY", 3}};
    CHECK(apply_country_threshold(counts, 10) ==
          std::vector<CountryCode>{"XX"});
    CHECK(apply_country_threshold(counts, 1) ==
          std::vector<CountryCode>{"XX", "YY"});

    // boundary sweep: every country exactly at the floor is retained
    std::map<CountryCode, std::size_t> exact;
    for (int i = 0; i < 20; ++i)
        exact["C" + std::to_string(i)] = 7;
    CHECK(apply_country_threshold(exact, 7).size() == 20);
    CHECK(apply_country_threshold(exact, 8).empty());
}

TEST_CASE("inference is invariant to event file order", "[residence]") {
    Rng rng = make_rng(808);
    GeoTable geo({{0, 0xffffffffu, "AA", 10.0, 10.0}});
    CountryRegistry reg;
    CountryMeta meta;
    meta.code = "AA";
    meta.population = 1;
    reg.add(meta);
    meta = CountryMeta{};
    meta.code = "BB";
    meta.population = 1;
    reg.add(meta);

    std::vector<EventRecord> events;
    for (int i = 0; i < 40; ++i) {
        EventRecord e;
        e.user_id = "u" + std::to_string(i % 5);
        e.timestamp = std::floor(uniform_real(rng, 0, 200)) * kSecondsPerDay;
        if (uniform_index(rng, 2))
            e.location = static_cast<Ipv4>(12345);
        else
            e.location = GeoPoint{1.0, 2.0, "BB"};
        events.push_back(e);
    }
    std::map<UserId, CountryCode> reports = {{"u0", "AA"}, {"u1", "BB"},
                                             {"u2", "AA"}, {"u3", "AA"},
                                             {"u4", "BB"}};
    auto resolver = make_resolver(geo, reg);
    ResidenceOutcome base = infer_all(events, resolver, reports, {});
    for (int trial = 0; trial < 10; ++trial) {
        fisher_yates(events, rng);
        ResidenceOutcome shuffled = infer_all(events, resolver, reports, {});
        REQUIRE(shuffled.results.size() == base.results.size());
        for (std::size_t k = 0; k < base.results.size(); ++k) {
            CHECK(shuffled.results[k].user_id == base.results[k].user_id);
            CHECK(shuffled.results[k].accepted == base.results[k].accepted);
            CHECK(shuffled.results[k].reason == base.results[k].reason);
        }
    }
}

TEST_CASE("unresolvable events are dropped with a count", "[residence]") {
    GeoTable geo({{100, 200, "AA", 1.0, 1.0}});
    CountryRegistry reg;
    CountryMeta meta;
    meta.code = "AA";
    meta.population = 1;
    reg.add(meta);

    std::vector<EventRecord> events = {
        {"u1", 0.0, static_cast<Ipv4>(150)},
        {"u1", 100.0 * kSecondsPerDay, static_cast<Ipv4>(999)},  // gap in geodb
        {"u1", 5.0, GeoPoint{0, 0, "ZZ"}},                       // unknown country
        {"u1", 95.0 * kSecondsPerDay, static_cast<Ipv4>(150)}};
    ResidenceOutcome out =
        infer_all(events, make_resolver(geo, reg), {{"u1", "AA"}}, {});
    CHECK(out.dropped_events == 2);
    REQUIRE(out.results.size() == 1);
    CHECK(out.results[0].accepted);
}
