#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "meshflow/config.hpp"
#include "meshflow/densities.hpp"
#include "meshflow/dyadreg.hpp"
#include "meshflow/graph.hpp"
#include "meshflow/ingest.hpp"
#include "meshflow/netstats.hpp"
#include "meshflow/partition.hpp"
#include "meshflow/qap.hpp"
#include "meshflow/rescale.hpp"
#include "meshflow/residence.hpp"
#include "meshflow/synth.hpp"

namespace meshflow {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Atomic artifact writes: stage outputs land under a temp name and are
// renamed into place on commit, so failures never leave partial artifacts.

class AtomicFile {
public:
    explicit AtomicFile(fs::path target)
        : target_(std::move(target)), tmp_(target_.string() + ".tmp") {
        fs::create_directories(target_.parent_path());
        out_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!out_) throw DataError("cannot write " + tmp_.string());
    }

    ~AtomicFile() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            fs::remove(tmp_, ec);
        }
    }

    std::ostream& stream() { return out_; }

    void commit() {
        out_.close();
        fs::rename(tmp_, target_);
        committed_ = true;
    }

private:
    fs::path target_;
    fs::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

inline std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    char hex[32];
    std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(h));
    return hex;
}

// ---------------------------------------------------------------------------
// Run context: resolves input paths (synth-generated worlds feed the rest of
// the pipeline when no explicit inputs are configured) and accumulates the
// run manifest.

class PipelineRun {
public:
    explicit PipelineRun(PipelineConfig cfg) : cfg_(std::move(cfg)) {
        manifest_["config_digest"] = cfg_.config_digest;
        manifest_["stages"] = json::array();
        manifest_["inputs"] = json::object();
        manifest_["outputs"] = json::object();
        manifest_["seeds"] = {
            {"layout", cfg_.layout_seed},
            {"spinglass", cfg_.spinglass_seed},
            {"qap", cfg_.qap_seed},
        };
        if (cfg_.synth) manifest_["seeds"]["synth"] = cfg_.synth->seed;
    }

    const PipelineConfig& cfg() const { return cfg_; }

    fs::path out(const std::string& name) const {
        return fs::path(cfg_.out_dir) / name;
    }

    /// Path of an input file: explicit config path, or the synth world copy.
    std::string input(const std::string& which) const {
        const std::string* configured = nullptr;
        if (which == "events") configured = &cfg_.events_path;
        else if (which == "edges") configured = &cfg_.edges_path;
        else if (which == "geodb") configured = &cfg_.geodb_path;
        else if (which == "countries") configured = &cfg_.countries_path;
        else if (which == "dyads") configured = &cfg_.dyads_path;
        else if (which == "users") configured = &cfg_.users_path;
        if (configured && !configured->empty()) return *configured;
        if (cfg_.synth) return (out("world") / (which + ".csv")).string();
        throw ConfigError("inputs." + which + " is not configured");
    }

    std::string require_input(const std::string& which) {
        std::string path = input(which);
        if (!fs::exists(path)) {
            if (cfg_.synth && cfg_.events_path.empty())
                throw MissingArtifactError("synth", path);
            throw ConfigError("input file does not exist: " + path);
        }
        manifest_["inputs"][path] = file_digest(path);
        return path;
    }

    std::string require_artifact(const std::string& name,
                                 const std::string& producing_stage) {
        fs::path path = out(name);
        if (!fs::exists(path))
            throw MissingArtifactError(producing_stage, path.string());
        manifest_["inputs"][path.string()] = file_digest(path);
        return path.string();
    }

    void note_stage(const std::string& name) { manifest_["stages"].push_back(name); }

    void note_output(const fs::path& path) {
        manifest_["outputs"][path.string()] = file_digest(path);
    }

    void write_manifest() {
        AtomicFile f(out("manifest.json"));
        f.stream() << manifest_.dump(2) << "\n";
        f.commit();
    }

private:
    PipelineConfig cfg_;
    json manifest_;
};

namespace pipeline_detail {

inline void write_json(PipelineRun& run, const std::string& name, const json& j) {
    AtomicFile f(run.out(name));
    f.stream() << j.dump(2) << "\n";
    f.commit();
    run.note_output(run.out(name));
}

inline std::string stars(double tval) {
    double a = std::abs(tval);
    if (a >= 2.5758293035489004) return "***";  // p < .01
    if (a >= 1.9599639845400545) return "**";   // p < .05
    if (a >= 1.6448536269514722) return "*";    // p < .10
    return "";
}

inline CountryRegistry load_registry(PipelineRun& run) {
    CountryFilterConfig filter;
    filter.min_population = run.cfg().min_population;
    filter.excluded = run.cfg().exclude;
    return load_country_table(run.require_input("countries"), filter);
}

inline json lmm_fit_json(const LmmFit& fit) {
    json coeffs = json::array();
    for (std::size_t j = 0; j < fit.names.size(); ++j) {
        auto idx = static_cast<Eigen::Index>(j);
        coeffs.push_back({{"name", fit.names[j]},
                          {"coefficient", fit.beta[idx]},
                          {"se", fit.se[idx]},
                          {"t_value", fit.tval[idx]},
                          {"stars", stars(fit.tval[idx])}});
    }
    return {{"fixed_effects", coeffs},
            {"variance_country1", fit.var_country1},
            {"variance_country2", fit.var_country2},
            {"variance_residual", fit.var_residual},
            {"log_likelihood", fit.loglik},
            {"deviance", fit.deviance},
            {"aic", fit.aic},
            {"mcfadden_r2", fit.mcfadden_r2},
            {"n_dyads", fit.n},
            {"n_countries", fit.n_countries},
            {"reml", fit.reml},
            {"boundary_variance", fit.boundary}};
}

}  // namespace pipeline_detail

// ---------------------------------------------------------------------------
// Stages.

inline void run_synth(PipelineRun& run) {
    if (!run.cfg().synth)
        throw ConfigError("synth stage requires a [synth] config section");
    const WorldSpec& spec = *run.cfg().synth;
    GroundTruth gt = generate_world(spec);
    SnowballSample sample = snowball_sample_users(gt, gt.coverage);
    SynthWorldTables tables = synth_world_tables(gt);
    int n = spec.n_countries;

    {  // countries.csv
        AtomicFile f(run.out("world/countries.csv"));
        CsvWriter w(f.stream());
        w.row("code", "name", "population", "civilization", "gdp", "pdi", "idv",
              "mas", "uai", "trust", "languages", "region", "eea", "lat", "lon");
        for (const auto& m : tables.registry.rows()) {
            std::string langs;
            for (const auto& l : m.languages)
                langs += (langs.empty() ? "" : ";") + l;
            w.row(m.code, m.name, m.population, to_string(m.civilization),
                  m.gdp_per_capita, *m.pdi, *m.idv, *m.mas, *m.uai, *m.gen_trust,
                  langs, m.region, m.eea_member ? 1 : 0, m.centroid.lat,
                  m.centroid.lon);
        }
        f.commit();
        run.note_output(run.out("world/countries.csv"));
    }
    {  // geodb.csv: one /12-sized range per country
        AtomicFile f(run.out("world/geodb.csv"));
        CsvWriter w(f.stream());
        w.row("ip_lo", "ip_hi", "country", "lat", "lon");
        for (int i = 0; i < n; ++i) {
            Ipv4 lo = static_cast<Ipv4>(i + 1) << 20;
            w.row(format_ipv4(lo), format_ipv4(lo + ((1u << 20) - 1)), gt.codes[i],
                  gt.centroid[i].lat, gt.centroid[i].lon);
        }
        f.commit();
        run.note_output(run.out("world/geodb.csv"));
    }

    auto user_name = [](std::size_t u) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "u%08zu", u);
        return std::string(buf);
    };
    auto user_ip = [&](std::size_t u, int country) {
        Ipv4 lo = static_cast<Ipv4>(country + 1) << 20;
        return lo + static_cast<Ipv4>(u & ((1u << 20) - 1));
    };

    {  // events.csv + users.csv for marked users
        AtomicFile fe(run.out("world/events.csv"));
        AtomicFile fu(run.out("world/users.csv"));
        CsvWriter we(fe.stream());
        CsvWriter wu(fu.stream());
        we.row("user_id", "timestamp", "ip");
        wu.row("user_id", "country");
        for (std::size_t u = 0; u < gt.n_users(); ++u) {
            if (!sample.marked[u]) continue;
            int c = gt.country_of(u);
            std::string id = user_name(u);
            std::string ip = format_ipv4(user_ip(u, c));
            double t0 = 1.6e9 + static_cast<double>(u % 1000) * 3600.0;
            we.row(id, t0, ip);
            we.row(id, t0 + 50.0 * kSecondsPerDay, ip);
            we.row(id, t0 + 120.0 * kSecondsPerDay, ip);
            wu.row(id, gt.codes[c]);
        }
        fe.commit();
        fu.commit();
        run.note_output(run.out("world/events.csv"));
        run.note_output(run.out("world/users.csv"));
    }
    {  // edges.csv: both directions of every observed tie
        AtomicFile f(run.out("world/edges.csv"));
        CsvWriter w(f.stream());
        w.row("sender", "recipient", "count");
        for (std::size_t u = 0; u < gt.n_users(); ++u) {
            if (!sample.marked[u]) continue;
            for (int v : gt.user_adj[u]) {
                auto uv = static_cast<std::size_t>(v);
                if (uv > u && sample.marked[uv]) {
                    w.row(user_name(u), user_name(uv), 1);
                    w.row(user_name(uv), user_name(u), 1);
                }
            }
        }
        f.commit();
        run.note_output(run.out("world/edges.csv"));
    }
    {  // dyads.csv
        AtomicFile f(run.out("world/dyads.csv"));
        CsvWriter w(f.stream());
        w.row("a", "b", "trade_flow", "colonial", "commonwealth", "contiguous",
              "visa", "flights", "distance_km");
        for (const auto& [key, d] : tables.dyads)
            w.row(key.a, key.b,
                  d.trade_flow ? format_double(*d.trade_flow) : std::string(),
                  d.colonial_link ? 1 : 0, d.commonwealth_link ? 1 : 0,
                  d.contiguous ? 1 : 0, d.visa_required ? 1 : 0,
                  d.direct_flights, *d.distance_km);
        f.commit();
        run.note_output(run.out("world/dyads.csv"));
    }
    {  // truth.csv: planted probabilities and realized census densities
        AtomicFile f(run.out("world/truth.csv"));
        CsvWriter w(f.stream());
        w.row("i", "j", "civ_i", "civ_j", "ln_p", "T_true", "ln_t_true");
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                auto truth = gt.true_log_density(static_cast<std::size_t>(i),
                                                 static_cast<std::size_t>(j));
                w.row(gt.codes[i], gt.codes[j], gt.civ[i], gt.civ[j],
                      gt.ln_p(i, j), gt.true_ties(i, j),
                      truth ? format_double(*truth) : std::string());
            }
        f.commit();
        run.note_output(run.out("world/truth.csv"));
    }
    run.note_stage("synth");
}

inline void run_ingest(PipelineRun& run) {
    FormatConfig fmt{run.cfg().strict};
    json report;

    ParseStats ev_stats = parse_event_log(run.require_input("events"), fmt,
                                          [](const EventRecord&) {});
    report["events"] = {{"total", ev_stats.total},
                        {"yielded", ev_stats.yielded},
                        {"rejected", ev_stats.rejected}};

    ParseStats edge_stats;
    load_edges(run.require_input("edges"), fmt, &edge_stats);
    report["edges"] = {{"total", edge_stats.total},
                       {"yielded", edge_stats.yielded},
                       {"rejected", edge_stats.rejected}};

    GeoTable geo = load_geodb(run.require_input("geodb"));
    report["geodb"] = {{"ranges", geo.size()}};

    CountryRegistry registry = pipeline_detail::load_registry(run);
    std::size_t excluded = 0;
    for (const auto& m : registry.rows())
        if (m.excluded) ++excluded;
    report["countries"] = {{"total", registry.size()}, {"excluded", excluded}};

    report["self_reports"] = {
        {"users", load_self_reports(run.require_input("users")).size()}};
    report["dyads"] = {
        {"pairs", load_dyad_table(run.require_input("dyads"), registry).size()}};

    pipeline_detail::write_json(run, "ingest_report.json", report);
    run.note_stage("ingest");
}

inline void run_residence(PipelineRun& run) {
    FormatConfig fmt{run.cfg().strict};
    GeoTable geo = load_geodb(run.require_input("geodb"));
    CountryRegistry registry = pipeline_detail::load_registry(run);
    std::vector<EventRecord> events =
        load_events(run.require_input("events"), fmt);
    std::map<UserId, CountryCode> self_reports =
        load_self_reports(run.require_input("users"));

    ResidenceOutcome outcome = infer_all(events, make_resolver(geo, registry),
                                         self_reports, run.cfg().residence);

    {
        AtomicFile f(run.out("residence.csv"));
        CsvWriter w(f.stream());
        w.row("user_id", "geolocated", "self_reported", "accepted", "reason",
              "valid_days");
        for (const auto& r : outcome.results)
            w.row(r.user_id, r.geolocated_country.value_or(""),
                  r.self_reported_country.value_or(""), r.accepted ? 1 : 0,
                  to_string(r.reason), r.valid_days);
        f.commit();
        run.note_output(run.out("residence.csv"));
    }

    std::vector<CountryCode> retained = apply_country_threshold(
        outcome.accepted_by_country, run.cfg().residence.min_country_users);
    // countries failing the registry filters drop out here too
    std::erase_if(retained, [&](const CountryCode& c) {
        const CountryMeta* m = registry.find(c);
        return !m || m->excluded;
    });

    json summary;
    summary["dropped_events"] = outcome.dropped_events;
    json by_country = json::object();
    for (const auto& [code, count] : outcome.accepted_by_country)
        by_country[code] = count;
    summary["accepted_by_country"] = by_country;
    summary["retained_countries"] = retained;
    std::map<std::string, std::size_t> reasons;
    for (const auto& r : outcome.results) ++reasons[to_string(r.reason)];
    summary["reasons"] = reasons;
    pipeline_detail::write_json(run, "residence_summary.json", summary);
    run.note_stage("residence");
}

inline void run_densities(PipelineRun& run) {
    std::string residence_path = run.require_artifact("residence.csv", "residence");
    FormatConfig fmt{run.cfg().strict};
    CountryRegistry registry = pipeline_detail::load_registry(run);

    std::map<UserId, CountryCode> residence;
    std::map<CountryCode, std::size_t> accepted_by_country;
    {
        CsvReader reader(residence_path);
        std::size_t c_user = reader.column("user_id");
        std::size_t c_geo = reader.column("geolocated");
        std::size_t c_acc = reader.column("accepted");
        std::vector<std::string_view> f;
        while (reader.next(f)) {
            if (f[c_acc] != "1") continue;
            residence[std::string(f[c_user])] = std::string(f[c_geo]);
            ++accepted_by_country[std::string(f[c_geo])];
        }
    }
    std::vector<CountryCode> retained = apply_country_threshold(
        accepted_by_country, run.cfg().residence.min_country_users);
    std::erase_if(retained, [&](const CountryCode& c) {
        const CountryMeta* m = registry.find(c);
        return !m || m->excluded;
    });
    if (retained.empty())
        throw DataError("densities: no country satisfies the user threshold");

    std::set<UserId> accepted;
    std::set<CountryCode> retained_set(retained.begin(), retained.end());
    for (const auto& [user, country] : residence)
        if (retained_set.count(country)) accepted.insert(user);
    for (auto it = residence.begin(); it != residence.end();)
        it = accepted.count(it->first) ? std::next(it) : residence.erase(it);

    std::vector<EdgeRecord> edges = load_edges(run.require_input("edges"), fmt);
    UserGraph graph = reciprocal_graph(edges, accepted);
    DensityMatrix m = collapse_to_countries(graph, residence, registry, retained,
                                            run.cfg().edge_floor);
    AtomicFile f(run.out("densities.csv"));
    write_densities_csv(f.stream(), m);
    f.commit();
    run.note_output(run.out("densities.csv"));
    run.note_stage("densities");
}

inline void run_rescale(PipelineRun& run) {
    DensityMatrix m = read_densities_csv(
        run.require_artifact("densities.csv", "densities"));
    RescaleModel model = fit_rescale_model(m);
    RescaledNetwork net = RescaledNetwork::build(m, model);

    json mj;
    json coeffs = json::array();
    for (std::size_t j = 0; j < model.fit.names.size(); ++j) {
        auto idx = static_cast<Eigen::Index>(j);
        coeffs.push_back({{"name", model.fit.names[j]},
                          {"coefficient", model.fit.beta[idx]},
                          {"se", model.fit.se[idx]},
                          {"t_value", model.fit.tval[idx]}});
    }
    mj["coefficients"] = coeffs;
    mj["r2"] = model.fit.r2;
    mj["adjusted_r2"] = model.fit.adj_r2;
    mj["n"] = model.fit.n;
    mj["sigma2"] = model.fit.sigma2;
    mj["ln_t_prime_min"] = net.ln_t_prime_min();
    pipeline_detail::write_json(run, "rescale_model.json", mj);

    AtomicFile f(run.out("rescaled.csv"));
    write_rescaled_csv(f.stream(), net);
    f.commit();
    run.note_output(run.out("rescaled.csv"));
    run.note_stage("rescale");
}

namespace pipeline_detail {

struct LabeledNetwork {
    RescaledNetwork net;
    WeightedCountryGraph graph;
    std::vector<std::string> civ_names;  // per node
    std::vector<int> civ_ids;            // dense over present civs
};

inline LabeledNetwork load_labeled_network(PipelineRun& run,
                                           const std::string& stage) {
    LabeledNetwork ln;
    ln.net = read_rescaled_csv(run.require_artifact("rescaled.csv", "rescale"));
    ln.graph = WeightedCountryGraph::from_rescaled(ln.net);
    CountryRegistry registry = load_registry(run);
    std::map<std::string, int> civ_seen;
    for (const auto& code : ln.net.countries()) {
        const CountryMeta* m = registry.find(code);
        if (!m)
            throw DataError(stage + ": country " + code +
                            " missing from the country table");
        std::string name = to_string(m->civilization);
        ln.civ_names.push_back(name);
        civ_seen.emplace(name, static_cast<int>(civ_seen.size()));
    }
    for (const auto& name : ln.civ_names) ln.civ_ids.push_back(civ_seen[name]);
    return ln;
}

}  // namespace pipeline_detail

inline void run_stats(PipelineRun& run) {
    pipeline_detail::LabeledNetwork ln =
        pipeline_detail::load_labeled_network(run, "stats");
    const auto& g = ln.graph;

    std::vector<double> degree = weighted_degrees(g);
    std::vector<double> eigen = eigenvector_centrality(g);
    std::vector<double> between = betweenness_centrality(g, run.cfg().betweenness_eps);

    {
        AtomicFile f(run.out("centrality.csv"));
        CsvWriter w(f.stream());
        w.row("country", "civilization", "degree", "eigenvector", "betweenness");
        for (std::size_t i = 0; i < g.size(); ++i)
            w.row(g.code(i), ln.civ_names[i], degree[i], eigen[i], between[i]);
        f.commit();
        run.note_output(run.out("centrality.csv"));
    }
    {
        auto deg_means = group_mean_centrality(degree, ln.civ_names);
        auto eig_means = group_mean_centrality(eigen, ln.civ_names);
        auto btw_means = group_mean_centrality(between, ln.civ_names);
        AtomicFile f(run.out("centrality_by_civilization.csv"));
        CsvWriter w(f.stream());
        w.row("civilization", "degree", "betweenness", "eigenvector");
        for (const auto& [name, dm] : deg_means)
            w.row(name, dm, btw_means[name], eig_means[name]);
        f.commit();
        run.note_output(run.out("centrality_by_civilization.csv"));
    }
    {
        AtomicFile f(run.out("top_edges.csv"));
        CsvWriter w(f.stream());
        w.row("mode", "rank", "i", "j", "value");
        for (auto mode : {EdgeRankMode::raw_count_prime, EdgeRankMode::density_weight}) {
            TopEdges top = top_k_edges(ln.net, run.cfg().k_top, mode);
            const char* name =
                mode == EdgeRankMode::raw_count_prime ? "raw_T_prime" : "density_w";
            for (std::size_t r = 0; r < top.edges.size(); ++r)
                w.row(name, r + 1, ln.net.code(top.edges[r].i),
                      ln.net.code(top.edges[r].j), top.edges[r].key);
        }
        f.commit();
        run.note_output(run.out("top_edges.csv"));
    }

    LayoutConfig lay_cfg;
    lay_cfg.seed = run.cfg().layout_seed;
    lay_cfg.k_top = run.cfg().layout_top;
    LayoutResult lay = layout(ln.net, lay_cfg);
    {
        AtomicFile f(run.out("layout.csv"));
        CsvWriter w(f.stream());
        w.row("country", "x", "y");
        for (std::size_t i = 0; i < g.size(); ++i)
            w.row(g.code(i), lay.x[i], lay.y[i]);
        f.commit();
        run.note_output(run.out("layout.csv"));
    }
    {  // the drawing overlay: strongest ties by density weight
        AtomicFile f(run.out("layout_edges.csv"));
        CsvWriter w(f.stream());
        w.row("rank", "i", "j", "w");
        for (std::size_t r = 0; r < lay.overlay.size(); ++r)
            w.row(r + 1, ln.net.code(lay.overlay[r].i),
                  ln.net.code(lay.overlay[r].j), lay.overlay[r].key);
        f.commit();
        run.note_output(run.out("layout_edges.csv"));
    }
    {
        AtomicFile f(run.out("network.graphml"));
        auto& o = f.stream();
        o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
          << "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
          << "  <key id=\"w\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n"
          << "  <key id=\"civ\" for=\"node\" attr.name=\"civilization\" attr.type=\"string\"/>\n"
          << "  <key id=\"x\" for=\"node\" attr.name=\"x\" attr.type=\"double\"/>\n"
          << "  <key id=\"y\" for=\"node\" attr.name=\"y\" attr.type=\"double\"/>\n"
          << "  <graph edgedefault=\"undirected\">\n";
        for (std::size_t i = 0; i < g.size(); ++i)
            o << "    <node id=\"" << g.code(i) << "\"><data key=\"civ\">"
              << ln.civ_names[i] << "</data><data key=\"x\">"
              << format_double(lay.x[i]) << "</data><data key=\"y\">"
              << format_double(lay.y[i]) << "</data></node>\n";
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = i + 1; j < g.size(); ++j)
                if (g.has_edge(i, j))
                    o << "    <edge source=\"" << g.code(i) << "\" target=\""
                      << g.code(j) << "\"><data key=\"w\">"
                      << format_double(g.weight(i, j)) << "</data></edge>\n";
        o << "  </graph>\n</graphml>\n";
        f.commit();
        run.note_output(run.out("network.graphml"));
    }
    {
        AtomicFile f(run.out("network.dot"));
        auto& o = f.stream();
        o << "graph mesh {\n";
        for (std::size_t i = 0; i < g.size(); ++i)
            o << "  \"" << g.code(i) << "\" [civilization=\"" << ln.civ_names[i]
              << "\", pos=\"" << format_double(lay.x[i]) << ","
              << format_double(lay.y[i]) << "\"];\n";
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = i + 1; j < g.size(); ++j)
                if (g.has_edge(i, j))
                    o << "  \"" << g.code(i) << "\" -- \"" << g.code(j)
                      << "\" [weight=" << format_double(g.weight(i, j)) << "];\n";
        o << "}\n";
        f.commit();
        run.note_output(run.out("network.dot"));
    }
    run.note_stage("stats");
}

inline void run_communities(PipelineRun& run) {
    pipeline_detail::LabeledNetwork ln =
        pipeline_detail::load_labeled_network(run, "communities");

    Partition civ = Partition::from_labels(ln.civ_ids, PartitionSource::civilization);
    Partition greedy = detect_greedy(ln.graph);
    Partition walktrap = detect_walktrap(ln.graph, run.cfg().walktrap_steps);
    SpinglassConfig sg;
    sg.seed = run.cfg().spinglass_seed;
    sg.spins = run.cfg().spinglass_spins;
    sg.gamma = run.cfg().spinglass_gamma;
    Partition spinglass = detect_spinglass(ln.graph, sg);

    struct Entry {
        const char* name;
        const Partition* p;
    };
    const std::vector<Entry> methods = {{"civilization", &civ},
                                        {"greedy", &greedy},
                                        {"walktrap", &walktrap},
                                        {"spinglass", &spinglass}};
    {
        AtomicFile f(run.out("partitions.csv"));
        CsvWriter w(f.stream());
        w.row("country", "method", "community");
        for (const auto& [name, p] : methods)
            for (std::size_t i = 0; i < ln.graph.size(); ++i)
                w.row(ln.graph.code(i), name, p->labels[i]);
        f.commit();
        run.note_output(run.out("partitions.csv"));
    }

    // civilization row names, in dense-label order
    std::vector<std::string> civ_names_dense(
        static_cast<std::size_t>(civ.n_communities()));
    for (std::size_t i = 0; i < ln.civ_names.size(); ++i)
        civ_names_dense[static_cast<std::size_t>(civ.labels[i])] = ln.civ_names[i];

    json report;
    for (const auto& [name, p] : methods) {
        if (p == &civ) continue;
        CrossTab tab = cross_tabulate(civ, *p, civ_names_dense);
        RandIndices ri = rand_indices(civ, *p);
        ChiSquare chi = chi_square(tab);
        json jt;
        jt["rows"] = tab.row_labels;
        jt["columns"] = tab.col_labels;
        jt["counts"] = tab.counts;
        jt["rand"] = ri.rand;
        jt["adjusted_rand"] = ri.adjusted_rand;
        jt["chi_square"] = chi.statistic;
        jt["df"] = chi.df;
        jt["n_communities"] = p->n_communities();
        jt["modularity"] = modularity(ln.graph, p->labels);
        report["vs_civilization"][name] = jt;
    }
    for (std::size_t a = 1; a < methods.size(); ++a)
        for (std::size_t b = a + 1; b < methods.size(); ++b) {
            RandIndices ri = rand_indices(*methods[a].p, *methods[b].p);
            report["between_methods"][std::string(methods[a].name) + "_vs_" +
                                      methods[b].name] = {
                {"rand", ri.rand}, {"adjusted_rand", ri.adjusted_rand}};
        }
    pipeline_detail::write_json(run, "partition_report.json", report);
    run.note_stage("communities");
}

inline void run_qap(PipelineRun& run) {
    pipeline_detail::LabeledNetwork ln =
        pipeline_detail::load_labeled_network(run, "qap");
    auto n = static_cast<Eigen::Index>(ln.net.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    std::vector<char> mask(static_cast<std::size_t>(n * n), 1);
    bool drop = run.cfg().qap_absent_policy == "drop";
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            auto si = static_cast<std::size_t>(i), sj = static_cast<std::size_t>(j);
            if (i != j && ln.net.present(si, sj)) {
                a(i, j) = *ln.net.weight(si, sj);
            } else if (drop) {
                mask[si * static_cast<std::size_t>(n) + sj] = 0;
            }
        }
    QapResult res = qap_test(a, ln.civ_ids, run.cfg().qap_permutations,
                             run.cfg().qap_seed, run.cfg().qap_threads,
                             drop ? &mask : nullptr);
    json j = {{"observed_r", res.observed_r},
              {"p_value", res.p_value},
              {"permuted_max", res.permuted_max},
              {"permutations", res.permutation_count},
              {"seed", res.seed},
              {"absent_policy", run.cfg().qap_absent_policy}};
    pipeline_detail::write_json(run, "qap.json", j);
    run.note_stage("qap");
}

inline void run_regress(PipelineRun& run) {
    RescaledNetwork net =
        read_rescaled_csv(run.require_artifact("rescaled.csv", "rescale"));
    CountryRegistry registry = pipeline_detail::load_registry(run);
    DyadTable dyads = load_dyad_table(run.require_input("dyads"), registry);

    std::vector<CountryCode> subset = complete_case_subset(registry);
    std::erase_if(subset, [&](const CountryCode& c) {
        return !net.index_of(c).has_value();
    });
    if (subset.size() < 2)
        throw DataError("regress: fewer than 2 complete-case countries");

    DyadRegConfig cfg;
    cfg.reml = run.cfg().reml;
    cfg.shared_country_effect = run.cfg().shared_country_effect;
    cfg.impute =
        run.cfg().impute == "min" ? ImputePolicy::min : ImputePolicy::mean;

    DyadDesign design = build_dyad_table(net, registry, dyads, subset, cfg.impute);
    LmmFit main_fit = fit_main_model(design, cfg);
    json mj = pipeline_detail::lmm_fit_json(main_fit);
    mj["countries"] = design.countries;
    mj["trade_affinities_imputed"] = design.n_imputed;
    mj["impute_policy"] = run.cfg().impute;
    pipeline_detail::write_json(run, "lmm_main.json", mj);

    {
        std::vector<LmmFit> suite = fit_one_variable_suite(design, cfg);
        AtomicFile f(run.out("lmm_onevar.csv"));
        CsvWriter w(f.stream());
        w.row("covariate", "coefficient", "se", "t_value", "stars");
        for (const auto& fit : suite)
            w.row(fit.names[1], fit.beta[1], fit.se[1], fit.tval[1],
                  pipeline_detail::stars(fit.tval[1]));
        f.commit();
        run.note_output(run.out("lmm_onevar.csv"));
    }
    {
        CivDummyDesign cd = build_civilization_design(design, registry);
        LmmFit civ_fit = fit_civilization_dummies(cd, cfg);
        json cj = pipeline_detail::lmm_fit_json(civ_fit);
        cj["dropped_civilizations"] = cd.dropped;
        pipeline_detail::write_json(run, "lmm_civ.json", cj);
    }
    run.note_stage("regress");
}

// ---------------------------------------------------------------------------

inline void run_stage(PipelineRun& run, const std::string& name) {
    if (name == "synth") run_synth(run);
    else if (name == "ingest") run_ingest(run);
    else if (name == "residence") run_residence(run);
    else if (name == "densities") run_densities(run);
    else if (name == "rescale") run_rescale(run);
    else if (name == "stats") run_stats(run);
    else if (name == "communities") run_communities(run);
    else if (name == "qap") run_qap(run);
    else if (name == "regress") run_regress(run);
    else if (name == "all") {
        if (run.cfg().synth) run_synth(run);
        run_ingest(run);
        run_residence(run);
        run_densities(run);
        run_rescale(run);
        run_stats(run);
        run_communities(run);
        run_qap(run);
        run_regress(run);
    } else {
        throw ConfigError("unknown stage '" + name + "'");
    }
    run.write_manifest();
}

}  // namespace meshflow
