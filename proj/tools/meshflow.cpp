// meshflow: reconstructs inter-country communication densities from login
// and email-exchange logs, rescales them to full-population coverage, and
// runs the downstream network analyses. Stages communicate through CSV/JSON
// artifacts under the configured output directory.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "meshflow/pipeline.hpp"

namespace {

struct Overrides {
    std::optional<double> max_speed_kmh;
    std::optional<double> min_valid_days;
    std::optional<std::size_t> min_country_users;
    std::optional<std::size_t> permutations;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> k_top;
    std::optional<std::string> impute;
    std::optional<std::string> out_dir;
    bool reml = false;
    bool shared_country_effect = false;
};

void apply(const Overrides& o, meshflow::PipelineConfig& cfg) {
    if (o.max_speed_kmh) cfg.residence.max_speed_kmh = *o.max_speed_kmh;
    if (o.min_valid_days) cfg.residence.min_valid_days = *o.min_valid_days;
    if (o.min_country_users) cfg.residence.min_country_users = *o.min_country_users;
    if (o.permutations) cfg.qap_permutations = *o.permutations;
    if (o.seed) {
        cfg.qap_seed = *o.seed;
        cfg.layout_seed = *o.seed;
        cfg.spinglass_seed = *o.seed;
        if (cfg.synth) cfg.synth->seed = *o.seed;
    }
    if (o.k_top) cfg.k_top = *o.k_top;
    if (o.impute) {
        if (*o.impute != "mean" && *o.impute != "min")
            throw meshflow::ConfigError("--impute must be mean or min");
        cfg.impute = *o.impute;
    }
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (o.reml) cfg.reml = true;
    if (o.shared_country_effect) cfg.shared_country_effect = true;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"inter-country communication density pipeline"};
    app.require_subcommand(1);

    std::string config_path = "pipeline.toml";
    Overrides ov;
    std::string stage;

    const std::vector<std::string> stages = {
        "ingest", "residence", "densities", "rescale", "stats",
        "communities", "qap", "regress", "synth", "all"};
    for (const auto& name : stages) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "pipeline config (TOML)");
        sub->add_option("--out", ov.out_dir, "output directory override");
        sub->add_option("--max-speed-kmh", ov.max_speed_kmh,
                        "transition speed ceiling (default 1000)");
        sub->add_option("--min-valid-days", ov.min_valid_days,
                        "cumulative valid-spell floor (default 90)");
        sub->add_option("--min-country-users", ov.min_country_users,
                        "per-country accepted-user floor (default 100)");
        sub->add_option("--permutations", ov.permutations,
                        "QAP permutation count");
        sub->add_option("--seed", ov.seed, "master seed override");
        sub->add_option("--k-top", ov.k_top, "top-k edge count");
        sub->add_option("--impute", ov.impute,
                        "trade affinity imputation: mean or min");
        sub->add_flag("--reml", ov.reml, "fit mixed models by REML");
        sub->add_flag("--shared-country-effect", ov.shared_country_effect,
                      "one random effect per country across both slots");
        sub->callback([&stage, name] { stage = name; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        meshflow::PipelineConfig cfg = meshflow::load_pipeline_config(config_path);
        apply(ov, cfg);
        meshflow::PipelineRun run(std::move(cfg));
        meshflow::run_stage(run, stage);
        return 0;
    } catch (const meshflow::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const meshflow::MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return 3;
    } catch (const meshflow::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
