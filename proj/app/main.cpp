#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gf/cli/cli.hpp"

namespace {

// --config beats GLYPHFLOW_CONFIG; with neither, built-in defaults apply.
gf::cli::RunConfig resolve_config(const std::string& config_flag) {
    if (!config_flag.empty()) return gf::cli::load_run_config(config_flag);
    if (const char* env = std::getenv("GLYPHFLOW_CONFIG"); env && *env)
        return gf::cli::load_run_config(env);
    return gf::cli::RunConfig{};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"glyphflow: synthetic scene-text editing pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_override, request_path, train_stage;
    bool seed_set = false, det_set = false, det_value = true;
    uint64_t seed_override = 0;

    app.add_option("--config", config_path, "JSON run configuration file");
    app.add_option("--seed", seed_override, "override the global seed")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_flag("--deterministic,!--no-deterministic", det_value,
                 "override deterministic mode")
        ->each([&](const std::string&) { det_set = true; });
    app.add_option("--out", out_override, "override the output directory");

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic pair dataset");
    CLI::App* train = app.add_subcommand("train", "train one pipeline stage");
    train->add_option("stage", train_stage, "codec | percept | editor")->required();
    CLI::App* edit = app.add_subcommand("edit", "run one edit request through the sampler");
    edit->add_option("request", request_path, "edit request JSON file")->required();
    CLI::App* evaluate = app.add_subcommand("evaluate", "score edited images with the metric suite");
    CLI::App* ablate = app.add_subcommand("ablate", "run the conditioning/loss ablation grid");

    CLI11_PARSE(app, argc, argv);

    try {
        gf::cli::RunConfig cfg = resolve_config(config_path);
        if (seed_set) cfg.seed = seed_override;
        if (det_set) cfg.deterministic = det_value;
        if (!out_override.empty()) cfg.output_dir = out_override;

        if (gen->parsed()) {
            gf::cli::cmd_gen_data(cfg);
        } else if (train->parsed()) {
            if (train_stage == "codec")
                gf::cli::cmd_train_codec(cfg);
            else if (train_stage == "percept")
                gf::cli::cmd_train_percept(cfg);
            else if (train_stage == "editor")
                gf::cli::cmd_train_editor(cfg);
            else
                throw gf::cli::ConfigError("unknown train stage '" + train_stage +
                                           "' (expected codec | percept | editor)");
        } else if (edit->parsed()) {
            gf::cli::cmd_edit(cfg, request_path);
        } else if (evaluate->parsed()) {
            gf::cli::cmd_evaluate(cfg);
        } else if (ablate->parsed()) {
            gf::cli::cmd_ablate(cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return gf::cli::exit_code_for(e);
    }
    return 0;
}
