#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sdd/error.hpp"
#include "sdd/pipeline.hpp"

namespace {

struct Options {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool out_set = false;
    std::int64_t window = 0;
    bool no_perturb = false;
    std::string saliency;
};

sdd::PipelineConfig resolve_config(const Options& opt) {
    sdd::PipelineConfig cfg = opt.config_path.empty() ? sdd::default_pipeline_config()
                                                      : sdd::load_pipeline_config(opt.config_path);
    if (opt.seed_set) {
        cfg.seed = opt.seed;
    }
    if (opt.out_set) {
        cfg.out_dir = opt.out_dir;
    }
    if (opt.window != 0) {
        sdd::apply_window_setting(cfg, opt.window);
    }
    if (opt.no_perturb) {
        cfg.augment.p = 0;
    }
    if (!opt.saliency.empty()) {
        cfg.saliency = sdd::saliency_from_name(opt.saliency);
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"speech depression detection pipeline"};
    app.require_subcommand(1);

    Options opt;
    app.add_option("--config", opt.config_path, "pipeline config JSON")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", opt.seed, "root seed for every stage");
    auto* out_opt = app.add_option("--out", opt.out_dir, "output directory");
    app.add_option("--n", opt.window, "utterance window size")->check(CLI::IsMember({10, 21, 42}));
    app.add_flag("--no-perturb", opt.no_perturb, "ablation: set p = 0");
    app.add_option("--saliency", opt.saliency, "saliency strategy")
        ->check(CLI::IsMember({"grad", "emb"}));

    const std::vector<std::pair<std::string, std::string>> stages = {
        {"synth", "generate the synthetic corpus"},
        {"segment", "vowel-aware dynamic-overlap segmentation"},
        {"train-vowel", "train the vowel CNN"},
        {"embed", "utterance embeddings and saliency scores"},
        {"augment", "saliency-guarded embedding augmentation"},
        {"train-depression", "train the depression CNN"},
        {"evaluate", "speaker-level soft-voting evaluation"},
        {"correlate", "acoustic descriptor correlation analysis"},
        {"run", "all stages in order"},
    };
    for (const auto& [name, desc] : stages) {
        app.add_subcommand(name, desc)->fallthrough();
    }
    auto* print_cfg = app.add_subcommand("print-config", "dump the resolved config and exit");
    print_cfg->fallthrough();

    CLI11_PARSE(app, argc, argv);
    opt.seed_set = seed_opt->count() > 0;
    opt.out_set = out_opt->count() > 0;

    try {
        const sdd::PipelineConfig cfg = resolve_config(opt);
        if (print_cfg->parsed()) {
            std::cout << sdd::config_to_json(cfg);
            return 0;
        }
        for (const auto& [name, desc] : stages) {
            if (app.get_subcommand(name)->parsed()) {
                sdd::run_stage(name, cfg);
                return 0;
            }
        }
        std::cerr << "no stage selected\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
