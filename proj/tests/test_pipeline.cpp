#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "sdd/error.hpp"
#include "sdd/pipeline.hpp"

using namespace sdd;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// small corpus / fast training: exercises the plumbing, not the metrics
PipelineConfig tiny_config(const fs::path& out) {
    PipelineConfig cfg = default_pipeline_config();
    cfg.out_dir = out.string();
    cfg.seed = 11;
    cfg.synth.n_speakers = 6;
    cfg.synth.utterances_per_speaker = 12;
    cfg.synth.depressed_fraction = 0.5;
    cfg.dev_fraction = 0.5;
    apply_window_setting(cfg, 10);
    cfg.vowel.max_epochs = 2;
    cfg.vowel.patience = 2;
    cfg.vowel_max_segments_per_class = 40;
    cfg.vowel_max_dev_segments_per_class = 15;
    cfg.depression.max_epochs = 10;
    cfg.depression.patience = 10;
    return cfg;
}

}  // namespace

TEST_CASE("config round-trips through json") {
    PipelineConfig cfg = default_pipeline_config();
    cfg.seed = 1234;
    cfg.augment.p = 3;
    cfg.vowel.lr = 0.0005;
    cfg.overlap.ratios[2] = 0.12;
    cfg.saliency = SaliencyStrategy::EmbNorm;

    const std::string text = config_to_json(cfg);
    const PipelineConfig back = config_from_json(text);
    CHECK(config_to_json(back) == text);  // parse -> serialize -> parse identity
    CHECK(back.seed == 1234);
    CHECK(back.augment.p == 3);
    CHECK(back.vowel.lr == 0.0005);
    CHECK(back.overlap.ratios[2] == 0.12);
    CHECK(back.saliency == SaliencyStrategy::EmbNorm);
}

TEST_CASE("validation collects every violated constraint") {
    PipelineConfig cfg = default_pipeline_config();
    cfg.dev_fraction = 1.5;
    cfg.augment.p = 40;   // p + r > n
    cfg.vowel.lr = -1.0;
    cfg.synth.utterances_per_speaker = 5;  // < n
    try {
        validate_pipeline_config(cfg);
        FAIL("expected config_error");
    } catch (const config_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dev_fraction") != std::string::npos);
        CHECK(msg.find("p + r") != std::string::npos);
        CHECK(msg.find("learning rates") != std::string::npos);
        CHECK(msg.find("utterances_per_speaker") != std::string::npos);
    }
}

TEST_CASE("window presets rewire augment and depression blocks") {
    PipelineConfig cfg = default_pipeline_config();
    apply_window_setting(cfg, 21);
    CHECK(cfg.augment.n == 21);
    CHECK(cfg.augment.pos == 16);
    CHECK(cfg.augment.neg == 8);
    CHECK(cfg.augment.p == 2);
    CHECK(cfg.depression.window == 21);
    CHECK(cfg.depression.conv_pad == 3);
    validate_pipeline_config(cfg);
    CHECK_THROWS_AS(apply_window_setting(cfg, 13), config_error);
}

TEST_CASE("stages demand their prerequisites by name") {
    const auto out = fresh_dir("sdd_pipe_prereq");
    PipelineConfig cfg = tiny_config(out);
    // train-depression before augment
    try {
        stage_train_depression(cfg);
        FAIL("expected io_error");
    } catch (const io_error& e) {
        CHECK(std::string(e.what()).find("augment") != std::string::npos);
    }
    // segment before synth
    try {
        stage_segment(cfg);
        FAIL("expected io_error");
    } catch (const io_error& e) {
        CHECK(std::string(e.what()).find("synth") != std::string::npos);
    }
    fs::remove_all(out);
}

TEST_CASE("full pipeline on a tiny corpus produces every artifact") {
    const auto out = fresh_dir("sdd_pipe_full");
    PipelineConfig cfg = tiny_config(out);
    run_pipeline(cfg);

    for (const char* rel :
         {"corpus/manifest.jsonl", "segments/segments.jsonl", "segments/counts.json",
          "vowel/vowel.manifest.json", "vowel/vowel.weights.bin", "vowel/report.json",
          "embeddings/index.json", "augmented/samples.bin", "augmented/samples.jsonl",
          "augmented/counts.json", "depression/depression.manifest.json",
          "depression/depression.weights.bin", "depression/report.json",
          "predictions/predictions.jsonl", "predictions/report.json", "predictions/report.txt",
          "correlation/correlation.json", "correlation/correlation.txt"}) {
        INFO("expect " << rel);
        CHECK(fs::exists(out / rel));
    }

    // augment counts: 32 per depressed, 16 per control training speaker
    {
        const auto counts = nlohmann::json::parse(slurp(out / "augmented" / "counts.json"));
        const auto index = nlohmann::json::parse(slurp(out / "embeddings" / "index.json"));
        i64 dep = 0, ctl = 0;
        for (const auto& s : index["speakers"]) {
            if (s["split"] == "train") {
                (s["label"] == 1 ? dep : ctl)++;
            }
        }
        CHECK(counts["total"].get<i64>() == dep * 32 + ctl * 16);
    }

    // evaluation artifact is reloadable and self-consistent
    const auto outcome = read_evaluation(out.string());
    CHECK(outcome.predictions.size() == 4);  // half of 6 speakers, stratified
    const auto report = nlohmann::json::parse(slurp(out / "predictions" / "report.json"));
    CHECK(report["macro_f1"].get<double>() == doctest::Approx(outcome.macro_f1).epsilon(1e-12));

    // correlation rows cover the six descriptors
    const auto corr = nlohmann::json::parse(slurp(out / "correlation" / "correlation.json"));
    CHECK(corr.size() == 6);

    // re-running one stage with unchanged inputs is byte-identical
    const std::string before = slurp(out / "segments" / "segments.jsonl");
    stage_segment(cfg);
    CHECK(slurp(out / "segments" / "segments.jsonl") == before);

    // ablation switch: p = 0 keeps sample counts but drops constant rows
    PipelineConfig ablation = cfg;
    ablation.augment.p = 0;
    stage_augment(ablation);
    std::ifstream f(out / "augmented" / "samples.jsonl");
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) {
            continue;
        }
        const auto j = nlohmann::json::parse(line);
        CHECK(j["perturbed"].size() == 0);
    }

    fs::remove_all(out);
}
