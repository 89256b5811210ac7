#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "sdd/augment.hpp"
#include "sdd/corpus.hpp"
#include "sdd/depression_cnn.hpp"
#include "sdd/segment.hpp"
#include "sdd/vowel_cnn.hpp"

namespace sdd {

struct PipelineConfig {
    std::uint64_t seed = 7;
    std::string out_dir = "out";

    // synthetic corpus parameters; an external JSON-lines manifest can be
    // supplied instead, in which case the synth stage is skipped
    SynthConfig synth;
    std::string external_manifest;

    double dev_fraction = 0.25;

    LogMelConfig features;
    OverlapPolicy overlap;

    VowelCnnConfig vowel;
    // desk-scale training subsample caps (0 disables the cap)
    i64 vowel_max_segments_per_class = 100;
    i64 vowel_max_dev_segments_per_class = 40;

    AugmentConfig augment;
    SaliencyStrategy saliency = SaliencyStrategy::GradNorm;
    DepressionCnnConfig depression;
};

PipelineConfig default_pipeline_config();

std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const std::string& text);
PipelineConfig load_pipeline_config(const std::string& path);
void save_pipeline_config(const PipelineConfig& cfg, const std::string& path);

// Throws config_error listing every violated constraint.
void validate_pipeline_config(const PipelineConfig& cfg);

// Applies one of the published window settings (42, 21 or 10) to the
// augmentation and depression blocks.
void apply_window_setting(PipelineConfig& cfg, i64 n);

// Stratified by label: round(fraction * count) of each class held out,
// deterministic in (seed, speaker ids).
std::set<std::string> select_dev_speakers(const std::vector<SpeakerRecord>& speakers,
                                          double fraction, std::uint64_t seed);

// Stages. Each reads only prior-stage artifacts plus the corpus and writes
// only its own directory under out_dir; missing prerequisites raise an
// io_error naming the stage to run first.
void stage_synth(const PipelineConfig& cfg);
void stage_segment(const PipelineConfig& cfg);
void stage_train_vowel(const PipelineConfig& cfg);
void stage_embed(const PipelineConfig& cfg);
void stage_augment(const PipelineConfig& cfg);
void stage_train_depression(const PipelineConfig& cfg);
void stage_evaluate(const PipelineConfig& cfg);
void stage_correlate(const PipelineConfig& cfg);

// All stages in dependency order (synth skipped for external corpora).
void run_pipeline(const PipelineConfig& cfg);

// One stage by CLI name: synth|segment|train-vowel|embed|augment|
// train-depression|evaluate|correlate|run.
void run_stage(const std::string& stage, const PipelineConfig& cfg);

// The evaluate artifact, reloadable for comparisons.
struct EvaluationOutcome {
    std::vector<SpeakerPrediction> predictions;
    std::vector<i64> labels;
    double macro_f1 = 0.0;
    double depressed_f1 = 0.0;
};
EvaluationOutcome read_evaluation(const std::string& out_dir);

}  // namespace sdd
