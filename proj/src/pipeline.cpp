#include "sdd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "sdd/checkpoint.hpp"
#include "sdd/error.hpp"
#include "sdd/eval.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace sdd {

namespace {

// ------------------------------------------------------------- config I/O

json synth_to_json(const SynthConfig& s) {
    json j;
    j["n_speakers"] = s.n_speakers;
    j["utterances_per_speaker"] = s.utterances_per_speaker;
    j["depressed_fraction"] = s.depressed_fraction;
    j["utterance_ms_min"] = s.utterance_ms_min;
    j["utterance_ms_max"] = s.utterance_ms_max;
    j["sample_rate"] = s.sample_rate;
    j["depressed_f0_std_scale"] = s.f0_std_scale_depressed;
    j["depressed_loudness_scale"] = s.loudness_scale_depressed;
    j["depressed_jitter_scale"] = s.jitter_scale_depressed;
    return j;
}

void synth_from_json(const json& j, SynthConfig& s) {
    s.n_speakers = j.value("n_speakers", s.n_speakers);
    s.utterances_per_speaker = j.value("utterances_per_speaker", s.utterances_per_speaker);
    s.depressed_fraction = j.value("depressed_fraction", s.depressed_fraction);
    s.utterance_ms_min = j.value("utterance_ms_min", s.utterance_ms_min);
    s.utterance_ms_max = j.value("utterance_ms_max", s.utterance_ms_max);
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    s.f0_std_scale_depressed = j.value("depressed_f0_std_scale", s.f0_std_scale_depressed);
    s.loudness_scale_depressed = j.value("depressed_loudness_scale", s.loudness_scale_depressed);
    s.jitter_scale_depressed = j.value("depressed_jitter_scale", s.jitter_scale_depressed);
}

}  // namespace

PipelineConfig default_pipeline_config() {
    PipelineConfig cfg;
    // desk-scale training budget; the module-level optimizer constants stay
    // at their published values
    cfg.vowel.max_epochs = 4;
    cfg.vowel.patience = 10;
    cfg.vowel_max_segments_per_class = 100;
    cfg.vowel_max_dev_segments_per_class = 40;
    cfg.depression.max_epochs = 80;
    cfg.depression.patience = 10;
    return cfg;
}

std::string config_to_json(const PipelineConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    json corpus;
    corpus["external_manifest"] = cfg.external_manifest;
    corpus["synthetic"] = synth_to_json(cfg.synth);
    j["corpus"] = std::move(corpus);
    j["split"] = {{"dev_fraction", cfg.dev_fraction}};
    j["features"] = {{"n_fft", cfg.features.n_fft}, {"hop", cfg.features.hop},
                     {"n_mels", cfg.features.n_mels}, {"fmin", cfg.features.fmin},
                     {"fmax", cfg.features.fmax}, {"log_floor", cfg.features.floor_eps}};
    json seg;
    seg["segment_ms"] = static_cast<double>(cfg.overlap.segment_us) / 1000.0;
    json ratios;
    for (i64 v = 0; v < kNumVowelClasses; ++v) {
        ratios[vowel_name(static_cast<VowelLabel>(v))] = cfg.overlap.ratios[static_cast<std::size_t>(v)];
    }
    seg["ratios"] = std::move(ratios);
    j["segmentation"] = std::move(seg);
    j["vowel"] = {{"lr", cfg.vowel.lr},
                  {"l2", cfg.vowel.l2},
                  {"batch", cfg.vowel.batch},
                  {"max_epochs", cfg.vowel.max_epochs},
                  {"patience", cfg.vowel.patience},
                  {"max_segments_per_class", cfg.vowel_max_segments_per_class},
                  {"max_dev_segments_per_class", cfg.vowel_max_dev_segments_per_class}};
    j["saliency"] = saliency_name(cfg.saliency);
    j["augment"] = {{"n", cfg.augment.n}, {"pos", cfg.augment.pos}, {"neg", cfg.augment.neg},
                    {"p", cfg.augment.p}, {"r", cfg.augment.r}, {"c", cfg.augment.c}};
    j["depression"] = {{"lr", cfg.depression.lr},
                       {"l2", cfg.depression.l2},
                       {"batch", cfg.depression.batch},
                       {"max_epochs", cfg.depression.max_epochs},
                       {"patience", cfg.depression.patience}};
    return j.dump(2) + "\n";
}

PipelineConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw schema_error(std::string("config: bad JSON: ") + e.what());
    }
    PipelineConfig cfg = default_pipeline_config();
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("corpus")) {
        const auto& c = j["corpus"];
        cfg.external_manifest = c.value("external_manifest", cfg.external_manifest);
        if (c.contains("synthetic")) {
            synth_from_json(c["synthetic"], cfg.synth);
        }
    }
    if (j.contains("split")) {
        cfg.dev_fraction = j["split"].value("dev_fraction", cfg.dev_fraction);
    }
    if (j.contains("features")) {
        const auto& f = j["features"];
        cfg.features.n_fft = f.value("n_fft", cfg.features.n_fft);
        cfg.features.hop = f.value("hop", cfg.features.hop);
        cfg.features.n_mels = f.value("n_mels", cfg.features.n_mels);
        cfg.features.fmin = f.value("fmin", cfg.features.fmin);
        cfg.features.fmax = f.value("fmax", cfg.features.fmax);
        cfg.features.floor_eps = f.value("log_floor", cfg.features.floor_eps);
    }
    if (j.contains("segmentation")) {
        const auto& s = j["segmentation"];
        if (s.contains("segment_ms")) {
            cfg.overlap.segment_us = static_cast<i64>(std::llround(s["segment_ms"].get<double>() * 1000.0));
        }
        if (s.contains("ratios")) {
            for (i64 v = 0; v < kNumVowelClasses; ++v) {
                const char* name = vowel_name(static_cast<VowelLabel>(v));
                if (s["ratios"].contains(name)) {
                    cfg.overlap.ratios[static_cast<std::size_t>(v)] = s["ratios"][name].get<double>();
                }
            }
        }
    }
    if (j.contains("vowel")) {
        const auto& v = j["vowel"];
        cfg.vowel.lr = v.value("lr", cfg.vowel.lr);
        cfg.vowel.l2 = v.value("l2", cfg.vowel.l2);
        cfg.vowel.batch = v.value("batch", cfg.vowel.batch);
        cfg.vowel.max_epochs = v.value("max_epochs", cfg.vowel.max_epochs);
        cfg.vowel.patience = v.value("patience", cfg.vowel.patience);
        cfg.vowel_max_segments_per_class = v.value("max_segments_per_class", cfg.vowel_max_segments_per_class);
        cfg.vowel_max_dev_segments_per_class =
            v.value("max_dev_segments_per_class", cfg.vowel_max_dev_segments_per_class);
    }
    if (j.contains("saliency")) {
        cfg.saliency = saliency_from_name(j["saliency"].get<std::string>());
    }
    if (j.contains("augment")) {
        const auto& a = j["augment"];
        cfg.augment.n = a.value("n", cfg.augment.n);
        cfg.augment.pos = a.value("pos", cfg.augment.pos);
        cfg.augment.neg = a.value("neg", cfg.augment.neg);
        cfg.augment.p = a.value("p", cfg.augment.p);
        cfg.augment.r = a.value("r", cfg.augment.r);
        cfg.augment.c = a.value("c", cfg.augment.c);
    }
    if (j.contains("depression")) {
        const auto& d = j["depression"];
        cfg.depression.lr = d.value("lr", cfg.depression.lr);
        cfg.depression.l2 = d.value("l2", cfg.depression.l2);
        cfg.depression.batch = d.value("batch", cfg.depression.batch);
        cfg.depression.max_epochs = d.value("max_epochs", cfg.depression.max_epochs);
        cfg.depression.patience = d.value("patience", cfg.depression.patience);
    }
    // derived couplings
    cfg.depression.window = cfg.augment.n;
    cfg.depression.conv_pad = cfg.augment.n == 42 ? 0 : 3;
    cfg.augment.emb_dim = cfg.vowel.fc_dim;
    cfg.depression.emb_dim = cfg.vowel.fc_dim;
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw io_error("cannot read config file " + path);
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_json(ss.str());
}

void save_pipeline_config(const PipelineConfig& cfg, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw io_error("cannot write config file " + path);
    }
    f << config_to_json(cfg);
}

void validate_pipeline_config(const PipelineConfig& cfg) {
    std::vector<std::string> problems;
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) {
            problems.push_back(msg);
        }
    };
    check(cfg.dev_fraction > 0.0 && cfg.dev_fraction < 1.0, "split.dev_fraction must lie in (0,1)");
    check(cfg.features.n_mels == cfg.vowel.n_mels,
          "features.n_mels must match the vowel model input height");
    check(cfg.features.hop > 0 && cfg.features.n_fft > 0, "features.n_fft and hop must be positive");
    try {
        cfg.overlap.validate();
    } catch (const config_error& e) {
        problems.push_back(e.what());
    }
    try {
        cfg.augment.validate();
    } catch (const config_error& e) {
        problems.push_back(e.what());
    }
    check(cfg.vowel.lr > 0.0 && cfg.depression.lr > 0.0, "learning rates must be positive");
    check(cfg.vowel.batch >= 1 && cfg.depression.batch >= 1, "batch sizes must be >= 1");
    check(cfg.vowel.max_epochs >= 1 && cfg.depression.max_epochs >= 1, "max_epochs must be >= 1");
    check(cfg.vowel.patience >= 1 && cfg.depression.patience >= 1, "patience must be >= 1");
    check(cfg.depression.window == cfg.augment.n,
          "depression window and augment n must agree");
    check(cfg.depression.emb_dim == cfg.vowel.fc_dim && cfg.augment.emb_dim == cfg.vowel.fc_dim,
          "embedding dims must agree across vowel, augment and depression blocks");
    if (cfg.external_manifest.empty()) {
        check(cfg.synth.n_speakers >= 2, "corpus.synthetic.n_speakers must be >= 2");
        check(cfg.synth.utterances_per_speaker >= cfg.augment.n,
              "corpus.synthetic.utterances_per_speaker must be >= augment.n");
        check(cfg.synth.utterance_ms_min >= 250,
              "corpus.synthetic.utterance_ms_min must be >= 250 ms");
        check(cfg.synth.utterance_ms_max >= cfg.synth.utterance_ms_min,
              "corpus.synthetic utterance duration range is inverted");
        check(cfg.synth.depressed_fraction >= 0.0 && cfg.synth.depressed_fraction <= 1.0,
              "corpus.synthetic.depressed_fraction must lie in [0,1]");
    }
    try {
        DepressionCnnConfig probe = cfg.depression;
        probe.length_chain();
    } catch (const config_error& e) {
        problems.push_back(e.what());
    }
    if (!problems.empty()) {
        std::ostringstream os;
        os << "config validation failed:";
        for (const auto& p : problems) {
            os << "\n  - " << p;
        }
        throw config_error(os.str());
    }
}

void apply_window_setting(PipelineConfig& cfg, i64 n) {
    if (n != 42 && n != 21 && n != 10) {
        throw config_error("window size must be one of 42, 21, 10");
    }
    const double c = cfg.augment.c;
    cfg.augment = AugmentConfig::for_window(n);
    cfg.augment.c = c;
    cfg.augment.emb_dim = cfg.vowel.fc_dim;
    const auto keep = cfg.depression;
    cfg.depression = DepressionCnnConfig::for_window(n);
    cfg.depression.lr = keep.lr;
    cfg.depression.l2 = keep.l2;
    cfg.depression.batch = keep.batch;
    cfg.depression.max_epochs = keep.max_epochs;
    cfg.depression.patience = keep.patience;
    cfg.depression.emb_dim = cfg.vowel.fc_dim;
}

std::set<std::string> select_dev_speakers(const std::vector<SpeakerRecord>& speakers,
                                          double fraction, std::uint64_t seed) {
    std::vector<std::string> dep;
    std::vector<std::string> ctl;
    for (const auto& s : speakers) {
        (s.label == 1 ? dep : ctl).push_back(s.speaker_id);
    }
    std::sort(dep.begin(), dep.end());
    std::sort(ctl.begin(), ctl.end());
    std::set<std::string> dev;
    auto take = [&](std::vector<std::string>& ids, const char* tag) {
        Rng rng(derive_seed(seed, std::string("split/") + tag));
        rng.shuffle(ids);
        const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
        for (std::size_t i = 0; i < k && i < ids.size(); ++i) {
            dev.insert(ids[i]);
        }
    };
    take(dep, "depressed");
    take(ctl, "control");
    return dev;
}

// ------------------------------------------------------------- stage glue

namespace {

fs::path corpus_manifest_path(const PipelineConfig& cfg) {
    if (!cfg.external_manifest.empty()) {
        return cfg.external_manifest;
    }
    return fs::path(cfg.out_dir) / "corpus" / "manifest.jsonl";
}

void require_artifact(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p)) {
        throw io_error("missing artifact " + p.string() + "; run the '" + producer +
                       "' stage first");
    }
}

std::vector<SpeakerRecord> load_corpus_checked(const PipelineConfig& cfg) {
    const fs::path manifest = corpus_manifest_path(cfg);
    require_artifact(manifest, cfg.external_manifest.empty() ? "synth" : "synth (external manifest)");
    return load_corpus(manifest.string());
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) {
        throw io_error("cannot write " + p.string());
    }
    f << text;
}

void write_f32_rows(const fs::path& p, const std::vector<std::vector<double>>& rows) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) {
        throw io_error("cannot write " + p.string());
    }
    std::vector<unsigned char> buf;
    for (const auto& row : rows) {
        buf.clear();
        buf.reserve(row.size() * 4);
        for (double v : row) {
            const auto fv = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &fv, 4);
            buf.push_back(static_cast<unsigned char>(bits & 0xff));
            buf.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
            buf.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
            buf.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
        }
        f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!f) {
        throw io_error("short write to " + p.string());
    }
}

std::vector<std::vector<double>> read_f32_rows(const fs::path& p, i64 n_rows, i64 dim) {
    std::ifstream f(p, std::ios::binary);
    if (!f) {
        throw io_error("cannot read " + p.string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (static_cast<i64>(bytes.size()) != n_rows * dim * 4) {
        throw size_error(p.string() + ": expected " + std::to_string(n_rows * dim * 4) +
                         " bytes, found " + std::to_string(bytes.size()));
    }
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n_rows));
    for (i64 rr = 0; rr < n_rows; ++rr) {
        auto& row = rows[static_cast<std::size_t>(rr)];
        row.resize(static_cast<std::size_t>(dim));
        for (i64 c = 0; c < dim; ++c) {
            const unsigned char* p4 = bytes.data() + (rr * dim + c) * 4;
            const std::uint32_t bits = static_cast<std::uint32_t>(p4[0]) |
                                       (static_cast<std::uint32_t>(p4[1]) << 8) |
                                       (static_cast<std::uint32_t>(p4[2]) << 16) |
                                       (static_cast<std::uint32_t>(p4[3]) << 24);
            float fv;
            std::memcpy(&fv, &bits, 4);
            row[static_cast<std::size_t>(c)] = static_cast<double>(fv);
        }
    }
    return rows;
}

struct SegmentLine {
    std::string speaker;
    i64 utterance = 0;
    i64 start_us = 0;
    VowelLabel label = VowelLabel::None;
};

std::vector<SegmentLine> read_segments(const fs::path& p) {
    std::ifstream f(p);
    if (!f) {
        throw io_error("cannot read " + p.string());
    }
    std::vector<SegmentLine> out;
    std::string line;
    i64 line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw schema_error(p.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        SegmentLine s;
        s.speaker = j.at("speaker").get<std::string>();
        s.utterance = j.at("utterance").get<i64>();
        s.start_us = static_cast<i64>(std::llround(j.at("start_ms").get<double>() * 1000.0));
        s.label = map_phone(j.at("label").get<std::string>());
        if (j.at("label").get<std::string>() == "none") {
            s.label = VowelLabel::None;
        }
        out.push_back(std::move(s));
    }
    return out;
}

// per-speaker embeddings artifact, parsed from index.json
struct EmbIndexEntry {
    std::string speaker_id;
    std::string file;
    i64 count = 0;
    i64 label = 0;
    std::string split;
    std::vector<std::string> audio;  // manifest-relative paths
    std::vector<double> saliency;    // empty when not computed
};

struct EmbIndex {
    i64 dim = 0;
    std::string strategy;
    std::vector<EmbIndexEntry> speakers;
};

EmbIndex read_emb_index(const fs::path& dir) {
    const fs::path p = dir / "index.json";
    require_artifact(p, "embed");
    std::ifstream f(p);
    if (!f) {
        throw io_error("cannot read " + p.string());
    }
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw schema_error(p.string() + ": " + e.what());
    }
    EmbIndex idx;
    idx.dim = j.at("dim").get<i64>();
    idx.strategy = j.value("saliency_strategy", "grad");
    for (const auto& s : j.at("speakers")) {
        EmbIndexEntry e;
        e.speaker_id = s.at("speaker_id").get<std::string>();
        e.file = s.at("file").get<std::string>();
        e.count = s.at("count").get<i64>();
        e.label = s.at("label").get<i64>();
        e.split = s.at("split").get<std::string>();
        e.audio = s.at("audio").get<std::vector<std::string>>();
        if (s.contains("saliency")) {
            e.saliency = s.at("saliency").get<std::vector<double>>();
        }
        idx.speakers.push_back(std::move(e));
    }
    return idx;
}

std::string format_double(double v, int prec = 6) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------- stages

void stage_synth(const PipelineConfig& cfg) {
    if (!cfg.external_manifest.empty()) {
        std::cout << "[synth] external manifest configured, nothing to generate\n";
        return;
    }
    const fs::path dir = fs::path(cfg.out_dir) / "corpus";
    fs::create_directories(dir);
    const std::string manifest = generate_synthetic_corpus(cfg.synth, cfg.seed, dir.string());
    std::cout << "[synth] wrote " << cfg.synth.n_speakers << " speakers x "
              << cfg.synth.utterances_per_speaker << " utterances, manifest " << manifest << "\n";
}

void stage_segment(const PipelineConfig& cfg) {
    const auto speakers = load_corpus_checked(cfg);
    const auto ds = build_vowel_training_set(speakers, cfg.overlap);

    std::ostringstream lines;
    for (const auto& e : ds.entries) {
        json j;
        j["speaker"] = e.speaker_id;
        j["utterance"] = e.utterance_index;
        j["start_ms"] = static_cast<double>(e.start_us) / 1000.0;
        j["label"] = vowel_name(e.label);
        lines << j.dump() << "\n";
    }
    const fs::path dir = fs::path(cfg.out_dir) / "segments";
    write_text(dir / "segments.jsonl", lines.str());

    json counts;
    i64 total = 0;
    for (i64 v = 0; v < kNumVowelClasses; ++v) {
        counts[vowel_name(static_cast<VowelLabel>(v))] = ds.class_counts[static_cast<std::size_t>(v)];
        total += ds.class_counts[static_cast<std::size_t>(v)];
    }
    counts["total"] = total;
    write_text(dir / "counts.json", counts.dump(2) + "\n");
    std::cout << "[segment] " << total << " segments; counts " << counts.dump() << "\n";
}

namespace {

// loads the waveform slices behind the chosen segment lines and featurizes
std::vector<VowelExample> featurize_segments(const PipelineConfig& cfg,
                                             const std::vector<SpeakerRecord>& speakers,
                                             const std::vector<SegmentLine>& lines) {
    std::map<std::string, const SpeakerRecord*> by_id;
    for (const auto& s : speakers) {
        by_id[s.speaker_id] = &s;
    }
    // one waveform load per distinct utterance
    std::map<std::pair<std::string, i64>, std::vector<const SegmentLine*>> by_utt;
    for (const auto& l : lines) {
        by_utt[{l.speaker, l.utterance}].push_back(&l);
    }
    std::vector<std::pair<const std::pair<std::string, i64>*, const std::vector<const SegmentLine*>*>> work;
    work.reserve(by_utt.size());
    for (const auto& [key, segs] : by_utt) {
        work.emplace_back(&key, &segs);
    }
    std::vector<std::vector<VowelExample>> partial(work.size());
    const LogMelExtractor extractor(cfg.features, cfg.synth.sample_rate);

    std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic)
    for (i64 wi = 0; wi < static_cast<i64>(work.size()); ++wi) {
        try {
            const auto& [key, segs] = work[static_cast<std::size_t>(wi)];
            const auto it = by_id.find(key->first);
            if (it == by_id.end()) {
                throw schema_error("segments reference unknown speaker '" + key->first + "'");
            }
            const auto& utts = it->second->utterances;
            if (key->second < 0 || key->second >= static_cast<i64>(utts.size())) {
                throw schema_error("segments reference utterance " + std::to_string(key->second) +
                                   " beyond speaker '" + key->first + "'");
            }
            const auto& utt = utts[static_cast<std::size_t>(key->second)];
            const Waveform w = read_wav(utt.audio_path, cfg.synth.sample_rate);
            const i64 seg_len = cfg.overlap.segment_us * cfg.synth.sample_rate / 1000000;
            auto& out = partial[static_cast<std::size_t>(wi)];
            for (const auto* seg : *segs) {
                const i64 s0 = seg->start_us * cfg.synth.sample_rate / 1000000;
                if (s0 + seg_len > static_cast<i64>(w.samples.size())) {
                    throw schema_error("segment at " + std::to_string(seg->start_us / 1000.0) +
                                       " ms runs past utterance audio " + utt.audio_path);
                }
                VowelExample ex;
                ex.patch = extractor.compute(w.samples.data() + s0, seg_len);
                ex.label = static_cast<i64>(seg->label);
                out.push_back(std::move(ex));
            }
        } catch (...) {
#pragma omp critical
            if (!first_error) {
                first_error = std::current_exception();
            }
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    std::vector<VowelExample> all;
    for (auto& part : partial) {
        for (auto& ex : part) {
            all.push_back(std::move(ex));
        }
    }
    return all;
}

// per-class subsample cap, seeded, keeps canonical order
std::vector<SegmentLine> cap_per_class(const std::vector<SegmentLine>& lines, i64 cap,
                                       std::uint64_t seed, const std::string& tag) {
    if (cap <= 0) {
        return lines;
    }
    std::vector<SegmentLine> out;
    for (i64 v = 0; v < kNumVowelClasses; ++v) {
        std::vector<i64> idx;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].label == static_cast<VowelLabel>(v)) {
                idx.push_back(static_cast<i64>(i));
            }
        }
        if (static_cast<i64>(idx.size()) > cap) {
            Rng rng(derive_seed(seed, tag + "/" + vowel_name(static_cast<VowelLabel>(v))));
            rng.shuffle(idx);
            idx.resize(static_cast<std::size_t>(cap));
            std::sort(idx.begin(), idx.end());
        }
        for (i64 i : idx) {
            out.push_back(lines[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

}  // namespace

void stage_train_vowel(const PipelineConfig& cfg) {
    const fs::path seg_file = fs::path(cfg.out_dir) / "segments" / "segments.jsonl";
    require_artifact(seg_file, "segment");
    const auto speakers = load_corpus_checked(cfg);
    const auto dev_ids = select_dev_speakers(speakers, cfg.dev_fraction, cfg.seed);
    const auto lines = read_segments(seg_file);

    std::vector<SegmentLine> train_lines;
    std::vector<SegmentLine> dev_lines;
    for (const auto& l : lines) {
        (dev_ids.count(l.speaker) ? dev_lines : train_lines).push_back(l);
    }
    train_lines = cap_per_class(train_lines, cfg.vowel_max_segments_per_class, cfg.seed,
                                "train-vowel/cap-train");
    dev_lines = cap_per_class(dev_lines, cfg.vowel_max_dev_segments_per_class, cfg.seed,
                              "train-vowel/cap-dev");

    const auto train = featurize_segments(cfg, speakers, train_lines);
    const auto dev = featurize_segments(cfg, speakers, dev_lines);
    std::cout << "[train-vowel] " << train.size() << " train / " << dev.size()
              << " dev segments\n";

    VowelCnn model(cfg.vowel, derive_seed(cfg.seed, "init-vowel"));
    const auto rep = train_vowel_cnn(model, train, dev, cfg.seed);

    const fs::path dir = fs::path(cfg.out_dir) / "vowel";
    fs::create_directories(dir);
    CheckpointMeta meta;
    meta.model = "vowel_cnn";
    meta.seed = cfg.seed;
    meta.hyperparameters = {{"lr", cfg.vowel.lr},
                            {"l2", cfg.vowel.l2},
                            {"batch", static_cast<double>(cfg.vowel.batch)},
                            {"n_mels", static_cast<double>(cfg.vowel.n_mels)},
                            {"filters", static_cast<double>(cfg.vowel.filters)},
                            {"fc_dim", static_cast<double>(cfg.vowel.fc_dim)},
                            {"n_classes", static_cast<double>(cfg.vowel.n_classes)}};
    save_checkpoint(model.params(), meta, (dir / "vowel").string());

    json report;
    report["epochs_run"] = rep.epochs_run;
    report["best_epoch"] = rep.best_epoch;
    report["dev_macro_f1"] = rep.best_macro_f1;
    json per_class;
    for (i64 v = 0; v < cfg.vowel.n_classes; ++v) {
        per_class[vowel_name(static_cast<VowelLabel>(v))] =
            rep.dev_per_class_f1[static_cast<std::size_t>(v)];
    }
    report["dev_per_class_f1"] = std::move(per_class);
    report["train_segments"] = train.size();
    report["dev_segments"] = dev.size();
    report["epoch_train_loss"] = rep.epoch_train_loss;
    write_text(dir / "report.json", report.dump(2) + "\n");
    std::cout << "[train-vowel] dev macro-F1 " << format_double(rep.best_macro_f1, 4)
              << " (best epoch " << rep.best_epoch << "/" << rep.epochs_run << ")\n";
}

void stage_embed(const PipelineConfig& cfg) {
    const fs::path ckpt = fs::path(cfg.out_dir) / "vowel" / "vowel.manifest.json";
    require_artifact(ckpt, "train-vowel");
    const auto speakers = load_corpus_checked(cfg);
    const auto dev_ids = select_dev_speakers(speakers, cfg.dev_fraction, cfg.seed);

    VowelCnn model(cfg.vowel, derive_seed(cfg.seed, "init-vowel"));
    model.load_state(load_checkpoint((fs::path(cfg.out_dir) / "vowel" / "vowel").string()));
    model.freeze();

    struct Slot {
        const SpeakerRecord* spk;
        i64 utt;
        bool want_saliency;
        std::vector<double> embedding;
        double saliency;
    };
    std::vector<Slot> slots;
    for (const auto& s : speakers) {
        const bool training_speaker = dev_ids.count(s.speaker_id) == 0;
        for (std::size_t u = 0; u < s.utterances.size(); ++u) {
            slots.push_back({&s, static_cast<i64>(u), training_speaker, {}, 0.0});
        }
    }
    const LogMelExtractor extractor(cfg.features, cfg.synth.sample_rate);
    std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic)
    for (i64 i = 0; i < static_cast<i64>(slots.size()); ++i) {
        try {
            auto& slot = slots[static_cast<std::size_t>(i)];
            const auto& utt = slot.spk->utterances[static_cast<std::size_t>(slot.utt)];
            const Waveform w = read_wav(utt.audio_path, cfg.synth.sample_rate);
            const LogMel mel = extractor.compute(w);
            const auto res = model.embed(mel, cfg.saliency, slot.want_saliency);
            slot.embedding = res.embedding;
            slot.saliency = res.saliency;
        } catch (...) {
#pragma omp critical
            if (!first_error) {
                first_error = std::current_exception();
            }
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }

    const fs::path dir = fs::path(cfg.out_dir) / "embeddings";
    fs::create_directories(dir);
    const fs::path manifest_dir = corpus_manifest_path(cfg).parent_path();
    json speakers_json = json::array();
    std::size_t cursor = 0;
    for (const auto& s : speakers) {
        const i64 count = static_cast<i64>(s.utterances.size());
        std::vector<std::vector<double>> rows;
        std::vector<double> saliency;
        bool with_saliency = false;
        for (i64 u = 0; u < count; ++u) {
            const auto& slot = slots[cursor++];
            rows.push_back(slot.embedding);
            saliency.push_back(slot.saliency);
            with_saliency = slot.want_saliency;
        }
        const std::string file = s.speaker_id + ".emb.bin";
        write_f32_rows(dir / file, rows);
        json e;
        e["speaker_id"] = s.speaker_id;
        e["file"] = file;
        e["count"] = count;
        e["dim"] = cfg.vowel.fc_dim;
        e["label"] = s.label;
        e["split"] = dev_ids.count(s.speaker_id) ? "dev" : "train";
        json audio = json::array();
        for (const auto& u : s.utterances) {
            audio.push_back(fs::relative(u.audio_path, manifest_dir).string());
        }
        e["audio"] = std::move(audio);
        if (with_saliency) {
            e["saliency"] = saliency;
        }
        speakers_json.push_back(std::move(e));
    }
    json index;
    index["dim"] = cfg.vowel.fc_dim;
    index["saliency_strategy"] = saliency_name(cfg.saliency);
    index["speakers"] = std::move(speakers_json);
    write_text(dir / "index.json", index.dump(2) + "\n");
    std::cout << "[embed] " << slots.size() << " utterances embedded ("
              << saliency_name(cfg.saliency) << " saliency for training speakers)\n";
}

void stage_augment(const PipelineConfig& cfg) {
    const fs::path emb_dir = fs::path(cfg.out_dir) / "embeddings";
    const EmbIndex idx = read_emb_index(emb_dir);

    std::vector<std::vector<std::vector<double>>> storage;
    std::vector<SpeakerEmbeddings> train;
    for (const auto& e : idx.speakers) {
        if (e.split != "train") {
            continue;
        }
        if (e.saliency.empty()) {
            throw schema_error("embeddings index lacks saliency for training speaker '" +
                               e.speaker_id + "'");
        }
        storage.push_back(read_f32_rows(emb_dir / e.file, e.count, idx.dim));
    }
    std::size_t at = 0;
    std::vector<const EmbIndexEntry*> train_entries;
    for (const auto& e : idx.speakers) {
        if (e.split != "train") {
            continue;
        }
        SpeakerEmbeddings se;
        se.speaker_id = e.speaker_id;
        se.embeddings = &storage[at++];
        se.saliency = &e.saliency;
        se.label = e.label;
        train.push_back(se);
        train_entries.push_back(&e);
    }

    const auto samples = build_depression_training_set(train, cfg.augment, cfg.seed);

    const fs::path dir = fs::path(cfg.out_dir) / "augmented";
    fs::create_directories(dir);
    std::vector<std::vector<double>> rows;
    rows.reserve(samples.size());
    std::ostringstream lines;
    i64 n_pos = 0;
    for (const auto& s : samples) {
        rows.push_back(s.values);
        json j;
        j["speaker"] = s.speaker_id;
        j["label"] = s.label;
        j["window_start"] = s.window_start;
        j["perturbed"] = s.perturbed;
        j["padded"] = s.padded;
        lines << j.dump() << "\n";
        n_pos += s.label;
    }
    write_f32_rows(dir / "samples.bin", rows);
    write_text(dir / "samples.jsonl", lines.str());
    json counts;
    counts["total"] = samples.size();
    counts["positive"] = n_pos;
    counts["negative"] = static_cast<i64>(samples.size()) - n_pos;
    counts["n"] = cfg.augment.n;
    counts["p"] = cfg.augment.p;
    counts["r"] = cfg.augment.r;
    counts["c"] = cfg.augment.c;
    write_text(dir / "counts.json", counts.dump(2) + "\n");
    std::cout << "[augment] " << samples.size() << " samples (" << n_pos << " depressed, "
              << (samples.size() - n_pos) << " control), p=" << cfg.augment.p << "\n";
}

void stage_train_depression(const PipelineConfig& cfg) {
    const fs::path aug_dir = fs::path(cfg.out_dir) / "augmented";
    require_artifact(aug_dir / "samples.bin", "augment");
    require_artifact(aug_dir / "samples.jsonl", "augment");
    const EmbIndex idx = read_emb_index(fs::path(cfg.out_dir) / "embeddings");

    // labels / provenance
    std::vector<DepressionExample> dataset;
    {
        std::ifstream f(aug_dir / "samples.jsonl");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) {
                continue;
            }
            const json j = json::parse(line);
            DepressionExample ex;
            ex.label = j.at("label").get<i64>();
            dataset.push_back(std::move(ex));
        }
    }
    auto rows = read_f32_rows(aug_dir / "samples.bin", static_cast<i64>(dataset.size()),
                              cfg.augment.n * cfg.augment.emb_dim);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        dataset[i].window = std::move(rows[i]);
    }

    // dev speakers for early stopping
    std::vector<std::vector<std::vector<double>>> dev_storage;
    std::vector<DevSpeaker> dev;
    const fs::path emb_dir = fs::path(cfg.out_dir) / "embeddings";
    for (const auto& e : idx.speakers) {
        if (e.split != "dev") {
            continue;
        }
        dev_storage.push_back(read_f32_rows(emb_dir / e.file, e.count, idx.dim));
    }
    std::size_t at = 0;
    for (const auto& e : idx.speakers) {
        if (e.split != "dev") {
            continue;
        }
        DevSpeaker d;
        d.speaker_id = e.speaker_id;
        d.embeddings = &dev_storage[at++];
        d.label = e.label;
        dev.push_back(d);
    }

    DepressionCnn model(cfg.depression, derive_seed(cfg.seed, "init-depression"));
    const auto rep = train_depression_cnn(model, dataset, dev, cfg.augment.c, cfg.seed);

    const fs::path dir = fs::path(cfg.out_dir) / "depression";
    fs::create_directories(dir);
    CheckpointMeta meta;
    meta.model = "depression_cnn";
    meta.seed = cfg.seed;
    meta.hyperparameters = {{"lr", cfg.depression.lr},
                            {"l2", cfg.depression.l2},
                            {"batch", static_cast<double>(cfg.depression.batch)},
                            {"window", static_cast<double>(cfg.depression.window)},
                            {"conv_pad", static_cast<double>(cfg.depression.conv_pad)},
                            {"pad_value", cfg.augment.c}};
    save_checkpoint(model.params(), meta, (dir / "depression").string());

    json report;
    report["epochs_run"] = rep.epochs_run;
    report["best_epoch"] = rep.best_epoch;
    report["dev_macro_f1"] = rep.best_macro_f1;
    report["dataset_size"] = dataset.size();
    report["epoch_train_loss"] = rep.epoch_train_loss;
    write_text(dir / "report.json", report.dump(2) + "\n");
    std::cout << "[train-depression] dev macro-F1 " << format_double(rep.best_macro_f1, 4)
              << " (best epoch " << rep.best_epoch << "/" << rep.epochs_run << ")\n";
}

void stage_evaluate(const PipelineConfig& cfg) {
    const fs::path dep_ckpt = fs::path(cfg.out_dir) / "depression" / "depression.manifest.json";
    require_artifact(dep_ckpt, "train-depression");
    const EmbIndex idx = read_emb_index(fs::path(cfg.out_dir) / "embeddings");

    DepressionCnn model(cfg.depression, derive_seed(cfg.seed, "init-depression"));
    model.load_state(load_checkpoint((fs::path(cfg.out_dir) / "depression" / "depression").string()));
    model.freeze();

    const fs::path emb_dir = fs::path(cfg.out_dir) / "embeddings";
    std::vector<i64> labels;
    std::vector<i64> preds;
    std::ostringstream lines;
    for (const auto& e : idx.speakers) {
        if (e.split != "dev") {
            continue;
        }
        const auto rows = read_f32_rows(emb_dir / e.file, e.count, idx.dim);
        auto pred = predict_speaker(model, rows, cfg.augment.c);
        pred.speaker_id = e.speaker_id;
        labels.push_back(e.label);
        preds.push_back(pred.label);
        json j;
        j["speaker_id"] = pred.speaker_id;
        j["window_probs"] = pred.window_probs;
        j["mean_prob"] = pred.mean_prob;
        j["label"] = pred.label;
        j["true_label"] = e.label;
        j["padded"] = pred.padded;
        lines << j.dump() << "\n";
    }
    if (labels.empty()) {
        throw config_error("evaluate: no dev speakers in the embeddings index");
    }

    const auto report = classification_report(preds, labels, 2);
    const fs::path dir = fs::path(cfg.out_dir) / "predictions";
    write_text(dir / "predictions.jsonl", lines.str());

    json rj;
    rj["n_speakers"] = labels.size();
    rj["window"] = cfg.depression.window;
    rj["depressed"] = {{"precision", report.per_class[1].precision},
                       {"recall", report.per_class[1].recall},
                       {"f1", report.per_class[1].f1},
                       {"support", report.per_class[1].support}};
    rj["control"] = {{"precision", report.per_class[0].precision},
                     {"recall", report.per_class[0].recall},
                     {"f1", report.per_class[0].f1},
                     {"support", report.per_class[0].support}};
    rj["macro_f1"] = report.macro_f1;
    rj["accuracy"] = report.accuracy();
    rj["confusion"] = report.confusion;
    write_text(dir / "report.json", rj.dump(2) + "\n");

    std::ostringstream table;
    table << "Method                     Precision  Recall   F1       Macro F1\n";
    table << std::left << std::setw(27) << ("depression-cnn (n=" + std::to_string(cfg.depression.window) + ")")
          << std::setw(11) << format_double(report.per_class[1].precision, 3)
          << std::setw(9) << format_double(report.per_class[1].recall, 3)
          << std::setw(9) << format_double(report.per_class[1].f1, 3)
          << format_double(report.macro_f1, 3) << "\n";
    write_text(dir / "report.txt", table.str());
    std::cout << "[evaluate] dev speakers " << labels.size() << ", depressed F1 "
              << format_double(report.per_class[1].f1, 4) << ", macro-F1 "
              << format_double(report.macro_f1, 4) << "\n";
}

void stage_correlate(const PipelineConfig& cfg) {
    const fs::path pred_file = fs::path(cfg.out_dir) / "predictions" / "predictions.jsonl";
    require_artifact(pred_file, "evaluate");
    const EmbIndex idx = read_emb_index(fs::path(cfg.out_dir) / "embeddings");
    const fs::path manifest_dir = corpus_manifest_path(cfg).parent_path();

    std::map<std::string, std::vector<double>> window_probs;
    {
        std::ifstream f(pred_file);
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) {
                continue;
            }
            const json j = json::parse(line);
            window_probs[j.at("speaker_id").get<std::string>()] =
                j.at("window_probs").get<std::vector<double>>();
        }
    }

    struct WindowTask {
        const EmbIndexEntry* spk;
        i64 window;
        i64 first_utt;
        i64 n_utts;  // may be short for the sole padded window
        double prob;
        AcousticDescriptors desc;
    };
    std::vector<WindowTask> tasks;
    const i64 n = cfg.augment.n;
    for (const auto& e : idx.speakers) {
        if (e.split != "dev") {
            continue;
        }
        const auto it = window_probs.find(e.speaker_id);
        if (it == window_probs.end()) {
            throw schema_error("predictions are missing dev speaker '" + e.speaker_id + "'");
        }
        const i64 n_windows = e.count / n;
        if (n_windows == 0) {
            tasks.push_back({&e, 0, 0, e.count, it->second.at(0), {}});
            continue;
        }
        for (i64 w = 0; w < n_windows; ++w) {
            tasks.push_back({&e, w, w * n, n, it->second.at(static_cast<std::size_t>(w)), {}});
        }
    }

    std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic)
    for (i64 t = 0; t < static_cast<i64>(tasks.size()); ++t) {
        try {
            auto& task = tasks[static_cast<std::size_t>(t)];
            std::vector<Waveform> wavs;
            std::vector<const Waveform*> ptrs;
            wavs.reserve(static_cast<std::size_t>(task.n_utts));
            for (i64 u = 0; u < task.n_utts; ++u) {
                const auto& rel = task.spk->audio.at(static_cast<std::size_t>(task.first_utt + u));
                wavs.push_back(read_wav((manifest_dir / rel).string(), cfg.synth.sample_rate));
            }
            for (const auto& w : wavs) {
                ptrs.push_back(&w);
            }
            task.desc = window_descriptors(ptrs);
        } catch (...) {
#pragma omp critical
            if (!first_error) {
                first_error = std::current_exception();
            }
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }

    const std::vector<std::string> names = {"speech_percent", "mean_f0", "std_f0",
                                            "jitter",         "shimmer", "loudness"};
    std::vector<std::vector<double>> columns(names.size());
    std::vector<double> probs;
    for (const auto& t : tasks) {
        columns[0].push_back(t.desc.speech_percent);
        columns[1].push_back(t.desc.mean_f0);
        columns[2].push_back(t.desc.std_f0);
        columns[3].push_back(t.desc.jitter);
        columns[4].push_back(t.desc.shimmer);
        columns[5].push_back(t.desc.loudness);
        probs.push_back(t.prob);
    }
    const auto rows = correlate_columns(names, columns, probs);

    const fs::path dir = fs::path(cfg.out_dir) / "correlation";
    json out = json::array();
    for (const auto& r : rows) {
        json j;
        j["descriptor"] = r.descriptor;
        j["r"] = r.r;
        j["p"] = r.p;
        j["n"] = r.n;
        j["significant"] = r.significant;
        j["undefined"] = r.undefined;
        out.push_back(std::move(j));
    }
    write_text(dir / "correlation.json", out.dump(2) + "\n");

    std::ostringstream table;
    table << "n   ";
    for (const auto& nm : names) {
        table << std::left << std::setw(16) << nm;
    }
    table << "\n" << std::left << std::setw(4) << cfg.augment.n;
    for (const auto& r : rows) {
        std::string cell = r.undefined ? "n/a" : format_double(r.r, 3) + (r.significant ? "*" : "");
        table << std::setw(16) << cell;
    }
    table << "\n\n* p < 0.05 (two-sided), N = " << probs.size() << " windows\n";
    write_text(dir / "correlation.txt", table.str());
    std::cout << "[correlate] " << probs.size() << " windows; ";
    for (const auto& r : rows) {
        std::cout << r.descriptor << " r=" << format_double(r.r, 3) << (r.significant ? "*" : "")
                  << " ";
    }
    std::cout << "\n";
}

void run_pipeline(const PipelineConfig& cfg) {
    validate_pipeline_config(cfg);
    stage_synth(cfg);
    stage_segment(cfg);
    stage_train_vowel(cfg);
    stage_embed(cfg);
    stage_augment(cfg);
    stage_train_depression(cfg);
    stage_evaluate(cfg);
    stage_correlate(cfg);
}

void run_stage(const std::string& stage, const PipelineConfig& cfg) {
    validate_pipeline_config(cfg);
    if (stage == "synth") {
        stage_synth(cfg);
    } else if (stage == "segment") {
        stage_segment(cfg);
    } else if (stage == "train-vowel") {
        stage_train_vowel(cfg);
    } else if (stage == "embed") {
        stage_embed(cfg);
    } else if (stage == "augment") {
        stage_augment(cfg);
    } else if (stage == "train-depression") {
        stage_train_depression(cfg);
    } else if (stage == "evaluate") {
        stage_evaluate(cfg);
    } else if (stage == "correlate") {
        stage_correlate(cfg);
    } else if (stage == "run") {
        run_pipeline(cfg);
        return;
    } else {
        throw config_error("unknown stage '" + stage + "'");
    }
}

EvaluationOutcome read_evaluation(const std::string& out_dir) {
    const fs::path pred_file = fs::path(out_dir) / "predictions" / "predictions.jsonl";
    require_artifact(pred_file, "evaluate");
    EvaluationOutcome out;
    std::ifstream f(pred_file);
    std::string line;
    std::vector<i64> preds;
    while (std::getline(f, line)) {
        if (line.empty()) {
            continue;
        }
        const json j = json::parse(line);
        SpeakerPrediction p;
        p.speaker_id = j.at("speaker_id").get<std::string>();
        p.window_probs = j.at("window_probs").get<std::vector<double>>();
        p.mean_prob = j.at("mean_prob").get<double>();
        p.label = j.at("label").get<int>();
        out.predictions.push_back(std::move(p));
        out.labels.push_back(j.at("true_label").get<i64>());
        preds.push_back(j.at("label").get<i64>());
    }
    const auto rep = classification_report(preds, out.labels, 2);
    out.macro_f1 = rep.macro_f1;
    out.depressed_f1 = rep.per_class[1].f1;
    return out;
}

}  // namespace sdd
