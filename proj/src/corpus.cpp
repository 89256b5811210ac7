#include "sdd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sdd/error.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace sdd {

VowelLabel map_phone(const std::string& phone) {
    std::string p;
    p.reserve(phone.size());
    for (char c : phone) {
        p.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (p == "a") return VowelLabel::A;
    if (p == "e") return VowelLabel::E;
    if (p == "i") return VowelLabel::I;
    if (p == "o") return VowelLabel::O;
    if (p == "u") return VowelLabel::U;
    return VowelLabel::None;
}

const char* vowel_name(VowelLabel v) {
    switch (v) {
        case VowelLabel::A: return "a";
        case VowelLabel::E: return "e";
        case VowelLabel::I: return "i";
        case VowelLabel::O: return "o";
        case VowelLabel::U: return "u";
        case VowelLabel::None: return "none";
    }
    return "?";
}

PhonemeAlignment parse_alignment(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw io_error("cannot read alignment file " + path);
    }
    PhonemeAlignment ali;
    std::string line;
    i64 line_no = 0;
    i64 prev_end = -1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::istringstream is(line);
        double start_ms = 0.0;
        double end_ms = 0.0;
        std::string phone;
        if (!(is >> start_ms >> end_ms >> phone)) {
            throw schema_error(path + ":" + std::to_string(line_no) + ": expected 'start_ms end_ms phone'");
        }
        PhoneInterval iv;
        iv.start_us = static_cast<i64>(std::llround(start_ms * 1000.0));
        iv.end_us = static_cast<i64>(std::llround(end_ms * 1000.0));
        iv.phone = phone;
        if (iv.start_us < 0 || iv.end_us <= iv.start_us) {
            throw schema_error(path + ":" + std::to_string(line_no) + ": bad interval " +
                               std::to_string(start_ms) + ".." + std::to_string(end_ms));
        }
        if (iv.start_us < prev_end) {
            throw schema_error(path + ":" + std::to_string(line_no) +
                               ": intervals overlap or are unsorted");
        }
        prev_end = iv.end_us;
        ali.intervals.push_back(std::move(iv));
    }
    return ali;
}

std::vector<SpeakerRecord> load_corpus(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) {
        throw io_error("cannot read corpus manifest " + manifest_path);
    }
    const fs::path base = fs::path(manifest_path).parent_path();

    std::vector<SpeakerRecord> records;
    std::set<std::string> seen;
    std::string line;
    i64 line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const std::string ctx = manifest_path + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw schema_error(ctx + ": bad JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("speaker_id") || !j.contains("audio") ||
            !j.contains("alignments") || !j.contains("phq8")) {
            throw schema_error(ctx + ": record needs speaker_id, audio, alignments, phq8");
        }
        SpeakerRecord rec;
        rec.speaker_id = j["speaker_id"].get<std::string>();
        if (!seen.insert(rec.speaker_id).second) {
            throw schema_error(ctx + ": duplicate speaker '" + rec.speaker_id + "'");
        }
        rec.phq8 = j["phq8"].get<int>();
        if (rec.phq8 < 0) {
            throw schema_error(ctx + ": phq8 must be >= 0");
        }
        rec.label = rec.phq8 >= 10 ? 1 : 0;
        if (j.contains("label") && j["label"].get<int>() != rec.label) {
            throw schema_error(ctx + ": label " + std::to_string(j["label"].get<int>()) +
                               " inconsistent with phq8 " + std::to_string(rec.phq8));
        }
        const auto& audio = j["audio"];
        const auto& alis = j["alignments"];
        if (!audio.is_array() || !alis.is_array() || audio.size() != alis.size() || audio.empty()) {
            throw schema_error(ctx + ": audio and alignments must be equal-length non-empty arrays");
        }
        for (std::size_t u = 0; u < audio.size(); ++u) {
            Utterance utt;
            utt.speaker_id = rec.speaker_id;
            utt.audio_path = (base / audio[u].get<std::string>()).string();
            const std::string ali_path = (base / alis[u].get<std::string>()).string();
            WavInfo info;
            try {
                info = wav_info(utt.audio_path);
            } catch (const std::runtime_error& e) {
                throw io_error(ctx + ": utterance " + std::to_string(u) + ": " + e.what());
            }
            utt.duration_us = info.n_samples * 1000000 / info.sample_rate;
            try {
                utt.alignment = parse_alignment(ali_path);
            } catch (const io_error& e) {
                throw io_error(ctx + ": utterance " + std::to_string(u) + ": " + e.what());
            }
            for (const auto& iv : utt.alignment.intervals) {
                if (iv.end_us > utt.duration_us) {
                    throw schema_error(ctx + ": utterance " + std::to_string(u) + ": interval " +
                                       iv.phone + " ends at " + std::to_string(iv.end_us / 1000.0) +
                                       " ms beyond audio duration " +
                                       std::to_string(utt.duration_us / 1000.0) + " ms");
                }
            }
            rec.utterances.push_back(std::move(utt));
        }
        records.push_back(std::move(rec));
    }
    std::sort(records.begin(), records.end(),
              [](const SpeakerRecord& a, const SpeakerRecord& b) { return a.speaker_id < b.speaker_id; });
    return records;
}

}  // namespace sdd
