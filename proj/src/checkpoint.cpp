#include "sdd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "sdd/error.hpp"

namespace sdd {

using json = nlohmann::ordered_json;

namespace {

void put_f32_le(std::vector<unsigned char>& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    out.push_back(static_cast<unsigned char>(bits & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
}

float get_f32_le(const unsigned char* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                               (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

void save_checkpoint(const ModelParameters& params, const CheckpointMeta& meta,
                     const std::string& prefix) {
    json manifest;
    manifest["format"] = "sdd-checkpoint";
    manifest["version"] = 1;
    manifest["model"] = meta.model;
    manifest["seed"] = meta.seed;
    manifest["hyperparameters"] = meta.hyperparameters;
    json plist = json::array();
    std::vector<unsigned char> blob;
    blob.reserve(static_cast<std::size_t>(params.total_size()) * 4);
    for (const auto& name : params.names()) {
        const auto& t = params.get(name);
        json p;
        p["name"] = name;
        p["shape"] = t->shape;
        plist.push_back(std::move(p));
        for (double v : t->data) {
            put_f32_le(blob, static_cast<float>(v));
        }
    }
    manifest["parameters"] = std::move(plist);

    std::ofstream mf(prefix + ".manifest.json", std::ios::binary);
    if (!mf) {
        throw io_error("cannot write " + prefix + ".manifest.json");
    }
    mf << manifest.dump(2) << "\n";
    mf.close();

    std::ofstream wf(prefix + ".weights.bin", std::ios::binary);
    if (!wf) {
        throw io_error("cannot write " + prefix + ".weights.bin");
    }
    wf.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!wf) {
        throw io_error("short write to " + prefix + ".weights.bin");
    }
}

ModelParameters load_checkpoint(const std::string& prefix, CheckpointMeta* meta) {
    std::ifstream mf(prefix + ".manifest.json", std::ios::binary);
    if (!mf) {
        throw io_error("cannot read " + prefix + ".manifest.json");
    }
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw schema_error("corrupt manifest " + prefix + ".manifest.json: " + e.what());
    }
    if (!manifest.is_object() || manifest.value("format", "") != "sdd-checkpoint" ||
        !manifest.contains("parameters") || !manifest["parameters"].is_array()) {
        throw schema_error("corrupt manifest " + prefix + ".manifest.json: bad structure");
    }
    if (meta) {
        meta->model = manifest.value("model", "");
        meta->seed = manifest.value("seed", std::uint64_t{0});
        meta->hyperparameters.clear();
        if (manifest.contains("hyperparameters")) {
            for (auto& [k, v] : manifest["hyperparameters"].items()) {
                meta->hyperparameters[k] = v.get<double>();
            }
        }
    }

    std::ifstream wf(prefix + ".weights.bin", std::ios::binary);
    if (!wf) {
        throw io_error("cannot read " + prefix + ".weights.bin");
    }
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(wf)),
                                    std::istreambuf_iterator<char>());

    ModelParameters params;
    std::size_t off = 0;
    for (const auto& p : manifest["parameters"]) {
        if (!p.contains("name") || !p.contains("shape")) {
            throw schema_error("manifest parameter entry missing name/shape");
        }
        const std::string name = p["name"].get<std::string>();
        std::vector<i64> shape = p["shape"].get<std::vector<i64>>();
        const i64 n = shape_product(shape);
        if (off + static_cast<std::size_t>(n) * 4 > blob.size()) {
            throw size_error("weights blob too short for parameter '" + name + "': need " +
                             std::to_string(n * 4) + " bytes at offset " + std::to_string(off) +
                             ", file has " + std::to_string(blob.size()));
        }
        std::vector<double> data(static_cast<std::size_t>(n));
        for (i64 i = 0; i < n; ++i) {
            data[static_cast<std::size_t>(i)] =
                static_cast<double>(get_f32_le(blob.data() + off + static_cast<std::size_t>(i) * 4));
        }
        off += static_cast<std::size_t>(n) * 4;
        params.add(name, make_tensor(std::move(shape), std::move(data)));
    }
    if (off != blob.size()) {
        throw size_error("weights blob has " + std::to_string(blob.size() - off) +
                         " trailing bytes beyond the manifest's parameters");
    }
    return params;
}

}  // namespace sdd
