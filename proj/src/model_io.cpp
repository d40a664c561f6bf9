#include "fineprune/model_io.hpp"

#include "fineprune/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>

namespace fineprune {

using nlohmann::json;

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

json spec_to_json(const LayerSpec& s) {
    json j{{"kind", to_string(s.kind)}};
    if (s.kind == LayerKind::dense) {
        j["in_features"] = s.in_features;
        j["out_features"] = s.out_features;
    } else if (s.kind == LayerKind::conv2d) {
        j["in_channels"] = s.in_channels;
        j["out_channels"] = s.out_channels;
        j["kernel_h"] = s.kernel_h;
        j["kernel_w"] = s.kernel_w;
        j["stride"] = s.stride;
        j["padding"] = s.padding;
    }
    return j;
}

LayerSpec spec_from_json(const json& j) {
    LayerSpec s{layer_kind_from_string(j.at("kind").get<std::string>())};
    if (s.kind == LayerKind::dense) {
        s.in_features = j.at("in_features").get<std::size_t>();
        s.out_features = j.at("out_features").get<std::size_t>();
    } else if (s.kind == LayerKind::conv2d) {
        s.in_channels = j.at("in_channels").get<std::size_t>();
        s.out_channels = j.at("out_channels").get<std::size_t>();
        s.kernel_h = j.at("kernel_h").get<std::size_t>();
        s.kernel_w = j.at("kernel_w").get<std::size_t>();
        s.stride = j.at("stride").get<std::size_t>();
        s.padding = j.at("padding").get<std::size_t>();
    }
    return s;
}

struct TensorEntry {
    std::size_t layer;
    std::string name;
    std::uint64_t offset;
    std::uint64_t bytes;
};

} // namespace

std::vector<std::uint8_t> serialize_model(const Network& net) {
    json layers = json::array();
    json tensors = json::array();
    json mask = json::array();
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Layer& layer = net.layer(i);
        layers.push_back(spec_to_json(layer.spec));
        json keep = json::array();
        for (std::size_t u = 0; u < layer.spec.unit_count(); ++u) keep.push_back(net.mask().keeps(i, u) ? 1 : 0);
        mask.push_back(std::move(keep));
        if (!layer.spec.has_parameters()) continue;
        for (const auto& [name, t] : {std::pair<const char*, const Tensor*>{"weight", &layer.weight},
                                      std::pair<const char*, const Tensor*>{"bias", &layer.bias}}) {
            const std::uint64_t bytes = t->size() * sizeof(float);
            tensors.push_back({{"layer", i}, {"name", name}, {"shape", t->shape().extents()},
                               {"offset", offset}, {"bytes", bytes}});
            offset += bytes;
        }
    }
    const json manifest{{"format_version", kModelFormatVersion},
                        {"input_shape", net.input_shape().extents()},
                        {"seed", net.seed()},
                        {"classifier_prunable", net.classifier_prunable()},
                        {"layers", layers},
                        {"mask", mask},
                        {"tensors", tensors},
                        {"blob_bytes", offset}};
    const std::string text = manifest.dump(2);

    std::vector<std::uint8_t> out;
    out.reserve(8 + text.size() + offset);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const Layer& layer : net.layers()) {
        if (!layer.spec.has_parameters()) continue;
        for (float v : layer.weight.data()) put_f32(out, v);
        for (float v : layer.bias.data()) put_f32(out, v);
    }
    return out;
}

Network deserialize_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8) fail(ErrorCode::truncated_blob, "model file shorter than its length prefix");
    const std::uint64_t manifest_len = get_u64(bytes.data());
    if (manifest_len > bytes.size() - 8)
        fail(ErrorCode::truncated_blob, "manifest length " + std::to_string(manifest_len) +
                                            " exceeds file size " + std::to_string(bytes.size()));
    json manifest;
    try {
        manifest = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(manifest_len));
    } catch (const json::exception& e) {
        fail(ErrorCode::parse, std::string("model manifest: ") + e.what());
    }

    try {
        const int version = manifest.at("format_version").get<int>();
        if (version != kModelFormatVersion)
            fail(ErrorCode::version_mismatch, "model format version " + std::to_string(version) +
                                                  ", supported " + std::to_string(kModelFormatVersion));

        std::vector<LayerSpec> specs;
        for (const json& j : manifest.at("layers")) specs.push_back(spec_from_json(j));
        Network net(Shape(manifest.at("input_shape").get<std::vector<std::size_t>>()), std::move(specs));
        net.set_seed(manifest.at("seed").get<std::uint64_t>());
        net.set_classifier_prunable(manifest.at("classifier_prunable").get<bool>());

        const std::uint64_t blob_bytes = manifest.at("blob_bytes").get<std::uint64_t>();
        const std::uint64_t available = bytes.size() - 8 - manifest_len;
        if (available != blob_bytes)
            fail(ErrorCode::truncated_blob, "blob holds " + std::to_string(available) + " bytes, manifest declares " +
                                                std::to_string(blob_bytes));

        std::vector<TensorEntry> entries;
        for (const json& j : manifest.at("tensors"))
            entries.push_back({j.at("layer").get<std::size_t>(), j.at("name").get<std::string>(),
                               j.at("offset").get<std::uint64_t>(), j.at("bytes").get<std::uint64_t>()});

        // The index must tile [0, blob_bytes) exactly.
        std::vector<TensorEntry> by_offset = entries;
        std::sort(by_offset.begin(), by_offset.end(),
                  [](const TensorEntry& a, const TensorEntry& b) { return a.offset < b.offset; });
        std::uint64_t cursor = 0;
        for (const TensorEntry& e : by_offset) {
            if (e.offset != cursor)
                fail(ErrorCode::offset_overlap, "tensor " + e.name + " of layer " + std::to_string(e.layer) +
                                                    " starts at " + std::to_string(e.offset) + ", expected " +
                                                    std::to_string(cursor));
            cursor += e.bytes;
        }
        if (cursor != blob_bytes)
            fail(ErrorCode::offset_overlap, "tensor index covers " + std::to_string(cursor) + " of " +
                                                std::to_string(blob_bytes) + " blob bytes");

        const std::uint8_t* blob = bytes.data() + 8 + manifest_len;
        std::vector<std::uint8_t> seen(net.layer_count() * 2, 0);
        for (const TensorEntry& e : entries) {
            if (e.layer >= net.layer_count() || !net.layer(e.layer).spec.has_parameters())
                fail(ErrorCode::structure_mismatch, "tensor index names layer " + std::to_string(e.layer) +
                                                        " which has no parameters");
            Layer& layer = net.mutable_layer(e.layer);
            const bool is_weight = e.name == "weight";
            if (!is_weight && e.name != "bias") fail(ErrorCode::parse, "unknown tensor name " + e.name);
            Tensor& t = is_weight ? layer.weight : layer.bias;
            if (e.bytes != t.size() * sizeof(float))
                fail(ErrorCode::structure_mismatch, "tensor " + e.name + " of layer " + std::to_string(e.layer) +
                                                        " has " + std::to_string(e.bytes) + " bytes, shape needs " +
                                                        std::to_string(t.size() * sizeof(float)));
            for (std::size_t k = 0; k < t.size(); ++k) t[k] = get_f32(blob + e.offset + 4 * k);
            seen[2 * e.layer + (is_weight ? 0 : 1)] = 1;
        }
        for (std::size_t i = 0; i < net.layer_count(); ++i)
            if (net.layer(i).spec.has_parameters() && !(seen[2 * i] && seen[2 * i + 1]))
                fail(ErrorCode::structure_mismatch, "tensor index misses layer " + std::to_string(i));

        const json& mask_json = manifest.at("mask");
        if (mask_json.size() != net.layer_count())
            fail(ErrorCode::structure_mismatch, "mask covers " + std::to_string(mask_json.size()) + " layers");
        PruneMask mask(net.unit_counts());
        for (std::size_t i = 0; i < net.layer_count(); ++i) {
            if (mask_json[i].size() != net.layer(i).spec.unit_count())
                fail(ErrorCode::structure_mismatch, "mask size differs at layer " + std::to_string(i));
            for (std::size_t u = 0; u < mask_json[i].size(); ++u)
                if (mask_json[i][u].get<int>() == 0) mask.drop(i, u);
        }
        net.set_mask(std::move(mask));
        return net;
    } catch (const json::exception& e) {
        fail(ErrorCode::parse, std::string("model manifest: ") + e.what());
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorCode::io, "read failed for " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

void save_model(const Network& net, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_model(net));
}

Network load_model(const std::filesystem::path& path) { return deserialize_model(read_file_bytes(path)); }

} // namespace fineprune
