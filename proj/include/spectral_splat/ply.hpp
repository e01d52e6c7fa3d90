#pragma once

// Binary little-endian PLY interchange in the common Gaussian-splat point
// cloud layout: per-vertex float32 properties x, y, z, f_dc_0..2 (RGB),
// opacity (inverse-sigmoid domain), scale_0..2 (log domain), rot_0..3
// (quaternion, w first). Unknown float properties are preserved verbatim so a
// load/save pass is lossless for foreign files; parameters are stored in raw
// optimization domain, matching the in-memory representation.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/scene.hpp"

namespace sgs {

namespace detail {

inline const std::vector<std::string>& ply_canonical_properties() {
    static const std::vector<std::string> props = {
        "x",       "y",       "z",       "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
        "scale_0", "scale_1", "scale_2", "rot_0",  "rot_1",  "rot_2",  "rot_3",
    };
    return props;
}

inline float read_f32_le(const unsigned char* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                               (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

inline void write_f32_le(std::string& out, float v) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

} // namespace detail

// A foreign per-vertex float property carried through load/save unchanged.
struct PlyExtraProperty {
    std::string name;
    std::vector<float> values; // one per vertex
};

struct PlyContents {
    Scene scene;
    std::vector<PlyExtraProperty> extras; // in file order
    std::vector<std::string> warnings;
};

inline PlyContents load_ply_stream(std::istream& in, const std::string& origin) {
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    // --- header ---
    const std::string end_marker = "end_header\n";
    const std::size_t end_pos = data.find(end_marker);
    if (end_pos == std::string::npos)
        throw MalformedHeaderError(origin + ": missing end_header");
    const std::size_t payload_offset = end_pos + end_marker.size();

    std::istringstream header(data.substr(0, end_pos));
    std::string line;
    int line_no = 0;
    long vertex_count = -1;
    std::vector<std::string> property_names;
    bool in_vertex_element = false;

    const auto fail = [&](const std::string& what) -> MalformedHeaderError {
        return MalformedHeaderError(origin + ": line " + std::to_string(line_no) + ": " + what);
    };

    while (std::getline(header, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream tok(line);
        std::string word;
        tok >> word;
        if (line_no == 1) {
            if (word != "ply") throw fail("expected 'ply' magic, got '" + line + "'");
            continue;
        }
        if (word == "format") {
            std::string encoding, version;
            tok >> encoding >> version;
            if (encoding == "ascii")
                throw UnsupportedEncodingError(origin + ": ascii encoding is not supported, "
                                                        "expected binary_little_endian");
            if (encoding == "binary_big_endian")
                throw UnsupportedEncodingError(origin +
                                               ": big-endian encoding is not supported");
            if (encoding != "binary_little_endian")
                throw fail("unknown format encoding '" + encoding + "'");
        } else if (word == "comment" || word == "obj_info") {
            continue;
        } else if (word == "element") {
            std::string kind;
            long count = 0;
            tok >> kind >> count;
            if (kind == "vertex") {
                if (vertex_count >= 0) throw fail("duplicate vertex element");
                if (count < 0) throw fail("negative vertex count");
                vertex_count = count;
                in_vertex_element = true;
            } else {
                // Only the vertex element is modeled; a second element would
                // change the payload layout.
                throw fail("unsupported element '" + kind + "'");
            }
        } else if (word == "property") {
            std::string type, name;
            tok >> type >> name;
            if (!in_vertex_element) throw fail("property outside of vertex element");
            if (type == "list") throw fail("list properties are not supported");
            if (type != "float" && type != "float32")
                throw fail("property '" + name + "' has unsupported type '" + type +
                           "', expected float");
            if (name.empty()) throw fail("property without a name");
            property_names.push_back(name);
        } else if (word == "end_header" || word.empty()) {
            continue;
        } else {
            throw fail("unrecognized header line '" + line + "'");
        }
    }
    if (vertex_count < 0) throw MalformedHeaderError(origin + ": missing vertex element");

    // Canonical slots: column index per canonical property, -1 when absent.
    const auto& canonical = detail::ply_canonical_properties();
    std::vector<int> slot(canonical.size(), -1);
    std::vector<bool> is_canonical(property_names.size(), false);
    for (std::size_t c = 0; c < canonical.size(); ++c) {
        for (std::size_t p = 0; p < property_names.size(); ++p) {
            if (property_names[p] == canonical[c]) {
                slot[c] = static_cast<int>(p);
                is_canonical[p] = true;
                break;
            }
        }
        if (slot[c] < 0)
            throw MalformedHeaderError(origin + ": missing required property '" + canonical[c] +
                                       "'");
    }

    PlyContents out;
    for (std::size_t p = 0; p < property_names.size(); ++p) {
        if (!is_canonical[p]) {
            out.warnings.push_back("unknown property '" + property_names[p] +
                                   "' preserved but otherwise ignored");
        }
    }

    // --- payload ---
    const std::size_t stride = property_names.size() * 4;
    const std::size_t need = static_cast<std::size_t>(vertex_count) * stride;
    const std::size_t have = data.size() - payload_offset;
    if (have < need) {
        throw TruncatedPayloadError(origin + ": payload truncated at byte offset " +
                                    std::to_string(data.size()) + ", expected " +
                                    std::to_string(payload_offset + need) + " bytes for " +
                                    std::to_string(vertex_count) + " vertices");
    }

    std::vector<PlyExtraProperty> extras;
    std::vector<int> extra_slot(property_names.size(), -1);
    for (std::size_t p = 0; p < property_names.size(); ++p) {
        if (!is_canonical[p]) {
            extra_slot[p] = static_cast<int>(extras.size());
            extras.push_back({property_names[p], {}});
            extras.back().values.reserve(static_cast<std::size_t>(vertex_count));
        }
    }

    const unsigned char* base =
        reinterpret_cast<const unsigned char*>(data.data()) + payload_offset;
    out.scene.reserve(static_cast<std::size_t>(vertex_count));
    std::vector<float> row(property_names.size());
    for (long v = 0; v < vertex_count; ++v) {
        const unsigned char* rec = base + static_cast<std::size_t>(v) * stride;
        for (std::size_t p = 0; p < property_names.size(); ++p) {
            row[p] = detail::read_f32_le(rec + p * 4);
            if (extra_slot[p] >= 0)
                extras[static_cast<std::size_t>(extra_slot[p])].values.push_back(row[p]);
        }
        Gaussian3D g;
        g.position = {row[static_cast<std::size_t>(slot[0])],
                      row[static_cast<std::size_t>(slot[1])],
                      row[static_cast<std::size_t>(slot[2])]};
        g.color = {row[static_cast<std::size_t>(slot[3])],
                   row[static_cast<std::size_t>(slot[4])],
                   row[static_cast<std::size_t>(slot[5])]};
        g.opacity_logit = row[static_cast<std::size_t>(slot[6])];
        g.log_scales = {row[static_cast<std::size_t>(slot[7])],
                        row[static_cast<std::size_t>(slot[8])],
                        row[static_cast<std::size_t>(slot[9])]};
        g.rotation = {row[static_cast<std::size_t>(slot[10])],
                      row[static_cast<std::size_t>(slot[11])],
                      row[static_cast<std::size_t>(slot[12])],
                      row[static_cast<std::size_t>(slot[13])]};
        out.scene.push_back(g);
    }
    out.extras = std::move(extras);
    return out;
}

inline PlyContents load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_ply: cannot open '" + path + "'");
    return load_ply_stream(in, path);
}

inline std::string serialize_ply(const Scene& scene,
                                 const std::vector<PlyExtraProperty>& extras = {}) {
    for (const PlyExtraProperty& ex : extras) {
        if (ex.values.size() != scene.size())
            throw ShapeMismatchError("serialize_ply: extra property '" + ex.name + "' has " +
                                     std::to_string(ex.values.size()) + " values for " +
                                     std::to_string(scene.size()) + " vertices");
    }
    std::string out;
    out += "ply\n";
    out += "format binary_little_endian 1.0\n";
    out += "element vertex " + std::to_string(scene.size()) + "\n";
    for (const std::string& name : detail::ply_canonical_properties()) {
        out += "property float " + name + "\n";
    }
    for (const PlyExtraProperty& ex : extras) {
        out += "property float " + ex.name + "\n";
    }
    out += "end_header\n";
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian3D& g = scene[i];
        detail::write_f32_le(out, static_cast<float>(g.position.x));
        detail::write_f32_le(out, static_cast<float>(g.position.y));
        detail::write_f32_le(out, static_cast<float>(g.position.z));
        detail::write_f32_le(out, static_cast<float>(g.color.x));
        detail::write_f32_le(out, static_cast<float>(g.color.y));
        detail::write_f32_le(out, static_cast<float>(g.color.z));
        detail::write_f32_le(out, static_cast<float>(g.opacity_logit));
        detail::write_f32_le(out, static_cast<float>(g.log_scales.x));
        detail::write_f32_le(out, static_cast<float>(g.log_scales.y));
        detail::write_f32_le(out, static_cast<float>(g.log_scales.z));
        detail::write_f32_le(out, static_cast<float>(g.rotation.w));
        detail::write_f32_le(out, static_cast<float>(g.rotation.x));
        detail::write_f32_le(out, static_cast<float>(g.rotation.y));
        detail::write_f32_le(out, static_cast<float>(g.rotation.z));
        for (const PlyExtraProperty& ex : extras) {
            detail::write_f32_le(out, ex.values[i]);
        }
    }
    return out;
}

// Writes via a temp file in the destination directory plus an atomic rename,
// so readers never observe a partial file.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("write_file_atomic: cannot open '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write_file_atomic: short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("write_file_atomic: rename to '" + path + "' failed: " + ec.message());
    }
}

inline void save_ply(const std::string& path, const Scene& scene,
                     const std::vector<PlyExtraProperty>& extras = {}) {
    write_file_atomic(path, serialize_ply(scene, extras));
}

// Rounds every stored parameter to its float32 representation, making a
// subsequent save/load round trip bit-exact.
inline void quantize_to_float32(Scene& scene) {
    // The volatile forces each narrowing through a real float store; without
    // it the vectorizer (gcc 11, -O3) drops the narrowing on tail elements.
    const auto q = [](double v) {
        volatile float f = static_cast<float>(v);
        return static_cast<double>(f);
    };
    for (Gaussian3D& g : scene) {
        g.position = {q(g.position.x), q(g.position.y), q(g.position.z)};
        g.color = {q(g.color.x), q(g.color.y), q(g.color.z)};
        g.opacity_logit = q(g.opacity_logit);
        g.log_scales = {q(g.log_scales.x), q(g.log_scales.y), q(g.log_scales.z)};
        g.rotation = {q(g.rotation.w), q(g.rotation.x), q(g.rotation.y), q(g.rotation.z)};
    }
}

} // namespace sgs
