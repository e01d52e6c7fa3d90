#pragma once

// Camera serialization. A camera file is a JSON array of objects:
//   {"id": 0, "width": 256, "height": 256, "fx": ..., "fy": ...,
//    "cx": ..., "cy": ..., "world_to_camera": [16 row-major floats],
//    "image_path": "views/cam0.png"}          // image_path optional
// world_to_camera is the rigid transform [R | t; 0 0 0 1]; the rotation block
// must be orthonormal to within 1e-6.

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/ply.hpp"
#include "spectral_splat/scene.hpp"

namespace sgs {

struct CameraRecord {
    int id = 0;
    CameraView view;
    std::string image_path; // empty when absent
};

namespace detail {

inline void check_rotation_orthonormal(const Mat3& r, const std::string& origin, int id) {
    const Mat3 rrt = r * r.transposed();
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double want = i == j ? 1.0 : 0.0;
            worst = std::max(worst, std::abs(rrt.m[i][j] - want));
        }
    }
    if (worst > 1e-6) {
        throw DomainError(origin + ": camera id " + std::to_string(id) +
                          ": rotation block is not orthonormal (max deviation " +
                          std::to_string(worst) + ")");
    }
}

} // namespace detail

inline std::vector<CameraRecord> parse_cameras_json(const std::string& text,
                                                    const std::string& origin) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(origin + ": invalid JSON: " + e.what());
    }
    if (!doc.is_array()) throw IoError(origin + ": expected a top-level JSON array of cameras");

    std::vector<CameraRecord> out;
    for (std::size_t idx = 0; idx < doc.size(); ++idx) {
        const nlohmann::json& c = doc[idx];
        const std::string where = origin + ": camera[" + std::to_string(idx) + "]";
        if (!c.is_object()) throw IoError(where + ": expected an object");
        const auto need = [&](const char* key) -> const nlohmann::json& {
            if (!c.contains(key))
                throw IoError(where + ": missing required key '" + std::string(key) + "'");
            return c.at(key);
        };
        CameraRecord rec;
        try {
            rec.id = need("id").get<int>();
            rec.view.width = need("width").get<int>();
            rec.view.height = need("height").get<int>();
            rec.view.fx = need("fx").get<double>();
            rec.view.fy = need("fy").get<double>();
            rec.view.cx = need("cx").get<double>();
            rec.view.cy = need("cy").get<double>();
            const nlohmann::json& m = need("world_to_camera");
            if (!m.is_array() || m.size() != 16)
                throw IoError(where + ": world_to_camera must be 16 row-major numbers");
            std::array<double, 16> w2c{};
            for (std::size_t k = 0; k < 16; ++k) w2c[k] = m[k].get<double>();
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) {
                    rec.view.rot.m[i][j] = w2c[static_cast<std::size_t>(4 * i + j)];
                }
            }
            rec.view.trans = {w2c[3], w2c[7], w2c[11]};
            if (c.contains("image_path")) rec.image_path = c.at("image_path").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw IoError(where + ": " + e.what());
        }
        if (rec.view.width <= 0 || rec.view.height <= 0)
            throw IoError(where + ": width/height must be positive");
        if (rec.view.fx <= 0.0 || rec.view.fy <= 0.0)
            throw IoError(where + ": fx/fy must be positive");
        detail::check_rotation_orthonormal(rec.view.rot, origin, rec.id);
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<CameraRecord> load_cameras(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_cameras: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_cameras_json(text, path);
}

inline std::string serialize_cameras(const std::vector<CameraRecord>& cameras) {
    nlohmann::json doc = nlohmann::json::array();
    for (const CameraRecord& rec : cameras) {
        nlohmann::json c;
        c["id"] = rec.id;
        c["width"] = rec.view.width;
        c["height"] = rec.view.height;
        c["fx"] = rec.view.fx;
        c["fy"] = rec.view.fy;
        c["cx"] = rec.view.cx;
        c["cy"] = rec.view.cy;
        nlohmann::json m = nlohmann::json::array();
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) m.push_back(rec.view.rot.m[i][j]);
            m.push_back(i == 0 ? rec.view.trans.x : (i == 1 ? rec.view.trans.y : rec.view.trans.z));
        }
        for (double v : {0.0, 0.0, 0.0, 1.0}) m.push_back(v);
        c["world_to_camera"] = std::move(m);
        if (!rec.image_path.empty()) c["image_path"] = rec.image_path;
        doc.push_back(std::move(c));
    }
    return doc.dump(2) + "\n";
}

inline void save_cameras(const std::string& path, const std::vector<CameraRecord>& cameras) {
    write_file_atomic(path, serialize_cameras(cameras));
}

} // namespace sgs
