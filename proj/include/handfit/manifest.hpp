#pragma once

// Dataset manifests: a JSON index of sequences, their frame images, keypoint
// files and cameras, plus the keypoint file format itself. Loaders resolve
// paths against the manifest location, verify referenced files exist, and
// collect non-fatal issues as warnings.

#include <handfit/camera.hpp>
#include <handfit/losses.hpp>
#include <handfit/model_io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace handfit {

inline constexpr const char* kManifestSchema = "handfit.manifest.v1";

struct FrameEntry {
    int index = 0;
    std::string image;      // resolved path after load
    std::string keypoints;  // resolved path after load
    CameraModel camera;
    std::string gt;  // optional ground-truth file, empty when absent
};

struct SequenceEntry {
    std::string id;
    std::vector<FrameEntry> frames;
};

struct Manifest {
    std::string root;
    std::vector<SequenceEntry> sequences;
};

inline nlohmann::json camera_to_json(const CameraModel& cam) {
    nlohmann::json j;
    j["mode"] = cam.mode == CameraMode::perspective ? "perspective" : "orthogonal";
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["scale"] = cam.scale;
    j["width"] = cam.width;
    j["height"] = cam.height;
    return j;
}

inline CameraModel camera_from_json(const nlohmann::json& j) {
    CameraModel cam;
    if (j.contains("mode")) {
        std::string m = j["mode"].get<std::string>();
        if (m == "perspective") cam.mode = CameraMode::perspective;
        else if (m == "orthogonal") cam.mode = CameraMode::orthogonal;
        else throw io_error("camera: unknown mode " + m);
    }
    auto get = [&](const char* key, double& slot) {
        if (j.contains(key)) slot = j[key].get<double>();
    };
    get("fx", cam.fx);
    get("fy", cam.fy);
    get("cx", cam.cx);
    get("cy", cam.cy);
    get("scale", cam.scale);
    if (j.contains("width")) cam.width = j["width"].get<int>();
    if (j.contains("height")) cam.height = j["height"].get<int>();
    cam.validate();
    return cam;
}

// 21 [u_px, v_px, conf] triples; coordinates are divided by the image size,
// confidences clamped into [0,1] with a warning
inline Keypoints2D load_keypoints(const std::string& path, int width, int height,
                                  std::vector<std::string>* warnings = nullptr) {
    nlohmann::json j = detail::load_json_file(path);
    if (!j.is_array() || j.size() != 21)
        throw io_error("keypoints file " + path + ": expected 21 entries");
    if (width < 1 || height < 1)
        throw io_error("keypoints file " + path + ": image size unavailable");
    Keypoints2D out;
    out.points.resize(21, 2);
    out.conf.resize(21);
    for (int i = 0; i < 21; ++i) {
        const nlohmann::json& row = j[std::size_t(i)];
        if (!row.is_array() || row.size() != 3)
            throw io_error("keypoints file " + path + ": entry " + std::to_string(i) +
                           " is not a [u, v, conf] triple");
        double u, v, c;
        try {
            u = row[0].get<double>();
            v = row[1].get<double>();
            c = row[2].get<double>();
        } catch (const nlohmann::json::exception&) {
            throw io_error("keypoints file " + path + ": entry " + std::to_string(i) +
                           " is not numeric");
        }
        if (!std::isfinite(u) || !std::isfinite(v) || !std::isfinite(c))
            throw io_error("keypoints file " + path + ": non-finite value in entry " +
                           std::to_string(i));
        out.points(i, 0) = u / width;
        out.points(i, 1) = v / height;
        double cc = std::min(1.0, std::max(0.0, c));
        if (cc != c && warnings)
            warnings->push_back("keypoints file " + path + ": confidence " + std::to_string(c) +
                                " clamped to [0,1]");
        out.conf[i] = cc;
    }
    out.validate();
    return out;
}

inline void save_keypoints(const std::string& path, const Keypoints2D& kp, int width, int height) {
    kp.validate();
    nlohmann::json j = nlohmann::json::array();
    for (int i = 0; i < 21; ++i)
        j.push_back({kp.points(i, 0) * width, kp.points(i, 1) * height, kp.conf[i]});
    detail::write_json_file(path, j);
}

inline Manifest load_manifest(const std::string& path,
                              std::vector<std::string>* warnings = nullptr) {
    nlohmann::json j = detail::load_json_file(path);
    if (!j.contains("schema") || j["schema"] != kManifestSchema)
        throw io_error("manifest " + path + ": unexpected schema");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "schema" && key != "root" && key != "sequences" && warnings)
            warnings->push_back("manifest " + path + ": unknown field \"" + key + "\" ignored");
    }

    std::filesystem::path base = std::filesystem::path(path).parent_path();
    if (j.contains("root")) base /= j["root"].get<std::string>();

    Manifest out;
    out.root = base.string();
    if (!j.contains("sequences") || !j["sequences"].is_array())
        throw io_error("manifest " + path + ": missing sequences array");
    try {
        for (const nlohmann::json& js : j["sequences"]) {
            SequenceEntry seq;
            seq.id = js.at("id").get<std::string>();
            int last_index = std::numeric_limits<int>::min();
            for (const nlohmann::json& jf : js.at("frames")) {
                FrameEntry fr;
                fr.index = jf.at("index").get<int>();
                if (fr.index <= last_index)
                    throw io_error("manifest " + path + ": sequence " + seq.id +
                                   " frame indices must be strictly increasing");
                last_index = fr.index;
                fr.image = (base / jf.at("image").get<std::string>()).string();
                fr.keypoints = (base / jf.at("keypoints").get<std::string>()).string();
                fr.camera = camera_from_json(jf.at("camera"));
                if (jf.contains("gt")) fr.gt = (base / jf["gt"].get<std::string>()).string();
                std::string where =
                    "sequence " + seq.id + " frame " + std::to_string(fr.index);
                for (const std::string& f : {fr.image, fr.keypoints}) {
                    if (!std::filesystem::exists(f))
                        throw io_error("manifest " + path + ": " + where + ": missing file " + f);
                }
                if (!fr.gt.empty() && !std::filesystem::exists(fr.gt))
                    throw io_error("manifest " + path + ": " + where + ": missing file " + fr.gt);
                seq.frames.push_back(std::move(fr));
            }
            if (seq.frames.empty())
                throw io_error("manifest " + path + ": sequence " + seq.id + " has no frames");
            out.sequences.push_back(std::move(seq));
        }
    } catch (const nlohmann::json::exception& e) {
        throw io_error("manifest " + path + ": bad field: " + e.what());
    }
    if (out.sequences.empty()) throw io_error("manifest " + path + ": no sequences");
    return out;
}

// writes a manifest; frame paths are stored as given (keep them relative to
// the manifest directory so the dataset stays relocatable)
inline void save_manifest(const std::string& path, const Manifest& manifest) {
    nlohmann::json j;
    j["schema"] = kManifestSchema;
    j["root"] = manifest.root.empty() ? "." : manifest.root;
    nlohmann::json seqs = nlohmann::json::array();
    for (const SequenceEntry& seq : manifest.sequences) {
        nlohmann::json js;
        js["id"] = seq.id;
        nlohmann::json frames = nlohmann::json::array();
        for (const FrameEntry& fr : seq.frames) {
            nlohmann::json jf;
            jf["index"] = fr.index;
            jf["image"] = fr.image;
            jf["keypoints"] = fr.keypoints;
            jf["camera"] = camera_to_json(fr.camera);
            if (!fr.gt.empty()) jf["gt"] = fr.gt;
            frames.push_back(std::move(jf));
        }
        js["frames"] = std::move(frames);
        seqs.push_back(std::move(js));
    }
    j["sequences"] = std::move(seqs);
    detail::write_json_file(path, j);
}

}  // namespace handfit
