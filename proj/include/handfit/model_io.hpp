#pragma once

// JSON serialization of hand model assets and joint angle limit tables.

#include <handfit/hand_model.hpp>

#include <json.hpp>

#include <fstream>
#include <string>

namespace handfit {

namespace detail {

inline nlohmann::json points_to_json(const MatX& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline MatX points_from_json(const nlohmann::json& j, int cols, const char* what) {
    if (!j.is_array()) throw io_error(std::string(what) + ": expected an array");
    MatX m(int(j.size()), cols);
    for (int r = 0; r < int(j.size()); ++r) {
        const auto& row = j[std::size_t(r)];
        if (!row.is_array() || int(row.size()) != cols)
            throw io_error(std::string(what) + ": bad row length");
        for (int c = 0; c < cols; ++c) m(r, c) = row[std::size_t(c)].get<double>();
    }
    return m;
}

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(path + ": " + e.what());
    }
    return j;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << j.dump(1, '\t') << '\n';
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace detail

inline constexpr const char* kHandModelSchema = "handfit.handmodel.v1";

inline void save_hand_model(const HandModel& model, const std::string& path) {
    nlohmann::json j;
    j["schema"] = kHandModelSchema;
    j["vertices"] = detail::points_to_json(model.template_verts);
    j["faces"] = detail::points_to_json(model.faces.cast<double>());
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& b : model.blendshapes) shapes.push_back(detail::points_to_json(b));
    j["blendshapes"] = std::move(shapes);
    nlohmann::json skin = nlohmann::json::array();
    for (const auto& ws : model.skin) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& sw : ws) row.push_back({sw.bone, sw.w});
        skin.push_back(std::move(row));
    }
    j["skin_weights"] = std::move(skin);
    nlohmann::json reg = nlohmann::json::array();
    for (const auto& entries : model.regressor) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& [vid, w] : entries) row.push_back({double(vid), w});
        reg.push_back(std::move(row));
    }
    j["joint_regressor"] = std::move(reg);
    j["joint_parent"] = model.joint_parent;
    nlohmann::json bones = nlohmann::json::array();
    for (const auto& b : model.bones) bones.push_back({b[0], b[1]});
    j["bones"] = std::move(bones);
    j["articulated_joints"] = model.articulated;
    j["bone_parent"] = model.bone_parent;
    j["bone_pivot_joint"] = model.bone_pivot;
    j["angle_limits"] = {{"min", detail::points_to_json(model.limits.lo)},
                         {"max", detail::points_to_json(model.limits.hi)}};
    j["default_texture"] = detail::points_to_json(model.default_texture);
    j["default_light"] = std::vector<double>(model.default_light.data(),
                                             model.default_light.data() + model.default_light.size());
    detail::write_json_file(path, j);
}

inline HandModel load_hand_model(const std::string& path) {
    nlohmann::json j = detail::load_json_file(path);
    if (!j.contains("schema") || j["schema"] != kHandModelSchema)
        throw io_error(path + ": not a hand model file");
    try {
        HandModel m;
        m.template_verts = detail::points_from_json(j.at("vertices"), 3, "vertices");
        m.faces = detail::points_from_json(j.at("faces"), 3, "faces").cast<int>();
        for (const auto& b : j.at("blendshapes"))
            m.blendshapes.push_back(detail::points_from_json(b, 3, "blendshapes"));
        for (const auto& row : j.at("skin_weights")) {
            std::vector<SkinWeight> ws;
            for (const auto& e : row) ws.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
            m.skin.push_back(std::move(ws));
        }
        for (const auto& row : j.at("joint_regressor")) {
            std::vector<std::pair<int, double>> entries;
            for (const auto& e : row)
                entries.emplace_back(int(e.at(0).get<double>()), e.at(1).get<double>());
            m.regressor.push_back(std::move(entries));
        }
        m.joint_parent = j.at("joint_parent").get<std::vector<int>>();
        for (const auto& b : j.at("bones"))
            m.bones.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
        m.articulated = j.at("articulated_joints").get<std::vector<int>>();
        m.bone_parent = j.at("bone_parent").get<std::vector<int>>();
        m.bone_pivot = j.at("bone_pivot_joint").get<std::vector<int>>();
        m.limits.lo = detail::points_from_json(j.at("angle_limits").at("min"), 3, "angle_limits");
        m.limits.hi = detail::points_from_json(j.at("angle_limits").at("max"), 3, "angle_limits");
        m.default_texture = detail::points_from_json(j.at("default_texture"), 3, "default_texture");
        auto light = j.at("default_light").get<std::vector<double>>();
        m.default_light = Eigen::Map<VecX>(light.data(), long(light.size()));
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(path + ": " + e.what());
    }
}

inline void save_joint_limits(const JointAngleLimits& limits, const std::string& path) {
    nlohmann::json j;
    j["schema"] = "handfit.jointlimits.v1";
    j["min"] = detail::points_to_json(limits.lo);
    j["max"] = detail::points_to_json(limits.hi);
    detail::write_json_file(path, j);
}

inline JointAngleLimits load_joint_limits(const std::string& path) {
    nlohmann::json j = detail::load_json_file(path);
    if (!j.contains("schema") || j["schema"] != "handfit.jointlimits.v1")
        throw io_error(path + ": not a joint limits file");
    JointAngleLimits l;
    try {
        l.lo = detail::points_from_json(j.at("min"), 3, "min");
        l.hi = detail::points_from_json(j.at("max"), 3, "max");
    } catch (const nlohmann::json::exception& e) {
        throw io_error(path + ": " + e.what());
    }
    l.validate();
    return l;
}

}  // namespace handfit
