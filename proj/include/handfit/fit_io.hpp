#pragma once

// Serialization for fit runs: configuration JSON, parameter checkpoints,
// and loss-trace CSVs.

#include <handfit/fitter.hpp>
#include <handfit/model_io.hpp>

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

namespace handfit {

inline constexpr const char* kFitConfigSchema = "handfit.fitconfig.v1";
inline constexpr const char* kCheckpointSchema = "handfit.checkpoint.v1";

inline nlohmann::json fit_config_to_json(const FitConfig& c) {
    nlohmann::json j;
    j["schema"] = kFitConfigSchema;
    j["lr"] = c.lr;
    j["lr_decay"] = c.lr_decay;
    j["lr_decay_every"] = c.lr_decay_every;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.eps;
    j["iterations"] = c.iterations;
    j["seed"] = c.seed;
    j["quat_interval"] = c.quat_interval;
    j["quat_frames"] = c.quat_frames;
    j["batch_sequences"] = c.batch_sequences;
    j["batch_frames"] = c.batch_frames;
    j["fd_step"] = c.fd_step;
    j["divergence_cap"] = c.divergence_cap;
    j["init_depth"] = c.init_depth;
    j["init_pose_sigma"] = c.init_pose_sigma;
    j["init_shape_sigma"] = c.init_shape_sigma;
    j["init_texture_sigma"] = c.init_texture_sigma;
    return j;
}

// absent fields keep their defaults so partial override files stay small
inline FitConfig fit_config_from_json(const nlohmann::json& j) {
    if (j.contains("schema") && j["schema"] != kFitConfigSchema)
        throw io_error("fit config: unexpected schema");
    FitConfig c;
    auto getd = [&](const char* key, double& slot) {
        if (j.contains(key)) slot = j[key].get<double>();
    };
    auto geti = [&](const char* key, int& slot) {
        if (j.contains(key)) slot = j[key].get<int>();
    };
    getd("lr", c.lr);
    getd("lr_decay", c.lr_decay);
    geti("lr_decay_every", c.lr_decay_every);
    getd("beta1", c.beta1);
    getd("beta2", c.beta2);
    getd("eps", c.eps);
    geti("iterations", c.iterations);
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    geti("quat_interval", c.quat_interval);
    geti("quat_frames", c.quat_frames);
    geti("batch_sequences", c.batch_sequences);
    geti("batch_frames", c.batch_frames);
    getd("fd_step", c.fd_step);
    getd("divergence_cap", c.divergence_cap);
    getd("init_depth", c.init_depth);
    getd("init_pose_sigma", c.init_pose_sigma);
    getd("init_shape_sigma", c.init_shape_sigma);
    getd("init_texture_sigma", c.init_texture_sigma);
    c.validate();
    return c;
}

inline void save_fit_config(const std::string& path, const FitConfig& c) {
    detail::write_json_file(path, fit_config_to_json(c));
}

inline FitConfig load_fit_config(const std::string& path) {
    try {
        return fit_config_from_json(detail::load_json_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("fit config: bad field: ") + e.what());
    }
}

inline nlohmann::json params_to_json(const HandParams& p) {
    nlohmann::json j;
    j["theta"] = std::vector<double>(p.theta.data(), p.theta.data() + p.theta.size());
    j["beta"] = std::vector<double>(p.beta.data(), p.beta.data() + p.beta.size());
    j["scale"] = p.scale;
    j["rot"] = std::vector<double>{p.rot[0], p.rot[1], p.rot[2]};
    j["trans"] = std::vector<double>{p.trans[0], p.trans[1], p.trans[2]};
    j["texture"] = detail::points_to_json(p.texture);
    j["light"] = std::vector<double>(p.light.data(), p.light.data() + p.light.size());
    return j;
}

inline HandParams params_from_json(const nlohmann::json& j) {
    HandParams p;
    auto vec = [&](const char* key) {
        const auto& a = j.at(key);
        VecX v(int(a.size()));
        for (int i = 0; i < v.size(); ++i) v[i] = a[std::size_t(i)].get<double>();
        return v;
    };
    p.theta = vec("theta");
    p.beta = vec("beta");
    p.scale = j.at("scale").get<double>();
    VecX r = vec("rot"), t = vec("trans");
    if (r.size() != 3 || t.size() != 3) throw io_error("checkpoint: rot/trans must have 3 entries");
    p.rot = r;
    p.trans = t;
    p.texture = detail::points_from_json(j.at("texture"), 3, "checkpoint texture");
    p.light = vec("light");
    if (p.light.size() != 11) throw io_error("checkpoint: light must have 11 entries");
    return p;
}

// checkpoint: every frame's parameters plus the fitted free 2D keypoints
inline void save_checkpoint(const std::string& path, const FitResult& result) {
    nlohmann::json j;
    j["schema"] = kCheckpointSchema;
    j["best_iteration"] = result.best_iteration;
    nlohmann::json frames = nlohmann::json::array();
    for (std::size_t f = 0; f < result.params.size(); ++f) {
        nlohmann::json fr = params_to_json(result.params[f]);
        fr["kp2d"] = detail::points_to_json(result.estimated_2d[f]);
        frames.push_back(std::move(fr));
    }
    j["frames"] = std::move(frames);
    detail::write_json_file(path, j);
}

inline FitResult load_checkpoint(const std::string& path) {
    nlohmann::json j = detail::load_json_file(path);
    if (!j.contains("schema") || j["schema"] != kCheckpointSchema)
        throw io_error("checkpoint: unexpected schema");
    FitResult r;
    try {
        r.best_iteration = j.value("best_iteration", -1);
        for (const auto& fr : j.at("frames")) {
            r.params.push_back(params_from_json(fr));
            r.estimated_2d.push_back(detail::points_from_json(fr.at("kp2d"), 2, "checkpoint kp2d"));
        }
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("checkpoint: bad field: ") + e.what());
    }
    return r;
}

inline constexpr const char* kWeightsSchema = "handfit.weights.v1";

inline nlohmann::json weights_to_json(const LossWeights& w) {
    nlohmann::json j;
    j["schema"] = kWeightsSchema;
    j["w_3d"] = w.w_3d;
    j["w_2d"] = w.w_2d;
    j["w_cons"] = w.w_cons;
    j["w_geo"] = w.w_geo;
    j["w_photo"] = w.w_photo;
    j["w_quat"] = w.w_quat;
    j["w_ts"] = w.w_ts;
    j["w_regu"] = w.w_regu;
    j["w_ori"] = w.w_ori;
    j["w_SSIM"] = w.w_SSIM;
    j["w_C"] = w.w_C;
    j["w_s"] = w.w_s;
    j["w_J"] = w.w_J;
    return j;
}

// absent fields keep their defaults, so override files can stay minimal
inline LossWeights weights_from_json(const nlohmann::json& j) {
    if (j.contains("schema") && j["schema"] != kWeightsSchema)
        throw io_error("weights: unexpected schema");
    LossWeights w;
    auto get = [&](const char* key, double& slot) {
        if (j.contains(key)) slot = j[key].get<double>();
    };
    get("w_3d", w.w_3d);
    get("w_2d", w.w_2d);
    get("w_cons", w.w_cons);
    get("w_geo", w.w_geo);
    get("w_photo", w.w_photo);
    get("w_quat", w.w_quat);
    get("w_ts", w.w_ts);
    get("w_regu", w.w_regu);
    get("w_ori", w.w_ori);
    get("w_SSIM", w.w_SSIM);
    get("w_C", w.w_C);
    get("w_s", w.w_s);
    get("w_J", w.w_J);
    w.validate();
    return w;
}

inline void save_weights(const std::string& path, const LossWeights& w) {
    detail::write_json_file(path, weights_to_json(w));
}

inline LossWeights load_weights(const std::string& path) {
    try {
        return weights_from_json(detail::load_json_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw io_error("weights " + path + ": bad field: " + e.what());
    }
}

inline constexpr const char* kGroundTruthSchema = "handfit.gt.v1";

// per-frame ground truth: full parameters plus the 21 joint positions they
// produce (joints are redundant but let evaluation run without the model)
struct GroundTruthFrame {
    HandParams params;
    Points3 joints;  // 21 x 3
};

inline void save_ground_truth(const std::string& path, const GroundTruthFrame& gt) {
    nlohmann::json j = params_to_json(gt.params);
    j["schema"] = kGroundTruthSchema;
    j["joints"] = detail::points_to_json(gt.joints);
    detail::write_json_file(path, j);
}

inline GroundTruthFrame load_ground_truth(const std::string& path) {
    nlohmann::json j = detail::load_json_file(path);
    if (!j.contains("schema") || j["schema"] != kGroundTruthSchema)
        throw io_error("ground truth " + path + ": unexpected schema");
    GroundTruthFrame gt;
    try {
        gt.params = params_from_json(j);
        gt.joints = detail::points_from_json(j.at("joints"), 3, "ground truth joints");
    } catch (const nlohmann::json::exception& e) {
        throw io_error("ground truth " + path + ": bad field: " + e.what());
    }
    if (gt.joints.rows() != 21) throw io_error("ground truth " + path + ": expected 21 joints");
    return gt;
}

inline void save_trace_csv(const std::string& path, const std::vector<LossBreakdown>& trace) {
    std::ofstream out(path);
    if (!out) throw io_error("trace: cannot open " + path + " for writing");
    out << "iteration,loc,ori,pixel,ssim,beta,tex,scale,joints,kp2d,cons,quat,ts,"
           "geo,photo,regu,e3d,total\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const LossBreakdown& b = trace[i];
        out << i << ',' << b.loc << ',' << b.ori << ',' << b.pixel << ',' << b.ssim << ','
            << b.beta << ',' << b.tex << ',' << b.scale << ',' << b.joints << ',' << b.kp2d << ','
            << b.cons << ',' << b.quat << ',' << b.ts << ',' << b.geo << ',' << b.photo << ','
            << b.regu << ',' << b.e3d << ',' << b.total << '\n';
    }
    if (!out) throw io_error("trace: write failed: " + path);
}

}  // namespace handfit
