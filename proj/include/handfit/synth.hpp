#pragma once

// Synthetic sequence generation: smooth single-axis joint sweeps rendered to
// images plus noisy keypoint detections, with ground truth kept alongside.
// Single-axis monotone trajectories make the rotation-coverage loss of the
// ground truth exactly zero, which anchors recovery tests.

#include <handfit/camera.hpp>
#include <handfit/fitter.hpp>
#include <handfit/hand_model.hpp>
#include <handfit/render.hpp>

#include <cstdint>
#include <vector>

namespace handfit {

struct SynthConfig {
    int n_frames = 30;
    std::uint64_t seed = 7;
    double keypoint_noise = 0.005;  // sigma in normalized image units
    double joint_sweep = 0.5;       // max radians swept per articulated joint
    double global_sweep = 0.6;      // radians swept by the global rotation
    double depth = 0.35;            // meters from the camera
    CameraModel camera;

    void validate() const {
        if (n_frames < 2) throw std::invalid_argument("synth: at least two frames required");
        if (keypoint_noise < 0.0) throw std::invalid_argument("synth: noise must be nonnegative");
        if (!(depth > 0.0)) throw std::invalid_argument("synth: depth must be positive");
        camera.validate();
    }
};

struct SynthSequence {
    std::vector<HandParams> gt_params;
    std::vector<FrameObservation> frames;
    std::vector<Points3> gt_joints;    // posed 21x3 per frame
    std::vector<Points3> gt_vertices;  // posed Vx3 per frame
};

namespace detail {

inline double smoothstep01(double u) { return u * u * (3.0 - 2.0 * u); }

}  // namespace detail

inline SynthSequence synth_sequence(const HandModel& model, const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int n_art = model.n_articulated();
    const int T = cfg.n_frames;

    // shape and texture are shared by every frame
    VecX beta(model.n_shapes());
    for (int i = 0; i < beta.size(); ++i) beta[i] = 0.2 * rng.normal();
    Points3 texture = model.default_texture;
    for (int f = 0; f < texture.rows(); ++f)
        for (int c = 0; c < 3; ++c)
            texture(f, c) = std::min(0.95, std::max(0.05, texture(f, c) + 0.1 * rng.normal()));

    // articulated joints sweep about near-flexion axes so the ground truth
    // stays inside the joint limit box
    std::vector<Vec3> axes(static_cast<std::size_t>(n_art));
    VecX amps(n_art);
    for (int j = 0; j < n_art; ++j) {
        Vec3 a(1.0, 0.15 * rng.normal(), 0.15 * rng.normal());
        axes[std::size_t(j)] = a.normalized();
        amps[j] = rng.uniform(0.05, cfg.joint_sweep);
    }
    Vec3 g_axis(rng.normal(), rng.normal(), rng.normal());
    g_axis.normalize();
    double g_base = rng.uniform(-0.2, 0.2);
    double g_amp = rng.uniform(0.3, cfg.global_sweep);
    Vec3 t_base(rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01), cfg.depth);
    Vec3 t_amp(rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01), rng.uniform(-0.02, 0.02));

    SynthSequence out;
    for (int t = 0; t < T; ++t) {
        double s = detail::smoothstep01(double(t) / double(T - 1));
        HandParams p = neutral_params(model);
        p.beta = beta;
        p.texture = texture;
        for (int j = 0; j < n_art; ++j)
            p.theta.segment<3>(3 * j) = axes[std::size_t(j)] * (amps[j] * s);
        p.rot = g_axis * (g_base + g_amp * s);
        p.trans = t_base + t_amp * s;

        auto [mesh, jset] = posed_hand(model, p);
        RenderOutput render = rasterize(mesh, p.texture, p.light, cfg.camera);

        FrameObservation obs;
        obs.camera = cfg.camera;
        obs.image = render.color;
        Points2 px = project(jset.joints, cfg.camera);
        obs.keypoints.points.resize(21, 2);
        obs.keypoints.conf = VecX::Ones(21);
        for (int i = 0; i < 21; ++i) {
            double u = px(i, 0) / cfg.camera.width + cfg.keypoint_noise * rng.normal();
            double v = px(i, 1) / cfg.camera.height + cfg.keypoint_noise * rng.normal();
            obs.keypoints.points(i, 0) = std::min(1.0, std::max(0.0, u));
            obs.keypoints.points(i, 1) = std::min(1.0, std::max(0.0, v));
        }

        out.gt_joints.push_back(jset.joints);
        out.gt_vertices.push_back(mesh.vertices);
        out.gt_params.push_back(std::move(p));
        out.frames.push_back(std::move(obs));
    }
    return out;
}

}  // namespace handfit
