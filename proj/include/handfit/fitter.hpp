#pragma once

// Per-sequence optimization of hand parameters against the full objective.
// Keypoint, regularizer, consistency, rotation-coverage and spread terms use
// analytic gradients; the photometric terms go through central finite
// differences of the renderer over the geometry block, with analytic chains
// for texture and light through the face-id map.

#include <handfit/adam.hpp>
#include <handfit/camera.hpp>
#include <handfit/hand_model.hpp>
#include <handfit/image.hpp>
#include <handfit/losses.hpp>
#include <handfit/quat.hpp>
#include <handfit/render.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace handfit {

struct FitConfig {
    double lr = 0.02;
    double lr_decay = 0.5;
    int lr_decay_every = 60;  // iterations between decays
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int iterations = 150;
    std::uint64_t seed = 1;
    int quat_interval = 3;   // frame stride inside a rotation-coverage window
    int quat_frames = 3;     // frames per window
    int batch_sequences = 21;
    int batch_frames = 3;    // frames per iteration receiving photometric FD
    double fd_step = 1e-3;
    double divergence_cap = 1e6;
    double init_depth = 0.35;  // meters, used by the default initializer
    double init_pose_sigma = 0.1;
    double init_shape_sigma = 0.05;
    double init_texture_sigma = 0.05;

    void validate() const {
        if (!(lr > 0.0) || !(lr_decay > 0.0)) throw std::invalid_argument("fit: rates must be positive");
        if (lr_decay_every < 1) throw std::invalid_argument("fit: decay interval must be positive");
        if (iterations < 1) throw std::invalid_argument("fit: iteration budget must be positive");
        if (quat_frames < 2) throw std::invalid_argument("fit: rotation windows need two frames");
        if (quat_interval < 1) throw std::invalid_argument("fit: window stride must be positive");
        if (batch_sequences < 1 || batch_frames < 1)
            throw std::invalid_argument("fit: batch composition must be positive");
        if (!(fd_step > 0.0)) throw std::invalid_argument("fit: fd step must be positive");
    }
};

struct FrameObservation {
    ImageRGB image;
    Keypoints2D keypoints;  // normalized to [0,1]
    CameraModel camera;
};

struct FitResult {
    std::vector<HandParams> params;     // parameters at the best iteration
    std::vector<Points2> estimated_2d;  // fitted free keypoints, normalized
    std::vector<LossBreakdown> trace;   // raw totals per iteration
    int best_iteration = -1;
};

struct fit_divergence_error : divergence_error {
    std::vector<HandParams> last_params;
    fit_divergence_error(int iter, double value, std::vector<HandParams> params)
        : divergence_error(iter, value), last_params(std::move(params)) {}
};

namespace detail {

// flat per-frame layout: [theta | beta | s | rot | trans | texture | light | kp2d]
struct FrameLayout {
    int n_theta = 0, n_beta = 0, n_tex = 0;
    int beta0 = 0, s0 = 0, rot0 = 0, trans0 = 0, tex0 = 0, light0 = 0, kp0 = 0, size = 0;
};

inline FrameLayout frame_layout(const HandModel& model) {
    FrameLayout l;
    l.n_theta = 3 * model.n_articulated();
    l.n_beta = model.n_shapes();
    l.n_tex = 3 * int(model.faces.rows());
    l.beta0 = l.n_theta;
    l.s0 = l.beta0 + l.n_beta;
    l.rot0 = l.s0 + 1;
    l.trans0 = l.rot0 + 3;
    l.tex0 = l.trans0 + 3;
    l.light0 = l.tex0 + l.n_tex;
    l.kp0 = l.light0 + 11;
    l.size = l.kp0 + 42;
    return l;
}

inline void pack_frame(const FrameLayout& l, const HandParams& p, const Points2& kp2d,
                       double* out) {
    Eigen::Map<VecX> x(out, l.size);
    x.segment(0, l.n_theta) = p.theta;
    x.segment(l.beta0, l.n_beta) = p.beta;
    x[l.s0] = p.scale;
    x.segment<3>(l.rot0) = p.rot;
    x.segment<3>(l.trans0) = p.trans;
    for (int f = 0; f < p.texture.rows(); ++f)
        for (int c = 0; c < 3; ++c) x[l.tex0 + 3 * f + c] = p.texture(f, c);
    x.segment(l.light0, 11) = p.light;
    for (int i = 0; i < 21; ++i) {
        x[l.kp0 + 2 * i] = kp2d(i, 0);
        x[l.kp0 + 2 * i + 1] = kp2d(i, 1);
    }
}

inline void unpack_frame(const FrameLayout& l, const double* in, HandParams* p, Points2* kp2d) {
    Eigen::Map<const VecX> x(in, l.size);
    p->theta = x.segment(0, l.n_theta);
    p->beta = x.segment(l.beta0, l.n_beta);
    p->scale = x[l.s0];
    p->rot = x.segment<3>(l.rot0);
    p->trans = x.segment<3>(l.trans0);
    p->texture.resize(l.n_tex / 3, 3);
    for (int f = 0; f < p->texture.rows(); ++f)
        for (int c = 0; c < 3; ++c) p->texture(f, c) = x[l.tex0 + 3 * f + c];
    p->light = x.segment(l.light0, 11);
    kp2d->resize(21, 2);
    for (int i = 0; i < 21; ++i) {
        (*kp2d)(i, 0) = x[l.kp0 + 2 * i];
        (*kp2d)(i, 1) = x[l.kp0 + 2 * i + 1];
    }
}

inline std::string block_name(const FrameLayout& l, Eigen::Index flat) {
    int frame = int(flat / l.size);
    int k = int(flat % l.size);
    const char* block = "theta";
    if (k >= l.kp0) block = "kp2d";
    else if (k >= l.light0) block = "light";
    else if (k >= l.tex0) block = "texture";
    else if (k >= l.trans0) block = "trans";
    else if (k >= l.rot0) block = "rot";
    else if (k >= l.s0) block = "scale";
    else if (k >= l.beta0) block = "beta";
    return "frame " + std::to_string(frame) + " " + block;
}

// shared pieces of the lighting model used by the analytic texture/light
// chains: lighted(f,c) = gain(f,c) * texture(f,c)
struct LightChain {
    Points3 gain;
    VecX clamped_dot;   // clamp01 of the diffuse dot per face
    Points3 ddot_draw;  // d clamped_dot / d raw light direction, zero when clamped
};

inline LightChain light_chain(const VecX& light, const Points3& normals) {
    LightChain out;
    int n = int(normals.rows());
    out.gain.resize(n, 3);
    out.clamped_dot.resize(n);
    out.ddot_draw = Points3::Zero(n, 3);
    Vec3 raw = light.segment<3>(8);
    double len = raw.norm();
    Vec3 dir = len > 1e-9 ? Vec3(raw / len) : Vec3::Zero();
    Mat3 dproj = Mat3::Zero();
    if (len > 1e-9) dproj = (Mat3::Identity() - dir * dir.transpose()) / len;
    for (int f = 0; f < n; ++f) {
        double d = len > 1e-9 ? dir.dot(normals.row(f).transpose()) : 0.0;
        double cd = std::min(1.0, std::max(0.0, d));
        out.clamped_dot[f] = cd;
        if (len > 1e-9 && d > 0.0 && d < 1.0)
            out.ddot_draw.row(f) = (dproj.transpose() * normals.row(f).transpose()).transpose();
        for (int c = 0; c < 3; ++c)
            out.gain(f, c) = light[0] * light[1 + c] + cd * light[4] * light[5 + c];
    }
    return out;
}

// scatter a d(loss)/d(lighted color) map into the texture and light blocks;
// normals are held constant through this chain
inline void chain_lighted_grad(const Points3& dlighted, const Points3& texture,
                               const VecX& light, const LightChain& lc, double weight,
                               Eigen::Ref<VecX> g_tex, Eigen::Ref<VecX> g_light) {
    for (int f = 0; f < texture.rows(); ++f) {
        double cd = lc.clamped_dot[f];
        for (int c = 0; c < 3; ++c) {
            double gl = weight * dlighted(f, c);
            if (gl == 0.0) continue;
            g_tex[3 * f + c] += gl * lc.gain(f, c);
            double tx = texture(f, c);
            g_light[0] += gl * tx * light[1 + c];
            g_light[1 + c] += gl * tx * light[0];
            g_light[4] += gl * tx * cd * light[5 + c];
            g_light[5 + c] += gl * tx * cd * light[4];
            double k = gl * tx * light[4] * light[5 + c];
            g_light[8] += k * lc.ddot_draw(f, 0);
            g_light[9] += k * lc.ddot_draw(f, 1);
            g_light[10] += k * lc.ddot_draw(f, 2);
        }
    }
}

// one evaluation of the total objective at x, optionally with its gradient.
// fd_frames marks the frames whose photometric terms receive the central
// finite differences over the geometry block this call; analytic chains run
// for every marked frame. With grad null only the breakdown is produced.
inline double eval_objective(const HandModel& model, const std::vector<FrameObservation>& frames,
                             const FrameLayout& lay, const VecX& x, const LossWeights& weights,
                             const FitConfig& cfg, FitMode mode,
                             const std::vector<bool>& fd_frames, LossBreakdown* bd_out,
                             VecX* grad) {
    const int nf = int(frames.size());
    const double inv_nf = 1.0 / double(nf);
    const double wp = weights.w_3d * weights.w_photo;

    std::vector<HandParams> cur(static_cast<std::size_t>(nf));
    std::vector<Points2> cur_kp(static_cast<std::size_t>(nf));
    for (int f = 0; f < nf; ++f)
        unpack_frame(lay, x.data() + Eigen::Index(f) * lay.size, &cur[std::size_t(f)],
                     &cur_kp[std::size_t(f)]);
    if (grad) grad->setZero(x.size());

    LossBreakdown bd;
    bd.has_sequence_terms = (mode == FitMode::video);

    std::vector<PoseQuaternions> quats(static_cast<std::size_t>(nf));
    std::vector<Points3> lighted(static_cast<std::size_t>(nf));
    std::vector<VecX> betas(static_cast<std::size_t>(nf));
    std::vector<LightChain> chains(static_cast<std::size_t>(nf));

    for (int f = 0; f < nf; ++f) {
        const FrameObservation& obs = frames[std::size_t(f)];
        const HandParams& p = cur[std::size_t(f)];

        auto [mesh, jset] = posed_hand(model, p);
        Points3 joints = jset.joints;
        MatX jac;
        if (grad) jac = joint_jacobian(model, p);

        Points2 proj_px = project(joints, obs.camera);
        Points2 proj(21, 2);
        for (int i = 0; i < 21; ++i) {
            proj(i, 0) = proj_px(i, 0) / obs.camera.width;
            proj(i, 1) = proj_px(i, 1) / obs.camera.height;
        }

        Points2 g_loc, g_ori, g_cons_proj, g_cons_est, g_2d;
        Points2* gp = grad ? &g_loc : nullptr;
        bd.loc += inv_nf * loss_loc(obs.keypoints, proj, gp);
        bd.ori += inv_nf * loss_ori(obs.keypoints, proj, model.bones, grad ? &g_ori : nullptr);
        bd.cons += inv_nf * loss_cons(proj, cur_kp[std::size_t(f)],
                                      grad ? &g_cons_proj : nullptr,
                                      grad ? &g_cons_est : nullptr);
        bd.kp2d += inv_nf * loss_2d(obs.keypoints, cur_kp[std::size_t(f)],
                                    grad ? &g_2d : nullptr);

        ReguGrads rg;
        ReguBreakdown rb = loss_regu(p, model.limits, weights, grad ? &rg : nullptr);
        bd.beta += inv_nf * rb.beta;
        bd.tex += inv_nf * rb.tex;
        bd.scale += inv_nf * rb.scale;
        bd.joints += inv_nf * rb.joints;

        RenderOutput render = rasterize(mesh, p.texture, p.light, obs.camera);
        double conf_sum = obs.keypoints.conf.sum();
        bd.pixel += inv_nf * loss_pixel(obs.image, render, conf_sum);

        if (mode == FitMode::video || grad) {
            lighted[std::size_t(f)] = lighted_texture(p.texture, p.light, mesh.normals);
            betas[std::size_t(f)] = p.beta;
            quats[std::size_t(f)] = pose_to_quaternions(p.theta, p.rot);
        }
        if (grad) chains[std::size_t(f)] = light_chain(p.light, mesh.normals);

        if (!grad) {
            bd.ssim += inv_nf * loss_ssim(obs.image, render);
            continue;
        }

        auto gseg = grad->segment(Eigen::Index(f) * lay.size, lay.size);

        // projected-point gradients chain through the joint jacobian
        Points2 g_proj = (weights.w_3d * weights.w_geo) * (g_loc + weights.w_ori * g_ori) +
                         weights.w_cons * g_cons_proj;
        VecX dE_djoints(63);
        for (int i = 0; i < 21; ++i) {
            Vec2 gpx(g_proj(i, 0) / obs.camera.width, g_proj(i, 1) / obs.camera.height);
            Eigen::Matrix<double, 2, 3> pj = project_jac(joints.row(i).transpose(), obs.camera);
            dE_djoints.segment<3>(3 * i) = inv_nf * (pj.transpose() * gpx);
        }
        gseg.segment(0, lay.tex0) += jac.transpose() * dE_djoints;

        for (int i = 0; i < 21; ++i)
            for (int c = 0; c < 2; ++c)
                gseg[lay.kp0 + 2 * i + c] +=
                    inv_nf * (weights.w_2d * g_2d(i, c) + weights.w_cons * g_cons_est(i, c));

        double wr = inv_nf * weights.w_3d * weights.w_regu;
        gseg.segment(lay.beta0, lay.n_beta) += wr * rg.dbeta;
        gseg[lay.s0] += wr * rg.dscale;
        gseg.segment(0, lay.n_theta) += wr * rg.dtheta;
        for (int fc = 0; fc < p.texture.rows(); ++fc)
            for (int c = 0; c < 3; ++c) gseg[lay.tex0 + 3 * fc + c] += wr * rg.dtex(fc, c);

        bool fd_here = wp != 0.0 && int(fd_frames.size()) == nf && fd_frames[std::size_t(f)];
        if (!fd_here) {
            bd.ssim += inv_nf * loss_ssim(obs.image, render);
            continue;
        }

        ImageRGB g_render;
        bd.ssim += inv_nf * loss_ssim(obs.image, render, &g_render);

        // d pixel / d rendered color, nonzero on silhouette pixels only; the
        // rasterizer's gamut clamp gates the chain per entry
        double area = render.silhouette.sum();
        Points3 dlighted = Points3::Zero(p.texture.rows(), 3);
        const Points3& lit = lighted[std::size_t(f)];
        if (area > 0.0) {
            double pk = conf_sum / (3.0 * area);
            for (int v = 0; v < obs.camera.height; ++v)
                for (int u = 0; u < obs.camera.width; ++u) {
                    int fid = render.face_id(v, u);
                    if (fid < 0) continue;
                    for (int c = 0; c < 3; ++c) {
                        if (lit(fid, c) <= 0.0 || lit(fid, c) >= 1.0) continue;
                        double diff = obs.image[std::size_t(c)](v, u) -
                                      render.color[std::size_t(c)](v, u);
                        double dpix = pk * (diff > 0.0 ? -1.0 : (diff < 0.0 ? 1.0 : 0.0));
                        double dss = weights.w_SSIM * g_render[std::size_t(c)](v, u);
                        dlighted(fid, c) += dpix + dss;
                    }
                }
        }
        double wpf = inv_nf * wp;
        chain_lighted_grad(dlighted, p.texture, p.light, chains[std::size_t(f)], wpf,
                           gseg.segment(lay.tex0, lay.n_tex), gseg.segment(lay.light0, 11));

        // geometry block by central differences of the photometric sum
        auto photo_at = [&](const HandParams& q) {
            auto [m2, j2] = posed_hand(model, q);
            (void)j2;
            RenderOutput r2 = rasterize(m2, q.texture, q.light, obs.camera);
            return loss_pixel(obs.image, r2, conf_sum) +
                   weights.w_SSIM * loss_ssim(obs.image, r2);
        };
        for (int k = 0; k < lay.tex0; ++k) {
            HandParams qp = p, qm = p;
            double* slot_p = nullptr;
            double* slot_m = nullptr;
            if (k < lay.n_theta) {
                slot_p = &qp.theta[k];
                slot_m = &qm.theta[k];
            } else if (k < lay.s0) {
                slot_p = &qp.beta[k - lay.beta0];
                slot_m = &qm.beta[k - lay.beta0];
            } else if (k == lay.s0) {
                slot_p = &qp.scale;
                slot_m = &qm.scale;
            } else if (k < lay.trans0) {
                slot_p = &qp.rot[k - lay.rot0];
                slot_m = &qm.rot[k - lay.rot0];
            } else {
                slot_p = &qp.trans[k - lay.trans0];
                slot_m = &qm.trans[k - lay.trans0];
            }
            *slot_p += cfg.fd_step;
            *slot_m -= cfg.fd_step;
            gseg[k] += wpf * (photo_at(qp) - photo_at(qm)) / (2.0 * cfg.fd_step);
        }
    }

    if (mode == FitMode::video) {
        const int span = (cfg.quat_frames - 1) * cfg.quat_interval;
        const int n_windows = nf - span;
        double quat_acc = 0.0;
        for (int t = 0; t < n_windows; ++t) {
            std::vector<PoseQuaternions> window;
            for (int k = 0; k < cfg.quat_frames; ++k)
                window.push_back(quats[std::size_t(t + k * cfg.quat_interval)]);
            std::vector<MatX> wgrads;
            quat_acc += loss_quat(window, grad ? &wgrads : nullptr);
            if (!grad) continue;
            double wq = weights.w_quat / double(n_windows);
            for (int k = 0; k < cfg.quat_frames; ++k) {
                int f = t + k * cfg.quat_interval;
                auto gseg = grad->segment(Eigen::Index(f) * lay.size, lay.size);
                const HandParams& p = cur[std::size_t(f)];
                const MatX& gq = wgrads[std::size_t(k)];
                for (int j = 0; j < int(quats[std::size_t(f)].size()); ++j) {
                    Vec4 dq = gq.row(j).transpose();
                    Vec3 v = j == 0 ? p.rot : Vec3(p.theta.segment<3>(3 * (j - 1)));
                    Vec3 dv = quat_from_rotvec_jac(v).transpose() * dq;
                    if (j == 0)
                        gseg.segment<3>(lay.rot0) += wq * dv;
                    else
                        gseg.segment<3>(3 * (j - 1)) += wq * dv;
                }
            }
        }
        bd.quat = quat_acc / double(n_windows);

        std::vector<Points3> g_ts_tex;
        std::vector<VecX> g_ts_beta;
        bd.ts = loss_ts(lighted, betas, grad ? &g_ts_tex : nullptr, grad ? &g_ts_beta : nullptr);
        if (grad)
            for (int f = 0; f < nf; ++f) {
                auto gseg = grad->segment(Eigen::Index(f) * lay.size, lay.size);
                chain_lighted_grad(g_ts_tex[std::size_t(f)], cur[std::size_t(f)].texture,
                                   cur[std::size_t(f)].light, chains[std::size_t(f)],
                                   weights.w_ts, gseg.segment(lay.tex0, lay.n_tex),
                                   gseg.segment(lay.light0, 11));
                gseg.segment(lay.beta0, lay.n_beta) += weights.w_ts * g_ts_beta[std::size_t(f)];
            }
    }

    double total = total_objective(&bd, weights, mode);
    if (bd_out) *bd_out = bd;
    return total;
}

}  // namespace detail

// neutral parameters jittered per frame, translation seeded from the wrist
// detection at the configured working depth
inline std::vector<HandParams> default_fit_init(const HandModel& model,
                                                const std::vector<FrameObservation>& frames,
                                                const FitConfig& cfg) {
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<HandParams> init;
    for (const FrameObservation& obs : frames) {
        HandParams p = neutral_params(model);
        for (int i = 0; i < p.theta.size(); ++i) p.theta[i] = cfg.init_pose_sigma * rng.normal();
        for (int i = 0; i < p.beta.size(); ++i) p.beta[i] = cfg.init_shape_sigma * rng.normal();
        for (int f = 0; f < p.texture.rows(); ++f)
            for (int c = 0; c < 3; ++c) p.texture(f, c) += cfg.init_texture_sigma * rng.normal();
        p.rot = Vec3(rng.normal(), rng.normal(), rng.normal()) * cfg.init_pose_sigma;
        const CameraModel& cam = obs.camera;
        double u = obs.keypoints.points(0, 0) * cam.width;
        double v = obs.keypoints.points(0, 1) * cam.height;
        if (cam.mode == CameraMode::perspective)
            p.trans = Vec3((u - cam.cx) / cam.fx * cfg.init_depth,
                           (v - cam.cy) / cam.fy * cfg.init_depth, cfg.init_depth);
        else
            p.trans = Vec3((u - cam.cx) / cam.scale, (v - cam.cy) / cam.scale, cfg.init_depth);
        init.push_back(std::move(p));
    }
    return init;
}

inline FitResult fit_sequence(const HandModel& model, const std::vector<FrameObservation>& frames,
                              const std::vector<HandParams>& init, const LossWeights& weights,
                              const FitConfig& cfg, FitMode mode) {
    cfg.validate();
    weights.validate();
    if (frames.empty()) throw std::invalid_argument("fit: no frames given");
    if (init.size() != frames.size())
        throw std::invalid_argument("fit: one initial parameter set per frame required");
    const int nf = int(frames.size());
    const int span = (cfg.quat_frames - 1) * cfg.quat_interval;
    if (mode == FitMode::video && nf <= span)
        throw std::invalid_argument("fit: sequence too short for a rotation-coverage window");
    for (const FrameObservation& obs : frames) {
        obs.keypoints.validate();
        obs.camera.validate();
        for (const MatX& ch : obs.image)
            if (ch.rows() != obs.camera.height || ch.cols() != obs.camera.width)
                throw std::invalid_argument("fit: image does not match its camera");
    }

    const detail::FrameLayout lay = detail::frame_layout(model);

    VecX x(Eigen::Index(lay.size) * nf);
    for (int f = 0; f < nf; ++f)
        detail::pack_frame(lay, init[std::size_t(f)], frames[std::size_t(f)].keypoints.points,
                           x.data() + Eigen::Index(f) * lay.size);

    AdamConfig acfg;
    acfg.beta1 = cfg.beta1;
    acfg.beta2 = cfg.beta2;
    acfg.eps = cfg.eps;
    AdamState state;
    state.reset(x.size());
    Rng batch_rng(cfg.seed);

    FitResult result;
    double best_total = std::numeric_limits<double>::infinity();
    auto remember_best = [&](int iter) {
        result.best_iteration = iter;
        result.params.assign(std::size_t(nf), HandParams{});
        result.estimated_2d.assign(std::size_t(nf), Points2());
        for (int f = 0; f < nf; ++f)
            detail::unpack_frame(lay, x.data() + Eigen::Index(f) * lay.size,
                                 &result.params[std::size_t(f)],
                                 &result.estimated_2d[std::size_t(f)]);
    };

    VecX g(x.size());
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        std::vector<bool> fd_frames(std::size_t(nf), false);
        for (int f : batch_rng.sample_without_replacement(nf, std::min(cfg.batch_frames, nf)))
            fd_frames[std::size_t(f)] = true;

        LossBreakdown bd;
        double total =
            detail::eval_objective(model, frames, lay, x, weights, cfg, mode, fd_frames, &bd, &g);

        if (!std::isfinite(total) || total > cfg.divergence_cap) {
            std::vector<HandParams> last(static_cast<std::size_t>(nf));
            Points2 scratch;
            for (int f = 0; f < nf; ++f)
                detail::unpack_frame(lay, x.data() + Eigen::Index(f) * lay.size,
                                     &last[std::size_t(f)], &scratch);
            throw fit_divergence_error(iter, total, std::move(last));
        }
        result.trace.push_back(bd);
        if (total < best_total) {
            best_total = total;
            remember_best(iter);
        }

        acfg.lr = cfg.lr * std::pow(cfg.lr_decay, double(iter / cfg.lr_decay_every));
        adam_step(x, g, state, acfg,
                  [&](Eigen::Index i) { return detail::block_name(lay, i); });
    }
    return result;
}

}  // namespace handfit
