#pragma once

// The fitting objective: keypoint location/orientation terms, photometric
// terms, regularizers, 2D estimation and consistency terms, and the two
// sequence terms (rotation-speed coverage and texture/shape consistency).
// Every term that feeds analytic optimization also exposes its gradient.

#include <handfit/hand_model.hpp>
#include <handfit/quat.hpp>
#include <handfit/render.hpp>
#include <handfit/ssim.hpp>

#include <optional>
#include <vector>

namespace handfit {

struct Keypoints2D {
    Points2 points;  // 21 rows, coordinates normalized to [0,1] by image size
    VecX conf;       // 21 confidences in [0,1]

    void validate() const {
        if (points.rows() != 21 || conf.size() != 21)
            throw std::invalid_argument("keypoints: 21 entries required");
        for (int i = 0; i < 21; ++i)
            if (conf[i] < 0.0 || conf[i] > 1.0)
                throw std::invalid_argument("keypoints: confidence outside [0,1]");
    }
};

struct LossWeights {
    double w_3d = 1.0;
    double w_2d = 0.001;
    double w_cons = 0.0002;
    double w_geo = 0.001;
    double w_photo = 0.005;
    double w_quat = 0.05;
    double w_ts = 0.01;
    double w_regu = 0.01;
    double w_ori = 100.0;
    double w_SSIM = 0.2;
    double w_C = 0.5;
    double w_s = 10.0;
    double w_J = 10.0;

    void validate() const {
        for (double v : {w_3d, w_2d, w_cons, w_geo, w_photo, w_quat, w_ts, w_regu, w_ori, w_SSIM,
                         w_C, w_s, w_J})
            if (!(v >= 0.0)) throw std::invalid_argument("loss weights must be nonnegative");
    }
};

enum class FitMode { image, video };

struct LossBreakdown {
    double loc = 0, ori = 0, pixel = 0, ssim = 0;
    double beta = 0, tex = 0, scale = 0, joints = 0;
    double kp2d = 0, cons = 0;
    double quat = 0, ts = 0;
    bool has_sequence_terms = false;

    // filled by total_objective
    double geo = 0, photo = 0, regu = 0, e3d = 0, total = 0;
};

// ---------------------------------------------------------------------------
// pointwise pieces

inline double smooth_l1(double pred, double target) {
    double d = std::abs(pred - target);
    return d < 1.0 ? 0.5 * d * d : d - 0.5;
}

inline double smooth_l1_grad(double pred, double target) {
    double d = pred - target;
    if (d > 1.0) return 1.0;
    if (d < -1.0) return -1.0;
    return d;
}

// ---------------------------------------------------------------------------
// keypoint terms

// confidence-weighted SmoothL1 between detections and a 21x2 point set;
// grad, when requested, is with respect to the second argument
inline double loss_loc(const Keypoints2D& det, const Points2& pts, Points2* grad = nullptr) {
    det.validate();
    if (pts.rows() != 21) throw std::invalid_argument("loss_loc: 21 points required");
    if (grad) grad->setZero(21, 2);
    double sum = 0.0;
    for (int i = 0; i < 21; ++i) {
        for (int c = 0; c < 2; ++c) {
            sum += det.conf[i] * smooth_l1(pts(i, c), det.points(i, c));
            if (grad) (*grad)(i, c) = det.conf[i] * smooth_l1_grad(pts(i, c), det.points(i, c)) / 21.0;
        }
    }
    return sum / 21.0;
}

// same contract with the estimated free keypoints in place of projections
inline double loss_2d(const Keypoints2D& det, const Points2& est, Points2* grad = nullptr) {
    return loss_loc(det, est, grad);
}

// squared distance of unit bone direction vectors, weighted by the product
// of endpoint confidences; degenerate bones contribute nothing
inline double loss_ori(const Keypoints2D& det, const Points2& proj,
                       const std::vector<std::array<int, 2>>& bones, Points2* grad = nullptr) {
    det.validate();
    if (proj.rows() != 21) throw std::invalid_argument("loss_ori: 21 points required");
    if (bones.empty()) throw std::invalid_argument("loss_ori: empty bone list");
    if (grad) grad->setZero(21, 2);
    const double m = double(bones.size());
    double sum = 0.0;
    for (const auto& bone : bones) {
        int a = bone[0], b = bone[1];
        Vec2 bde = (det.points.row(b) - det.points.row(a)).transpose();
        Vec2 bpr = (proj.row(b) - proj.row(a)).transpose();
        double lde = bde.norm(), lpr = bpr.norm();
        if (lde < 1e-8 || lpr < 1e-8) continue;
        Vec2 nde = bde / lde, npr = bpr / lpr;
        double conf = det.conf[a] * det.conf[b];
        sum += conf * (nde - npr).squaredNorm();
        if (grad) {
            Vec2 dE_dn = (2.0 * conf / m) * (npr - nde);
            Eigen::Matrix2d proj_mat = (Eigen::Matrix2d::Identity() - npr * npr.transpose()) / lpr;
            Vec2 g = proj_mat * dE_dn;  // d n / d bone is symmetric
            grad->row(b) += g.transpose();
            grad->row(a) -= g.transpose();
        }
    }
    return sum / m;
}

inline double loss_geo(double loc, double ori, double w_ori) { return loc + w_ori * ori; }

// unweighted SmoothL1 between projected and estimated 2D joints;
// gradients with respect to both point sets on request
inline double loss_cons(const Points2& proj, const Points2& est, Points2* grad_proj = nullptr,
                        Points2* grad_est = nullptr) {
    if (proj.rows() != 21 || est.rows() != 21)
        throw std::invalid_argument("loss_cons: 21 points required");
    if (grad_proj) grad_proj->setZero(21, 2);
    if (grad_est) grad_est->setZero(21, 2);
    double sum = 0.0;
    for (int i = 0; i < 21; ++i)
        for (int c = 0; c < 2; ++c) {
            sum += smooth_l1(proj(i, c), est(i, c));
            double g = smooth_l1_grad(proj(i, c), est(i, c)) / 21.0;
            if (grad_proj) (*grad_proj)(i, c) = g;
            if (grad_est) (*grad_est)(i, c) = -g;
        }
    return sum / 21.0;
}

// ---------------------------------------------------------------------------
// photometric terms

// confidence-scaled mean absolute color error over the rendered silhouette
inline double loss_pixel(const ImageRGB& input, const RenderOutput& render, double conf_sum,
                         bool normalize = false) {
    int h = int(render.silhouette.rows()), w = int(render.silhouette.cols());
    for (int c = 0; c < 3; ++c)
        if (input[std::size_t(c)].rows() != h || input[std::size_t(c)].cols() != w)
            throw std::invalid_argument("loss_pixel: image size mismatch");
    double area = render.silhouette.sum();
    if (area == 0.0) return 0.0;
    double sum = 0.0;
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            if (render.silhouette(v, u) == 0.0) continue;
            double d = 0.0;
            for (int c = 0; c < 3; ++c)
                d += std::abs(input[std::size_t(c)](v, u) - render.color[std::size_t(c)](v, u));
            sum += d / 3.0;
        }
    double scale = normalize ? conf_sum / 21.0 : conf_sum;
    return scale * sum / area;
}

// structural dissimilarity between the render and the silhouette-masked input
inline double loss_ssim(const ImageRGB& input, const RenderOutput& render,
                        ImageRGB* grad_render = nullptr) {
    ImageRGB masked = input;
    for (int c = 0; c < 3; ++c) masked[std::size_t(c)] = masked[std::size_t(c)].cwiseProduct(render.silhouette);
    double s = ssim(render.color, masked, grad_render);
    if (grad_render)
        for (auto& ch : *grad_render) ch = -ch;
    return 1.0 - s;
}

inline double loss_photo(double pixel, double ssim_term, double w_ssim) {
    return pixel + w_ssim * ssim_term;
}

// ---------------------------------------------------------------------------
// regularizers

struct ReguBreakdown {
    double beta = 0, tex = 0, scale = 0, joints = 0, total = 0;
};

struct ReguGrads {
    VecX dbeta;      // d total / d beta
    Points3 dtex;    // d total / d texture entries
    double dscale = 0;
    VecX dtheta;     // d total / d theta
};

// shape norm, texture gamut hinge, global scale hinge, joint limit hinge
inline ReguBreakdown loss_regu(const HandParams& p, const JointAngleLimits& limits,
                               const LossWeights& w, ReguGrads* grads = nullptr,
                               double s_min = 0.8, double s_max = 1.2) {
    limits.validate();
    ReguBreakdown out;
    int n_art = int(p.theta.size() / 3);
    if (limits.lo.rows() != n_art)
        throw std::invalid_argument("loss_regu: limits rows must match articulated joints");

    if (grads) {
        grads->dbeta = VecX::Zero(p.beta.size());
        grads->dtex = Points3::Zero(p.texture.rows(), 3);
        grads->dscale = 0.0;
        grads->dtheta = VecX::Zero(p.theta.size());
    }

    out.beta = p.beta.norm();
    if (grads && out.beta > 1e-12) grads->dbeta = p.beta / out.beta;

    double n_tex = double(p.texture.size());
    if (n_tex > 0) {
        double acc = 0.0;
        for (int f = 0; f < p.texture.rows(); ++f)
            for (int c = 0; c < 3; ++c) {
                double v = p.texture(f, c);
                double hinge = v > 1.0 ? v - 1.0 : (v < 0.0 ? v : 0.0);
                acc += hinge * hinge;
                if (grads) grads->dtex(f, c) = w.w_C * 2.0 * hinge / n_tex;
            }
        out.tex = acc / n_tex;
    }

    double s_hinge = p.scale > s_max ? p.scale - s_max : (p.scale < s_min ? p.scale - s_min : 0.0);
    out.scale = s_hinge * s_hinge;
    if (grads) grads->dscale = w.w_s * 2.0 * s_hinge;

    double n_ang = double(3 * n_art);
    double acc_j = 0.0;
    MatX angles = joint_angles(p.theta);
    for (int j = 0; j < n_art; ++j) {
        Vec3 dE_dang = Vec3::Zero();
        for (int c = 0; c < 3; ++c) {
            double hi = limits.hi(j, c), lo = limits.lo(j, c);
            double a = angles(j, c);
            double hinge = a > hi ? a - hi : (a < lo ? a - lo : 0.0);
            acc_j += hinge * hinge;
            dE_dang[c] = 2.0 * hinge / n_ang;
        }
        if (grads && dE_dang.squaredNorm() > 0.0)
            grads->dtheta.segment<3>(3 * j) =
                w.w_J * (joint_angles_jac(p.theta, j).transpose() * dE_dang);
    }
    out.joints = acc_j / n_ang;

    out.total = out.beta + w.w_C * out.tex + w.w_s * out.scale + w.w_J * out.joints;
    return out;
}

// ---------------------------------------------------------------------------
// sequence terms

// per-joint accumulated rotation angle minus the direct first-to-last angle,
// L2 over joints; zero exactly on single-axis monotone trajectories.
// uses the raw angle form so finite-difference probes of the gradient stay
// valid slightly off the unit sphere
inline double loss_quat(const std::vector<PoseQuaternions>& seq,
                        std::vector<MatX>* grads = nullptr) {
    if (seq.size() < 2) throw std::invalid_argument("loss_quat: at least two frames required");
    int n = int(seq.size());
    int nj = int(seq[0].size());
    for (const auto& frame : seq)
        if (int(frame.size()) != nj) throw std::invalid_argument("loss_quat: ragged joint counts");

    VecX r(nj);
    for (int j = 0; j < nj; ++j) {
        double acc = 0.0;
        for (int i = 0; i + 1 < n; ++i)
            acc += rotation_angle_raw(seq[std::size_t(i)][std::size_t(j)],
                                      seq[std::size_t(i + 1)][std::size_t(j)]);
        r[j] = acc - rotation_angle_raw(seq[0][std::size_t(j)], seq[std::size_t(n - 1)][std::size_t(j)]);
    }
    double e = r.norm();

    if (grads) {
        grads->assign(std::size_t(n), MatX::Zero(nj, 4));
        if (e > 1e-12) {
            VecX dE_dr = r / e;
            for (int j = 0; j < nj; ++j) {
                Vec4 da, db;
                for (int i = 0; i + 1 < n; ++i) {
                    rotation_angle_grad(seq[std::size_t(i)][std::size_t(j)],
                                        seq[std::size_t(i + 1)][std::size_t(j)], &da, &db);
                    (*grads)[std::size_t(i)].row(j) += dE_dr[j] * da.transpose();
                    (*grads)[std::size_t(i + 1)].row(j) += dE_dr[j] * db.transpose();
                }
                rotation_angle_grad(seq[0][std::size_t(j)], seq[std::size_t(n - 1)][std::size_t(j)],
                                    &da, &db);
                (*grads)[0].row(j) -= dE_dr[j] * da.transpose();
                (*grads)[std::size_t(n - 1)].row(j) -= dE_dr[j] * db.transpose();
            }
        }
    }
    return e;
}

// spread of lighted textures and shapes around their sequence means
inline double loss_ts(const std::vector<Points3>& lighted, const std::vector<VecX>& betas,
                      std::vector<Points3>* grad_tex = nullptr,
                      std::vector<VecX>* grad_beta = nullptr) {
    if (lighted.empty() || lighted.size() != betas.size())
        throw std::invalid_argument("loss_ts: matched nonempty sequences required");
    int n = int(lighted.size());

    Points3 mean_tex = Points3::Zero(lighted[0].rows(), 3);
    for (const auto& t : lighted) mean_tex += t;
    mean_tex /= double(n);
    VecX mean_beta = VecX::Zero(betas[0].size());
    for (const auto& b : betas) mean_beta += b;
    mean_beta /= double(n);

    if (grad_tex) grad_tex->assign(std::size_t(n), Points3::Zero(lighted[0].rows(), 3));
    if (grad_beta) grad_beta->assign(std::size_t(n), VecX::Zero(betas[0].size()));

    double sum = 0.0;
    Points3 tex_unit_sum = Points3::Zero(lighted[0].rows(), 3);
    VecX beta_unit_sum = VecX::Zero(betas[0].size());
    for (int i = 0; i < n; ++i) {
        Points3 dt = lighted[std::size_t(i)] - mean_tex;
        double lt = std::sqrt(dt.squaredNorm());
        sum += lt;
        if (grad_tex && lt > 1e-12) {
            (*grad_tex)[std::size_t(i)] += dt / lt;
            tex_unit_sum += dt / lt;
        }
        VecX db = betas[std::size_t(i)] - mean_beta;
        double lb = db.norm();
        sum += lb;
        if (grad_beta && lb > 1e-12) {
            (*grad_beta)[std::size_t(i)] += db / lb;
            beta_unit_sum += db / lb;
        }
    }
    // the mean couples every frame: d mean / d x_i = 1/n
    if (grad_tex)
        for (auto& g : *grad_tex) g -= tex_unit_sum / double(n);
    if (grad_beta)
        for (auto& g : *grad_beta) g -= beta_unit_sum / double(n);
    return sum;
}

// ---------------------------------------------------------------------------
// totals

inline double total_objective(LossBreakdown* b, const LossWeights& w, FitMode mode) {
    w.validate();
    if (mode == FitMode::video && !b->has_sequence_terms)
        throw std::invalid_argument("total_objective: video mode needs the sequence terms");
    b->geo = loss_geo(b->loc, b->ori, w.w_ori);
    b->photo = loss_photo(b->pixel, b->ssim, w.w_SSIM);
    b->regu = b->beta + w.w_C * b->tex + w.w_s * b->scale + w.w_J * b->joints;
    b->e3d = w.w_geo * b->geo + w.w_photo * b->photo + w.w_regu * b->regu;
    b->total = w.w_3d * b->e3d + w.w_2d * b->kp2d + w.w_cons * b->cons;
    if (mode == FitMode::video) b->total += w.w_quat * b->quat + w.w_ts * b->ts;
    return b->total;
}

}  // namespace handfit
