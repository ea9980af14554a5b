#pragma once

// Evaluation protocol: similarity alignment, joint/vertex errors, PCK AUC,
// F-scores, acceleration smoothness, and sequence-consistency deviations.
// Point sets are in meters; reported errors use the units in the field names.

#include <handfit/image.hpp>

#include <optional>
#include <vector>

#include <Eigen/Geometry>
#include <Eigen/SVD>

namespace handfit {

struct SimilarityTransform {
    double s = 1.0;
    Mat3 r = Mat3::Identity();
    Vec3 t = Vec3::Zero();

    Points3 apply(const Points3& pts) const {
        Points3 out(pts.rows(), 3);
        for (int i = 0; i < pts.rows(); ++i)
            out.row(i) = (s * (r * pts.row(i).transpose()) + t).transpose();
        return out;
    }
};

// least-squares similarity (proper rotation only) taking pred onto gt
inline SimilarityTransform procrustes_align(const Points3& pred, const Points3& gt,
                                            Points3* aligned = nullptr) {
    if (pred.rows() != gt.rows()) throw std::invalid_argument("procrustes: point counts differ");
    int n = int(pred.rows());
    if (n < 3) throw std::invalid_argument("procrustes: at least three points required");

    Vec3 mu_p = pred.colwise().mean().transpose();
    Vec3 mu_g = gt.colwise().mean().transpose();
    Mat3 cov = Mat3::Zero();
    double var_p = 0.0;
    for (int i = 0; i < n; ++i) {
        Vec3 dp = pred.row(i).transpose() - mu_p;
        Vec3 dg = gt.row(i).transpose() - mu_g;
        cov += dg * dp.transpose();
        var_p += dp.squaredNorm();
    }
    cov /= double(n);
    var_p /= double(n);

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 d = svd.singularValues();
    // rank < 2 leaves a rotation axis undetermined
    if (d[1] < 1e-12 * std::max(1.0, d[0]))
        throw alignment_error("procrustes: degenerate point configuration");

    Vec3 sign_fix = Vec3::Ones();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) sign_fix[2] = -1.0;

    SimilarityTransform out;
    out.r = svd.matrixU() * sign_fix.asDiagonal() * svd.matrixV().transpose();
    out.s = d.dot(sign_fix) / var_p;
    out.t = mu_g - out.s * (out.r * mu_p);
    if (aligned) *aligned = out.apply(pred);
    return out;
}

// mean Euclidean distance in centimeters, optionally after alignment
inline double mean_point_error(const Points3& pred, const Points3& gt, bool align) {
    if (pred.rows() != gt.rows())
        throw std::invalid_argument("mean_point_error: point counts differ");
    Points3 p = pred;
    if (align) procrustes_align(pred, gt, &p);
    double acc = 0.0;
    for (int i = 0; i < p.rows(); ++i) acc += (p.row(i) - gt.row(i)).norm();
    return 100.0 * acc / double(p.rows());
}

// area under the fraction-below-threshold curve over a 100-point grid,
// trapezoidal rule, normalized to [0, 1]
inline double pck_auc(const std::vector<double>& errors_mm, double max_mm = 50.0,
                      int steps = 100) {
    if (errors_mm.empty()) throw std::invalid_argument("pck_auc: no errors given");
    if (steps < 2 || !(max_mm > 0.0)) throw std::invalid_argument("pck_auc: bad grid");
    auto pck = [&](double tau) {
        int hit = 0;
        for (double e : errors_mm)
            if (e <= tau) ++hit;
        return double(hit) / double(errors_mm.size());
    };
    double dt = max_mm / double(steps - 1);
    double area = 0.0;
    double prev = pck(0.0);
    for (int k = 1; k < steps; ++k) {
        double cur = pck(dt * double(k));
        area += 0.5 * (prev + cur) * dt;
        prev = cur;
    }
    return area / max_mm;
}

// harmonic mean of vertex precision and recall at a millimeter threshold
inline double f_score(const Points3& pred, const Points3& gt, double tau_mm) {
    if (pred.rows() == 0 || gt.rows() == 0) throw std::invalid_argument("f_score: empty set");
    double tau = tau_mm * 1e-3;
    auto covered = [&](const Points3& from, const Points3& to) {
        int hit = 0;
        for (int i = 0; i < from.rows(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < to.rows(); ++j)
                best = std::min(best, (from.row(i) - to.row(j)).norm());
            if (best <= tau) ++hit;
        }
        return double(hit) / double(from.rows());
    };
    double precision = covered(pred, gt);
    double recall = covered(gt, pred);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

// mean second-difference acceleration magnitude (mm/s^2) and, with ground
// truth, the mean acceleration error
inline std::pair<double, std::optional<double>> acceleration_metrics(
    const std::vector<Points3>& pred, const std::vector<Points3>* gt, double fps) {
    if (pred.size() < 3) throw std::invalid_argument("acceleration: at least three frames");
    if (!(fps > 0.0)) throw std::invalid_argument("acceleration: fps must be positive");
    if (gt && gt->size() != pred.size())
        throw std::invalid_argument("acceleration: frame counts differ");
    int n = int(pred.size());
    int pts = int(pred[0].rows());
    double f2 = fps * fps;
    double acc = 0.0, err = 0.0;
    long count = 0;
    for (int t = 1; t + 1 < n; ++t) {
        Points3 a = (pred[std::size_t(t + 1)] - 2.0 * pred[std::size_t(t)] +
                     pred[std::size_t(t - 1)]) * f2;
        Points3 ag;
        if (gt)
            ag = ((*gt)[std::size_t(t + 1)] - 2.0 * (*gt)[std::size_t(t)] +
                  (*gt)[std::size_t(t - 1)]) * f2;
        for (int i = 0; i < pts; ++i) {
            acc += a.row(i).norm();
            if (gt) err += (a.row(i) - ag.row(i)).norm();
            ++count;
        }
    }
    acc = 1000.0 * acc / double(count);
    std::optional<double> acc_err;
    if (gt) acc_err = 1000.0 * err / double(count);
    return {acc, acc_err};
}

struct ConsistencySD {
    double texture_sd = 0.0;       // mean per-dimension population SD, [0,1] units
    double shape_sd = 0.0;         // mean per-dimension population SD of shape vectors
    Points3 per_face_sd;           // per-face per-channel SD in 0-255 RGB units
};

inline ConsistencySD consistency_sd(const std::vector<Points3>& lighted,
                                    const std::vector<VecX>& betas) {
    if (lighted.size() < 2 || lighted.size() != betas.size())
        throw std::invalid_argument("consistency_sd: need two or more matched frames");
    int n = int(lighted.size());
    int faces = int(lighted[0].rows());
    int dims = int(betas[0].size());

    Points3 mean_tex = Points3::Zero(faces, 3);
    for (const auto& t : lighted) mean_tex += t;
    mean_tex /= double(n);
    Points3 var_tex = Points3::Zero(faces, 3);
    for (const auto& t : lighted) var_tex += (t - mean_tex).cwiseProduct(t - mean_tex);
    var_tex /= double(n);

    ConsistencySD out;
    out.per_face_sd = 255.0 * var_tex.cwiseSqrt();
    out.texture_sd = var_tex.cwiseSqrt().mean();

    VecX mean_beta = VecX::Zero(dims);
    for (const auto& b : betas) mean_beta += b;
    mean_beta /= double(n);
    VecX var_beta = VecX::Zero(dims);
    for (const auto& b : betas) var_beta += (b - mean_beta).cwiseProduct(b - mean_beta);
    var_beta /= double(n);
    out.shape_sd = var_beta.cwiseSqrt().mean();
    return out;
}

struct MetricsReport {
    std::optional<double> mpjpe_cm, mpvpe_cm;
    std::optional<double> auc_j, auc_v;
    std::optional<double> f5, f15;
    std::optional<double> acc, acc_err;   // mm/s^2
    std::optional<double> mean_quat;      // sequence rotation-coverage metric
    std::optional<double> texture_sd, shape_sd;
};

}  // namespace handfit
