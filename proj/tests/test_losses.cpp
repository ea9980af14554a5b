#include <handfit/hand_factory.hpp>
#include <handfit/losses.hpp>
#include <handfit/fit_io.hpp>

#include "oracle_utils.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

using namespace handfit;
using Catch::Approx;
using Catch::Matchers::WithinAbs;

namespace {

// OpenPose wrist-rooted skeleton, four bones per finger
std::vector<std::array<int, 2>> skeleton20() {
    std::vector<std::array<int, 2>> bones;
    for (int f = 0; f < 5; ++f) {
        int base = 1 + 4 * f;
        bones.push_back({0, base});
        for (int k = 0; k < 3; ++k) bones.push_back({base + k, base + k + 1});
    }
    return bones;
}

Keypoints2D random_keypoints(Rng& rng) {
    Keypoints2D kp;
    kp.points.resize(21, 2);
    kp.conf.resize(21);
    for (int i = 0; i < 21; ++i) {
        kp.points(i, 0) = rng.uniform(0.1, 0.9);
        kp.points(i, 1) = rng.uniform(0.1, 0.9);
        kp.conf[i] = rng.uniform(0.2, 1.0);
    }
    return kp;
}

Points2 random_points21(Rng& rng) {
    Points2 p(21, 2);
    for (int i = 0; i < 21; ++i) {
        p(i, 0) = rng.uniform(0.1, 0.9);
        p(i, 1) = rng.uniform(0.1, 0.9);
    }
    return p;
}

ImageRGB constant_image(int h, int w, double r, double g, double b) {
    ImageRGB img = make_image_rgb(h, w);
    img[0].setConstant(r);
    img[1].setConstant(g);
    img[2].setConstant(b);
    return img;
}

RenderOutput full_screen_render(int h, int w, double r, double g, double b) {
    RenderOutput out;
    out.silhouette = MatX::Ones(h, w);
    out.color = constant_image(h, w, r, g, b);
    out.depth = MatX::Constant(h, w, 1.0);
    out.face_id = Eigen::MatrixXi::Zero(h, w);
    return out;
}

Quaternion random_unit_quat(Rng& rng) {
    Quaternion q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return q.normalized();
}

// worst |analytic - fd| over entries with a unit floor on the denominator
double grad_mismatch(double analytic, double fd) {
    return std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
}

}  // namespace

TEST_CASE("smooth l1 follows the huber branches") {
    CHECK(smooth_l1(3.0, 3.0) == 0.0);
    CHECK_THAT(smooth_l1(3.5, 3.0), WithinAbs(0.125, 1e-15));
    CHECK_THAT(smooth_l1(1.0, 3.0), WithinAbs(1.5, 1e-15));
    CHECK_THAT(smooth_l1(0.0, 1.0), WithinAbs(0.5, 1e-15));  // branches meet at d=1

    // gradient matches each branch and stays within [-1, 1]
    CHECK_THAT(smooth_l1_grad(3.5, 3.0), WithinAbs(0.5, 1e-15));
    CHECK_THAT(smooth_l1_grad(1.0, 3.0), WithinAbs(-1.0, 1e-15));
    CHECK_THAT(smooth_l1_grad(5.0, 3.0), WithinAbs(1.0, 1e-15));
    Rng rng(41);
    for (int t = 0; t < 200; ++t) {
        double p = rng.uniform(-3.0, 3.0), q = rng.uniform(-3.0, 3.0);
        if (std::abs(std::abs(p - q) - 1.0) < 1e-3) continue;
        double h = 1e-6;
        double fd = (smooth_l1(p + h, q) - smooth_l1(p - h, q)) / (2 * h);
        CHECK_THAT(smooth_l1_grad(p, q), WithinAbs(fd, 1e-8));
    }
}

TEST_CASE("keypoint location term") {
    Rng rng(42);
    Keypoints2D det = random_keypoints(rng);

    SECTION("zero at exact agreement") {
        CHECK(loss_loc(det, det.points) == 0.0);
    }
    SECTION("confidence gating") {
        Keypoints2D mute = det;
        mute.conf.setZero();
        CHECK(loss_loc(mute, random_points21(rng)) == 0.0);
    }
    SECTION("single-joint closed form") {
        Keypoints2D sure = det;
        sure.conf.setOnes();
        Points2 proj = sure.points;
        proj(7, 0) += 0.5;
        CHECK_THAT(loss_loc(sure, proj), WithinAbs(0.125 / 21.0, 1e-12));
    }
    SECTION("validation") {
        Keypoints2D bad = det;
        bad.conf[3] = 1.5;
        CHECK_THROWS_AS(loss_loc(bad, det.points), std::invalid_argument);
        CHECK_THROWS_AS(loss_loc(det, Points2::Zero(20, 2)), std::invalid_argument);
    }
    SECTION("gradient vs finite differences") {
        for (int t = 0; t < 5; ++t) {
            Points2 proj = random_points21(rng);
            Points2 grad;
            loss_loc(det, proj, &grad);
            double h = 1e-5;
            for (int i = 0; i < 21; ++i)
                for (int c = 0; c < 2; ++c) {
                    if (std::abs(std::abs(proj(i, c) - det.points(i, c)) - 1.0) < 1e-3) continue;
                    Points2 pp = proj, pm = proj;
                    pp(i, c) += h;
                    pm(i, c) -= h;
                    double fd = (loss_loc(det, pp) - loss_loc(det, pm)) / (2 * h);
                    REQUIRE(grad_mismatch(grad(i, c), fd) < 1e-4);
                }
        }
    }
}

TEST_CASE("bone orientation term") {
    Rng rng(43);
    auto bones = skeleton20();
    Keypoints2D det = random_keypoints(rng);
    det.conf.setOnes();

    SECTION("zero at exact agreement") {
        CHECK(loss_ori(det, det.points, bones) == 0.0);
    }
    SECTION("opposite bone scores 4/20") {
        // flip one tip across its parent so only that bone direction reverses
        Points2 proj = det.points;
        int tip = 4, parent = 3;
        proj.row(tip) = 2.0 * det.points.row(parent) - det.points.row(tip);
        CHECK_THAT(loss_ori(det, proj, bones), WithinAbs(4.0 / 20.0, 1e-12));
    }
    SECTION("perpendicular bone scores 2/20") {
        Points2 proj = det.points;
        Vec2 b = (det.points.row(4) - det.points.row(3)).transpose();
        proj.row(4) = det.points.row(3) + Eigen::RowVector2d(-b.y(), b.x());
        CHECK_THAT(loss_ori(det, proj, bones), WithinAbs(2.0 / 20.0, 1e-12));
    }
    SECTION("degenerate bones contribute nothing") {
        Points2 proj = det.points;
        proj.row(4) = proj.row(3);  // projected bone collapses
        Points2 ref = det.points;
        ref.row(8) = 2.0 * det.points.row(7) - det.points.row(8);
        proj.row(8) = ref.row(8);
        // only the flipped bone counts; the collapsed one is skipped
        CHECK_THAT(loss_ori(det, proj, bones), WithinAbs(4.0 / 20.0, 1e-12));
    }
    SECTION("confidence product gating") {
        Keypoints2D half = det;
        half.conf[4] = 0.5;
        Points2 proj = det.points;
        proj.row(4) = 2.0 * det.points.row(3) - det.points.row(4);
        CHECK_THAT(loss_ori(half, proj, bones), WithinAbs(0.5 * 4.0 / 20.0, 1e-12));
    }
    SECTION("gradient vs finite differences") {
        for (int t = 0; t < 5; ++t) {
            Points2 proj = random_points21(rng);
            Points2 grad;
            loss_ori(det, proj, bones, &grad);
            double h = 1e-5;
            for (int i = 0; i < 21; ++i)
                for (int c = 0; c < 2; ++c) {
                    Points2 pp = proj, pm = proj;
                    pp(i, c) += h;
                    pm(i, c) -= h;
                    double fd = (loss_ori(det, pp, bones) - loss_ori(det, pm, bones)) / (2 * h);
                    REQUIRE(grad_mismatch(grad(i, c), fd) < 1e-4);
                }
        }
    }
}

TEST_CASE("geometric and photometric totals are weighted sums") {
    CHECK(loss_geo(0.0, 0.0, 123.0) == 0.0);
    CHECK_THAT(loss_geo(0.1, 0.001, 100.0), WithinAbs(0.2, 1e-15));
    CHECK(loss_photo(0.0, 0.0, 0.2) == 0.0);
    CHECK_THAT(loss_photo(1.0, 0.5, 0.2), WithinAbs(1.1, 1e-15));
}

TEST_CASE("pixel color term") {
    int h = 16, w = 16;

    SECTION("zero when render reproduces the masked input") {
        ImageRGB input = constant_image(h, w, 0.3, 0.6, 0.9);
        RenderOutput render = full_screen_render(h, w, 0.3, 0.6, 0.9);
        CHECK(loss_pixel(input, render, 21.0) == 0.0);
    }
    SECTION("uniform difference closed form and conf scaling") {
        ImageRGB input = constant_image(h, w, 0.5, 0.5, 0.5);
        RenderOutput render = full_screen_render(h, w, 0.6, 0.6, 0.6);
        CHECK_THAT(loss_pixel(input, render, 21.0), WithinAbs(2.1, 1e-12));
        CHECK_THAT(loss_pixel(input, render, 42.0), WithinAbs(4.2, 1e-12));
        // the optional flag divides the confidence mass by the keypoint count
        CHECK_THAT(loss_pixel(input, render, 21.0, true), WithinAbs(0.1, 1e-12));
    }
    SECTION("only silhouette pixels count") {
        ImageRGB input = constant_image(h, w, 0.0, 0.0, 0.0);
        RenderOutput render = full_screen_render(h, w, 1.0, 1.0, 1.0);
        render.silhouette.setZero();
        render.silhouette(3, 3) = 1.0;
        render.silhouette(3, 4) = 1.0;
        input[0](3, 4) = 1.0;
        input[1](3, 4) = 1.0;
        input[2](3, 4) = 1.0;
        // one pixel off by 1, one perfect, area 2
        CHECK_THAT(loss_pixel(input, render, 21.0), WithinAbs(21.0 * 0.5, 1e-12));
    }
    SECTION("empty silhouette scores zero") {
        ImageRGB input = constant_image(h, w, 0.2, 0.2, 0.2);
        RenderOutput render = full_screen_render(h, w, 0.9, 0.9, 0.9);
        render.silhouette.setZero();
        CHECK(loss_pixel(input, render, 21.0) == 0.0);
    }
    SECTION("dimension mismatch throws") {
        ImageRGB input = constant_image(h, w + 1, 0.2, 0.2, 0.2);
        RenderOutput render = full_screen_render(h, w, 0.9, 0.9, 0.9);
        CHECK_THROWS_AS(loss_pixel(input, render, 21.0), std::invalid_argument);
    }
}

TEST_CASE("structural dissimilarity term") {
    int h = 16, w = 16;

    SECTION("zero when render equals the masked input") {
        ImageRGB input = constant_image(h, w, 0.4, 0.5, 0.6);
        RenderOutput render = full_screen_render(h, w, 0.4, 0.5, 0.6);
        CHECK_THAT(loss_ssim(input, render), WithinAbs(0.0, 1e-12));
    }
    SECTION("constant offset matches the closed form") {
        // constant images have zero variance, so only the luminance factor
        // survives: ssim = (2ab + c1) / (a^2 + b^2 + c1)
        double a = 0.5, b = 0.6, c1 = 1e-4;
        ImageRGB input = constant_image(h, w, a, a, a);
        RenderOutput render = full_screen_render(h, w, b, b, b);
        double expect = 1.0 - (2 * a * b + c1) / (a * a + b * b + c1);
        CHECK_THAT(loss_ssim(input, render), WithinAbs(expect, 1e-9));
    }
    SECTION("bounded by [0, 2] and gradient matches finite differences") {
        Rng rng(44);
        ImageRGB input = make_image_rgb(h, w);
        RenderOutput render = full_screen_render(h, w, 0, 0, 0);
        for (int c = 0; c < 3; ++c)
            for (int v = 0; v < h; ++v)
                for (int u = 0; u < w; ++u) {
                    input[std::size_t(c)](v, u) = rng.uniform();
                    render.color[std::size_t(c)](v, u) = rng.uniform();
                }
        ImageRGB grad;
        double e = loss_ssim(input, render, &grad);
        CHECK(e >= 0.0);
        CHECK(e <= 2.0);
        double step = 1e-6;
        for (int t = 0; t < 30; ++t) {
            int c = int(rng.below(3)), v = int(rng.below(std::uint64_t(h))),
                u = int(rng.below(std::uint64_t(w)));
            RenderOutput rp = render, rm = render;
            rp.color[std::size_t(c)](v, u) += step;
            rm.color[std::size_t(c)](v, u) -= step;
            double fd = (loss_ssim(input, rp) - loss_ssim(input, rm)) / (2 * step);
            REQUIRE_THAT(grad[std::size_t(c)](v, u), WithinAbs(fd, 1e-7 + 1e-5 * std::abs(fd)));
        }
    }
    SECTION("window larger than the image throws") {
        ImageRGB input = constant_image(8, 16, 0.5, 0.5, 0.5);
        RenderOutput render = full_screen_render(8, 16, 0.5, 0.5, 0.5);
        CHECK_THROWS_AS(loss_ssim(input, render), std::invalid_argument);
    }
}

TEST_CASE("parameter regularizer") {
    HandModel model = build_default_hand_model();
    LossWeights w;

    SECTION("zero at the neutral parameters") {
        HandParams p = neutral_params(model);
        ReguBreakdown b = loss_regu(p, model.limits, w);
        CHECK(b.beta == 0.0);
        CHECK(b.tex == 0.0);
        CHECK(b.scale == 0.0);
        CHECK(b.joints == 0.0);
        CHECK(b.total == 0.0);
    }
    SECTION("unit shape vector scores exactly one") {
        HandParams p = neutral_params(model);
        p.beta[0] = 1.0;
        CHECK_THAT(loss_regu(p, model.limits, w).beta, WithinAbs(1.0, 1e-15));
    }
    SECTION("single out-of-gamut texture entry") {
        HandParams p = neutral_params(model);
        p.texture.setConstant(0.5);
        p.texture(7, 2) = 1.2;
        double f_count = double(model.faces.rows());
        CHECK_THAT(loss_regu(p, model.limits, w).tex, WithinAbs(0.04 / (3.0 * f_count), 1e-15));
    }
    SECTION("scale hinge is symmetric about the band") {
        HandParams p = neutral_params(model);
        p.scale = 1.3;
        CHECK_THAT(loss_regu(p, model.limits, w).scale, WithinAbs(0.01, 1e-12));
        p.scale = 0.7;
        CHECK_THAT(loss_regu(p, model.limits, w).scale, WithinAbs(0.01, 1e-12));
        p.scale = 1.0;
        CHECK(loss_regu(p, model.limits, w).scale == 0.0);
    }
    SECTION("joint hinge activates outside the limits") {
        HandParams p = neutral_params(model);
        CHECK(loss_regu(p, model.limits, w).joints == 0.0);
        p.theta[2] = 2.5;  // roll beyond the 1.92 cap
        CHECK(loss_regu(p, model.limits, w).joints > 0.0);
    }
    SECTION("gradients vs finite differences") {
        Rng rng(45);
        auto eval = [&](const HandParams& p) { return loss_regu(p, model.limits, w).total; };
        for (int t = 0; t < 3; ++t) {
            HandParams p = neutral_params(model);
            for (int i = 0; i < p.beta.size(); ++i) p.beta[i] = rng.normal() * 0.3;
            for (int i = 0; i < p.theta.size(); ++i) p.theta[i] = rng.normal() * 0.4;
            p.scale = (t % 2 == 0) ? 1.35 : 0.65;
            for (int f = 0; f < p.texture.rows(); ++f)
                for (int c = 0; c < 3; ++c) p.texture(f, c) = rng.uniform(-0.4, 1.4);

            ReguGrads g;
            loss_regu(p, model.limits, w, &g);
            double h = 1e-5;

            for (int i = 0; i < p.beta.size(); ++i) {
                HandParams pp = p, pm = p;
                pp.beta[i] += h;
                pm.beta[i] -= h;
                double fd = (eval(pp) - eval(pm)) / (2 * h);
                REQUIRE(grad_mismatch(g.dbeta[i], fd) < 1e-4);
            }
            {
                HandParams pp = p, pm = p;
                pp.scale += h;
                pm.scale -= h;
                double fd = (eval(pp) - eval(pm)) / (2 * h);
                REQUIRE(grad_mismatch(g.dscale, fd) < 1e-4);
            }
            MatX angles = joint_angles(p.theta);
            for (int j = 0; j < angles.rows(); ++j) {
                bool near_edge = false;
                for (int c = 0; c < 3; ++c)
                    if (std::abs(angles(j, c) - model.limits.lo(j, c)) < 1e-3 ||
                        std::abs(angles(j, c) - model.limits.hi(j, c)) < 1e-3)
                        near_edge = true;
                if (near_edge) continue;
                for (int c = 0; c < 3; ++c) {
                    HandParams pp = p, pm = p;
                    pp.theta[3 * j + c] += h;
                    pm.theta[3 * j + c] -= h;
                    double fd = (eval(pp) - eval(pm)) / (2 * h);
                    REQUIRE(grad_mismatch(g.dtheta[3 * j + c], fd) < 1e-4);
                }
            }
            for (int probe = 0; probe < 40; ++probe) {
                int f = int(rng.below(std::uint64_t(p.texture.rows())));
                int c = int(rng.below(3));
                if (std::abs(p.texture(f, c)) < 1e-3 || std::abs(p.texture(f, c) - 1.0) < 1e-3)
                    continue;
                HandParams pp = p, pm = p;
                pp.texture(f, c) += h;
                pm.texture(f, c) -= h;
                double fd = (eval(pp) - eval(pm)) / (2 * h);
                REQUIRE(grad_mismatch(g.dtex(f, c), fd) < 1e-4);
            }
        }
    }
}

TEST_CASE("estimated keypoint term shares the location contract") {
    Rng rng(46);
    Keypoints2D det = random_keypoints(rng);
    det.conf.setOnes();
    Points2 est = det.points;
    est(7, 0) += 0.5;
    CHECK_THAT(loss_2d(det, est), WithinAbs(0.125 / 21.0, 1e-12));
    CHECK(loss_2d(det, est) == loss_loc(det, est));
}

TEST_CASE("projection consistency term") {
    Rng rng(47);
    Points2 a = random_points21(rng);

    SECTION("zero at agreement, symmetric, closed form") {
        CHECK(loss_cons(a, a) == 0.0);
        Points2 b = a;
        b(2, 0) += 2.0;
        CHECK_THAT(loss_cons(a, b), WithinAbs(1.5 / 21.0, 1e-12));
        Points2 c = random_points21(rng);
        CHECK_THAT(loss_cons(a, c), WithinAbs(loss_cons(c, a), 1e-15));
    }
    SECTION("no confidence enters") {
        // identical to loss_loc with unit confidences
        Keypoints2D unit;
        unit.points = a;
        unit.conf = VecX::Ones(21);
        Points2 b = random_points21(rng);
        CHECK_THAT(loss_cons(a, b), WithinAbs(loss_loc(unit, b), 1e-15));
    }
    SECTION("gradients for both arguments") {
        Points2 b = random_points21(rng);
        Points2 ga, gb;
        loss_cons(a, b, &ga, &gb);
        double h = 1e-5;
        for (int i = 0; i < 21; ++i)
            for (int c = 0; c < 2; ++c) {
                if (std::abs(std::abs(a(i, c) - b(i, c)) - 1.0) < 1e-3) continue;
                Points2 ap = a, am = a;
                ap(i, c) += h;
                am(i, c) -= h;
                double fd = (loss_cons(ap, b) - loss_cons(am, b)) / (2 * h);
                REQUIRE(grad_mismatch(ga(i, c), fd) < 1e-4);
                Points2 bp = b, bm = b;
                bp(i, c) += h;
                bm(i, c) -= h;
                fd = (loss_cons(a, bp) - loss_cons(a, bm)) / (2 * h);
                REQUIRE(grad_mismatch(gb(i, c), fd) < 1e-4);
            }
    }
}

TEST_CASE("rotation speed coverage term") {
    Rng rng(48);

    SECTION("needs at least two frames and consistent joint counts") {
        std::vector<PoseQuaternions> one(1, PoseQuaternions(3));
        CHECK_THROWS_AS(loss_quat(one), std::invalid_argument);
        std::vector<PoseQuaternions> ragged = {PoseQuaternions(3), PoseQuaternions(2)};
        CHECK_THROWS_AS(loss_quat(ragged), std::invalid_argument);
    }
    SECTION("two frames telescope to zero") {
        for (int t = 0; t < 20; ++t) {
            std::vector<PoseQuaternions> seq(2, PoseQuaternions());
            for (int j = 0; j < 4; ++j) {
                seq[0].push_back(random_unit_quat(rng));
                seq[1].push_back(random_unit_quat(rng));
            }
            CHECK_THAT(loss_quat(seq), WithinAbs(0.0, 1e-12));
        }
    }
    SECTION("single-axis monotone trajectories score zero at any speeds") {
        Vec3 axis(0, 0, 1);
        double deg = kPi / 180.0;
        std::vector<PoseQuaternions> seq(3, PoseQuaternions());
        seq[0].push_back(quat_from_axis_angle(axis, 0.0));
        seq[1].push_back(quat_from_axis_angle(axis, 10.0 * deg));
        seq[2].push_back(quat_from_axis_angle(axis, 25.0 * deg));
        CHECK_THAT(loss_quat(seq), WithinAbs(0.0, 1e-12));

        // uneven speeds on a shared axis, several joints, more frames
        Vec3 tilted = Vec3(1, 2, -1).normalized();
        std::vector<PoseQuaternions> run(5, PoseQuaternions());
        std::vector<double> marks = {0.0, 0.3, 0.35, 1.1, 2.6};
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 3; ++j)
                run[std::size_t(i)].push_back(quat_from_axis_angle(tilted, marks[std::size_t(i)] * (j + 1) * 0.3));
        CHECK_THAT(loss_quat(run), WithinAbs(0.0, 1e-10));
    }
    SECTION("axis changes are detected and match a matrix oracle") {
        std::vector<PoseQuaternions> seq(3, PoseQuaternions());
        seq[0].push_back(quat_from_axis_angle(Vec3(0, 0, 1), 0.2));
        seq[1].push_back(quat_from_axis_angle(Vec3(1, 0, 0), 0.7));
        seq[2].push_back(quat_from_axis_angle(Vec3(0, 0, 1), 1.1));
        double e = loss_quat(seq);
        CHECK(e > 0.01);

        auto oracle_e = [](const std::vector<PoseQuaternions>& s) {
            int n = int(s.size()), nj = int(s[0].size());
            double sq = 0.0;
            for (int j = 0; j < nj; ++j) {
                auto mat = [&](int i) {
                    const Quaternion& q = s[std::size_t(i)][std::size_t(j)];
                    return oracle::quat_matrix(q.w, q.x, q.y, q.z);
                };
                double acc = 0.0;
                for (int i = 0; i + 1 < n; ++i)
                    acc += oracle::rotation_angle(mat(i).transpose() * mat(i + 1));
                acc -= oracle::rotation_angle(mat(0).transpose() * mat(n - 1));
                sq += acc * acc;
            }
            return std::sqrt(sq);
        };
        CHECK_THAT(e, WithinAbs(oracle_e(seq), 1e-7));

        for (int t = 0; t < 25; ++t) {
            int n = 3 + int(rng.below(4)), nj = 1 + int(rng.below(5));
            std::vector<PoseQuaternions> rand_seq(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < nj; ++j)
                    rand_seq[std::size_t(i)].push_back(random_unit_quat(rng));
            double v = loss_quat(rand_seq);
            CHECK(v >= 0.0);
            CHECK_THAT(v, WithinAbs(oracle_e(rand_seq), 1e-7));
        }
    }
    SECTION("gradient vs finite differences") {
        for (int t = 0; t < 4; ++t) {
            int n = 4, nj = 3;
            std::vector<PoseQuaternions> seq(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < nj; ++j)
                    seq[std::size_t(i)].push_back(random_unit_quat(rng));
            std::vector<MatX> grads;
            double e = loss_quat(seq, &grads);
            if (e < 1e-3) continue;  // norm kink at the origin
            double h = 1e-5;
            auto bump = [&](int i, int j, int c, double d) {
                auto copy = seq;
                Quaternion& q = copy[std::size_t(i)][std::size_t(j)];
                if (c == 0) q.w += d;
                if (c == 1) q.x += d;
                if (c == 2) q.y += d;
                if (c == 3) q.z += d;
                return copy;
            };
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < nj; ++j)
                    for (int c = 0; c < 4; ++c) {
                        double fd =
                            (loss_quat(bump(i, j, c, h)) - loss_quat(bump(i, j, c, -h))) / (2 * h);
                        REQUIRE(grad_mismatch(grads[std::size_t(i)](j, c), fd) < 1e-4);
                    }
        }
    }
}

TEST_CASE("texture and shape spread term") {
    Rng rng(49);
    auto random_tex = [&](int rows) {
        Points3 t(rows, 3);
        for (int i = 0; i < rows; ++i)
            for (int c = 0; c < 3; ++c) t(i, c) = rng.uniform();
        return t;
    };

    SECTION("constant sequences score zero") {
        Points3 tex = random_tex(12);
        VecX beta = VecX::Ones(10) * 0.3;
        std::vector<Points3> texs(4, tex);
        std::vector<VecX> betas(4, beta);
        CHECK(loss_ts(texs, betas) == 0.0);
    }
    SECTION("two-frame shape split scores two") {
        Points3 tex = random_tex(12);
        VecX b1 = VecX::Zero(10), b2 = VecX::Zero(10);
        b2[0] = 2.0;
        std::vector<Points3> texs(2, tex);
        std::vector<VecX> betas = {b1, b2};
        CHECK_THAT(loss_ts(texs, betas), WithinAbs(2.0, 1e-12));
    }
    SECTION("invariant under permutation") {
        std::vector<Points3> texs;
        std::vector<VecX> betas;
        for (int i = 0; i < 5; ++i) {
            texs.push_back(random_tex(9));
            VecX b(10);
            for (int k = 0; k < 10; ++k) b[k] = rng.normal();
            betas.push_back(b);
        }
        double base = loss_ts(texs, betas);
        std::vector<std::size_t> order = {3, 0, 4, 1, 2};
        std::vector<Points3> texs_p;
        std::vector<VecX> betas_p;
        for (std::size_t i : order) {
            texs_p.push_back(texs[i]);
            betas_p.push_back(betas[i]);
        }
        CHECK_THAT(loss_ts(texs_p, betas_p), WithinAbs(base, 1e-12));
    }
    SECTION("validation") {
        std::vector<Points3> texs(2, random_tex(4));
        std::vector<VecX> betas(3, VecX::Zero(10));
        CHECK_THROWS_AS(loss_ts(texs, betas), std::invalid_argument);
        CHECK_THROWS_AS(loss_ts({}, {}), std::invalid_argument);
    }
    SECTION("gradients vs finite differences") {
        for (int t = 0; t < 3; ++t) {
            std::vector<Points3> texs;
            std::vector<VecX> betas;
            for (int i = 0; i < 4; ++i) {
                texs.push_back(random_tex(6));
                VecX b(5);
                for (int k = 0; k < 5; ++k) b[k] = rng.normal();
                betas.push_back(b);
            }
            std::vector<Points3> gt;
            std::vector<VecX> gb;
            loss_ts(texs, betas, &gt, &gb);
            double h = 1e-5;
            for (int i = 0; i < 4; ++i) {
                for (int r = 0; r < 6; ++r)
                    for (int c = 0; c < 3; ++c) {
                        auto tp = texs, tm = texs;
                        tp[std::size_t(i)](r, c) += h;
                        tm[std::size_t(i)](r, c) -= h;
                        double fd = (loss_ts(tp, betas) - loss_ts(tm, betas)) / (2 * h);
                        REQUIRE(grad_mismatch(gt[std::size_t(i)](r, c), fd) < 1e-4);
                    }
                for (int k = 0; k < 5; ++k) {
                    auto bp = betas, bm = betas;
                    bp[std::size_t(i)][k] += h;
                    bm[std::size_t(i)][k] -= h;
                    double fd = (loss_ts(texs, bp) - loss_ts(texs, bm)) / (2 * h);
                    REQUIRE(grad_mismatch(gb[std::size_t(i)][k], fd) < 1e-4);
                }
            }
        }
    }
}

TEST_CASE("total objective composition") {
    LossWeights w;

    SECTION("defaults match the published settings") {
        CHECK(w.w_3d == 1.0);
        CHECK(w.w_2d == 0.001);
        CHECK(w.w_cons == 0.0002);
        CHECK(w.w_geo == 0.001);
        CHECK(w.w_photo == 0.005);
        CHECK(w.w_quat == 0.05);
        CHECK(w.w_ts == 0.01);
        CHECK(w.w_regu == 0.01);
        CHECK(w.w_ori == 100.0);
        CHECK(w.w_SSIM == 0.2);
        CHECK(w.w_C == 0.5);
        CHECK(w.w_s == 10.0);
        CHECK(w.w_J == 10.0);
    }
    SECTION("all-zero breakdown totals zero") {
        LossBreakdown b;
        CHECK(total_objective(&b, w, FitMode::image) == 0.0);
    }
    SECTION("totals equal the defining sums") {
        Rng rng(50);
        for (int t = 0; t < 20; ++t) {
            LossBreakdown b;
            b.loc = rng.uniform();
            b.ori = rng.uniform();
            b.pixel = rng.uniform();
            b.ssim = rng.uniform();
            b.beta = rng.uniform();
            b.tex = rng.uniform();
            b.scale = rng.uniform();
            b.joints = rng.uniform();
            b.kp2d = rng.uniform();
            b.cons = rng.uniform();
            b.quat = rng.uniform();
            b.ts = rng.uniform();
            b.has_sequence_terms = true;
            double total = total_objective(&b, w, FitMode::video);
            double geo = b.loc + w.w_ori * b.ori;
            double photo = b.pixel + w.w_SSIM * b.ssim;
            double regu = b.beta + w.w_C * b.tex + w.w_s * b.scale + w.w_J * b.joints;
            double e3d = w.w_geo * geo + w.w_photo * photo + w.w_regu * regu;
            double expect = w.w_3d * e3d + w.w_2d * b.kp2d + w.w_cons * b.cons +
                            w.w_quat * b.quat + w.w_ts * b.ts;
            REQUIRE_THAT(total, WithinAbs(expect, 1e-9));
            REQUIRE_THAT(b.geo, WithinAbs(geo, 1e-9));
            REQUIRE_THAT(b.photo, WithinAbs(photo, 1e-9));
            REQUIRE_THAT(b.regu, WithinAbs(regu, 1e-9));
            REQUIRE_THAT(b.e3d, WithinAbs(e3d, 1e-9));

            // image mode drops exactly the sequence terms
            LossBreakdown c = b;
            double img = total_objective(&c, w, FitMode::image);
            REQUIRE_THAT(img, WithinAbs(expect - w.w_quat * b.quat - w.w_ts * b.ts, 1e-9));
        }
    }
    SECTION("linear in each sub-loss") {
        LossBreakdown b;
        b.loc = 0.3;
        b.cons = 0.7;
        double base = total_objective(&b, w, FitMode::image);
        LossBreakdown b2 = b;
        b2.cons = 1.4;
        double bumped = total_objective(&b2, w, FitMode::image);
        CHECK_THAT(bumped - base, WithinAbs(w.w_cons * 0.7, 1e-15));
    }
    SECTION("video mode requires the sequence terms") {
        LossBreakdown b;
        b.has_sequence_terms = false;
        CHECK_THROWS_AS(total_objective(&b, w, FitMode::video), std::invalid_argument);
        b.has_sequence_terms = true;
        CHECK_NOTHROW(total_objective(&b, w, FitMode::video));
    }
    SECTION("negative weights rejected") {
        LossWeights bad;
        bad.w_ori = -1.0;
        LossBreakdown b;
        CHECK_THROWS_AS(total_objective(&b, bad, FitMode::image), std::invalid_argument);
    }
}

TEST_CASE("loss weights json round trip") {
    std::string path = "weights_roundtrip.json";

    SECTION("full round trip") {
        LossWeights w;
        w.w_ori = 250.0;
        w.w_quat = 0.125;
        w.w_SSIM = 0.31;
        save_weights(path, w);
        LossWeights r = load_weights(path);
        CHECK(r.w_ori == 250.0);
        CHECK(r.w_quat == 0.125);
        CHECK(r.w_SSIM == 0.31);
        CHECK(r.w_3d == w.w_3d);
        CHECK(r.w_J == w.w_J);
        std::remove(path.c_str());
    }
    SECTION("missing fields take the defaults") {
        std::ofstream out(path);
        out << "{\"w_ori\": 5.0}\n";
        out.close();
        LossWeights r = load_weights(path);
        CHECK(r.w_ori == 5.0);
        CHECK(r.w_2d == 0.001);
        CHECK(r.w_cons == 0.0002);
        CHECK(r.w_s == 10.0);
        std::remove(path.c_str());
    }
    SECTION("bad schema and bad files throw") {
        std::ofstream out(path);
        out << "{\"schema\": \"something.else\"}\n";
        out.close();
        CHECK_THROWS_AS(load_weights(path), io_error);
        std::ofstream out2(path);
        out2 << "{not json\n";
        out2.close();
        CHECK_THROWS_AS(load_weights(path), io_error);
        std::remove(path.c_str());
        CHECK_THROWS_AS(load_weights("no_such_dir/weights.json"), io_error);
    }
}

TEST_CASE("keypoint container validation") {
    Keypoints2D kp;
    kp.points = Points2::Zero(21, 2);
    kp.conf = VecX::Ones(21);
    CHECK_NOTHROW(kp.validate());
    kp.conf[0] = -0.1;
    CHECK_THROWS_AS(kp.validate(), std::invalid_argument);
    kp.conf[0] = 0.5;
    kp.points = Points2::Zero(20, 2);
    CHECK_THROWS_AS(kp.validate(), std::invalid_argument);
}
