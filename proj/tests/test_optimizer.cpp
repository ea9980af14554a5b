#include <handfit/adam.hpp>
#include <handfit/grad_check.hpp>
#include <handfit/losses.hpp>
#include <handfit/sampler.hpp>

#include <catch2/catch_amalgamated.hpp>

using namespace handfit;
using Catch::Matchers::WithinAbs;

TEST_CASE("adam step behavior") {
    AdamConfig cfg;
    cfg.lr = 0.01;

    SECTION("zero gradient leaves parameters unchanged") {
        VecX p = VecX::LinSpaced(5, -2.0, 2.0);
        VecX p0 = p;
        AdamState st;
        adam_step(p, VecX::Zero(5), st, cfg);
        CHECK((p - p0).norm() == 0.0);
    }
    SECTION("first step moves by lr times the gradient sign") {
        VecX p = VecX::Zero(3);
        VecX g(3);
        g << 3.7, -0.002, 120.0;
        AdamState st;
        adam_step(p, g, st, cfg);
        for (int i = 0; i < 3; ++i) {
            double expect = -cfg.lr * (g[i] > 0 ? 1.0 : -1.0);
            CHECK_THAT(p[i], WithinAbs(expect, cfg.lr * 1e-4));
        }
    }
    SECTION("matches a hand-rolled reference over several steps") {
        // independent accumulation of the moment recursions
        VecX p = VecX::Zero(4), ref = VecX::Zero(4);
        VecX m = VecX::Zero(4), v = VecX::Zero(4);
        AdamState st;
        Rng rng(7);
        for (int t = 1; t <= 25; ++t) {
            VecX g(4);
            for (int i = 0; i < 4; ++i) g[i] = rng.normal();
            adam_step(p, g, st, cfg);
            for (int i = 0; i < 4; ++i) {
                m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
                double mh = m[i] / (1 - std::pow(cfg.beta1, t));
                double vh = v[i] / (1 - std::pow(cfg.beta2, t));
                ref[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
            }
            REQUIRE((p - ref).lpNorm<Eigen::Infinity>() < 1e-15);
        }
    }
    SECTION("optimizes a quadratic bowl") {
        VecX target(3);
        target << 0.4, -1.2, 2.0;
        VecX p = VecX::Zero(3);
        AdamState st;
        AdamConfig fast;
        fast.lr = 0.05;
        for (int t = 0; t < 800; ++t) {
            VecX g = 2.0 * (p - target);
            adam_step(p, g, st, fast);
        }
        CHECK((p - target).norm() < 1e-3);
    }
    SECTION("deterministic across identical runs") {
        VecX p1 = VecX::Ones(6), p2 = VecX::Ones(6);
        AdamState s1, s2;
        Rng r1(11), r2(11);
        for (int t = 0; t < 50; ++t) {
            VecX g(6);
            for (int i = 0; i < 6; ++i) g[i] = r1.normal();
            adam_step(p1, g, s1, cfg);
            VecX g2(6);
            for (int i = 0; i < 6; ++i) g2[i] = r2.normal();
            adam_step(p2, g2, s2, cfg);
        }
        CHECK((p1 - p2).norm() == 0.0);
    }
    SECTION("non-finite gradients name the parameter block") {
        VecX p = VecX::Zero(4);
        VecX g = VecX::Zero(4);
        g[2] = std::numeric_limits<double>::quiet_NaN();
        AdamState st;
        auto namer = [](Eigen::Index i) {
            return i < 2 ? std::string("pose") : std::string("shape");
        };
        CHECK_THROWS_WITH(adam_step(p, g, st, cfg, namer),
                          Catch::Matchers::ContainsSubstring("shape"));
    }
    SECTION("validation") {
        VecX p = VecX::Zero(3);
        AdamState st;
        CHECK_THROWS_AS(adam_step(p, VecX::Zero(2), st, cfg), std::invalid_argument);
        AdamConfig bad = cfg;
        bad.lr = 0.0;
        CHECK_THROWS_AS(adam_step(p, VecX::Zero(3), st, bad), std::invalid_argument);
    }
}

TEST_CASE("sequence batch sampler") {
    SECTION("published batch shape") {
        std::vector<int> dataset(30, 10);  // 30 sequences of 10 frames
        Rng rng(3);
        Batch b = sample_batch(dataset, 3, rng);
        CHECK(b.groups.size() == 21);  // 64 // 3
        int total = 0;
        for (const auto& g : b.groups) total += int(g.frames.size());
        CHECK(total == 63);
        Rng rng2(4);
        CHECK(sample_batch(dataset, 1, rng2).groups.size() == 64);
    }
    SECTION("frames are distinct and ordered, sequences distinct when possible") {
        std::vector<int> dataset(25, 8);
        Rng rng(5);
        Batch b = sample_batch(dataset, 4, rng);  // m = 16 <= 25
        std::vector<int> seen;
        for (const auto& g : b.groups) {
            seen.push_back(g.sequence);
            for (std::size_t k = 1; k < g.frames.size(); ++k)
                REQUIRE(g.frames[k] > g.frames[k - 1]);
            REQUIRE(g.frames.back() < 8);
            REQUIRE(g.frames.front() >= 0);
        }
        std::sort(seen.begin(), seen.end());
        CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
    }
    SECTION("short sequences are excluded") {
        std::vector<int> dataset = {10, 2, 10, 1, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10,
                                    10, 10, 10, 10, 10, 10, 10, 10};
        Rng rng(6);
        Batch b = sample_batch(dataset, 3, rng);
        CHECK(b.excluded_sequences == 2);
        for (const auto& g : b.groups) {
            REQUIRE(g.sequence != 1);
            REQUIRE(g.sequence != 3);
        }
    }
    SECTION("falls back to replacement when sequences run short") {
        std::vector<int> dataset = {5, 5, 5};
        Rng rng(7);
        Batch b = sample_batch(dataset, 3, rng);
        CHECK(b.groups.size() == 21);  // three sequences reused
    }
    SECTION("validation") {
        Rng rng(8);
        CHECK_THROWS_AS(sample_batch({}, 3, rng), std::invalid_argument);
        std::vector<int> tiny = {2, 2};
        CHECK_THROWS_AS(sample_batch(tiny, 3, rng), std::invalid_argument);
        std::vector<int> ok = {5};
        CHECK_THROWS_AS(sample_batch(ok, 0, rng), std::invalid_argument);
    }
    SECTION("deterministic given the seed") {
        std::vector<int> dataset(40, 12);
        Rng a(99), b(99);
        Batch ba = sample_batch(dataset, 3, a);
        Batch bb = sample_batch(dataset, 3, b);
        REQUIRE(ba.groups.size() == bb.groups.size());
        for (std::size_t i = 0; i < ba.groups.size(); ++i) {
            CHECK(ba.groups[i].sequence == bb.groups[i].sequence);
            CHECK(ba.groups[i].frames == bb.groups[i].frames);
        }
    }
    SECTION("per-frame draw frequency is uniform") {
        // 30 sequences x 6 frames, n=3: inclusion probability (21/30)*(3/6)
        std::vector<int> dataset(30, 6);
        int trials = 5000;
        std::vector<long> hits(180, 0);
        Rng rng(1234);
        for (int t = 0; t < trials; ++t) {
            Batch b = sample_batch(dataset, 3, rng);
            for (const auto& g : b.groups)
                for (int f : g.frames) hits[std::size_t(g.sequence * 6 + f)] += 1;
        }
        double p = (21.0 / 30.0) * (3.0 / 6.0);
        double mean = trials * p;
        double sigma = std::sqrt(trials * p * (1.0 - p));
        for (long h : hits) REQUIRE(std::abs(double(h) - mean) < 5.0 * sigma);
    }
}

TEST_CASE("finite difference harness") {
    SECTION("quadratic is matched to machine precision") {
        VecX x(4);
        x << 0.3, -1.0, 2.0, 0.7;
        auto f = [](const VecX& v) { return v.squaredNorm(); };
        GradCheckReport rep = gradient_check(f, 2.0 * x, x, 1e-5);
        CHECK(rep.max_rel_err < 1e-10);
    }
    SECTION("flags the worst coordinate") {
        VecX x(3);
        x << 1.0, 2.0, 3.0;
        VecX g = 2.0 * x;
        g[1] += 0.5;  // deliberate corruption
        auto f = [](const VecX& v) { return v.squaredNorm(); };
        GradCheckReport rep = gradient_check(f, g, x, 1e-5);
        CHECK(rep.worst_index == 1);
        CHECK_THAT(rep.max_rel_err, WithinAbs(0.5 / 4.0, 1e-6));
    }
    SECTION("keypoint loss passes through the harness") {
        Rng rng(21);
        Keypoints2D det;
        det.points.resize(21, 2);
        det.conf.resize(21);
        for (int i = 0; i < 21; ++i) {
            det.points(i, 0) = rng.uniform(0.2, 0.8);
            det.points(i, 1) = rng.uniform(0.2, 0.8);
            det.conf[i] = rng.uniform(0.5, 1.0);
        }
        Points2 proj = det.points;
        for (int i = 0; i < 21; ++i)
            for (int c = 0; c < 2; ++c) proj(i, c) += rng.uniform(-0.3, 0.3);

        auto unflatten = [](const VecX& v) {
            Points2 p(21, 2);
            for (int i = 0; i < 21; ++i) {
                p(i, 0) = v[2 * i];
                p(i, 1) = v[2 * i + 1];
            }
            return p;
        };
        VecX x(42);
        for (int i = 0; i < 21; ++i) {
            x[2 * i] = proj(i, 0);
            x[2 * i + 1] = proj(i, 1);
        }
        Points2 grad;
        loss_loc(det, proj, &grad);
        VecX g(42);
        for (int i = 0; i < 21; ++i) {
            g[2 * i] = grad(i, 0);
            g[2 * i + 1] = grad(i, 1);
        }
        auto f = [&](const VecX& v) { return loss_loc(det, unflatten(v)); };
        GradCheckReport rep = gradient_check(f, g, x, 1e-5);
        CHECK(rep.max_rel_err < 1e-4);
    }
    SECTION("validation") {
        auto f = [](const VecX& v) { return v.sum(); };
        CHECK_THROWS_AS(gradient_check(f, VecX::Zero(2), VecX::Zero(3), 1e-5),
                        std::invalid_argument);
        CHECK_THROWS_AS(gradient_check(f, VecX::Zero(3), VecX::Zero(3), 0.0),
                        std::invalid_argument);
    }
}
