#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace handfit {

using Scalar = double;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
// row-major point/index blocks; one row per point or face
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

inline constexpr double kPi = 3.14159265358979323846;

struct behind_camera_error : std::runtime_error {
    int index;
    explicit behind_camera_error(int idx)
        : std::runtime_error("point " + std::to_string(idx) + " is behind the camera"), index(idx) {}
};

struct divergence_error : std::runtime_error {
    int iteration;
    divergence_error(int iter, double value)
        : std::runtime_error("objective diverged at iteration " + std::to_string(iter) +
                             " (value " + std::to_string(value) + ")"),
          iteration(iter) {}
};

struct alignment_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// distributions below are hand-rolled so streams are identical across
// platforms and standard-library versions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // unbiased integer in [0, n) by rejection
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        std::uint64_t rem = std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - rem;
        for (;;) {
            std::uint64_t v = gen_();
            if (v <= limit) return v % n;
        }
    }

    // uniform in [0, 1) with 53 random bits
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // Box-Muller; the spare value is cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * kPi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = std::size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), ascending
    std::vector<int> sample_without_replacement(int n, int k) {
        if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
        // Floyd's algorithm keeps the draw count at k regardless of n
        std::vector<int> picked;
        picked.reserve(std::size_t(k));
        for (int j = n - k; j < n; ++j) {
            int t = int(below(std::uint64_t(j) + 1));
            bool seen = false;
            for (int p : picked)
                if (p == t) { seen = true; break; }
            if (seen)
                picked.push_back(j);
            else
                picked.push_back(t);
        }
        std::sort(picked.begin(), picked.end());
        return picked;
    }

  private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace handfit
