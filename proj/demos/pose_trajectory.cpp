// Sweeps the default hand through a single-axis finger curl, then knocks one
// frame off the geodesic, and prints how the rotation-coverage loss reacts.

#include <handfit/hand_factory.hpp>
#include <handfit/losses.hpp>
#include <handfit/quat.hpp>

#include <cstdio>
#include <vector>

using namespace handfit;

int main() {
    const HandModel model = build_default_hand_model();
    const int n_frames = 8;

    std::vector<PoseQuaternions> smooth;
    for (int f = 0; f < n_frames; ++f) {
        HandParams p = neutral_params(model);
        double t = double(f) / (n_frames - 1);
        for (int k = 0; k < p.theta.size(); k += 3) p.theta[k] = 0.9 * t;  // curl every joint
        p.rot = Vec3(0.0, 0.5 * t, 0.0);
        smooth.push_back(pose_to_quaternions(p.theta, p.rot));
    }

    std::printf("frame  global angle (rad)  joint0 angle (rad)\n");
    for (int f = 0; f < n_frames; ++f)
        std::printf("%5d  %18.6f  %18.6f\n", f,
                    rotation_angle_between(smooth[0][0], smooth[std::size_t(f)][0]),
                    rotation_angle_between(smooth[0][1], smooth[std::size_t(f)][1]));

    std::vector<PoseQuaternions> kinked = smooth;
    kinked[n_frames / 2][0] =
        hamilton_product(quat_from_rotvec(Vec3(0.3, 0.0, 0.0)), kinked[n_frames / 2][0]);

    std::printf("\ncoverage loss, monotone sweep: %.3e\n", loss_quat(smooth));
    std::printf("coverage loss, kinked frame %d: %.3e\n", n_frames / 2, loss_quat(kinked));
    return 0;
}
