#pragma once

// Central-difference gradient verification for any scalar objective.

#include <handfit/core.hpp>

#include <functional>

namespace handfit {

struct GradCheckReport {
    double max_rel_err = 0.0;
    Eigen::Index worst_index = -1;
    double worst_analytic = 0.0;
    double worst_fd = 0.0;
};

// relative error uses a unit floor so near-zero coordinates stay meaningful
inline GradCheckReport gradient_check(const std::function<double(const VecX&)>& f,
                                      const VecX& analytic, const VecX& x, double step = 1e-5) {
    if (analytic.size() != x.size())
        throw std::invalid_argument("gradient_check: gradient size must match the point");
    if (!(step > 0.0)) throw std::invalid_argument("gradient_check: step must be positive");
    GradCheckReport rep;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        VecX xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        double fd = (f(xp) - f(xm)) / (2.0 * step);
        double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_index = i;
            rep.worst_analytic = analytic[i];
            rep.worst_fd = fd;
        }
    }
    return rep;
}

}  // namespace handfit
