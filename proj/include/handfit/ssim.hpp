#pragma once

// Structural similarity over [0,1] rgb images: 11x11 Gaussian windows
// (sigma 1.5), valid placement only, averaged over windows and channels.
// The gradient with respect to the first image is closed-form.

#include <handfit/image.hpp>

namespace handfit {

namespace detail {

inline const VecX& ssim_kernel() {
    static const VecX k = [] {
        VecX v(11);
        for (int i = 0; i < 11; ++i) {
            double d = double(i - 5);
            v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        }
        v /= v.sum();
        return v;
    }();
    return k;
}

// valid-mode separable correlation with an 11-tap kernel
inline MatX conv_valid(const MatX& img, const VecX& k) {
    int h = int(img.rows()), w = int(img.cols());
    MatX tmp(h, w - 10);
    for (int r = 0; r < h; ++r)
        for (int j = 0; j + 10 < w; ++j) {
            double s = 0;
            for (int t = 0; t < 11; ++t) s += k[t] * img(r, j + t);
            tmp(r, j) = s;
        }
    MatX out(h - 10, w - 10);
    for (int i = 0; i + 10 < h; ++i)
        for (int j = 0; j + 10 < w; ++j) {
            double s = 0;
            for (int t = 0; t < 11; ++t) s += k[t] * tmp(i + t, j);
            out(i, j) = s;
        }
    return out;
}

// adjoint of conv_valid: spreads per-window values back over their pixels
inline MatX conv_scatter(const MatX& win, const VecX& k, int h, int w) {
    MatX tmp = MatX::Zero(h, w - 10);
    for (int i = 0; i < win.rows(); ++i)
        for (int j = 0; j < win.cols(); ++j)
            for (int t = 0; t < 11; ++t) tmp(i + t, j) += k[t] * win(i, j);
    MatX out = MatX::Zero(h, w);
    for (int r = 0; r < h; ++r)
        for (int j = 0; j + 10 < w; ++j)
            for (int t = 0; t < 11; ++t) out(r, j + t) += k[t] * tmp(r, j);
    return out;
}

}  // namespace detail

// mean SSIM of x against y; optional gradient of that mean w.r.t. x
inline double ssim(const ImageRGB& x, const ImageRGB& y, ImageRGB* grad_x = nullptr) {
    int h = int(x[0].rows()), w = int(x[0].cols());
    if (h < 11 || w < 11) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    for (int c = 0; c < 3; ++c)
        if (y[std::size_t(c)].rows() != h || y[std::size_t(c)].cols() != w ||
            x[std::size_t(c)].rows() != h || x[std::size_t(c)].cols() != w)
            throw std::invalid_argument("ssim: image size mismatch");

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const VecX& k = detail::ssim_kernel();
    double total = 0.0;
    double nw = double((h - 10) * (w - 10));
    for (int c = 0; c < 3; ++c) {
        const MatX& xc = x[std::size_t(c)];
        const MatX& yc = y[std::size_t(c)];
        MatX mx = detail::conv_valid(xc, k);
        MatX my = detail::conv_valid(yc, k);
        MatX xx = detail::conv_valid(xc.cwiseProduct(xc), k);
        MatX yy = detail::conv_valid(yc.cwiseProduct(yc), k);
        MatX xy = detail::conv_valid(xc.cwiseProduct(yc), k);
        MatX sx = xx - mx.cwiseProduct(mx);
        MatX sy = yy - my.cwiseProduct(my);
        MatX sxy = xy - mx.cwiseProduct(my);

        MatX a1 = 2.0 * mx.cwiseProduct(my) + MatX::Constant(mx.rows(), mx.cols(), c1);
        MatX a2 = 2.0 * sxy + MatX::Constant(mx.rows(), mx.cols(), c2);
        MatX b1 = mx.cwiseProduct(mx) + my.cwiseProduct(my) + MatX::Constant(mx.rows(), mx.cols(), c1);
        MatX b2 = sx + sy + MatX::Constant(mx.rows(), mx.cols(), c2);
        MatX denom = b1.cwiseProduct(b2);
        MatX s = a1.cwiseProduct(a2).cwiseQuotient(denom);
        total += s.sum() / nw;

        if (grad_x) {
            // dS/dx_p = g [2 my a2 + 2 (y_p - my) a1] / (b1 b2)
            //         - S g [2 mx / b1 + 2 (x_p - mx) / b2]
            MatX coef_const = (2.0 * my.cwiseProduct(a2 - a1)).cwiseQuotient(denom) -
                              2.0 * s.cwiseProduct(mx).cwiseQuotient(b1) +
                              2.0 * s.cwiseProduct(mx).cwiseQuotient(b2);
            MatX coef_y = (2.0 * a1).cwiseQuotient(denom);
            MatX coef_x = -2.0 * s.cwiseQuotient(b2);
            MatX g = detail::conv_scatter(coef_const, k, h, w) +
                     yc.cwiseProduct(detail::conv_scatter(coef_y, k, h, w)) +
                     xc.cwiseProduct(detail::conv_scatter(coef_x, k, h, w));
            grad_x->at(std::size_t(c)) = g / (3.0 * nw);
        }
    }
    return total / 3.0;
}

}  // namespace handfit
