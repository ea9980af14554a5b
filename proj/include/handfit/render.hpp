#pragma once

// Flat-shaded z-buffer rasterizer with ambient + directional lighting.

#include <handfit/camera.hpp>
#include <handfit/hand_model.hpp>
#include <handfit/image.hpp>

#include <limits>

namespace handfit {

struct RenderOutput {
    MatX silhouette;           // 0/1 coverage
    ImageRGB color;            // zero outside the silhouette, clamped to [0,1]
    MatX depth;                // meters, +inf background
    Eigen::MatrixXi face_id;   // nearest face per pixel, -1 background
};

// Per-face rgb under ambient plus one directional light. The light vector is
// [ambient intensity, ambient rgb, directional intensity, directional rgb,
// direction xyz]; the direction is normalized here, the diffuse dot is
// clamped to [0,1], and the returned colors are left unclamped.
inline Points3 lighted_texture(const Points3& texture, const VecX& light, const Points3& normals) {
    if (light.size() != 11) throw std::invalid_argument("lighted_texture: light must have 11 entries");
    if (texture.rows() != normals.rows())
        throw std::invalid_argument("lighted_texture: texture/normal count mismatch");
    Vec3 dir = light.segment<3>(8);
    double len = dir.norm();
    if (len > 1e-9) dir /= len;
    Points3 out(texture.rows(), 3);
    for (int f = 0; f < texture.rows(); ++f) {
        double d = len > 1e-9 ? dir.dot(normals.row(f).transpose()) : 0.0;
        d = std::min(1.0, std::max(0.0, d));
        for (int c = 0; c < 3; ++c) {
            double gain = light[0] * light[1 + c] + d * light[4] * light[5 + c];
            out(f, c) = gain * texture(f, c);
        }
    }
    return out;
}

namespace detail {

// edge function in image coordinates (y down); interior is positive for
// triangles wound so the doubled signed area is positive
inline double edge_fn(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// top-left fill rule for pixels exactly on an edge
inline bool edge_accepts(double e, double ax, double ay, double bx, double by) {
    if (e > 0.0) return true;
    if (e < 0.0) return false;
    return (ay == by && bx > ax) || (by < ay);
}

}  // namespace detail

inline RenderOutput rasterize(const HandMesh& mesh, const Points3& texture, const VecX& light,
                              const CameraModel& cam) {
    cam.validate();
    if (texture.rows() != mesh.faces.rows())
        throw std::invalid_argument("rasterize: one texture color per face required");
    const int w = cam.width, h = cam.height;
    RenderOutput out;
    out.silhouette = MatX::Zero(h, w);
    out.color = make_image_rgb(h, w);
    out.depth = MatX::Constant(h, w, std::numeric_limits<double>::infinity());
    out.face_id = Eigen::MatrixXi::Constant(h, w, -1);
    if (mesh.faces.rows() == 0) return out;

    Points2 screen = project(mesh.vertices, cam);  // raises behind-camera errors
    Points3 lit = lighted_texture(texture, light, mesh.normals);

    for (int f = 0; f < mesh.faces.rows(); ++f) {
        int ia = mesh.faces(f, 0), ib = mesh.faces(f, 1), ic = mesh.faces(f, 2);
        double ax = screen(ia, 0), ay = screen(ia, 1);
        double bx = screen(ib, 0), by = screen(ib, 1);
        double cx = screen(ic, 0), cy = screen(ic, 1);
        double za = mesh.vertices(ia, 2), zb = mesh.vertices(ib, 2), zc = mesh.vertices(ic, 2);
        double area2 = detail::edge_fn(ax, ay, bx, by, cx, cy);
        if (area2 < 0.0) {  // no culling: rewind to keep interior positive
            std::swap(bx, cx);
            std::swap(by, cy);
            std::swap(zb, zc);
            area2 = -area2;
        }
        if (area2 < 1e-14) continue;

        int u0 = std::max(0, int(std::floor(std::min({ax, bx, cx}) - 0.5)));
        int u1 = std::min(w - 1, int(std::ceil(std::max({ax, bx, cx}) - 0.5)));
        int v0 = std::max(0, int(std::floor(std::min({ay, by, cy}) - 0.5)));
        int v1 = std::min(h - 1, int(std::ceil(std::max({ay, by, cy}) - 0.5)));
        for (int v = v0; v <= v1; ++v) {
            double py = v + 0.5;
            for (int u = u0; u <= u1; ++u) {
                double px = u + 0.5;
                double e0 = detail::edge_fn(bx, by, cx, cy, px, py);  // opposite a
                double e1 = detail::edge_fn(cx, cy, ax, ay, px, py);
                double e2 = detail::edge_fn(ax, ay, bx, by, px, py);
                if (!detail::edge_accepts(e0, bx, by, cx, cy) ||
                    !detail::edge_accepts(e1, cx, cy, ax, ay) ||
                    !detail::edge_accepts(e2, ax, ay, bx, by))
                    continue;
                double z = (e0 * za + e1 * zb + e2 * zc) / area2;
                if (z < out.depth(v, u)) {
                    out.depth(v, u) = z;
                    out.face_id(v, u) = f;
                    out.silhouette(v, u) = 1.0;
                    for (int c = 0; c < 3; ++c)
                        out.color[std::size_t(c)](v, u) = std::min(1.0, std::max(0.0, lit(f, c)));
                }
            }
        }
    }
    return out;
}

}  // namespace handfit
