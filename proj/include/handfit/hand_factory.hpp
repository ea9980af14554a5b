#pragma once

// Procedural construction of the default hand asset. A binary cell mask
// (palm block, four finger strips, a stair of thumb blocks) is inflated into
// a two-sheet pillow mesh stitched along its outline, with an open slit at
// the wrist. Midpoint edge splits refine the mesh to an exact vertex budget;
// the face count is then forced to 2*verts - 18 by the outline topology.
// Joint regressor rings use uniform weights over vertices that share one
// skinning weight vector, so regressed joints track the kinematic pivots
// exactly for every shape and pose.

#include <handfit/hand_model.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace handfit {

inline HandModel build_default_hand_model(int target_verts = 778) {
    const double cell = 0.0063;           // lattice pitch, meters
    const double cx0 = 8.0, cy0 = 6.5;    // palm center in lattice units
    const int n_shapes = 10;

    // cell mask; value 0 palm, 1 thumb, 2..5 index/middle/ring/little
    std::map<std::pair<int, int>, int> cells;
    for (int x = 0; x < 16; ++x)
        for (int y = 0; y < 13; ++y) cells[{x, y}] = 0;
    struct Strip {
        int x0, len, pip, dip;
    };
    const int sx0[4] = {12, 8, 4, 0};
    const int slen[4] = {10, 12, 11, 8};
    std::array<Strip, 4> strips{};
    for (int i = 0; i < 4; ++i) {
        strips[std::size_t(i)] = {sx0[i], slen[i], 13 + int(std::lround(0.42 * slen[i])),
                                  13 + int(std::lround(0.73 * slen[i]))};
        for (int dx = 0; dx < 3; ++dx)
            for (int dy = 0; dy < slen[i]; ++dy) cells[{sx0[i] + dx, 13 + dy}] = 2 + i;
    }
    const int tblock[4][2] = {{16, 5}, {17, 7}, {18, 9}, {19, 11}};
    for (const auto& b : tblock)
        for (int dx = 0; dx < 3; ++dx)
            for (int dy = 0; dy < 2; ++dy) cells[{b[0] + dx, b[1] + dy}] = 1;

    auto cell_at = [&](int x, int y) {
        auto it = cells.find({x, y});
        return it == cells.end() ? -1 : it->second;
    };

    struct Pt {
        int domain = 0;
        bool interior = false;
        bool slit = false;  // duplicated wrist-opening point
        int top = -1, bot = -1;
        double h = 0.0;
    };
    std::map<std::pair<int, int>, Pt> pts;
    for (const auto& [xy, kind] : cells) {
        (void)kind;
        for (int dx = 0; dx <= 1; ++dx)
            for (int dy = 0; dy <= 1; ++dy) pts[{xy.first + dx, xy.second + dy}];
    }
    for (auto& [xy, pt] : pts) {
        int x = xy.first, y = xy.second;
        bool all = true;
        for (int k = 0; k < 4; ++k) {
            int c = cell_at(x - 1 + (k & 1), y - 1 + (k >> 1));
            if (c < 0)
                all = false;
            else
                pt.domain = std::max(pt.domain, c);
        }
        pt.interior = all;
        pt.slit = (y == 0 && x >= 5 && x <= 11);
    }

    // pillow thickness from Chebyshev distance to the outline, capped
    std::vector<std::pair<int, int>> rim;
    for (const auto& [xy, pt] : pts)
        if (!pt.interior) rim.push_back(xy);
    for (auto& [xy, pt] : pts) {
        if (pt.slit) {
            pt.h = 0.9 * cell;
        } else if (pt.interior) {
            int best = 1 << 20;
            for (const auto& [bx, by] : rim)
                best = std::min(best, std::max(std::abs(xy.first - bx), std::abs(xy.second - by)));
            pt.h = 0.9 * cell * std::min(best, 2);
        }
    }

    auto weights_for = [&](int y, int domain) -> std::vector<SkinWeight> {
        if (domain == 0) return {{0, 1.0}};
        if (domain == 1) {  // thumb bands
            if (y <= 5) return {{0, 1.0}};
            if (y == 6) return {{0, 0.5}, {1, 0.5}};
            if (y == 7) return {{1, 1.0}};
            if (y == 8) return {{1, 0.5}, {2, 0.5}};
            return {{2, 1.0}};
        }
        int i = domain - 2;
        int prox = 3 + 2 * i, dist = 4 + 2 * i;
        if (y == 13) return {{0, 0.5}, {prox, 0.5}};
        if (y < strips[std::size_t(i)].pip) return {{prox, 1.0}};
        if (y == strips[std::size_t(i)].pip) return {{prox, 0.5}, {dist, 0.5}};
        return {{dist, 1.0}};
    };

    // one shape-field sample per lattice point; split vertices interpolate
    const double ramp = 3.0;  // lattice units
    Vec3 tu(3.0, 7.0, 0.0);   // thumb axis in the lattice plane
    tu.normalize();
    auto blend_fields = [&](int x, int y, double px, double py, double pz, int domain) {
        std::array<Vec3, 10> b{};
        b.fill(Vec3::Zero());
        b[0] = 0.05 * Vec3(px, py, pz);
        b[1] = Vec3(0, 0.07 * py, 0);
        b[2] = Vec3(0.06 * px, 0, 0);
        b[3] = Vec3(0, 0, 0.5 * pz);
        auto clamp01 = [](double t) { return std::min(1.0, std::max(0.0, t)); };
        if (domain == 1) {
            double along = (x - 17.5) * tu.x() + (y - 6.0) * tu.y();
            b[4] = 0.06 * clamp01(along / ramp) * tu;
        } else if (domain >= 2) {
            b[std::size_t(3 + domain)] = Vec3(0, 0.06 * clamp01((y - 13.0) / ramp), 0);
        }
        b[9] = Vec3(0, 0, -0.35 * pz * clamp01((y - 13.0) / ramp));
        return b;
    };

    std::vector<Vec3> verts;
    std::vector<std::vector<SkinWeight>> skins;
    std::vector<std::array<Vec3, 10>> blends;
    for (auto& [xy, pt] : pts) {
        int x = xy.first, y = xy.second;
        double px = (x - cx0) * cell, py = (y - cy0) * cell;
        auto w = weights_for(y, pt.domain);
        if (pt.interior || pt.slit) {
            pt.top = int(verts.size());
            verts.emplace_back(px, py, pt.h);
            skins.push_back(w);
            blends.push_back(blend_fields(x, y, px, py, pt.h, pt.domain));
            pt.bot = int(verts.size());
            verts.emplace_back(px, py, -pt.h);
            skins.push_back(w);
            blends.push_back(blend_fields(x, y, px, py, -pt.h, pt.domain));
        } else {
            pt.top = pt.bot = int(verts.size());
            verts.emplace_back(px, py, 0.0);
            skins.push_back(w);
            blends.push_back(blend_fields(x, y, px, py, 0.0, pt.domain));
        }
    }

    std::vector<std::array<int, 3>> faces;
    for (const auto& [xy, kind] : cells) {
        (void)kind;
        const Pt& p00 = pts.at({xy.first, xy.second});
        const Pt& p10 = pts.at({xy.first + 1, xy.second});
        const Pt& p01 = pts.at({xy.first, xy.second + 1});
        const Pt& p11 = pts.at({xy.first + 1, xy.second + 1});
        bool diag = ((xy.first + xy.second) % 2) == 0;
        // a diagonal joining two stitched outline points would fuse the two
        // sheets along it; pick the other diagonal at such corner cells
        auto single = [](const Pt& p) { return p.top == p.bot; };
        if (diag && single(p00) && single(p11))
            diag = false;
        else if (!diag && single(p10) && single(p01))
            diag = true;
        auto quad = [&](int a, int b, int c, int d, bool flip) {
            // corners a..d counterclockwise from +z; flip for the lower sheet
            if (diag) {
                faces.push_back(flip ? std::array<int, 3>{a, c, b} : std::array<int, 3>{a, b, c});
                faces.push_back(flip ? std::array<int, 3>{a, d, c} : std::array<int, 3>{a, c, d});
            } else {
                faces.push_back(flip ? std::array<int, 3>{a, d, b} : std::array<int, 3>{a, b, d});
                faces.push_back(flip ? std::array<int, 3>{b, d, c} : std::array<int, 3>{b, c, d});
            }
        };
        quad(p00.top, p10.top, p11.top, p01.top, false);
        quad(p00.bot, p10.bot, p11.bot, p01.bot, true);
    }

    // refine with longest-edge midpoint splits until the budget is met
    if (int(verts.size()) > target_verts)
        throw std::invalid_argument("hand factory: vertex budget below base mesh size");
    while (int(verts.size()) < target_verts) {
        std::map<std::pair<int, int>, std::vector<int>> edge_faces;
        for (int f = 0; f < int(faces.size()); ++f)
            for (int c = 0; c < 3; ++c) {
                int a = faces[std::size_t(f)][std::size_t(c)];
                int b = faces[std::size_t(f)][std::size_t((c + 1) % 3)];
                edge_faces[{std::min(a, b), std::max(a, b)}].push_back(f);
            }
        std::pair<int, int> best{-1, -1};
        double best_len = -1.0;
        for (const auto& [e, fs] : edge_faces) {
            if (fs.size() != 2) continue;  // boundary edges stay
            double l2 = (verts[std::size_t(e.first)] - verts[std::size_t(e.second)]).squaredNorm();
            if (l2 > best_len) {  // map order breaks exact ties
                best_len = l2;
                best = e;
            }
        }
        int a = best.first, b = best.second;
        int m = int(verts.size());
        verts.push_back(0.5 * (verts[std::size_t(a)] + verts[std::size_t(b)]));
        std::array<Vec3, 10> bm{};
        for (int s = 0; s < n_shapes; ++s)
            bm[std::size_t(s)] = 0.5 * (blends[std::size_t(a)][std::size_t(s)] + blends[std::size_t(b)][std::size_t(s)]);
        blends.push_back(bm);

        std::map<int, double> acc;
        for (const auto& sw : skins[std::size_t(a)]) acc[sw.bone] += 0.5 * sw.w;
        for (const auto& sw : skins[std::size_t(b)]) acc[sw.bone] += 0.5 * sw.w;
        std::vector<SkinWeight> merged;
        for (const auto& [bone, w] : acc) merged.push_back({bone, w});
        if (merged.size() > 4) {
            std::sort(merged.begin(), merged.end(), [](const SkinWeight& l, const SkinWeight& r) {
                return l.w != r.w ? l.w > r.w : l.bone < r.bone;
            });
            merged.resize(4);
            std::sort(merged.begin(), merged.end(),
                      [](const SkinWeight& l, const SkinWeight& r) { return l.bone < r.bone; });
        }
        double tot = 0.0;
        for (const auto& sw : merged) tot += sw.w;
        for (auto& sw : merged) sw.w /= tot;
        skins.push_back(std::move(merged));

        for (int f : edge_faces[best]) {
            auto old = faces[std::size_t(f)];
            for (int c = 0; c < 3; ++c) {
                int u = old[std::size_t(c)], v = old[std::size_t((c + 1) % 3)];
                if (std::min(u, v) == a && std::max(u, v) == b) {
                    auto other = old;
                    other[std::size_t(c)] = m;
                    faces[std::size_t(f)][std::size_t((c + 1) % 3)] = m;
                    faces.push_back(other);
                    break;
                }
            }
        }
    }

    HandModel model;
    int nv = int(verts.size());
    model.template_verts.resize(nv, 3);
    for (int v = 0; v < nv; ++v) model.template_verts.row(v) = verts[std::size_t(v)].transpose();
    model.faces.resize(int(faces.size()), 3);
    for (int f = 0; f < int(faces.size()); ++f)
        for (int c = 0; c < 3; ++c) model.faces(f, c) = faces[std::size_t(f)][std::size_t(c)];
    model.skin = std::move(skins);
    model.blendshapes.assign(n_shapes, Points3::Zero(nv, 3));
    for (int s = 0; s < n_shapes; ++s)
        for (int v = 0; v < nv; ++v)
            model.blendshapes[std::size_t(s)].row(v) = blends[std::size_t(v)][std::size_t(s)].transpose();

    // joint regressor rings: uniform weights over ring vertices that share a
    // single skin-weight vector (both sheet copies of each lattice point)
    auto ring_ids = [&](const std::vector<std::pair<int, int>>& coords) {
        std::vector<int> ids;
        for (const auto& xy : coords) {
            const Pt& p = pts.at(xy);
            ids.push_back(p.top);
            if (p.bot != p.top) ids.push_back(p.bot);
        }
        return ids;
    };
    auto row4 = [](int x0, int y) {
        std::vector<std::pair<int, int>> c;
        for (int x = x0; x < x0 + 4; ++x) c.emplace_back(x, y);
        return c;
    };
    std::vector<std::vector<int>> rings(21);
    {
        std::vector<std::pair<int, int>> wrist;
        for (int x = 4; x <= 12; ++x) wrist.emplace_back(x, 0);
        rings[0] = ring_ids(wrist);
    }
    rings[1] = ring_ids(row4(16, 6));  // thumb mcp/pip/dip/tip
    rings[2] = ring_ids(row4(17, 8));
    rings[3] = ring_ids(row4(18, 10));
    rings[4] = ring_ids(row4(19, 13));
    for (int i = 0; i < 4; ++i) {
        int f = i + 1;
        const Strip& st = strips[std::size_t(i)];
        rings[std::size_t(1 + 4 * f)] = ring_ids(row4(st.x0, 13));
        rings[std::size_t(2 + 4 * f)] = ring_ids(row4(st.x0, st.pip));
        rings[std::size_t(3 + 4 * f)] = ring_ids(row4(st.x0, st.dip));
        rings[std::size_t(4 + 4 * f)] = ring_ids(row4(st.x0, 13 + st.len));
    }
    model.regressor.resize(21);
    for (int j = 0; j < 21; ++j) {
        double w = 1.0 / double(rings[std::size_t(j)].size());
        for (int vid : rings[std::size_t(j)]) model.regressor[std::size_t(j)].push_back({vid, w});
    }

    model.joint_parent.assign(21, -1);
    for (int f = 0; f < 5; ++f) {
        model.joint_parent[std::size_t(1 + 4 * f)] = 0;
        for (int k = 1; k < 4; ++k) model.joint_parent[std::size_t(1 + 4 * f + k)] = 4 * f + k;
        for (int k = 0; k < 4; ++k)
            model.bones.push_back({k == 0 ? 0 : k + 4 * f, k + 1 + 4 * f});
        model.articulated.push_back(1 + 4 * f);
        model.articulated.push_back(2 + 4 * f);
    }
    model.bone_parent = {-1};
    model.bone_pivot = {0};
    for (int f = 0; f < 5; ++f) {
        model.bone_parent.push_back(0);
        model.bone_pivot.push_back(1 + 4 * f);
        model.bone_parent.push_back(1 + 2 * f);
        model.bone_pivot.push_back(2 + 4 * f);
    }
    model.limits = JointAngleLimits::defaults(int(model.articulated.size()));

    Rng rng(777);
    model.default_texture.resize(model.n_faces(), 3);
    for (int f = 0; f < model.n_faces(); ++f) {
        model.default_texture(f, 0) = std::clamp(0.78 + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        model.default_texture(f, 1) = std::clamp(0.60 + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        model.default_texture(f, 2) = std::clamp(0.48 + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    }
    Vec3 ldir(0.3, -0.25, -0.9);
    ldir.normalize();
    model.default_light.resize(11);
    model.default_light << 0.65, 1, 1, 1, 0.45, 1, 1, 1, ldir.x(), ldir.y(), ldir.z();

    model.validate();
    if (model.n_verts() != target_verts || model.n_faces() != 2 * target_verts - 18)
        throw std::logic_error("hand factory: unexpected final mesh counts");
    return model;
}

}  // namespace handfit
