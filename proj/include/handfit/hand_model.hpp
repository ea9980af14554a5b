#pragma once

// Parametric skinned hand: shape blendshapes on a fixed-topology template,
// a 21-joint chain posed by per-joint axis-angle rotations through linear
// blend skinning, sparse joint regression, and a similarity transform into
// camera space.

#include <handfit/core.hpp>
#include <handfit/rotation.hpp>

#include <Eigen/Geometry>

#include <array>
#include <utility>

namespace handfit {

struct JointAngleLimits {
    MatX lo, hi;  // one row per articulated joint, columns azimuth/pitch/roll

    static JointAngleLimits defaults(int n_articulated) {
        JointAngleLimits l;
        l.lo.resize(n_articulated, 3);
        l.hi.resize(n_articulated, 3);
        for (int j = 0; j < n_articulated; ++j) {
            l.lo.row(j) << -0.35, -0.35, -0.17;  // azimuth, pitch, roll(flexion)
            l.hi.row(j) << 0.35, 0.35, 1.92;
        }
        return l;
    }

    void validate() const {
        if (lo.rows() != hi.rows() || lo.cols() != 3 || hi.cols() != 3)
            throw std::invalid_argument("joint angle limits: bad shape");
        for (int j = 0; j < lo.rows(); ++j)
            for (int c = 0; c < 3; ++c)
                if (!(lo(j, c) <= hi(j, c)))
                    throw std::invalid_argument("joint angle limits: min > max");
    }
};

struct HandParams {
    VecX theta;       // 3 per articulated joint
    VecX beta;        // shape coefficients
    double scale = 1.0;
    Vec3 rot = Vec3::Zero();    // global axis-angle
    Vec3 trans = Vec3::Zero();  // meters
    Points3 texture;  // per-face rgb in [0,1]
    VecX light;       // ambient intensity, ambient rgb, directional intensity,
                      // directional rgb, direction xyz
};

struct HandMesh {
    Points3 vertices;
    Faces faces;
    Points3 normals;  // per-face normals of the zero-pose (canonical) mesh
};

struct JointSet {
    Points3 joints;  // 21 x 3
};

struct SkinWeight {
    int bone;
    double w;
};

// Immutable model assets. Bone 0 is the rigid root; bone b > 0 rotates by
// articulated joint b-1 about the rest position of its pivot joint.
struct HandModel {
    Points3 template_verts;
    Faces faces;
    std::vector<Points3> blendshapes;                     // per shape dim, n_v x 3
    std::vector<std::vector<SkinWeight>> skin;            // per vertex, at most 4
    std::vector<std::vector<std::pair<int, double>>> regressor;  // per joint
    std::vector<int> joint_parent;                        // per joint, -1 at root
    std::vector<std::array<int, 2>> bones;                // skeleton edges (parent, child)
    std::vector<int> articulated;                         // skeleton ids of rotating joints
    std::vector<int> bone_parent;                         // per skin bone, -1 at root
    std::vector<int> bone_pivot;                          // per skin bone, pivot joint id
    JointAngleLimits limits;
    Points3 default_texture;
    VecX default_light;

    int n_verts() const { return int(template_verts.rows()); }
    int n_faces() const { return int(faces.rows()); }
    int n_joints() const { return int(joint_parent.size()); }
    int n_articulated() const { return int(articulated.size()); }
    int n_shapes() const { return int(blendshapes.size()); }

    void validate() const {
        if (int(skin.size()) != n_verts()) throw std::invalid_argument("hand model: skin weight count");
        if (int(regressor.size()) != n_joints()) throw std::invalid_argument("hand model: regressor rows");
        if (int(bone_parent.size()) != n_articulated() + 1)
            throw std::invalid_argument("hand model: bone count");
        for (int f = 0; f < n_faces(); ++f)
            for (int c = 0; c < 3; ++c)
                if (faces(f, c) < 0 || faces(f, c) >= n_verts())
                    throw std::invalid_argument("hand model: face index out of range");
        for (const auto& ws : skin) {
            if (ws.empty() || ws.size() > 4)
                throw std::invalid_argument("hand model: vertex must use 1..4 bones");
        }
        limits.validate();
    }
};

inline HandParams neutral_params(const HandModel& model) {
    HandParams p;
    p.theta = VecX::Zero(3 * model.n_articulated());
    p.beta = VecX::Zero(model.n_shapes());
    p.texture = model.default_texture;
    p.light = model.default_light;
    return p;
}

namespace detail {

struct Aff {
    Mat3 a = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    Vec3 apply(const Vec3& p) const { return a * p + t; }
    Aff compose(const Aff& o) const { return {a * o.a, a * o.t + t}; }
};

// bone transforms from rest pivots and per-joint rotations
inline std::vector<Aff> bone_transforms(const HandModel& model, const VecX& theta,
                                        const Points3& rest_joints) {
    int nb = model.n_articulated() + 1;
    std::vector<Aff> g(static_cast<std::size_t>(nb));
    for (int b = 1; b < nb; ++b) {
        Vec3 pivot = rest_joints.row(model.bone_pivot[std::size_t(b)]).transpose();
        Mat3 r = rodrigues(theta.segment<3>(3 * (b - 1)));
        Aff local{r, pivot - r * pivot};
        int par = model.bone_parent[std::size_t(b)];
        g[std::size_t(b)] = par <= 0 ? local : g[std::size_t(par)].compose(local);
    }
    return g;
}

}  // namespace detail

struct Decoded {
    Points3 vertices;       // posed, before the global similarity
    Points3 joints;         // regressed from the posed vertices
    Points3 rest_vertices;  // shaped template (zero pose)
    Points3 rest_joints;    // regressed from rest_vertices; skinning pivots
};

inline Points3 regress_joints(const HandModel& model, const Points3& verts) {
    Points3 out(model.n_joints(), 3);
    out.setZero();
    for (int j = 0; j < model.n_joints(); ++j)
        for (const auto& [vid, w] : model.regressor[std::size_t(j)])
            out.row(j) += w * verts.row(vid);
    return out;
}

inline Decoded decode_hand(const HandModel& model, const VecX& theta, const VecX& beta) {
    if (theta.size() != 3 * model.n_articulated())
        throw std::invalid_argument("decode_hand: theta length mismatch");
    if (beta.size() != model.n_shapes())
        throw std::invalid_argument("decode_hand: beta length mismatch");

    Decoded d;
    d.rest_vertices = model.template_verts;
    for (int s = 0; s < model.n_shapes(); ++s)
        if (beta[s] != 0.0) d.rest_vertices += beta[s] * model.blendshapes[std::size_t(s)];
    d.rest_joints = regress_joints(model, d.rest_vertices);

    auto g = detail::bone_transforms(model, theta, d.rest_joints);
    d.vertices.resize(model.n_verts(), 3);
    for (int v = 0; v < model.n_verts(); ++v) {
        Vec3 p = d.rest_vertices.row(v).transpose();
        Vec3 acc = Vec3::Zero();
        for (const auto& sw : model.skin[std::size_t(v)])
            acc += sw.w * g[std::size_t(sw.bone)].apply(p);
        d.vertices.row(v) = acc.transpose();
    }
    d.joints = regress_joints(model, d.vertices);
    return d;
}

inline void apply_global_transform(Points3* pts, double s, const Vec3& rot, const Vec3& trans) {
    if (s <= 0.0) throw std::invalid_argument("apply_global_transform: scale must be positive");
    Mat3 r = rodrigues(rot);
    Mat3 m = (s * r).transpose();  // row-vector form for row-major points
    *pts = (*pts) * m;
    pts->rowwise() += trans.transpose();
}

inline void rotate_rows(Points3* pts, const Vec3& rot) {
    Mat3 r = rodrigues(rot);
    *pts = (*pts) * r.transpose();
}

// per-face unit normals from counterclockwise winding; degenerate faces get
// (0,0,1) and their indices are reported when a sink is provided
inline Points3 canonical_normals(const Points3& verts, const Faces& faces,
                                 std::vector<int>* degenerate = nullptr) {
    Points3 out(faces.rows(), 3);
    for (int f = 0; f < faces.rows(); ++f) {
        Vec3 a = verts.row(faces(f, 0)).transpose();
        Vec3 b = verts.row(faces(f, 1)).transpose();
        Vec3 c = verts.row(faces(f, 2)).transpose();
        Vec3 n = (b - a).cross(c - a);
        double len = n.norm();
        if (len < 1e-12) {
            if (degenerate) degenerate->push_back(f);
            out.row(f) << 0, 0, 1;
        } else {
            out.row(f) = (n / len).transpose();
        }
    }
    return out;
}

// full posed mesh + joints in camera space
inline std::pair<HandMesh, JointSet> posed_hand(const HandModel& model, const HandParams& p) {
    Decoded d = decode_hand(model, p.theta, p.beta);
    HandMesh mesh;
    mesh.faces = model.faces;
    mesh.normals = canonical_normals(d.rest_vertices, model.faces);
    mesh.vertices = d.vertices;
    apply_global_transform(&mesh.vertices, p.scale, p.rot, p.trans);
    rotate_rows(&mesh.normals, p.rot);
    JointSet js;
    js.joints = d.joints;
    apply_global_transform(&js.joints, p.scale, p.rot, p.trans);
    return {std::move(mesh), std::move(js)};
}

// azimuth/pitch/roll per articulated joint
inline MatX joint_angles(const VecX& theta) {
    if (theta.size() % 3 != 0) throw std::invalid_argument("joint_angles: theta length");
    int n = int(theta.size() / 3);
    MatX out(n, 3);
    for (int j = 0; j < n; ++j)
        out.row(j) = euler_zyx(rodrigues(theta.segment<3>(3 * j))).transpose();
    return out;
}

// d angles / d theta for one joint, see euler_zyx_jac
inline Mat3 joint_angles_jac(const VecX& theta, int joint) {
    return euler_zyx_jac(theta.segment<3>(3 * joint));
}

// ---------------------------------------------------------------------------
// analytic derivatives

// parameter layout used by all jacobians: [theta | beta | s | rot | trans]
inline int geo_param_count(const HandModel& model) {
    return 3 * model.n_articulated() + model.n_shapes() + 1 + 3 + 3;
}

namespace detail {

struct BoneDerivs {
    // per bone: derivative of the affine w.r.t. each theta component (sparse:
    // only components on the bone's chain are nonzero) and each beta
    std::vector<std::vector<std::pair<int, Aff>>> dtheta;  // [bone] -> (theta idx, dAff)
    std::vector<std::vector<Aff>> dbeta;                   // [bone][shape]
};

// d(rest joint)/d(beta): regressor applied to each blendshape, cached per call
inline std::vector<Points3> pivot_shape_derivs(const HandModel& model) {
    std::vector<Points3> out;
    out.reserve(std::size_t(model.n_shapes()));
    for (int s = 0; s < model.n_shapes(); ++s)
        out.push_back(regress_joints(model, model.blendshapes[std::size_t(s)]));
    return out;
}

inline BoneDerivs bone_transform_derivs(const HandModel& model, const VecX& theta,
                                        const Points3& rest_joints,
                                        const std::vector<Points3>& dpivots,
                                        const std::vector<Aff>& g) {
    int nb = model.n_articulated() + 1;
    int ns = model.n_shapes();
    BoneDerivs bd;
    bd.dtheta.resize(std::size_t(nb));
    bd.dbeta.assign(std::size_t(nb), std::vector<Aff>(std::size_t(ns), Aff{Mat3::Zero(), Vec3::Zero()}));
    for (int s = 0; s < ns; ++s) bd.dbeta[0][std::size_t(s)] = {Mat3::Zero(), Vec3::Zero()};

    for (int b = 1; b < nb; ++b) {
        int a = b - 1;  // articulated joint driving this bone
        Vec3 pivot = rest_joints.row(model.bone_pivot[std::size_t(b)]).transpose();
        Vec3 th = theta.segment<3>(3 * a);
        Mat3 r = rodrigues(th);
        Aff local{r, pivot - r * pivot};
        auto dr = rodrigues_jac(th);
        int par = model.bone_parent[std::size_t(b)];
        const Aff gpar = par <= 0 ? Aff{} : g[std::size_t(par)];

        // own rotation components
        std::vector<std::pair<int, Aff>> dth;
        if (par > 0)
            for (const auto& [idx, daff] : bd.dtheta[std::size_t(par)])
                dth.emplace_back(idx, daff.compose(local));
        for (int c = 0; c < 3; ++c) {
            // parent translation is constant here, so it must not leak in
            Aff dlocal{dr[std::size_t(c)], -dr[std::size_t(c)] * pivot};
            dth.emplace_back(3 * a + c, Aff{gpar.a * dlocal.a, gpar.a * dlocal.t});
        }
        bd.dtheta[std::size_t(b)] = std::move(dth);

        // shape moves the pivots
        for (int s = 0; s < ns; ++s) {
            Vec3 dp = dpivots[std::size_t(s)].row(model.bone_pivot[std::size_t(b)]).transpose();
            Aff dlocal{Mat3::Zero(), dp - r * dp};
            Aff acc{gpar.a * dlocal.a, gpar.a * dlocal.t};
            if (par > 0) {
                const Aff& dpar = bd.dbeta[std::size_t(par)][std::size_t(s)];
                acc.a += dpar.a * local.a;
                acc.t += dpar.a * local.t + dpar.t;
            }
            bd.dbeta[std::size_t(b)][std::size_t(s)] = acc;
        }
    }
    return bd;
}

}  // namespace detail

// d(camera-space joints)/d(params); rows are flattened joints (x,y,z per
// joint), columns follow geo_param_count layout
inline MatX joint_jacobian(const HandModel& model, const HandParams& p, Points3* joints_out = nullptr) {
    int nt = 3 * model.n_articulated();
    int ns = model.n_shapes();
    int np = geo_param_count(model);
    int nj = model.n_joints();

    Decoded d = decode_hand(model, p.theta, p.beta);
    auto g = detail::bone_transforms(model, p.theta, d.rest_joints);
    auto dpivots = detail::pivot_shape_derivs(model);
    auto bd = detail::bone_transform_derivs(model, p.theta, d.rest_joints, dpivots, g);

    // joint motion pre-global: J = sum over regressor verts of blended bones.
    // ring-constant weights make this the bone blend applied to the rest joint
    MatX pre_dtheta = MatX::Zero(3 * nj, nt);
    MatX pre_dbeta = MatX::Zero(3 * nj, ns);
    Points3 pre(nj, 3);
    pre.setZero();
    for (int j = 0; j < nj; ++j) {
        // accumulate regressor over vertices (the literal contract)
        for (const auto& [vid, w] : model.regressor[std::size_t(j)]) {
            Vec3 rest = d.rest_vertices.row(vid).transpose();
            for (const auto& sw : model.skin[std::size_t(vid)]) {
                const auto& gb = g[std::size_t(sw.bone)];
                pre.row(j) += (w * sw.w) * gb.apply(rest).transpose();
                for (const auto& [idx, daff] : bd.dtheta[std::size_t(sw.bone)])
                    pre_dtheta.block<3, 1>(3 * j, idx) += (w * sw.w) * (daff.a * rest + daff.t);
                for (int s = 0; s < ns; ++s) {
                    Vec3 db = model.blendshapes[std::size_t(s)].row(vid).transpose();
                    const auto& daff = bd.dbeta[std::size_t(sw.bone)][std::size_t(s)];
                    pre_dbeta.block<3, 1>(3 * j, s) +=
                        (w * sw.w) * (gb.a * db + daff.a * rest + daff.t);
                }
            }
        }
    }

    Mat3 r = rodrigues(p.rot);
    auto dr = rodrigues_jac(p.rot);
    Mat3 sr = p.scale * r;
    MatX out(3 * nj, np);
    for (int j = 0; j < nj; ++j) {
        Vec3 x = pre.row(j).transpose();
        out.block(3 * j, 0, 3, nt) = sr * pre_dtheta.block(3 * j, 0, 3, nt);
        out.block(3 * j, nt, 3, ns) = sr * pre_dbeta.block(3 * j, 0, 3, ns);
        out.block<3, 1>(3 * j, nt + ns) = r * x;
        for (int c = 0; c < 3; ++c)
            out.block<3, 1>(3 * j, nt + ns + 1 + c) = p.scale * (dr[std::size_t(c)] * x);
        out.block<3, 3>(3 * j, nt + ns + 4) = Mat3::Identity();
    }
    if (joints_out) {
        Points3 cam = pre;
        apply_global_transform(&cam, p.scale, p.rot, p.trans);
        *joints_out = cam;
    }
    return out;
}

// d(camera-space vertices)/d(params), rows flattened per vertex
inline MatX vertex_jacobian(const HandModel& model, const HandParams& p) {
    int nt = 3 * model.n_articulated();
    int ns = model.n_shapes();
    int np = geo_param_count(model);
    int nv = model.n_verts();

    Decoded d = decode_hand(model, p.theta, p.beta);
    auto g = detail::bone_transforms(model, p.theta, d.rest_joints);
    auto dpivots = detail::pivot_shape_derivs(model);
    auto bd = detail::bone_transform_derivs(model, p.theta, d.rest_joints, dpivots, g);

    Mat3 r = rodrigues(p.rot);
    auto dr = rodrigues_jac(p.rot);
    Mat3 sr = p.scale * r;

    MatX out = MatX::Zero(3 * nv, np);
    for (int v = 0; v < nv; ++v) {
        Vec3 rest = d.rest_vertices.row(v).transpose();
        Vec3 posed = d.vertices.row(v).transpose();
        for (const auto& sw : model.skin[std::size_t(v)]) {
            const auto& gb = g[std::size_t(sw.bone)];
            for (const auto& [idx, daff] : bd.dtheta[std::size_t(sw.bone)])
                out.block<3, 1>(3 * v, idx) += sw.w * (sr * (daff.a * rest + daff.t));
            for (int s = 0; s < ns; ++s) {
                Vec3 db = model.blendshapes[std::size_t(s)].row(v).transpose();
                const auto& daff = bd.dbeta[std::size_t(sw.bone)][std::size_t(s)];
                out.block<3, 1>(3 * v, nt + s) +=
                    sw.w * (sr * (gb.a * db + daff.a * rest + daff.t));
            }
        }
        out.block<3, 1>(3 * v, nt + ns) = r * posed;
        for (int c = 0; c < 3; ++c)
            out.block<3, 1>(3 * v, nt + ns + 1 + c) = p.scale * (dr[std::size_t(c)] * posed);
        out.block<3, 3>(3 * v, nt + ns + 4) = Mat3::Identity();
    }
    return out;
}

}  // namespace handfit
