#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "asmpose/error.hpp"
#include "asmpose/geometry.hpp"

namespace asmpose {

struct Correspondence {
    Eigen::Vector3d model_point = Eigen::Vector3d::Zero();  // meters, model frame
    Eigen::Vector2d image_point = Eigen::Vector2d::Zero();  // pixels
    double confidence = 1.0;
};

struct RansacConfig {
    int max_iterations = 200;
    double inlier_threshold = 6.0;  // pixels
    int min_inliers = 6;
    double confidence_target = 0.99;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (max_iterations < 1) fail(ErrorCode::InvalidArgument, "max_iterations must be >= 1");
        if (!(inlier_threshold > 0)) fail(ErrorCode::InvalidArgument, "inlier_threshold must be > 0");
        if (min_inliers < 4) fail(ErrorCode::InvalidArgument, "min_inliers must be >= 4");
        if (!(confidence_target > 0) || !(confidence_target < 1))
            fail(ErrorCode::InvalidArgument, "confidence_target must be in (0,1)");
    }
};

struct PnpResult {
    RigidTransform pose;
    std::vector<int> inlier_indices;  // indices into the input correspondence list
    double mean_reprojection_error = 0.0;
};

namespace pnp_detail {

inline double reprojection_error(const RigidTransform& pose, const Correspondence& c,
                                 const CameraIntrinsics& cam) {
    const Eigen::Vector3d p = pose.apply(c.model_point);
    if (!(p.z() > 0)) return std::numeric_limits<double>::infinity();
    return (project_point(p, cam) - c.image_point).norm();
}

inline double mean_reprojection_error(const RigidTransform& pose,
                                      std::span<const Correspondence> corrs,
                                      const CameraIntrinsics& cam) {
    if (corrs.empty()) return std::numeric_limits<double>::infinity();
    double sum = 0;
    for (const auto& c : corrs) sum += reprojection_error(pose, c, cam);
    return sum / static_cast<double>(corrs.size());
}

// Levenberg-Marquardt over 6 pose parameters (left-perturbation axis-angle +
// translation), minimizing squared pixel reprojection error.
inline bool lm_refine(RigidTransform& pose, std::span<const Correspondence> corrs,
                      const CameraIntrinsics& cam, int max_iterations = 60) {
    const std::size_t n = corrs.size();
    auto cost_of = [&](const RigidTransform& t) {
        double cost = 0;
        for (const auto& c : corrs) {
            const Eigen::Vector3d p = t.apply(c.model_point);
            if (!(p.z() > 1e-9)) return std::numeric_limits<double>::infinity();
            cost += (project_point(p, cam) - c.image_point).squaredNorm();
        }
        return cost;
    };

    double cost = cost_of(pose);
    if (!std::isfinite(cost)) return false;
    double lambda = 1e-3;

    for (int iter = 0; iter < max_iterations; ++iter) {
        Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d p = pose.apply(corrs[i].model_point);
            const double iz = 1.0 / p.z();
            Eigen::Matrix<double, 2, 3> jp;
            jp << cam.fx * iz, 0, -cam.fx * p.x() * iz * iz, 0, cam.fy * iz,
                -cam.fy * p.y() * iz * iz;
            Eigen::Matrix<double, 2, 6> j;
            j.leftCols<3>() = jp * (-skew(pose.rotation * corrs[i].model_point));
            j.rightCols<3>() = jp;
            const Eigen::Vector2d r = project_point(p, cam) - corrs[i].image_point;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        if (jtr.lpNorm<Eigen::Infinity>() < 1e-14) break;

        bool stepped = false;
        for (int attempt = 0; attempt < 10; ++attempt) {
            Eigen::Matrix<double, 6, 6> damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-jtr);
            if (!delta.allFinite()) {
                lambda *= 10;
                continue;
            }
            RigidTransform trial;
            trial.rotation = exp_so3(delta.head<3>()) * pose.rotation;
            trial.translation = pose.translation + delta.tail<3>();
            const double trial_cost = cost_of(trial);
            if (trial_cost < cost) {
                const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
                pose = trial;
                cost = trial_cost;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                if (delta.norm() < 1e-14 || rel < 1e-16) iter = max_iterations;
                break;
            }
            lambda *= 10;
        }
        if (!stepped) break;
    }
    pose.rotation = orthonormalized(pose.rotation);
    return std::isfinite(cost) && pose.translation.allFinite();
}

// ---- EPnP closed form (non-planar point sets) ----

struct EpnpContext {
    std::vector<Eigen::Vector3d> pws;
    std::vector<Eigen::Vector2d> us;
    std::array<Eigen::Vector3d, 4> cws;
    std::vector<Eigen::Vector4d> alphas;
    Eigen::Matrix<double, 12, 4> null4;  // 4 smallest eigenvectors of MtM
    Eigen::Matrix<double, 6, 10> l6x10;
    Eigen::Matrix<double, 6, 1> rho;
};

inline void epnp_choose_control_points(EpnpContext& ctx) {
    const std::size_t n = ctx.pws.size();
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : ctx.pws) centroid += p;
    centroid /= static_cast<double>(n);
    ctx.cws[0] = centroid;

    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto& p : ctx.pws) scatter += (p - centroid) * (p - centroid).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    // eigenvalues ascending; use descending order for the control axes
    for (int i = 0; i < 3; ++i) {
        const double lam = std::max(eig.eigenvalues()(2 - i), 0.0);
        ctx.cws[1 + i] = centroid + std::sqrt(lam / static_cast<double>(n)) * eig.eigenvectors().col(2 - i);
    }
}

inline bool epnp_compute_barycentric(EpnpContext& ctx) {
    Eigen::Matrix3d cc;
    for (int i = 0; i < 3; ++i) cc.col(i) = ctx.cws[1 + i] - ctx.cws[0];
    const Eigen::Matrix3d cc_inv = cc.fullPivLu().inverse();
    if (!cc_inv.allFinite()) return false;
    ctx.alphas.resize(ctx.pws.size());
    for (std::size_t i = 0; i < ctx.pws.size(); ++i) {
        const Eigen::Vector3d a = cc_inv * (ctx.pws[i] - ctx.cws[0]);
        ctx.alphas[i] = {1.0 - a.sum(), a.x(), a.y(), a.z()};
    }
    return true;
}

inline void epnp_fill_null_basis(EpnpContext& ctx, const CameraIntrinsics& cam) {
    const std::size_t n = ctx.pws.size();
    Eigen::MatrixXd m(2 * n, 12);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < 4; ++j) {
            const double a = ctx.alphas[i](j);
            m(2 * i, 3 * j) = a * cam.fx;
            m(2 * i, 3 * j + 1) = 0;
            m(2 * i, 3 * j + 2) = a * (cam.cx - ctx.us[i].x());
            m(2 * i + 1, 3 * j) = 0;
            m(2 * i + 1, 3 * j + 1) = a * cam.fy;
            m(2 * i + 1, 3 * j + 2) = a * (cam.cy - ctx.us[i].y());
        }
    }
    const Eigen::Matrix<double, 12, 12> mtm = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> eig(mtm);
    for (int k = 0; k < 4; ++k) ctx.null4.col(k) = eig.eigenvectors().col(k);
}

inline void epnp_fill_l_and_rho(EpnpContext& ctx) {
    static constexpr int pair_a[6] = {0, 0, 0, 1, 1, 2};
    static constexpr int pair_b[6] = {1, 2, 3, 2, 3, 3};
    // dv[k][pair]: difference of control-point blocks of null vector k
    Eigen::Vector3d dv[4][6];
    for (int k = 0; k < 4; ++k)
        for (int p = 0; p < 6; ++p)
            dv[k][p] = ctx.null4.col(k).segment<3>(3 * pair_a[p]) -
                       ctx.null4.col(k).segment<3>(3 * pair_b[p]);

    for (int p = 0; p < 6; ++p) {
        ctx.l6x10(p, 0) = dv[0][p].dot(dv[0][p]);
        ctx.l6x10(p, 1) = 2 * dv[0][p].dot(dv[1][p]);
        ctx.l6x10(p, 2) = dv[1][p].dot(dv[1][p]);
        ctx.l6x10(p, 3) = 2 * dv[0][p].dot(dv[2][p]);
        ctx.l6x10(p, 4) = 2 * dv[1][p].dot(dv[2][p]);
        ctx.l6x10(p, 5) = dv[2][p].dot(dv[2][p]);
        ctx.l6x10(p, 6) = 2 * dv[0][p].dot(dv[3][p]);
        ctx.l6x10(p, 7) = 2 * dv[1][p].dot(dv[3][p]);
        ctx.l6x10(p, 8) = 2 * dv[2][p].dot(dv[3][p]);
        ctx.l6x10(p, 9) = dv[3][p].dot(dv[3][p]);
        ctx.rho(p) = (ctx.cws[pair_a[p]] - ctx.cws[pair_b[p]]).squaredNorm();
    }
}

inline Eigen::Vector4d epnp_betas_approx1(const EpnpContext& ctx) {
    Eigen::Matrix<double, 6, 4> l;
    l.col(0) = ctx.l6x10.col(0);
    l.col(1) = ctx.l6x10.col(1);
    l.col(2) = ctx.l6x10.col(3);
    l.col(3) = ctx.l6x10.col(6);
    const Eigen::Vector4d b = l.colPivHouseholderQr().solve(ctx.rho);
    Eigen::Vector4d betas;
    if (b(0) < 0) {
        betas(0) = std::sqrt(-b(0));
        betas(1) = -b(1) / betas(0);
        betas(2) = -b(2) / betas(0);
        betas(3) = -b(3) / betas(0);
    } else {
        betas(0) = std::sqrt(b(0));
        betas(1) = b(1) / betas(0);
        betas(2) = b(2) / betas(0);
        betas(3) = b(3) / betas(0);
    }
    return betas;
}

inline Eigen::Vector4d epnp_betas_approx2(const EpnpContext& ctx) {
    const Eigen::Matrix<double, 6, 3> l = ctx.l6x10.leftCols<3>();
    const Eigen::Vector3d b = l.colPivHouseholderQr().solve(ctx.rho);
    Eigen::Vector4d betas = Eigen::Vector4d::Zero();
    if (b(0) < 0) {
        betas(0) = std::sqrt(-b(0));
        betas(1) = (b(2) < 0) ? std::sqrt(-b(2)) : 0.0;
    } else {
        betas(0) = std::sqrt(b(0));
        betas(1) = (b(2) > 0) ? std::sqrt(b(2)) : 0.0;
    }
    if (b(1) < 0) betas(0) = -betas(0);
    return betas;
}

inline Eigen::Vector4d epnp_betas_approx3(const EpnpContext& ctx) {
    const Eigen::Matrix<double, 6, 5> l = ctx.l6x10.leftCols<5>();
    const Eigen::Matrix<double, 5, 1> b = l.colPivHouseholderQr().solve(ctx.rho);
    Eigen::Vector4d betas = Eigen::Vector4d::Zero();
    if (b(0) < 0) {
        betas(0) = std::sqrt(-b(0));
        betas(1) = (b(2) < 0) ? std::sqrt(-b(2)) : 0.0;
    } else {
        betas(0) = std::sqrt(b(0));
        betas(1) = (b(2) > 0) ? std::sqrt(b(2)) : 0.0;
    }
    if (b(1) < 0) betas(0) = -betas(0);
    betas(2) = b(3) / betas(0);
    return betas;
}

// R, t with p_camera = R * p_world + t, least squares over paired points.
inline RigidTransform kabsch_rigid(const std::vector<Eigen::Vector3d>& world,
                                   const std::vector<Eigen::Vector3d>& camera) {
    const std::size_t n = world.size();
    Eigen::Vector3d cw = Eigen::Vector3d::Zero(), cc = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        cw += world[i];
        cc += camera[i];
    }
    cw /= static_cast<double>(n);
    cc /= static_cast<double>(n);
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i) h += (camera[i] - cc) * (world[i] - cw).transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    const Eigen::Matrix3d v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0) u.col(2) = -u.col(2);
    RigidTransform pose;
    pose.rotation = u * v.transpose();
    pose.translation = cc - pose.rotation * cw;
    return pose;
}

// Real roots of c4 x^4 + c3 x^3 + c2 x^2 + c1 x + c0 via the companion matrix.
inline std::vector<double> solve_quartic_real(double c4, double c3, double c2, double c1,
                                              double c0) {
    std::vector<double> roots;
    if (std::abs(c4) < 1e-14) return roots;
    Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
    companion(0, 3) = -c0 / c4;
    companion(1, 3) = -c1 / c4;
    companion(2, 3) = -c2 / c4;
    companion(3, 3) = -c3 / c4;
    companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
    Eigen::EigenSolver<Eigen::Matrix4d> eig(companion, false);
    for (int i = 0; i < 4; ++i) {
        const auto lam = eig.eigenvalues()(i);
        if (std::abs(lam.imag()) < 1e-8 * std::max(1.0, std::abs(lam.real())))
            roots.push_back(lam.real());
    }
    return roots;
}

// Grunert's three-point pose: up to four solutions from a quartic in the
// distance ratios. Used for minimal samples where EPnP is poorly conditioned.
inline std::vector<RigidTransform> p3p_candidates(const Correspondence& ca,
                                                  const Correspondence& cb,
                                                  const Correspondence& cc_,
                                                  const CameraIntrinsics& cam) {
    std::vector<RigidTransform> out;
    auto bearing = [&](const Eigen::Vector2d& px) {
        Eigen::Vector3d v((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0);
        return v.normalized();
    };
    const Eigen::Vector3d u = bearing(ca.image_point);
    const Eigen::Vector3d v = bearing(cb.image_point);
    const Eigen::Vector3d w = bearing(cc_.image_point);

    const double cos_uv = u.dot(v);
    const double cos_uw = u.dot(w);
    const double cos_vw = v.dot(w);

    const double dist_ab_2 = (ca.model_point - cb.model_point).squaredNorm();
    const double dist_ac_2 = (ca.model_point - cc_.model_point).squaredNorm();
    const double dist_bc_2 = (cb.model_point - cc_.model_point).squaredNorm();
    if (dist_ab_2 < 1e-16 || dist_ac_2 < 1e-16 || dist_bc_2 < 1e-16) return out;
    const double dist_ab = std::sqrt(dist_ab_2);

    const double a = dist_bc_2 / dist_ab_2;
    const double b = dist_ac_2 / dist_ab_2;

    const double a2 = a * a, b2 = b * b;
    const double p = 2 * cos_vw, q = 2 * cos_uw, r = 2 * cos_uv;
    const double p2 = p * p, p3 = p2 * p, q2 = q * q;
    const double r2 = r * r, r3 = r2 * r, r4 = r3 * r, r5 = r4 * r;

    const double k4 = a2 + b2 - 2 * a - 2 * b + (2 - r2) * a * b + 1;
    const double k3 = -2 * q * a2 - r * p * b2 + 4 * q * a + (2 * q + p * r) * b +
                      (r2 * q - 2 * q + r * p) * a * b - 2 * q;
    const double k2 = (2 + q2) * a2 + (p2 + r2 - 2) * b2 - (4 + 2 * q2) * a -
                      (p * q * r + p2) * b - (p * q * r + r2) * a * b + q2 + 2;
    const double k1 = -2 * q * a2 - r * p * b2 + 4 * q * a + (p * r + q * p2 - 2 * q) * b +
                      (r * p + 2 * q) * a * b - 2 * q;
    const double k0 = a2 + b2 - 2 * a + (2 - p2) * b - 2 * a * b + 1;

    const std::vector<Eigen::Vector3d> world = {ca.model_point, cb.model_point, cc_.model_point};
    for (const double x : solve_quartic_real(k4, k3, k2, k1, k0)) {
        if (x <= 0) continue;
        const double x2 = x * x, x3 = x2 * x;

        const double bb1 =
            (p2 - p * q * r + r2) * a + (p2 - r2) * b - p2 + p * q * r - r2;
        const double b1 = b * bb1 * bb1;
        if (std::abs(b1) < 1e-14) continue;
        const double b0 =
            ((1 - a - b) * x2 + (a - 1) * q * x - a + b + 1) *
            (r3 * (a2 + b2 - 2 * a - 2 * b + (2 - r2) * a * b + 1) * x3 +
             r2 *
                 (p + p * a2 - 2 * r * q * a * b + 2 * r * q * b - 2 * r * q - 2 * p * a -
                  2 * p * b + p * r2 * b + 4 * r * q * a + q * r3 * a * b - 2 * r * q * a2 +
                  2 * p * a * b + p * b2 - r2 * p * b2) *
                 x2 +
             (r5 * (b2 - a * b) - r4 * p * q * b +
              r3 * (q2 - 4 * a - 2 * q2 * a + q2 * a2 + 2 * a2 - 2 * b2 + 2) +
              r2 * (4 * p * q * a - 2 * p * q * a * b + 2 * p * q * b - 2 * p * q -
                    2 * p * q * a2) +
              r * (p2 * b2 - 2 * p2 * b + 2 * p2 * a * b - 2 * p2 * a + p2 + p2 * a2)) *
                 x +
             (2 * p * r2 - 2 * r3 * q + p3 - 2 * p2 * q * r + p * q2 * r2) * a2 +
             (p3 - 2 * p * r2) * b2 +
             (4 * q * r3 - 4 * p * r2 - 2 * p3 + 4 * p2 * q * r - 2 * p * q2 * r2) * a +
             (-2 * q * r3 + p * r4 + 2 * p2 * q * r - 2 * p3) * b +
             (2 * p3 + 2 * q * r3 - 2 * p2 * q * r) * a * b + p * q2 * r2 -
             2 * p2 * q * r + 2 * p * r2 + p3 - 2 * r3 * q);
        const double y = b0 / b1;
        if (!(y > 0)) continue;

        const double nu = x2 + y * y - 2 * x * y * cos_uv;
        if (!(nu > 0)) continue;
        const double dist_pc = dist_ab / std::sqrt(nu);
        const double dist_pb = y * dist_pc;
        const double dist_pa = x * dist_pc;

        const std::vector<Eigen::Vector3d> camera = {u * dist_pa, v * dist_pb, w * dist_pc};
        out.push_back(kabsch_rigid(world, camera));
    }
    return out;
}

inline void epnp_gauss_newton(const EpnpContext& ctx, Eigen::Vector4d& betas) {
    for (int iter = 0; iter < 5; ++iter) {
        Eigen::Matrix<double, 6, 4> a;
        Eigen::Matrix<double, 6, 1> r;
        for (int p = 0; p < 6; ++p) {
            const auto& row = ctx.l6x10.row(p);
            a(p, 0) = 2 * row(0) * betas(0) + row(1) * betas(1) + row(3) * betas(2) + row(6) * betas(3);
            a(p, 1) = row(1) * betas(0) + 2 * row(2) * betas(1) + row(4) * betas(2) + row(7) * betas(3);
            a(p, 2) = row(3) * betas(0) + row(4) * betas(1) + 2 * row(5) * betas(2) + row(8) * betas(3);
            a(p, 3) = row(6) * betas(0) + row(7) * betas(1) + row(8) * betas(2) + 2 * row(9) * betas(3);
            const double fb = row(0) * betas(0) * betas(0) + row(1) * betas(0) * betas(1) +
                              row(2) * betas(1) * betas(1) + row(3) * betas(0) * betas(2) +
                              row(4) * betas(1) * betas(2) + row(5) * betas(2) * betas(2) +
                              row(6) * betas(0) * betas(3) + row(7) * betas(1) * betas(3) +
                              row(8) * betas(2) * betas(3) + row(9) * betas(3) * betas(3);
            r(p) = ctx.rho(p) - fb;
        }
        const Eigen::Vector4d delta = a.colPivHouseholderQr().solve(r);
        if (!delta.allFinite()) break;
        betas += delta;
    }
}

inline RigidTransform epnp_pose_from_betas(const EpnpContext& ctx, const Eigen::Vector4d& betas) {
    std::array<Eigen::Vector3d, 4> ccs;
    for (int j = 0; j < 4; ++j) {
        ccs[j].setZero();
        for (int k = 0; k < 4; ++k) ccs[j] += betas(k) * ctx.null4.col(k).segment<3>(3 * j);
    }
    const std::size_t n = ctx.pws.size();
    std::vector<Eigen::Vector3d> pcs(n);
    for (std::size_t i = 0; i < n; ++i) {
        pcs[i].setZero();
        for (int j = 0; j < 4; ++j) pcs[i] += ctx.alphas[i](j) * ccs[j];
    }
    double zsum = 0;
    for (const auto& p : pcs) zsum += p.z();
    if (zsum < 0)
        for (auto& p : pcs) p = -p;

    return kabsch_rigid(ctx.pws, pcs);
}

inline bool epnp_solve(std::span<const Correspondence> corrs, const CameraIntrinsics& cam,
                       RigidTransform& out) {
    EpnpContext ctx;
    ctx.pws.reserve(corrs.size());
    ctx.us.reserve(corrs.size());
    for (const auto& c : corrs) {
        ctx.pws.push_back(c.model_point);
        ctx.us.push_back(c.image_point);
    }
    epnp_choose_control_points(ctx);
    if (!epnp_compute_barycentric(ctx)) return false;
    epnp_fill_null_basis(ctx, cam);
    epnp_fill_l_and_rho(ctx);

    double best_err = std::numeric_limits<double>::infinity();
    for (int variant = 0; variant < 3; ++variant) {
        Eigen::Vector4d betas;
        if (variant == 0) betas = epnp_betas_approx1(ctx);
        else if (variant == 1) betas = epnp_betas_approx2(ctx);
        else betas = epnp_betas_approx3(ctx);
        if (!betas.allFinite()) continue;
        epnp_gauss_newton(ctx, betas);
        if (!betas.allFinite()) continue;
        const RigidTransform pose = epnp_pose_from_betas(ctx, betas);
        const double err = mean_reprojection_error(pose, corrs, cam);
        if (err < best_err) {
            best_err = err;
            out = pose;
        }
    }
    return std::isfinite(best_err);
}

// ---- Planar fallback: normalized-DLT homography decomposition ----
//
// Planar configurations admit two reprojection-equivalent poses; both are
// produced (the second by reflecting through the model plane on each side) and
// the caller keeps whichever refines to the lower error.

inline bool planar_solve(std::span<const Correspondence> corrs, const CameraIntrinsics& cam,
                         const Eigen::Vector3d& centroid, const Eigen::Matrix3d& plane_basis,
                         std::array<RigidTransform, 2>& out) {
    const std::size_t n = corrs.size();
    const Eigen::Vector3d v3 = plane_basis.col(2);

    std::vector<Eigen::Vector2d> q(n), u(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d d = corrs[i].model_point - centroid;
        q[i] = {plane_basis.col(0).dot(d), plane_basis.col(1).dot(d)};
        u[i] = corrs[i].image_point;
    }

    auto normalizer = [](const std::vector<Eigen::Vector2d>& pts) {
        Eigen::Vector2d c = Eigen::Vector2d::Zero();
        for (const auto& p : pts) c += p;
        c /= static_cast<double>(pts.size());
        double mean_dist = 0;
        for (const auto& p : pts) mean_dist += (p - c).norm();
        mean_dist /= static_cast<double>(pts.size());
        const double s = (mean_dist > 1e-12) ? std::sqrt(2.0) / mean_dist : 1.0;
        Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
        t(0, 0) = t(1, 1) = s;
        t(0, 2) = -s * c.x();
        t(1, 2) = -s * c.y();
        return t;
    };
    const Eigen::Matrix3d tq = normalizer(q);
    const Eigen::Matrix3d tu = normalizer(u);

    Eigen::MatrixXd a(2 * n, 9);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d qh = tq * Eigen::Vector3d(q[i].x(), q[i].y(), 1.0);
        const Eigen::Vector3d uh = tu * Eigen::Vector3d(u[i].x(), u[i].y(), 1.0);
        a.row(2 * i) << 0, 0, 0, -qh.transpose(), uh.y() * qh.transpose();
        a.row(2 * i + 1) << qh.transpose(), 0, 0, 0, -uh.x() * qh.transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    Eigen::Matrix3d hom = tu.fullPivLu().inverse() * hn * tq;
    if (!hom.allFinite()) return false;

    Eigen::Matrix3d k;
    k << cam.fx, 0, cam.cx, 0, cam.fy, cam.cy, 0, 0, 1;
    Eigen::Matrix3d g = k.fullPivLu().inverse() * hom;
    const double scale = 2.0 / (g.col(0).norm() + g.col(1).norm());
    if (!std::isfinite(scale)) return false;
    g *= scale;
    if (g(2, 2) < 0) g = -g;  // plane centroid must sit in front of the camera

    Eigen::Matrix3d r_raw;
    r_raw.col(0) = g.col(0);
    r_raw.col(1) = g.col(1);
    r_raw.col(2) = g.col(0).cross(g.col(1));
    const Eigen::Matrix3d r_h = orthonormalized(r_raw);
    const Eigen::Vector3d t_h = g.col(2);

    RigidTransform pose;
    pose.rotation = r_h * plane_basis.transpose();
    pose.translation = t_h - pose.rotation * centroid;
    out[0] = pose;

    // Second candidate: reflect through the plane in both frames.
    const Eigen::Vector3d n_cam = pose.rotation * v3;
    const Eigen::Vector3d on_plane = pose.apply(centroid);
    const Eigen::Matrix3d mc = Eigen::Matrix3d::Identity() - 2.0 * n_cam * n_cam.transpose();
    const Eigen::Matrix3d mm = Eigen::Matrix3d::Identity() - 2.0 * v3 * v3.transpose();
    RigidTransform mirrored;
    mirrored.rotation = mc * pose.rotation * mm;
    mirrored.translation = on_plane - mirrored.rotation * centroid;
    out[1] = mirrored;
    return true;
}

struct ShapeAnalysis {
    Eigen::Vector3d centroid;
    Eigen::Matrix3d axes;          // columns: principal axes, descending spread
    Eigen::Vector3d eigenvalues;   // descending
};

inline ShapeAnalysis analyze_shape(std::span<const Correspondence> corrs) {
    ShapeAnalysis s;
    s.centroid.setZero();
    for (const auto& c : corrs) s.centroid += c.model_point;
    s.centroid /= static_cast<double>(corrs.size());
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto& c : corrs)
        scatter += (c.model_point - s.centroid) * (c.model_point - s.centroid).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    for (int i = 0; i < 3; ++i) {
        s.eigenvalues(i) = eig.eigenvalues()(2 - i);
        s.axes.col(i) = eig.eigenvectors().col(2 - i);
    }
    if (s.axes.determinant() < 0) s.axes.col(2) = -s.axes.col(2);
    return s;
}

inline RigidTransform solve_pnp_impl(std::span<const Correspondence> corrs,
                                     const CameraIntrinsics& cam, int lm_iterations) {
    const auto shape = analyze_shape(corrs);
    const double lead = shape.eigenvalues(0);
    if (!(lead > 0) || shape.eigenvalues(1) <= 1e-10 * lead)
        fail(ErrorCode::DegenerateConfiguration, "model points are collinear");

    RigidTransform best;
    double best_err = std::numeric_limits<double>::infinity();
    auto consider = [&](RigidTransform pose) {
        if (!lm_refine(pose, corrs, cam, lm_iterations)) return;
        const double err = mean_reprojection_error(pose, corrs, cam);
        if (err < best_err) {
            best_err = err;
            best = pose;
        }
    };

    if (shape.eigenvalues(2) <= 1e-6 * lead) {
        std::array<RigidTransform, 2> candidates;
        if (planar_solve(corrs, cam, shape.centroid, shape.axes, candidates)) {
            consider(candidates[0]);
            consider(candidates[1]);
        }
    } else {
        RigidTransform init;
        if (epnp_solve(corrs, cam, init)) consider(init);
    }

    // Small sets: EPnP's relinearization can land in the wrong basin, so also
    // seed from the three-point minimal solver. All four triplets are tried in
    // the minimal case; one suffices once extra points pin the basin.
    const int n = static_cast<int>(corrs.size());
    if (n <= 6) {
        const int rounds = (n == 4) ? 4 : 1;
        for (int s = 0; s < rounds; ++s) {
            std::array<int, 3> tri{};
            int w = 0;
            for (int i = 0; i < n && w < 3; ++i) {
                if (rounds == 4 && i == s) continue;
                tri[w++] = i;
            }
            for (const auto& cand :
                 p3p_candidates(corrs[tri[0]], corrs[tri[1]], corrs[tri[2]], cam))
                consider(cand);
        }
    }

    if (!std::isfinite(best_err)) fail(ErrorCode::NoConvergence, "pose refinement diverged");
    if (!is_valid_rotation(best.rotation))
        fail(ErrorCode::NoConvergence, "refined rotation left SO(3)");
    return best;
}

// Deterministic sampler: a partial Fisher-Yates with a modulo-bounded draw so
// results do not depend on the standard library's distribution internals.
inline void sample_distinct(std::mt19937_64& rng, int n, int k, std::vector<int>& scratch,
                            std::vector<int>& out) {
    scratch.resize(n);
    for (int i = 0; i < n; ++i) scratch[i] = i;
    out.clear();
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(n - i));
        std::swap(scratch[i], scratch[j]);
        out.push_back(scratch[i]);
    }
}

}  // namespace pnp_detail

// Pose from >= 4 correspondences: closed-form initialization followed by
// Levenberg-Marquardt on the reprojection error. Coplanar sets are handled by
// a homography decomposition with both sign candidates.
inline RigidTransform solve_pnp(std::span<const Correspondence> correspondences,
                                const CameraIntrinsics& cam) {
    cam.validate();
    if (correspondences.size() < 4)
        fail(ErrorCode::InvalidArgument, "solve_pnp requires at least 4 correspondences");
    for (const auto& c : correspondences) {
        if (!c.model_point.allFinite() || !c.image_point.allFinite())
            fail(ErrorCode::InvalidArgument, "non-finite correspondence");
        if (c.confidence < 0 || c.confidence > 1)
            fail(ErrorCode::InvalidArgument, "confidence outside [0,1]");
    }
    return pnp_detail::solve_pnp_impl(correspondences, cam, 60);
}

// RANSAC-wrapped solve_pnp. Correspondences with confidence below 0.1 are
// excluded up front; reported inlier indices refer to the input list.
// Deterministic for a fixed cfg.rng_seed.
inline PnpResult solve_pnp_ransac(std::span<const Correspondence> correspondences,
                                  const CameraIntrinsics& cam, const RansacConfig& cfg) {
    cam.validate();
    cfg.validate();

    std::vector<int> active;  // indices into `correspondences`
    std::vector<Correspondence> pool;
    for (std::size_t i = 0; i < correspondences.size(); ++i) {
        if (correspondences[i].confidence >= 0.1) {
            active.push_back(static_cast<int>(i));
            pool.push_back(correspondences[i]);
        }
    }
    const int n = static_cast<int>(pool.size());
    if (n < cfg.min_inliers)
        fail(ErrorCode::InsufficientInliers,
             "only " + std::to_string(n) + " usable correspondences, need " +
                 std::to_string(cfg.min_inliers));

    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<int> scratch, sample_idx;
    std::vector<Correspondence> sample(4);

    auto inliers_for = [&](const RigidTransform& pose, std::vector<int>& out) {
        out.clear();
        double err_sum = 0;
        for (int i = 0; i < n; ++i) {
            const double e = pnp_detail::reprojection_error(pose, pool[i], cam);
            if (e < cfg.inlier_threshold) {
                out.push_back(i);
                err_sum += e;
            }
        }
        return out.empty() ? std::numeric_limits<double>::infinity()
                           : err_sum / static_cast<double>(out.size());
    };

    RigidTransform best_pose;
    std::vector<int> best_inliers, trial_inliers;
    double best_err = std::numeric_limits<double>::infinity();
    long needed = cfg.max_iterations;

    for (long iter = 0; iter < needed && iter < cfg.max_iterations; ++iter) {
        pnp_detail::sample_distinct(rng, n, 4, scratch, sample_idx);
        for (int i = 0; i < 4; ++i) sample[i] = pool[sample_idx[i]];
        RigidTransform pose;
        try {
            pose = pnp_detail::solve_pnp_impl(sample, cam, 25);
        } catch (const Error&) {
            continue;  // degenerate sample
        }
        const double err = inliers_for(pose, trial_inliers);
        if (trial_inliers.size() > best_inliers.size() ||
            (trial_inliers.size() == best_inliers.size() && err < best_err)) {
            best_inliers = trial_inliers;
            best_err = err;
            best_pose = pose;
            const double w = static_cast<double>(best_inliers.size()) / n;
            const double p_sample = std::pow(w, 4);
            if (p_sample >= 1.0 - 1e-12) break;
            if (p_sample > 0) {
                const double denom = std::log1p(-p_sample);
                needed = static_cast<long>(
                    std::ceil(std::log(1.0 - cfg.confidence_target) / denom));
            }
        }
    }

    if (static_cast<int>(best_inliers.size()) < cfg.min_inliers)
        fail(ErrorCode::InsufficientInliers,
             "best consensus has " + std::to_string(best_inliers.size()) + " inliers, need " +
                 std::to_string(cfg.min_inliers));

    // Refit on the consensus set until the inlier set stabilizes; the reported
    // inliers are always consistent with the returned pose.
    std::vector<Correspondence> subset;
    for (int round = 0; round < 3; ++round) {
        subset.clear();
        for (int i : best_inliers) subset.push_back(pool[i]);
        RigidTransform refined;
        try {
            refined = pnp_detail::solve_pnp_impl(subset, cam, 60);
        } catch (const Error&) {
            break;
        }
        const double err = inliers_for(refined, trial_inliers);
        if (static_cast<int>(trial_inliers.size()) < cfg.min_inliers) break;
        const bool same = trial_inliers == best_inliers;
        best_pose = refined;
        best_inliers = trial_inliers;
        best_err = err;
        if (same) break;
    }

    PnpResult result;
    result.pose = best_pose;
    result.inlier_indices.reserve(best_inliers.size());
    for (int i : best_inliers) result.inlier_indices.push_back(active[i]);
    result.mean_reprojection_error = best_err;
    return result;
}

}  // namespace asmpose
