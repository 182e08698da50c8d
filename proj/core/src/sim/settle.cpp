#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <vector>

#include "softperc/sim/sim.hpp"

namespace softperc::sim {

namespace {

struct ContactPoint {
    int link = 0;
    double depth = 0.0;  // penetration, > 0
    Vec3 normal;         // world direction the sphere is pushed along
};

/// Signed distance from a point to a yaw-oriented box, with the outward
/// normal at the closest feature. Negative inside.
double box_signed_distance(const Box& box, const Vec3& p, Vec3& normal) {
    const Mat3 to_box = Mat3::rot_z(-box.yaw);
    const Vec3 q = to_box * (p - box.center);
    const Vec3 h = box.half;
    const Vec3 cl{std::clamp(q.x, -h.x, h.x), std::clamp(q.y, -h.y, h.y),
                  std::clamp(q.z, -h.z, h.z)};
    const Vec3 diff = q - cl;
    const double dist = diff.norm();
    Vec3 n_local;
    double sd;
    if (dist > 1e-12) {
        sd = dist;
        n_local = diff * (1.0 / dist);
    } else {
        // Inside (or exactly on the surface): push out along the axis with
        // the smallest clearance.
        const double cx = h.x - std::abs(q.x);
        const double cy = h.y - std::abs(q.y);
        const double cz = h.z - std::abs(q.z);
        if (cx <= cy && cx <= cz) {
            sd = -cx;
            n_local = {q.x >= 0 ? 1.0 : -1.0, 0, 0};
        } else if (cy <= cz) {
            sd = -cy;
            n_local = {0, q.y >= 0 ? 1.0 : -1.0, 0};
        } else {
            sd = -cz;
            n_local = {0, 0, q.z >= 0 ? 1.0 : -1.0};
        }
    }
    normal = Mat3::rot_z(box.yaw) * n_local;
    return sd;
}

void gather_contacts(const SceneConfig& scene, const Kinematics& kin,
                     std::vector<ContactPoint>& out) {
    out.clear();
    const double r = scene.finger.link_radius;
    for (int i = 0; i < static_cast<int>(kin.links.size()); ++i) {
        const Vec3& c = kin.links[static_cast<std::size_t>(i)].center;
        const double d_ground = r - (c.z - scene.ground_z);
        if (d_ground > 0) out.push_back({i, d_ground, Vec3{0, 0, 1}});
        for (const auto& box : scene.boxes) {
            Vec3 n;
            const double sd = box_signed_distance(box, c, n);
            const double d = r - sd;
            if (d > 0) out.push_back({i, d, n});
        }
    }
}

double contact_energy(const SceneConfig& scene, const std::vector<ContactPoint>& contacts) {
    double e = 0;
    for (const auto& c : contacts) e += 0.5 * scene.contact_k * c.depth * c.depth;
    return e;
}

double spring_energy(const SceneConfig& scene, const FingerState& q) {
    double e = 0;
    for (double v : q.q) e += 0.5 * scene.finger.spring_k * v * v;
    return e;
}

FingerState clamped(const FingerConfig& fin, std::vector<double> q) {
    for (double& v : q) v = std::clamp(v, -fin.joint_limit, fin.joint_limit);
    return FingerState{std::move(q)};
}

/// Projected gradient norm of the energy at q (joints pinned at a limit do
/// not count toward it when pushed further out).
double projected_grad_norm(const SceneConfig& scene, const RigidArmState& arm,
                           const FingerState& q) {
    const Kinematics kin = forward_kinematics(scene, arm, q);
    std::vector<ContactPoint> contacts;
    gather_contacts(scene, kin, contacts);
    const int n = scene.finger.n_links;
    std::vector<double> grad(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) grad[static_cast<std::size_t>(j)] =
        scene.finger.spring_k * q.q[static_cast<std::size_t>(j)];
    for (const auto& c : contacts) {
        const Vec3& p = kin.links[static_cast<std::size_t>(c.link)].center;
        for (int j = 0; j <= c.link; ++j) {
            const auto& lf = kin.links[static_cast<std::size_t>(j)];
            grad[static_cast<std::size_t>(j)] -=
                scene.contact_k * c.depth * c.normal.dot(lf.axis.cross(p - lf.origin));
        }
    }
    double norm2 = 0;
    const double limit = scene.finger.joint_limit;
    for (int j = 0; j < n; ++j) {
        const double qj = q.q[static_cast<std::size_t>(j)];
        const double gj = grad[static_cast<std::size_t>(j)];
        const bool at_hi = qj >= limit - 1e-12 && gj < 0;
        const bool at_lo = qj <= -limit + 1e-12 && gj > 0;
        if (!at_hi && !at_lo) norm2 += gj * gj;
    }
    return std::sqrt(norm2);
}

}  // namespace

double finger_energy(const SceneConfig& scene, const RigidArmState& arm,
                     const FingerState& finger) {
    const Kinematics kin = forward_kinematics(scene, arm, finger);
    std::vector<ContactPoint> contacts;
    gather_contacts(scene, kin, contacts);
    return spring_energy(scene, finger) + contact_energy(scene, contacts);
}

SettleResult settle(const SceneConfig& scene, const RigidArmState& arm,
                    const std::optional<FingerState>& warm_start, const SettleOptions& opts) {
    validate_scene(scene);
    const int n = scene.finger.n_links;
    const double limit = scene.finger.joint_limit;

    FingerState q = warm_start ? clamped(scene.finger, warm_start->q) : FingerState::zeros(n);
    if (static_cast<int>(q.q.size()) != n)
        throw NumericError("settle: warm start has " + std::to_string(q.q.size()) +
                           " joints, expected " + std::to_string(n));

    std::vector<ContactPoint> contacts;
    Eigen::MatrixXd hess(n, n);
    Eigen::VectorXd grad(n), delta(n);
    // Per-contact depth Jacobian, reused across the Hessian accumulation.
    Eigen::VectorXd jac(n);

    double lambda = 1e-6;
    SettleResult res;
    double energy = finger_energy(scene, arm, q);

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        res.iterations = iter + 1;
        const Kinematics kin = forward_kinematics(scene, arm, q);
        gather_contacts(scene, kin, contacts);

        // grad E = k q + sum k_c d (d d/d q); Gauss-Newton H = k I + sum k_c J J^T
        grad.setZero();
        hess.setZero();
        for (int j = 0; j < n; ++j) {
            grad(j) = scene.finger.spring_k * q.q[static_cast<std::size_t>(j)];
            hess(j, j) = scene.finger.spring_k;
        }
        for (const auto& c : contacts) {
            jac.setZero();
            const Vec3& p = kin.links[static_cast<std::size_t>(c.link)].center;
            for (int j = 0; j <= c.link; ++j) {
                const auto& lf = kin.links[static_cast<std::size_t>(j)];
                const Vec3 dp = lf.axis.cross(p - lf.origin);
                jac(j) = -c.normal.dot(dp);  // d depth / d q_j
            }
            grad += scene.contact_k * c.depth * jac;
            hess.selfadjointView<Eigen::Lower>().rankUpdate(jac, scene.contact_k);
        }

        // Projected gradient: joints pinned at a limit cannot move outward.
        double gnorm2 = 0;
        for (int j = 0; j < n; ++j) {
            const double qj = q.q[static_cast<std::size_t>(j)];
            const bool at_hi = qj >= limit - 1e-12 && grad(j) < 0;
            const bool at_lo = qj <= -limit + 1e-12 && grad(j) > 0;
            if (!at_hi && !at_lo) gnorm2 += grad(j) * grad(j);
        }
        res.grad_norm = std::sqrt(gnorm2);
        if (res.grad_norm < opts.grad_tol) {
            res.converged = true;
            break;
        }

        Eigen::MatrixXd damped = hess;
        for (int j = 0; j < n; ++j) damped(j, j) += lambda;
        delta = -damped.selfadjointView<Eigen::Lower>().ldlt().solve(grad);

        bool accepted = false;
        double alpha = 1.0;
        for (int bt = 0; bt < 9; ++bt, alpha *= 0.5) {
            std::vector<double> trial = q.q;
            for (int j = 0; j < n; ++j) trial[static_cast<std::size_t>(j)] += alpha * delta(j);
            FingerState q_try = clamped(scene.finger, std::move(trial));
            const double e_try = finger_energy(scene, arm, q_try);
            // Strict descent; near the optimum E differences fall below double
            // resolution, so an equal-energy full step is also accepted when
            // it clearly shrinks the gradient (Newton's quadratic tail).
            const bool better = e_try < energy ||
                                (bt == 0 && e_try <= energy &&
                                 projected_grad_norm(scene, arm, q_try) < 0.5 * res.grad_norm);
            if (better) {
                assert(e_try <= energy);  // non-increasing across accepted iterations
                q = std::move(q_try);
                energy = e_try;
                lambda = std::max(lambda / 3.0, 1e-9);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            lambda *= 10.0;
            if (lambda > 1e12) break;  // numerically stuck; report non-convergence
        }
    }

    // Forces at the final configuration: per-link resultant of all penalty
    // contributions.
    const Kinematics kin = forward_kinematics(scene, arm, q);
    gather_contacts(scene, kin, contacts);
    std::vector<Vec3> resultant(static_cast<std::size_t>(n));
    for (const auto& c : contacts) {
        auto& v = resultant[static_cast<std::size_t>(c.link)];
        v = v + c.normal * (scene.contact_k * c.depth);
    }
    res.contact.f.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) res.contact.f[static_cast<std::size_t>(i)] =
        resultant[static_cast<std::size_t>(i)].norm();
    res.finger = std::move(q);
    res.energy = energy;
    return res;
}

}  // namespace softperc::sim
