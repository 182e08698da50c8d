#include <cmath>

#include "softperc/sim/sim.hpp"

namespace softperc::sim {

void validate_scene(const SceneConfig& scene) {
    if (scene.finger.spring_k <= 0) throw NumericError("scene: spring constant must be positive");
    if (scene.contact_k <= 0) throw NumericError("scene: contact stiffness must be positive");
    if (scene.finger.n_links < 1) throw NumericError("scene: finger needs at least one link");
    // Keep obstacles clear of the base column (a small cylinder around the
    // world origin).
    constexpr double column_clearance = 0.02;
    for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
        const auto& b = scene.boxes[i];
        const double reach = std::hypot(b.half.x, b.half.y);
        if (std::hypot(b.center.x, b.center.y) < reach + column_clearance)
            throw NumericError("scene: box " + std::to_string(i) + " intersects the robot base");
    }
}

/// Mount frame: the finger's local +z is its axis, pointing downward at zero
/// pitch; local +x lies in the radial/vertical plane, so even (FE) joints
/// rotate the chain within that plane and odd (AA) joints out of it.
static void mount_frame(const SceneConfig& scene, const RigidArmState& arm, Vec3& pos, Mat3& rot) {
    const double q1 = arm.q[0];
    const double radius = scene.arm.base_radius + arm.q[1];
    const double height = scene.arm.base_height + arm.q[2];
    pos = {radius * std::cos(q1), radius * std::sin(q1), height};
    rot = Mat3::rot_z(q1) * Mat3::rot_y(M_PI + scene.finger.mount_pitch);
}

Kinematics forward_kinematics(const SceneConfig& scene, const RigidArmState& arm,
                              const FingerState& finger) {
    validate_arm_state(scene.arm, arm);
    validate_finger_state(scene.finger, finger);

    Kinematics k;
    mount_frame(scene, arm, k.mount, k.mount_rot);
    k.links.resize(static_cast<std::size_t>(scene.finger.n_links));

    Vec3 p = k.mount;
    Mat3 r = k.mount_rot;
    for (int i = 0; i < scene.finger.n_links; ++i) {
        auto& link = k.links[static_cast<std::size_t>(i)];
        const bool fe = (i % 2 == 0);
        link.origin = p;
        link.axis = fe ? r.col(1) : r.col(0);  // FE about local y, AA about local x
        const double q = finger.q[static_cast<std::size_t>(i)];
        r = r * (fe ? Mat3::rot_y(q) : Mat3::rot_x(q));
        p = p + r * Vec3{0, 0, scene.finger.link_length};
        link.center = p;
        link.rot = r;
    }
    return k;
}

}  // namespace softperc::sim
