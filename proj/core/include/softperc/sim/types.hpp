#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "softperc/common.hpp"

namespace softperc::sim {

// --------------------------------------------------------------------------
// small fixed-size linear algebra (world-frame geometry)
// --------------------------------------------------------------------------

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
};

struct Mat3 {
    // row-major
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }
    static Mat3 rot_x(double a) {
        const double c = std::cos(a), s = std::sin(a);
        return {{1, 0, 0, 0, c, -s, 0, s, c}};
    }
    static Mat3 rot_y(double a) {
        const double c = std::cos(a), s = std::sin(a);
        return {{c, 0, s, 0, 1, 0, -s, 0, c}};
    }
    static Mat3 rot_z(double a) {
        const double c = std::cos(a), s = std::sin(a);
        return {{c, -s, 0, s, c, 0, 0, 0, 1}};
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0;
                for (int k = 0; k < 3; ++k) acc += m[i * 3 + k] * o.m[k * 3 + j];
                r.m[i * 3 + j] = acc;
            }
        return r;
    }
    Mat3 transposed() const { return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}}; }
    Vec3 col(int j) const { return {m[j], m[3 + j], m[6 + j]}; }
};

// --------------------------------------------------------------------------
// configuration
// --------------------------------------------------------------------------

/// 3-DoF rigid arm: q1 rotary about the vertical base axis, q2 radial
/// prismatic, q3 vertical prismatic. The finger mount sits at radius
/// base_radius + q2 and height base_height + q3.
struct ArmConfig {
    double base_radius = 0.12;  // m, mount radius at q2 = 0
    double base_height = 0.23;  // m, mount height at q3 = 0
    std::array<double, 2> q1_bounds{-2.0, 2.0};     // rad
    std::array<double, 2> q2_bounds{0.0, 0.10};     // m
    std::array<double, 2> q3_bounds{-0.08, 0.05};   // m
    std::array<double, 3> home{0.0, 0.05, 0.0};
};

/// Passive spring-jointed finger hanging from the arm mount. Joint axes
/// alternate flexion/extension (even indices) and adduction/abduction (odd
/// indices) from base to tip; every joint shares the same spring constant.
struct FingerConfig {
    int n_links = 20;
    double link_length = 0.01;   // m
    double link_radius = 0.004;  // m, contact sphere radius
    double spring_k = 0.05;      // N*m/rad
    double joint_limit = M_PI / 3.0;
    double mount_pitch = 0.03;   // rad, radial-plane tilt of the mount
};

/// Yaw-only oriented box obstacle resting in the workspace.
struct Box {
    Vec3 center;
    Vec3 half;   // half-extents along the box's own axes
    double yaw = 0.0;
};

/// Static orthographic side-view camera looking along +y; the image plane is
/// the world x-z plane.
struct CameraConfig {
    double center_x = 0.06;  // m, world x at image center
    double center_z = 0.10;  // m, world z at image center
    double width = 0.44;     // m covered by the 64 px span
    int px = 64;
};

struct SceneConfig {
    ArmConfig arm;
    FingerConfig finger;
    CameraConfig camera;
    std::vector<Box> boxes;
    double contact_k = 500.0;  // N/m penalty stiffness
    double ground_z = 0.0;
    std::uint64_t seed = 0;  // seed the scene was sampled with (0 = hand-built)
};

/// Per-frame commanded joint increments on the rigid arm.
struct ActionBounds {
    double dq1 = 0.05;  // rad
    double dq2 = 0.01;  // m
    double dq3 = 0.01;  // m
};

// --------------------------------------------------------------------------
// state
// --------------------------------------------------------------------------

struct RigidArmState {
    std::array<double, 3> q{0, 0, 0};
};

struct FingerState {
    std::vector<double> q;  // one angle per joint, FE/AA interleaved

    static FingerState zeros(int n) { return FingerState{std::vector<double>(n, 0.0)}; }
};

struct ContactRecord {
    std::vector<double> f;  // resultant normal-force magnitude per link, N
};

struct Action {
    std::array<double, 3> d{0, 0, 0};  // (dq1, dq2, dq3)
};

struct VisionFrame {
    std::vector<float> rgb;  // 64*64*3, HWC, values in [0,1]
};

struct FlowTarget {
    std::vector<float> uv;  // 64*64*2, HWC, pixel displacements (du, dv)
};

// --------------------------------------------------------------------------
// derived geometry
// --------------------------------------------------------------------------

struct LinkFrame {
    Vec3 origin;  // joint position (proximal end)
    Vec3 center;  // contact sphere position (distal end)
    Vec3 axis;    // world-frame joint axis
    Mat3 rot;     // world orientation of the link
};

struct Kinematics {
    Vec3 mount;
    Mat3 mount_rot;
    std::vector<LinkFrame> links;
};

inline void validate_arm_state(const ArmConfig& arm, const RigidArmState& s) {
    static const char* names[3] = {"q1", "q2", "q3"};
    const std::array<std::array<double, 2>, 3> b{arm.q1_bounds, arm.q2_bounds, arm.q3_bounds};
    for (int i = 0; i < 3; ++i)
        if (s.q[i] < b[i][0] - 1e-12 || s.q[i] > b[i][1] + 1e-12)
            throw NumericError(std::string("arm joint ") + names[i] + " = " +
                               std::to_string(s.q[i]) + " outside [" + std::to_string(b[i][0]) +
                               ", " + std::to_string(b[i][1]) + "]");
}

inline void validate_finger_state(const FingerConfig& fin, const FingerState& s) {
    if (static_cast<int>(s.q.size()) != fin.n_links)
        throw NumericError("finger state has " + std::to_string(s.q.size()) + " joints, expected " +
                           std::to_string(fin.n_links));
    for (int i = 0; i < fin.n_links; ++i)
        if (std::abs(s.q[static_cast<std::size_t>(i)]) > fin.joint_limit + 1e-12)
            throw NumericError("finger joint " + std::to_string(i) + " = " +
                               std::to_string(s.q[static_cast<std::size_t>(i)]) +
                               " exceeds limit " + std::to_string(fin.joint_limit));
}

/// Boxes must not intersect the robot base column.
void validate_scene(const SceneConfig& scene);

}  // namespace softperc::sim
