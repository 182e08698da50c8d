#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "softperc/rng.hpp"
#include "softperc/sim/types.hpp"

namespace softperc::sim {

// --------------------------------------------------------------------------
// kinematics
// --------------------------------------------------------------------------

/// Chains the 20 (by default) link frames from the arm mount. Link i's
/// contact sphere sits at its distal end, offset (i+1) * link_length along
/// the chain at zero configuration. Throws on out-of-bounds joints.
Kinematics forward_kinematics(const SceneConfig& scene, const RigidArmState& arm,
                              const FingerState& finger);

// --------------------------------------------------------------------------
// quasi-static equilibrium
// --------------------------------------------------------------------------

struct SettleResult {
    FingerState finger;
    ContactRecord contact;
    bool converged = false;
    int iterations = 0;
    double energy = 0.0;
    double grad_norm = 0.0;  // projected gradient norm at exit
};

struct SettleOptions {
    double grad_tol = 1e-6;
    int max_iterations = 500;
};

/// Total potential: E(q_f) = 1/2 k |q_f|^2 + sum over contacts of
/// 1/2 k_c d^2, with d the sphere penetration depth against ground or boxes.
double finger_energy(const SceneConfig& scene, const RigidArmState& arm, const FingerState& finger);

/// Minimizes finger_energy over the finger joints (Levenberg-damped
/// Gauss-Newton with backtracking, projected onto the joint limits) until the
/// projected gradient norm drops below grad_tol. Energy never increases
/// across accepted iterations. Forces are read off the equilibrium as
/// f[i] = k_c * d_i (resultant over simultaneous contacts).
SettleResult settle(const SceneConfig& scene, const RigidArmState& arm,
                    const std::optional<FingerState>& warm_start = std::nullopt,
                    const SettleOptions& opts = {});

// --------------------------------------------------------------------------
// rendering and optical flow
// --------------------------------------------------------------------------

enum class BodyClass : std::uint8_t { Background, Ground, Arm, Box, Finger };

enum class MotionKind : std::uint8_t { Static, Rigid, Boom };

/// World pose of one renderable body, enough to reconstruct the screen
/// motion of any of its surface points between two frames.
struct BodyPose {
    BodyClass cls = BodyClass::Background;
    MotionKind kind = MotionKind::Static;
    Vec3 center;       // rigid bodies: sphere/box center; boom: (tip_x, 0, height)
    Mat3 rot;
};

/// Rasterization with per-pixel body ids and the body pose table, as needed
/// by compute_flow. ids index into poses; id 0 is the background.
struct FrameGeometry {
    VisionFrame vision;
    std::vector<std::uint16_t> ids;  // px*px
    std::vector<BodyPose> poses;
};

/// Deterministic flat-shaded orthographic rasterization. Painter's order:
/// ground, boxes, arm, finger.
VisionFrame render(const SceneConfig& scene, const RigidArmState& arm, const FingerState& finger);

FrameGeometry render_geometry(const SceneConfig& scene, const RigidArmState& arm,
                              const FingerState& finger);

/// Image-plane displacement (pixels) of the surface point visible at each
/// pixel of frame t, given both frames' geometry. Static bodies and the
/// background get exactly zero flow.
FlowTarget compute_flow(const FrameGeometry& t0, const FrameGeometry& t1,
                        const CameraConfig& camera);

// --------------------------------------------------------------------------
// episodes
// --------------------------------------------------------------------------

struct Frame {
    FingerState finger;
    RigidArmState arm;
    ContactRecord contact;
    VisionFrame vision;
    FlowTarget flow;    // motion from this frame to the next
    Action action;      // command applied between this frame and the next
};

struct Episode {
    std::vector<Frame> frames;
    int dropped = 0;  // frames lost to settle non-convergence (episode truncates)
    std::uint64_t seed = 0;
    SceneConfig scene;
};

/// Random-walk actuation at 10 Hz from the arm's home configuration.
/// duration_s seconds yield duration_s * 10 stored frames (fewer only if the
/// solver fails to converge, which truncates the episode).
Episode generate_episode(const SceneConfig& scene, double duration_s, std::uint64_t seed,
                         const ActionBounds& bounds = {});

/// Randomized scene: 1-3 boxes resting on the ground near the workspace
/// annulus. Deterministic in the seed.
SceneConfig sample_scene(std::uint64_t seed);

constexpr double kFrameRateHz = 10.0;

}  // namespace softperc::sim
