#include <algorithm>
#include <cmath>

#include "softperc/sim/sim.hpp"

namespace softperc::sim {

namespace {

double clamp_joint(double v, const std::array<double, 2>& b) {
    return std::clamp(v, b[0], b[1]);
}

}  // namespace

SceneConfig sample_scene(std::uint64_t seed) {
    SceneConfig scene;
    scene.seed = seed;
    auto rng = Rng::substream(seed, "scene");
    const int n_boxes = static_cast<int>(rng.uniform_int(1, 3));
    for (int i = 0; i < n_boxes; ++i) {
        // Resting on the ground inside the arm's sweep annulus, clear of the
        // base column.
        const double radius = rng.uniform(0.10, 0.24);
        const double angle = rng.uniform(-0.6, 0.6);  // keep boxes near the camera plane
        Box box;
        box.half = {rng.uniform(0.01, 0.03), rng.uniform(0.01, 0.03), rng.uniform(0.01, 0.03)};
        box.center = {radius * std::cos(angle), radius * std::sin(angle),
                      scene.ground_z + box.half.z};
        box.yaw = rng.uniform(0.0, M_PI);
        scene.boxes.push_back(box);
    }
    validate_scene(scene);
    return scene;
}

Episode generate_episode(const SceneConfig& scene, double duration_s, std::uint64_t seed,
                         const ActionBounds& bounds) {
    if (duration_s <= 0) throw NumericError("episode: duration must be positive");
    validate_scene(scene);

    const int n_frames = static_cast<int>(std::llround(duration_s * kFrameRateHz));
    auto rng = Rng::substream(seed, "actions");

    Episode ep;
    ep.seed = seed;
    ep.scene = scene;
    ep.frames.reserve(static_cast<std::size_t>(n_frames));

    RigidArmState arm;
    arm.q = scene.arm.home;
    SettleResult st = settle(scene, arm);
    if (!st.converged) {
        ep.dropped = n_frames;
        return ep;  // home state itself is degenerate; nothing usable
    }
    FrameGeometry geom = render_geometry(scene, arm, st.finger);

    for (int t = 0; t < n_frames; ++t) {
        Action a;
        a.d[0] = rng.uniform(-bounds.dq1, bounds.dq1);
        a.d[1] = rng.uniform(-bounds.dq2, bounds.dq2);
        a.d[2] = rng.uniform(-bounds.dq3, bounds.dq3);

        RigidArmState next_arm;
        next_arm.q[0] = clamp_joint(arm.q[0] + a.d[0], scene.arm.q1_bounds);
        next_arm.q[1] = clamp_joint(arm.q[1] + a.d[1], scene.arm.q2_bounds);
        next_arm.q[2] = clamp_joint(arm.q[2] + a.d[2], scene.arm.q3_bounds);

        SettleResult next_st = settle(scene, next_arm, st.finger);
        if (!next_st.converged) {
            // Truncate here so stored frames stay consecutive in time.
            ep.dropped = n_frames - t;
            break;
        }
        FrameGeometry next_geom = render_geometry(scene, next_arm, next_st.finger);

        Frame frame;
        frame.finger = st.finger;
        frame.arm = arm;
        frame.contact = st.contact;
        frame.flow = compute_flow(geom, next_geom, scene.camera);
        frame.vision = std::move(geom.vision);
        frame.action = a;
        ep.frames.push_back(std::move(frame));

        arm = next_arm;
        st = std::move(next_st);
        geom = std::move(next_geom);
    }
    return ep;
}

}  // namespace softperc::sim
