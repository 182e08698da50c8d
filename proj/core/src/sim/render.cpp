#include <algorithm>
#include <cmath>

#include "softperc/sim/sim.hpp"

namespace softperc::sim {

namespace {

struct Rgb {
    float r, g, b;
};

constexpr Rgb kBackground{0.82f, 0.86f, 0.90f};
constexpr Rgb kGround{0.35f, 0.28f, 0.20f};
constexpr Rgb kBox{0.85f, 0.25f, 0.20f};
constexpr Rgb kArm{0.30f, 0.35f, 0.80f};
constexpr Rgb kFinger{0.95f, 0.80f, 0.20f};

constexpr double kColumnHalfWidth = 0.008;  // m
constexpr double kColumnTop = 0.305;        // m
constexpr double kBoomHalfHeight = 0.008;   // m
constexpr double kLinkDrawRadius = 0.006;   // m (visual, >= 1 px on screen)

struct Raster {
    const CameraConfig& cam;
    double mpp;     // meters per pixel
    double x_min;   // world x at the left edge
    double z_max;   // world z at the top edge
    FrameGeometry* out;

    explicit Raster(const CameraConfig& c, FrameGeometry* g) : cam(c), out(g) {
        mpp = c.width / c.px;
        x_min = c.center_x - c.width / 2.0;
        z_max = c.center_z + c.width / 2.0;
    }

    double px_center_x(int col) const { return x_min + (col + 0.5) * mpp; }
    double px_center_z(int row) const { return z_max - (row + 0.5) * mpp; }

    void put(int row, int col, const Rgb& c, std::uint16_t id) {
        const std::size_t p = static_cast<std::size_t>(row * cam.px + col);
        out->vision.rgb[p * 3 + 0] = c.r;
        out->vision.rgb[p * 3 + 1] = c.g;
        out->vision.rgb[p * 3 + 2] = c.b;
        out->ids[p] = id;
    }

    /// Fills every pixel whose center lies inside the world-space rectangle.
    void fill_rect(double x0, double x1, double z0, double z1, const Rgb& c, std::uint16_t id) {
        const int c_lo = std::max(0, static_cast<int>(std::floor((x0 - x_min) / mpp - 0.5)));
        const int c_hi = std::min(cam.px - 1, static_cast<int>(std::ceil((x1 - x_min) / mpp)));
        const int r_lo = std::max(0, static_cast<int>(std::floor((z_max - z1) / mpp - 0.5)));
        const int r_hi = std::min(cam.px - 1, static_cast<int>(std::ceil((z_max - z0) / mpp)));
        for (int row = r_lo; row <= r_hi; ++row) {
            const double z = px_center_z(row);
            if (z < z0 || z > z1) continue;
            for (int col = c_lo; col <= c_hi; ++col) {
                const double x = px_center_x(col);
                if (x >= x0 && x <= x1) put(row, col, c, id);
            }
        }
    }

    /// Disc in pixel space (the link draw radius is clamped to one pixel so
    /// the finger never vanishes).
    void fill_disc(double wx, double wz, double radius_m, const Rgb& c, std::uint16_t id) {
        const double u = (wx - x_min) / mpp;
        const double v = (z_max - wz) / mpp;
        const double rad = std::max(radius_m / mpp, 1.0);
        const int c_lo = std::max(0, static_cast<int>(std::floor(u - rad - 1)));
        const int c_hi = std::min(cam.px - 1, static_cast<int>(std::ceil(u + rad + 1)));
        const int r_lo = std::max(0, static_cast<int>(std::floor(v - rad - 1)));
        const int r_hi = std::min(cam.px - 1, static_cast<int>(std::ceil(v + rad + 1)));
        for (int row = r_lo; row <= r_hi; ++row)
            for (int col = c_lo; col <= c_hi; ++col) {
                const double du = col + 0.5 - u;
                const double dv = row + 0.5 - v;
                if (du * du + dv * dv <= rad * rad) put(row, col, c, id);
            }
    }
};

}  // namespace

FrameGeometry render_geometry(const SceneConfig& scene, const RigidArmState& arm,
                              const FingerState& finger) {
    const Kinematics kin = forward_kinematics(scene, arm, finger);
    const int px = scene.camera.px;

    FrameGeometry geom;
    geom.vision.rgb.assign(static_cast<std::size_t>(px) * px * 3, 0.f);
    geom.ids.assign(static_cast<std::size_t>(px) * px, 0);

    // Body table: 0 background, 1 ground, 2 column, 3 boom, then boxes, then
    // finger links.
    geom.poses.resize(4 + scene.boxes.size() + kin.links.size());
    geom.poses[0] = {BodyClass::Background, MotionKind::Static, {}, {}};
    geom.poses[1] = {BodyClass::Ground, MotionKind::Static, {}, {}};
    geom.poses[2] = {BodyClass::Arm, MotionKind::Static, {}, {}};
    geom.poses[3] = {BodyClass::Arm, MotionKind::Boom,
                     Vec3{kin.mount.x, 0.0, kin.mount.z}, {}};
    for (std::size_t b = 0; b < scene.boxes.size(); ++b)
        geom.poses[4 + b] = {BodyClass::Box, MotionKind::Rigid, scene.boxes[b].center,
                             Mat3::rot_z(scene.boxes[b].yaw)};
    const std::size_t first_link = 4 + scene.boxes.size();
    for (std::size_t i = 0; i < kin.links.size(); ++i)
        geom.poses[first_link + i] = {BodyClass::Finger, MotionKind::Rigid, kin.links[i].center,
                                      kin.links[i].rot};

    Raster ras(scene.camera, &geom);

    // background
    for (int row = 0; row < px; ++row)
        for (int col = 0; col < px; ++col) ras.put(row, col, kBackground, 0);

    // ground plane: everything at or below ground_z
    ras.fill_rect(ras.x_min - 1.0, ras.x_min + scene.camera.width + 1.0, scene.ground_z - 10.0,
                  scene.ground_z, kGround, 1);

    // boxes (exact silhouette of a yaw-rotated box seen from the side)
    for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
        const auto& box = scene.boxes[b];
        const double wx = box.half.x * std::abs(std::cos(box.yaw)) +
                          box.half.y * std::abs(std::sin(box.yaw));
        ras.fill_rect(box.center.x - wx, box.center.x + wx, box.center.z - box.half.z,
                      box.center.z + box.half.z, kBox, static_cast<std::uint16_t>(4 + b));
    }

    // arm: static base column plus the boom out to the finger mount
    ras.fill_rect(-kColumnHalfWidth, kColumnHalfWidth, scene.ground_z, kColumnTop, kArm, 2);
    ras.fill_rect(std::min(0.0, kin.mount.x), std::max(0.0, kin.mount.x),
                  kin.mount.z - kBoomHalfHeight, kin.mount.z + kBoomHalfHeight, kArm, 3);

    // finger links, base to tip
    for (std::size_t i = 0; i < kin.links.size(); ++i)
        ras.fill_disc(kin.links[i].center.x, kin.links[i].center.z, kLinkDrawRadius, kFinger,
                      static_cast<std::uint16_t>(first_link + i));

    return geom;
}

VisionFrame render(const SceneConfig& scene, const RigidArmState& arm, const FingerState& finger) {
    return render_geometry(scene, arm, finger).vision;
}

FlowTarget compute_flow(const FrameGeometry& t0, const FrameGeometry& t1,
                        const CameraConfig& camera) {
    if (t0.poses.size() != t1.poses.size())
        throw NumericError("flow: frame geometries have different body tables (" +
                           std::to_string(t0.poses.size()) + " vs " +
                           std::to_string(t1.poses.size()) + ")");
    const int px = camera.px;
    const double mpp = camera.width / px;
    const double x_min = camera.center_x - camera.width / 2.0;
    const double z_max = camera.center_z + camera.width / 2.0;

    FlowTarget flow;
    flow.uv.assign(static_cast<std::size_t>(px) * px * 2, 0.f);

    const auto pose_unchanged = [](const BodyPose& a, const BodyPose& b) {
        return a.center.x == b.center.x && a.center.y == b.center.y && a.center.z == b.center.z &&
               a.rot.m == b.rot.m;
    };

    for (int row = 0; row < px; ++row) {
        for (int col = 0; col < px; ++col) {
            const std::size_t p = static_cast<std::size_t>(row * px + col);
            const std::uint16_t id = t0.ids[p];
            const BodyPose& b0 = t0.poses[id];
            if (b0.kind == MotionKind::Static) continue;
            const BodyPose& b1 = t1.poses[id];
            // Bodies that did not move get exactly zero flow (no float noise
            // from the round-tripped rigid transform).
            if (pose_unchanged(b0, b1)) continue;

            const double wx = x_min + (col + 0.5) * mpp;
            const double wz = z_max - (row + 0.5) * mpp;
            double du = 0, dv = 0;
            if (b0.kind == MotionKind::Rigid) {
                // Material point at the body's depth plane, advected by the
                // rigid transform between the two frames.
                const Vec3 w{wx, b0.center.y, wz};
                const Vec3 local = b0.rot.transposed() * (w - b0.center);
                const Vec3 w1 = b1.center + b1.rot * local;
                du = (w1.x - w.x) / mpp;
                dv = -(w1.z - w.z) / mpp;
            } else {  // boom: anchored at the column, telescoping to the mount
                const double mx0 = b0.center.x, mx1 = b1.center.x;
                double frac = std::abs(mx0) > 1e-9 ? wx / mx0 : 0.0;
                frac = std::clamp(frac, 0.0, 1.0);
                du = frac * (mx1 - mx0) / mpp;
                dv = -(b1.center.z - b0.center.z) / mpp;
            }
            flow.uv[p * 2 + 0] = static_cast<float>(du);
            flow.uv[p * 2 + 1] = static_cast<float>(dv);
        }
    }
    return flow;
}

}  // namespace softperc::sim
