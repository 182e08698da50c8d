#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "softperc/sim/dataset.hpp"

namespace softperc::sim {

namespace {

using nlohmann::json;

json to_json(const SceneConfig& s) {
    json boxes = json::array();
    for (const auto& b : s.boxes)
        boxes.push_back({{"center", {b.center.x, b.center.y, b.center.z}},
                         {"half", {b.half.x, b.half.y, b.half.z}},
                         {"yaw", b.yaw}});
    return {
        {"arm",
         {{"base_radius", s.arm.base_radius},
          {"base_height", s.arm.base_height},
          {"q1_bounds", s.arm.q1_bounds},
          {"q2_bounds", s.arm.q2_bounds},
          {"q3_bounds", s.arm.q3_bounds},
          {"home", s.arm.home}}},
        {"finger",
         {{"n_links", s.finger.n_links},
          {"link_length", s.finger.link_length},
          {"link_radius", s.finger.link_radius},
          {"spring_k", s.finger.spring_k},
          {"joint_limit", s.finger.joint_limit},
          {"mount_pitch", s.finger.mount_pitch}}},
        {"camera",
         {{"center_x", s.camera.center_x},
          {"center_z", s.camera.center_z},
          {"width", s.camera.width},
          {"px", s.camera.px}}},
        {"boxes", boxes},
        {"contact_k", s.contact_k},
        {"ground_z", s.ground_z},
        {"seed", s.seed},
    };
}

SceneConfig scene_from_json(const json& j) {
    SceneConfig s;
    const auto& arm = j.at("arm");
    s.arm.base_radius = arm.at("base_radius");
    s.arm.base_height = arm.at("base_height");
    s.arm.q1_bounds = arm.at("q1_bounds");
    s.arm.q2_bounds = arm.at("q2_bounds");
    s.arm.q3_bounds = arm.at("q3_bounds");
    s.arm.home = arm.at("home");
    const auto& fin = j.at("finger");
    s.finger.n_links = fin.at("n_links");
    s.finger.link_length = fin.at("link_length");
    s.finger.link_radius = fin.at("link_radius");
    s.finger.spring_k = fin.at("spring_k");
    s.finger.joint_limit = fin.at("joint_limit");
    s.finger.mount_pitch = fin.at("mount_pitch");
    const auto& cam = j.at("camera");
    s.camera.center_x = cam.at("center_x");
    s.camera.center_z = cam.at("center_z");
    s.camera.width = cam.at("width");
    s.camera.px = cam.at("px");
    for (const auto& b : j.at("boxes")) {
        Box box;
        box.center = {b.at("center")[0], b.at("center")[1], b.at("center")[2]};
        box.half = {b.at("half")[0], b.at("half")[1], b.at("half")[2]};
        box.yaw = b.at("yaw");
        s.boxes.push_back(box);
    }
    s.contact_k = j.at("contact_k");
    s.ground_z = j.at("ground_z");
    s.seed = j.at("seed");
    return s;
}

void append_floats(std::vector<float>& out, const double* src, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) out.push_back(static_cast<float>(src[i]));
}

std::vector<float> pack_record(const Frame& f) {
    if (static_cast<std::int64_t>(f.finger.q.size()) != kQfDim ||
        static_cast<std::int64_t>(f.contact.f.size()) != kForceDim)
        throw DataFormatError("dataset: frame has " + std::to_string(f.finger.q.size()) +
                              " finger joints, expected " + std::to_string(kQfDim));
    if (static_cast<std::int64_t>(f.vision.rgb.size()) != kVisionDim ||
        static_cast<std::int64_t>(f.flow.uv.size()) != kFlowDim)
        throw DataFormatError("dataset: frame image buffers do not match the 64x64 layout");
    std::vector<float> rec;
    rec.reserve(static_cast<std::size_t>(kRecordFloats));
    append_floats(rec, f.finger.q.data(), kQfDim);
    append_floats(rec, f.arm.q.data(), kQrDim);
    append_floats(rec, f.contact.f.data(), kForceDim);
    rec.insert(rec.end(), f.vision.rgb.begin(), f.vision.rgb.end());
    rec.insert(rec.end(), f.flow.uv.begin(), f.flow.uv.end());
    append_floats(rec, f.action.d.data(), kActionDim);
    return rec;
}

json dims_json() {
    return {{"q_f", kQfDim}, {"q_r", kQrDim},           {"f", kForceDim},
            {"v", {64, 64, 3}}, {"flow", {64, 64, 2}}, {"a", kActionDim}};
}

}  // namespace

DatasetWriter::DatasetWriter(const std::string& dir, std::uint64_t seed) : dir_(dir) {
    std::filesystem::create_directories(dir_);
    const std::string bin_path = dir_ + "/frames.bin";
    bin_ = std::fopen(bin_path.c_str(), "wb");
    if (!bin_) throw DataFormatError("dataset: cannot open " + bin_path + " for writing");
    manifest_.seed = seed;
}

DatasetWriter::~DatasetWriter() {
    if (bin_) std::fclose(bin_);
}

void DatasetWriter::add_episode(const Episode& episode) {
    if (finished_) throw DataFormatError("dataset: writer already finished");
    if (episode.scene.finger.n_links != kQfDim)
        throw DataFormatError("dataset: scene has " + std::to_string(episode.scene.finger.n_links) +
                              " links, the record layout requires " + std::to_string(kQfDim));
    if (manifest_.episodes.empty()) manifest_.scene = episode.scene;

    EpisodeSpan span;
    span.seed = episode.seed;
    span.start = manifest_.frame_count;
    span.count = static_cast<std::int64_t>(episode.frames.size());
    span.dropped = episode.dropped;
    for (const auto& frame : episode.frames) {
        const auto rec = pack_record(frame);
        if (std::fwrite(rec.data(), sizeof(float), rec.size(), bin_) != rec.size())
            throw DataFormatError("dataset: short write to frames.bin");
    }
    manifest_.frame_count += span.count;
    manifest_.dropped_frames += span.dropped;
    manifest_.episodes.push_back(span);
}

void DatasetWriter::finish() {
    if (finished_) return;
    finished_ = true;
    std::fflush(bin_);

    json eps = json::array();
    for (const auto& e : manifest_.episodes)
        eps.push_back(
            {{"seed", e.seed}, {"start", e.start}, {"count", e.count}, {"dropped", e.dropped}});
    const json j = {
        {"schema_version", manifest_.schema_version},
        {"frame_count", manifest_.frame_count},
        {"dropped_frames", manifest_.dropped_frames},
        {"dims", dims_json()},
        {"rate_hz", manifest_.rate_hz},
        {"seed", manifest_.seed},
        {"scene", to_json(manifest_.scene)},
        {"episodes", eps},
    };
    std::ofstream out(dir_ + "/manifest.json");
    if (!out) throw DataFormatError("dataset: cannot write " + dir_ + "/manifest.json");
    out << j.dump(2) << "\n";
}

void write_dataset(const std::string& dir, const std::vector<Episode>& episodes,
                   std::uint64_t seed) {
    DatasetWriter w(dir, seed);
    for (const auto& e : episodes) w.add_episode(e);
    w.finish();
}

DatasetReader::DatasetReader(const std::string& dir) {
    const std::string man_path = dir + "/manifest.json";
    std::ifstream in(man_path);
    if (!in) throw DataFormatError("dataset: cannot open " + man_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataFormatError("dataset: manifest.json is not valid JSON: " + std::string(e.what()));
    }
    try {
        manifest_.schema_version = j.at("schema_version");
        if (manifest_.schema_version != kSchemaVersion)
            throw DataFormatError("dataset: unsupported schema_version " +
                                  std::to_string(manifest_.schema_version) + ", expected " +
                                  std::to_string(kSchemaVersion));
        if (j.at("dims") != dims_json())
            throw DataFormatError("dataset: manifest dims do not match the fixed record layout");
        manifest_.frame_count = j.at("frame_count");
        manifest_.dropped_frames = j.at("dropped_frames");
        manifest_.rate_hz = j.at("rate_hz");
        manifest_.seed = j.at("seed");
        manifest_.scene = scene_from_json(j.at("scene"));
        for (const auto& e : j.at("episodes")) {
            EpisodeSpan span;
            span.seed = e.at("seed");
            span.start = e.at("start");
            span.count = e.at("count");
            span.dropped = e.at("dropped");
            manifest_.episodes.push_back(span);
        }
    } catch (const json::exception& e) {
        throw DataFormatError("dataset: manifest.json is missing fields: " + std::string(e.what()));
    }

    std::int64_t span_total = 0;
    for (const auto& e : manifest_.episodes) {
        if (e.start != span_total || e.count < 0)
            throw DataFormatError("dataset: episode spans do not tile the frame range");
        span_total += e.count;
    }
    if (span_total != manifest_.frame_count)
        throw DataFormatError("dataset: episode spans cover " + std::to_string(span_total) +
                              " frames, manifest says " + std::to_string(manifest_.frame_count));

    const std::string bin_path = dir + "/frames.bin";
    bin_ = std::fopen(bin_path.c_str(), "rb");
    if (!bin_) throw DataFormatError("dataset: cannot open " + bin_path);
    std::fseek(bin_, 0, SEEK_END);
    const std::int64_t size = std::ftell(bin_);
    const std::int64_t want = manifest_.frame_count * kRecordBytes;
    if (size != want)
        throw DataFormatError("dataset: frames.bin is " + std::to_string(size) +
                              " bytes, expected " + std::to_string(want) + " (" +
                              std::to_string(manifest_.frame_count) + " records of " +
                              std::to_string(kRecordBytes) + " bytes)");
}

DatasetReader::~DatasetReader() {
    if (bin_) std::fclose(bin_);
}

FrameRecord DatasetReader::frame(std::int64_t i) const {
    if (i < 0 || i >= manifest_.frame_count)
        throw DataFormatError("dataset: frame " + std::to_string(i) + " out of range [0, " +
                              std::to_string(manifest_.frame_count) + ")");
    FrameRecord rec;
    rec.data.resize(static_cast<std::size_t>(kRecordFloats));
    std::fseek(bin_, static_cast<long>(i * kRecordBytes), SEEK_SET);
    if (std::fread(rec.data.data(), sizeof(float), rec.data.size(), bin_) != rec.data.size())
        throw DataFormatError("dataset: short read at frame " + std::to_string(i));
    return rec;
}

}  // namespace softperc::sim
