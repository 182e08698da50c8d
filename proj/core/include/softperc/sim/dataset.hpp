#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "softperc/sim/sim.hpp"

namespace softperc::sim {

/// One dataset = directory with manifest.json + frames.bin. Records are
/// little-endian f32 in fixed field order q_f, q_r, f, v (HWC), flow (HWC),
/// a; no per-record header.
constexpr std::int64_t kQfDim = 20;
constexpr std::int64_t kQrDim = 3;
constexpr std::int64_t kForceDim = 20;
constexpr std::int64_t kVisionDim = 64 * 64 * 3;
constexpr std::int64_t kFlowDim = 64 * 64 * 2;
constexpr std::int64_t kActionDim = 3;
constexpr std::int64_t kRecordFloats =
    kQfDim + kQrDim + kForceDim + kVisionDim + kFlowDim + kActionDim;
constexpr std::int64_t kRecordBytes = kRecordFloats * 4;
constexpr int kSchemaVersion = 1;

struct EpisodeSpan {
    std::uint64_t seed = 0;
    std::int64_t start = 0;  // first frame index in frames.bin
    std::int64_t count = 0;
    int dropped = 0;
};

struct DatasetManifest {
    int schema_version = kSchemaVersion;
    std::int64_t frame_count = 0;
    int dropped_frames = 0;
    double rate_hz = kFrameRateHz;
    std::uint64_t seed = 0;  // root seed the dataset was generated from
    SceneConfig scene;       // scene of the first episode (configs echo)
    std::vector<EpisodeSpan> episodes;
};

/// Flat f32 view of one record, in file order.
struct FrameRecord {
    std::vector<float> data;  // kRecordFloats

    const float* qf() const { return data.data(); }
    const float* qr() const { return data.data() + kQfDim; }
    const float* force() const { return data.data() + kQfDim + kQrDim; }
    const float* vision() const { return data.data() + kQfDim + kQrDim + kForceDim; }
    const float* flow() const { return data.data() + kQfDim + kQrDim + kForceDim + kVisionDim; }
    const float* action() const {
        return data.data() + kQfDim + kQrDim + kForceDim + kVisionDim + kFlowDim;
    }
};

/// Streams episodes into a dataset directory. write_dataset below is the
/// one-shot convenience wrapper.
class DatasetWriter {
public:
    explicit DatasetWriter(const std::string& dir, std::uint64_t seed);
    ~DatasetWriter();
    DatasetWriter(const DatasetWriter&) = delete;
    DatasetWriter& operator=(const DatasetWriter&) = delete;

    void add_episode(const Episode& episode);
    /// Writes manifest.json; no more episodes may be added afterwards.
    void finish();

private:
    std::string dir_;
    std::FILE* bin_ = nullptr;
    DatasetManifest manifest_;
    bool finished_ = false;
};

void write_dataset(const std::string& dir, const std::vector<Episode>& episodes,
                   std::uint64_t seed);

/// Validating random-access reader. Construction parses the manifest and
/// checks frames.bin's size against the record arithmetic.
class DatasetReader {
public:
    explicit DatasetReader(const std::string& dir);
    ~DatasetReader();
    DatasetReader(const DatasetReader&) = delete;
    DatasetReader& operator=(const DatasetReader&) = delete;

    const DatasetManifest& manifest() const { return manifest_; }
    std::int64_t frame_count() const { return manifest_.frame_count; }
    FrameRecord frame(std::int64_t i) const;

private:
    DatasetManifest manifest_;
    std::FILE* bin_ = nullptr;
};

}  // namespace softperc::sim
