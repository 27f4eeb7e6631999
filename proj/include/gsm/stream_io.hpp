#pragma once

#include "gsm/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gsm::stream {

/// On-disk frame stream: a directory holding one flat binary depth file and
/// one confidence file per frame (f32 little-endian, row-major) plus a text
/// manifest:
///   gsm-stream 1
///   intrinsics <fx> <fy> <cx> <cy> <width> <height>
///   frames <count>
///   frame <id> <x> <y> <z> <pitch> <yaw> <depth_file> <conf_file>
struct FrameEntry {
    std::uint32_t id = 0;
    Pose pose;
    std::string depth_file;
    std::string conf_file;
};

struct StreamManifest {
    Intrinsics intrinsics;
    std::vector<FrameEntry> frames;
};

class StreamWriter {
public:
    /// Creates the directory if needed and truncates any existing manifest.
    StreamWriter(std::string directory, const Intrinsics& intr);

    void append(std::uint32_t id, const Pose& pose,
                const DepthMap& depth, const ConfidenceMap& conf);

    /// Writes the manifest. Must be called once after the last frame.
    void finish();

private:
    std::string dir_;
    Intrinsics intr_;
    std::vector<FrameEntry> entries_;
    bool finished_ = false;
};

/// Parses and validates the manifest. Declared and listed frame counts must
/// agree (FormatError otherwise); ids must be strictly increasing.
StreamManifest read_manifest(const std::string& directory);

/// Loads one frame's grids, validating file size against the intrinsics.
/// Missing files raise std::runtime_error (I/O); size mismatches raise
/// FormatError.
std::pair<DepthMap, ConfidenceMap> read_frame(const std::string& directory,
                                              const StreamManifest& manifest,
                                              std::size_t index);

void write_grid(const std::string& path, const Grid<float>& grid);
Grid<float> read_grid(const std::string& path, int width, int height);

}  // namespace gsm::stream
