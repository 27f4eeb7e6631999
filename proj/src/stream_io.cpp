#include "gsm/stream_io.hpp"

#include "gsm/errors.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace gsm::stream {

namespace fs = std::filesystem;

void write_grid(const std::string& path, const Grid<float>& grid) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (float f : grid.data) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        const unsigned char buf[4] = {
            static_cast<unsigned char>(bits & 0xFF),
            static_cast<unsigned char>((bits >> 8) & 0xFF),
            static_cast<unsigned char>((bits >> 16) & 0xFF),
            static_cast<unsigned char>((bits >> 24) & 0xFF),
        };
        os.write(reinterpret_cast<const char*>(buf), 4);
    }
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + path);
}

Grid<float> read_grid(const std::string& path, int width, int height) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    Grid<float> grid(width, height);
    const std::size_t expected = grid.size() * 4;
    std::vector<unsigned char> bytes(expected);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(is.gcount()) != expected) {
        throw FormatError("grid file truncated: " + path,
                          static_cast<std::size_t>(is.gcount()));
    }
    is.peek();
    if (!is.eof()) throw FormatError("grid file has trailing data: " + path, expected);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                                   (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                                   (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                                   (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        grid.data[i] = std::bit_cast<float>(bits);
    }
    return grid;
}

StreamWriter::StreamWriter(std::string directory, const Intrinsics& intr)
    : dir_(std::move(directory)), intr_(intr) {
    intr_.validate();
    fs::create_directories(dir_);
}

void StreamWriter::append(std::uint32_t id, const Pose& pose,
                          const DepthMap& depth, const ConfidenceMap& conf) {
    if (finished_) throw std::logic_error("StreamWriter: append after finish");
    if (!depth.same_shape(intr_.width, intr_.height) ||
        !conf.same_shape(intr_.width, intr_.height)) {
        throw std::invalid_argument("StreamWriter: grid dimensions do not match intrinsics");
    }
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06u", id);
    const std::string depth_file = std::string(name) + ".depth";
    const std::string conf_file = std::string(name) + ".conf";
    write_grid(dir_ + "/" + depth_file, depth);
    write_grid(dir_ + "/" + conf_file, conf);
    entries_.push_back({id, pose, depth_file, conf_file});
}

void StreamWriter::finish() {
    if (finished_) return;
    finished_ = true;
    std::ofstream os(dir_ + "/manifest.txt", std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write manifest in " + dir_);
    os.precision(17);
    os << "gsm-stream 1\n";
    os << "intrinsics " << intr_.fx << ' ' << intr_.fy << ' ' << intr_.cx << ' ' << intr_.cy
       << ' ' << intr_.width << ' ' << intr_.height << '\n';
    os << "frames " << entries_.size() << '\n';
    for (const FrameEntry& e : entries_) {
        os << "frame " << e.id << ' ' << e.pose.x << ' ' << e.pose.y << ' ' << e.pose.z << ' '
           << e.pose.pitch << ' ' << e.pose.yaw << ' ' << e.depth_file << ' ' << e.conf_file
           << '\n';
    }
    os.flush();
    if (!os) throw std::runtime_error("manifest write failed in " + dir_);
}

StreamManifest read_manifest(const std::string& directory) {
    const std::string path = directory + "/manifest.txt";
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path);

    StreamManifest manifest;
    std::string line;
    std::size_t line_no = 0;

    auto expect_line = [&](const char* what) -> std::string& {
        if (!std::getline(is, line)) throw FormatError(std::string("manifest: missing ") + what, line_no);
        ++line_no;
        return line;
    };

    if (expect_line("header") != "gsm-stream 1") {
        throw FormatError("manifest: bad header", line_no);
    }
    {
        std::istringstream ls(expect_line("intrinsics"));
        std::string tok;
        ls >> tok;
        if (tok != "intrinsics" ||
            !(ls >> manifest.intrinsics.fx >> manifest.intrinsics.fy >> manifest.intrinsics.cx >>
              manifest.intrinsics.cy >> manifest.intrinsics.width >> manifest.intrinsics.height)) {
            throw FormatError("manifest: malformed intrinsics line", line_no);
        }
        manifest.intrinsics.validate();
    }
    std::size_t declared = 0;
    {
        std::istringstream ls(expect_line("frame count"));
        std::string tok;
        ls >> tok;
        if (tok != "frames" || !(ls >> declared)) {
            throw FormatError("manifest: malformed frames line", line_no);
        }
    }
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok != "frame") throw FormatError("manifest: expected frame line", line_no);
        FrameEntry e;
        if (!(ls >> e.id >> e.pose.x >> e.pose.y >> e.pose.z >> e.pose.pitch >> e.pose.yaw >>
              e.depth_file >> e.conf_file)) {
            throw FormatError("manifest: malformed frame line", line_no);
        }
        if (!manifest.frames.empty() && e.id <= manifest.frames.back().id) {
            throw FormatError("manifest: frame ids not strictly increasing", line_no);
        }
        manifest.frames.push_back(std::move(e));
    }
    if (manifest.frames.size() != declared) {
        throw FormatError("manifest: declared " + std::to_string(declared) + " frames, found " +
                              std::to_string(manifest.frames.size()),
                          line_no);
    }
    return manifest;
}

std::pair<DepthMap, ConfidenceMap> read_frame(const std::string& directory,
                                              const StreamManifest& manifest,
                                              std::size_t index) {
    const FrameEntry& e = manifest.frames.at(index);
    DepthMap depth = read_grid(directory + "/" + e.depth_file,
                               manifest.intrinsics.width, manifest.intrinsics.height);
    ConfidenceMap conf = read_grid(directory + "/" + e.conf_file,
                                   manifest.intrinsics.width, manifest.intrinsics.height);
    return {std::move(depth), std::move(conf)};
}

}  // namespace gsm::stream
