#include "gsm/memory_store.hpp"

#include "gsm/errors.hpp"
#include "gsm/world.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <tuple>

using namespace gsm;
using namespace gsm::store;

namespace {

constexpr double kPi = std::numbers::pi;

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::size_t valid_pixels(const DepthMap& d) {
    std::size_t n = 0;
    for (float v : d.data) {
        if (v >= kMinValidDepth) ++n;
    }
    return n;
}

// Offline reference for voxel_downsample: group by cell, drop exact
// duplicates, keep the n_max best by (confidence desc, frame id asc, input
// order), report survivors in input order.
std::vector<StoredPoint> downsample_ref(const std::vector<StoredPoint>& points,
                                        double voxel, int n_max) {
    auto cell_of = [&](float c) { return static_cast<long long>(std::floor(c / voxel)); };
    std::map<std::tuple<long long, long long, long long>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto key = std::make_tuple(cell_of(points[i].x), cell_of(points[i].y),
                                         cell_of(points[i].z));
        auto& bucket = cells[key];
        bool dup = false;
        for (std::size_t j : bucket) {
            const auto& q = points[j];
            const auto& p = points[i];
            if (p.x == q.x && p.y == q.y && p.z == q.z && p.source_id == q.source_id &&
                p.confidence == q.confidence) {
                dup = true;
                break;
            }
        }
        if (!dup) bucket.push_back(i);
    }
    std::vector<std::size_t> kept;
    for (auto& [key, bucket] : cells) {
        std::stable_sort(bucket.begin(), bucket.end(), [&](std::size_t a, std::size_t b) {
            if (points[a].confidence != points[b].confidence) {
                return points[a].confidence > points[b].confidence;
            }
            if (points[a].source_id != points[b].source_id) {
                return points[a].source_id < points[b].source_id;
            }
            return a < b;
        });
        for (std::size_t i = 0; i < bucket.size() && i < static_cast<std::size_t>(n_max); ++i) {
            kept.push_back(bucket[i]);
        }
    }
    std::sort(kept.begin(), kept.end());
    std::vector<StoredPoint> out;
    for (std::size_t i : kept) out.push_back(points[i]);
    return out;
}

bool points_equal(const StoredPoint& a, const StoredPoint& b) {
    return a.x == b.x && a.y == b.y && a.z == b.z && a.source_id == b.source_id &&
           a.confidence == b.confidence;
}

struct RenderedFrame {
    std::uint32_t id;
    Pose pose;
    DepthMap depth;
    ConfidenceMap conf;
};

RenderedFrame render_frame(const world::HeightField& hf, std::uint32_t id, const Pose& pose,
                           const Intrinsics& intr) {
    auto [depth, conf] = world::render_depth(hf, pose, intr);
    return {id, pose, std::move(depth), std::move(conf)};
}

}  // namespace

TEST_CASE("novel coverage is 1 against an empty store") {
    const Intrinsics intr = default_intrinsics().downscaled(4);
    const GlobalGeometry geo(0.5, 4);
    DepthMap depth(intr.width, intr.height, 5.0f);
    CHECK(novel_coverage({0, 10, 0, 0.5, 0}, depth, geo, intr, 1) == 1.0);
}

TEST_CASE("novel coverage is 0 when the frame has no valid pixels") {
    const Intrinsics intr = default_intrinsics().downscaled(4);
    const GlobalGeometry geo(0.5, 4);
    DepthMap sky(intr.width, intr.height, 0.0f);
    CHECK(novel_coverage({0, 10, 0, 0.5, 0}, sky, geo, intr, 1) == 0.0);
}

TEST_CASE("re-rendering an integrated frame is mostly covered") {
    // Full production shape: full-resolution integration, quarter-resolution
    // coverage z-buffer, so per-voxel eviction cannot starve cells.
    const world::HeightField hf = world::generate_terrain(42, 128, 1, 0.5);
    const Intrinsics intr = default_intrinsics();
    const Pose pose{0, 12, 0, 0.5, 0.3};
    const RenderedFrame frame = render_frame(hf, 0, pose, intr);

    GlobalGeometry geo(0.5, 4);
    geo.insert_all(backproject(frame.depth, frame.conf, intr, extrinsics_from_pose(pose), 0));

    const double cov = novel_coverage(pose, frame.depth, geo, intr, 4);
    CHECK(cov < 0.1);
}

TEST_CASE("a view opposite to all stored geometry is almost fully novel") {
    const world::HeightField hf = world::generate_terrain(42, 256, 1, 0.5);
    const Intrinsics intr = default_intrinsics().downscaled(4);
    const Pose pose{0, 12, 0, 0.5, 0.0};
    const RenderedFrame frame = render_frame(hf, 0, pose, intr);

    GlobalGeometry geo(0.5, 4);
    geo.insert_all(backproject(frame.depth, frame.conf, intr, extrinsics_from_pose(pose), 0));

    const Pose reversed{0, 12, 0, 0.5, kPi};
    const RenderedFrame back = render_frame(hf, 1, reversed, intr);
    CHECK(novel_coverage(reversed, back.depth, geo, intr, 1) > 0.9);
}

TEST_CASE("keyframe gate trivial cases") {
    const Intrinsics intr = default_intrinsics().downscaled(4);
    const GlobalGeometry empty(0.5, 4);
    DepthMap depth(intr.width, intr.height, 5.0f);

    // Empty store: coverage 1 and no history.
    CHECK(is_keyframe({0, 10, 0, 0.5, 0}, depth, empty, intr, 0, 0.15, 8, 1));

    // Pure predicate clauses.
    CHECK_FALSE(keyframe_decision(0.0, 8, 0.15, 8));
    CHECK(keyframe_decision(0.10, 7, 0.15, 8));   // history clause alone
    CHECK(keyframe_decision(0.15, 8, 0.15, 8));   // threshold is inclusive
    CHECK_FALSE(keyframe_decision(0.149, 8, 0.15, 8));
}

TEST_CASE("keyframe gate property sweep") {
    std::mt19937_64 rng(55);
    for (int i = 0; i < 1000; ++i) {
        const double coverage = oracle::unit_double(rng());
        const int count = static_cast<int>(rng() % 17);
        const bool got = keyframe_decision(coverage, count, 0.15, 8);
        CHECK(got == (coverage >= 0.15 || count < 8));
    }
}

TEST_CASE("integrating one frame fills the store with its valid pixels") {
    const world::HeightField hf = world::generate_terrain(3, 128, 1, 0.4);
    const Intrinsics intr = default_intrinsics().downscaled(4);
    const RenderedFrame frame = render_frame(hf, 0, {0, 14, 0, 0.6, 0}, intr);
    const std::size_t valid = valid_pixels(frame.depth);
    REQUIRE(valid > 1000);

    StoreParams params;
    params.voxel_size = 0.2;  // sparse enough that few pixels share a cell
    GlobalGeometry geo(params.voxel_size, params.n_max);
    ProcessingWindow window;
    window.pending.push_back({0, frame.pose, frame.depth, frame.conf});

    const IntegrationResult result = integrate_window(window, geo, {}, intr, params);
    CHECK(result.applied_scale == 1.0);
    CHECK(result.scale_fallback);  // first window has no overlap
    CHECK(geo.point_count() <= valid);
    CHECK(geo.point_count() >= valid * 8 / 10);
    geo.check_invariants();
    CHECK(window.pending.empty());
    CHECK(window.carried.size() == 1);  // min(overlap, pending)
}

TEST_CASE("integrating the same frame twice absorbs duplicates") {
    const world::HeightField hf = world::generate_terrain(3, 128, 1, 0.4);
    const Intrinsics intr = default_intrinsics().downscaled(4);
    const RenderedFrame frame = render_frame(hf, 0, {0, 14, 0, 0.6, 0}, intr);

    StoreParams params;
    GlobalGeometry geo(params.voxel_size, params.n_max);

    ProcessingWindow first;
    first.pending.push_back({0, frame.pose, frame.depth, frame.conf});
    integrate_window(first, geo, {}, intr, params);
    const std::size_t after_first = geo.point_count();

    ProcessingWindow second;
    second.pending.push_back({0, frame.pose, frame.depth, frame.conf});
    const IntegrationResult res = integrate_window(second, geo, {}, intr, params);
    CHECK(res.points_added <= after_first / 100);
    geo.check_invariants();
}

TEST_CASE("two windows with injected scale 2 align onto one surface") {
    const world::HeightField hf = world::generate_terrain(42, 128, 1, 0.5);
    const Intrinsics intr = default_intrinsics().downscaled(4);
    StoreParams params;
    GlobalGeometry geo(params.voxel_size, params.n_max);

    // Window 1: frames 0..7 walking forward, metric depth.
    ProcessingWindow window;
    std::set<std::uint32_t> global_ids;
    for (int i = 0; i < 8; ++i) {
        const RenderedFrame f = render_frame(hf, static_cast<std::uint32_t>(i),
                                             {0, 12, static_cast<double>(i), 0.5, 0}, intr);
        window.pending.push_back({f.id, f.pose, f.depth, f.conf});
    }
    const IntegrationResult r1 = integrate_window(window, geo, global_ids, intr, params, 1.0);
    for (std::uint32_t id : r1.integrated_ids) global_ids.insert(id);
    CHECK(r1.applied_scale == 1.0);
    const std::size_t w1_points = geo.point_count();
    REQUIRE(w1_points > 0);

    // Window 2: frames 8..15 re-walking the same poses, depths at 2x scale.
    for (int i = 0; i < 8; ++i) {
        const RenderedFrame f = render_frame(hf, static_cast<std::uint32_t>(8 + i),
                                             {0, 12, static_cast<double>(i), 0.5, 0}, intr);
        window.pending.push_back({f.id, f.pose, f.depth, f.conf});
    }
    const IntegrationResult r2 = integrate_window(window, geo, global_ids, intr, params, 2.0);
    CHECK_FALSE(r2.scale_fallback);
    CHECK(r2.applied_scale == doctest::Approx(0.5).epsilon(1e-3));
    geo.check_invariants();

    // Surface-distance oracle: every sampled window-2 point must sit near
    // some window-1 point.
    const auto& pts = geo.points();
    std::vector<const StoredPoint*> w1, w2;
    for (const auto& p : pts) {
        (p.source_id < 8 ? w1 : w2).push_back(&p);
    }
    REQUIRE(!w1.empty());
    REQUIRE(!w2.empty());
    double worst = 0.0;
    for (std::size_t i = 0; i < w2.size(); i += 97) {
        double best = 1e30;
        for (const StoredPoint* q : w1) {
            const double dx = w2[i]->x - q->x, dy = w2[i]->y - q->y, dz = w2[i]->z - q->z;
            best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        worst = std::max(worst, std::sqrt(best));
    }
    CHECK(worst <= 1.5 * params.voxel_size);
}

TEST_CASE("misaligned windows fail the surface check (test power control)") {
    const world::HeightField hf = world::generate_terrain(42, 128, 1, 0.5);
    const Intrinsics intr = default_intrinsics().downscaled(8);
    StoreParams params;
    params.min_scale_pairs = 1u << 30;  // force the s = 1 fallback

    GlobalGeometry geo(params.voxel_size, params.n_max);
    ProcessingWindow window;
    std::set<std::uint32_t> global_ids;
    for (int i = 0; i < 8; ++i) {
        const RenderedFrame f = render_frame(hf, static_cast<std::uint32_t>(i),
                                             {0, 12, static_cast<double>(i), 0.5, 0}, intr);
        window.pending.push_back({f.id, f.pose, f.depth, f.conf});
    }
    const IntegrationResult r1 = integrate_window(window, geo, global_ids, intr, params, 1.0);
    for (std::uint32_t id : r1.integrated_ids) global_ids.insert(id);
    for (int i = 0; i < 8; ++i) {
        const RenderedFrame f = render_frame(hf, static_cast<std::uint32_t>(8 + i),
                                             {0, 12, static_cast<double>(i), 0.5, 0}, intr);
        window.pending.push_back({f.id, f.pose, f.depth, f.conf});
    }
    const IntegrationResult r2 = integrate_window(window, geo, global_ids, intr, params, 2.0);
    CHECK(r2.scale_fallback);
    CHECK(r2.applied_scale == 1.0);

    const auto& pts = geo.points();
    std::vector<const StoredPoint*> w1, w2;
    for (const auto& p : pts) {
        (p.source_id < 8 ? w1 : w2).push_back(&p);
    }
    REQUIRE(!w2.empty());
    // A 2x-scaled ground plane sits far from the metric one.
    double worst = 0.0;
    for (std::size_t i = 0; i < w2.size(); i += 97) {
        double best = 1e30;
        for (const StoredPoint* q : w1) {
            const double dx = w2[i]->x - q->x, dy = w2[i]->y - q->y, dz = w2[i]->z - q->z;
            best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        worst = std::max(worst, std::sqrt(best));
    }
    CHECK(worst > 1.5 * params.voxel_size);
}

TEST_CASE("voxel_downsample leaves separated points alone") {
    std::vector<StoredPoint> pts;
    for (int i = 0; i < 20; ++i) {
        pts.push_back({static_cast<float>(i * 2.0), 0.0f, 0.0f, static_cast<std::uint32_t>(i), 1.0f});
    }
    const auto out = voxel_downsample(pts, 0.5, 4);
    REQUIRE(out.size() == pts.size());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(points_equal(out[i], pts[i]));
}

TEST_CASE("voxel_downsample keeps the best of identical positions") {
    std::vector<StoredPoint> pts;
    std::mt19937_64 rng(5);
    float best = 0.0f;
    for (int i = 0; i < 100; ++i) {
        const float conf = static_cast<float>(oracle::unit_double(rng()));
        best = std::max(best, conf);
        pts.push_back({1.0f, 2.0f, 3.0f, static_cast<std::uint32_t>(i), conf});
    }
    const auto out = voxel_downsample(pts, 0.5, 1);
    REQUIRE(out.size() == 1);
    CHECK(out[0].confidence == best);
}

TEST_CASE("voxel_downsample equals the brute-force reference on random clouds") {
    std::mt19937_64 rng(91);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<StoredPoint> pts;
        const int n = 500 + static_cast<int>(rng() % 500);
        for (int i = 0; i < n; ++i) {
            pts.push_back({static_cast<float>((oracle::unit_double(rng()) - 0.5) * 8.0),
                           static_cast<float>((oracle::unit_double(rng()) - 0.5) * 8.0),
                           static_cast<float>((oracle::unit_double(rng()) - 0.5) * 8.0),
                           static_cast<std::uint32_t>(rng() % 16),
                           // Quantized confidences force tie-breaking.
                           static_cast<float>(static_cast<int>(oracle::unit_double(rng()) * 4) / 4.0)});
        }
        // Sprinkle exact duplicates.
        for (int i = 0; i < 50; ++i) {
            pts.push_back(pts[rng() % pts.size()]);
        }
        const auto got = voxel_downsample(pts, 1.0, 3);
        const auto want = downsample_ref(pts, 1.0, 3);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(points_equal(got[i], want[i]));
        }
    }
}

TEST_CASE("voxel cap holds after heavy integration") {
    const world::HeightField hf = world::generate_terrain(8, 128, 1, 0.5);
    const Intrinsics intr = default_intrinsics().downscaled(8);
    StoreParams params;
    GlobalGeometry geo(params.voxel_size, params.n_max);
    std::set<std::uint32_t> global_ids;
    ProcessingWindow window;
    for (int i = 0; i < 16; ++i) {
        const Pose pose{0.25 * i, 12, 0.1 * i, 0.55, 0.05 * i};
        const RenderedFrame f = render_frame(hf, static_cast<std::uint32_t>(i), pose, intr);
        window.pending.push_back({f.id, f.pose, f.depth, f.conf});
        if (window.pending.size() == 8) {
            const auto r = integrate_window(window, geo, global_ids, intr, params);
            for (std::uint32_t id : r.integrated_ids) global_ids.insert(id);
        }
    }
    geo.check_invariants();
    for (const auto& [key, cell] : geo.cells()) {
        CHECK(static_cast<int>(cell.indices.size()) <= params.n_max);
    }
}

TEST_CASE("snapshot: empty store round-trips") {
    const std::string path = temp_path("gsm_test_empty.snap");
    const GlobalGeometry geo(0.5, 4);
    save_snapshot(geo, {}, path);
    const Snapshot snap = load_snapshot(path);
    CHECK(snap.geometry.point_count() == 0);
    CHECK(snap.frames.empty());
    CHECK(snap.geometry.voxel_size() == 0.5);
    CHECK(snap.geometry.n_max() == 4);
    std::filesystem::remove(path);
}

TEST_CASE("snapshot: 10k-point store round-trips bit-identically") {
    std::mt19937_64 rng(123);
    GlobalGeometry geo(0.5, 4);
    std::vector<FrameRecord> frames;
    for (int f = 0; f < 32; ++f) {
        FrameRecord rec;
        rec.id = static_cast<std::uint32_t>(f);
        rec.pose = {oracle::unit_double(rng()) * 50, oracle::unit_double(rng()) * 20,
                    oracle::unit_double(rng()) * 50, oracle::unit_double(rng()) - 0.5,
                    (oracle::unit_double(rng()) - 0.5) * 3.0};
        rec.keyframe = (f % 3) != 0;
        frames.push_back(rec);
    }
    while (geo.point_count() < 10000) {
        geo.insert({static_cast<float>((oracle::unit_double(rng()) - 0.5) * 100.0),
                    static_cast<float>((oracle::unit_double(rng()) - 0.5) * 30.0),
                    static_cast<float>((oracle::unit_double(rng()) - 0.5) * 100.0),
                    static_cast<std::uint32_t>(rng() % 32),
                    static_cast<float>(oracle::unit_double(rng()))});
    }

    const std::string path = temp_path("gsm_test_10k.snap");
    save_snapshot(geo, frames, path);
    const Snapshot snap = load_snapshot(path);

    REQUIRE(snap.geometry.point_count() == geo.point_count());
    for (std::size_t i = 0; i < geo.point_count(); ++i) {
        CHECK(points_equal(snap.geometry.points()[i], geo.points()[i]));
    }
    REQUIRE(snap.frames.size() == frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        CHECK(snap.frames[i].id == frames[i].id);
        CHECK(snap.frames[i].keyframe == frames[i].keyframe);
        CHECK(snap.frames[i].pose.x == frames[i].pose.x);
        CHECK(snap.frames[i].pose.pitch == frames[i].pose.pitch);
        CHECK(snap.frames[i].pose.yaw == frames[i].pose.yaw);
    }
    snap.geometry.check_invariants();

    // Saving the loaded store reproduces the file byte for byte.
    const std::string path2 = temp_path("gsm_test_10k_b.snap");
    save_snapshot(snap.geometry, snap.frames, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("snapshot: wrong magic and truncation raise format errors") {
    const std::string path = temp_path("gsm_test_bad.snap");
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os << "NOPE then some bytes";
    }
    CHECK_THROWS_AS(load_snapshot(path), FormatError);

    // Valid header, truncated body.
    GlobalGeometry geo(0.5, 4);
    geo.insert({1, 2, 3, 0, 1.0f});
    save_snapshot(geo, {}, path);
    {
        std::error_code ec;
        const auto size = std::filesystem::file_size(path, ec);
        REQUIRE(!ec);
        std::filesystem::resize_file(path, size - 4, ec);
        REQUIRE(!ec);
    }
    try {
        load_snapshot(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() > 0);
    }
    std::filesystem::remove(path);
}
