#include "gsm/scale_alignment.hpp"

#include "gsm/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <random>
#include <vector>

using namespace gsm;
using namespace gsm::scale;

namespace {

DepthMap grid_from(const std::vector<float>& values, int w, int h) {
    DepthMap g(w, h);
    g.data = values;
    return g;
}

CorrespondenceSet pairs_from(const std::vector<double>& old_d, const std::vector<double>& new_d) {
    CorrespondenceSet c;
    c.old_depth = old_d;
    c.new_depth = new_d;
    return c;
}

}  // namespace

TEST_CASE("detect_overlap is exact set intersection") {
    CHECK(detect_overlap({5, 6, 7, 8}, {1, 2, 3, 4, 5, 6}) == std::set<std::uint32_t>{5, 6});
    CHECK(detect_overlap({10, 11}, {1, 2, 3}).empty());
    CHECK(detect_overlap({2, 3}, {1, 2, 3, 4}) == std::set<std::uint32_t>{2, 3});
}

TEST_CASE("filter keeps everything when all pixels are perfect") {
    const DepthMap d(4, 4, 2.0f);
    const ConfidenceMap c(4, 4, 1.0f);
    const CorrespondenceSet corr = filter_correspondences(d, d, c, c, 0.1, 1.0);
    CHECK(corr.size() == 16);
    CHECK(corr.after_validity == 16);
    CHECK(corr.after_confidence == 16);
    CHECK(corr.after_percentile == 16);
}

TEST_CASE("filter drops everything when one map is below tau_min") {
    const DepthMap d(4, 4, 2.0f);
    const ConfidenceMap good(4, 4, 1.0f);
    const ConfidenceMap bad(4, 4, 0.05f);
    const CorrespondenceSet corr = filter_correspondences(d, d, good, bad, 0.1, 0.6);
    CHECK(corr.empty());
    CHECK(corr.after_validity == 16);
    CHECK(corr.after_confidence == 0);
}

TEST_CASE("filter matches an exhaustive per-pixel reference on a 16-pixel grid") {
    // Hand-laid confidences exercising every stage.
    const std::vector<float> old_d = {0.0f, 2.0f, 3.0f, 4.0f,
                                      5.0f, 6.0f, 0.0f, 8.0f,
                                      9.0f, 10.f, 11.f, 12.f,
                                      13.f, 14.f, 15.f, 16.f};
    const std::vector<float> new_d = {1.0f, 2.0f, 3.0f, 0.0f,
                                      5.0f, 6.0f, 7.0f, 8.0f,
                                      9.0f, 10.f, 11.f, 12.f,
                                      13.f, 14.f, 15.f, 16.f};
    const std::vector<float> old_c = {0.9f, 0.05f, 0.4f, 0.8f,
                                      0.6f, 0.95f, 0.7f, 0.3f,
                                      0.2f, 0.85f, 0.55f, 0.45f,
                                      0.75f, 0.65f, 0.35f, 0.5f};
    const std::vector<float> new_c = {0.8f, 0.9f, 0.08f, 0.7f,
                                      0.5f, 0.6f, 0.9f, 0.4f,
                                      0.95f, 0.3f, 0.45f, 0.55f,
                                      0.25f, 0.85f, 0.65f, 0.35f};
    const double tau = 0.1, keep = 0.6;

    const CorrespondenceSet corr =
        filter_correspondences(grid_from(old_d, 4, 4), grid_from(new_d, 4, 4),
                               grid_from(old_c, 4, 4), grid_from(new_c, 4, 4), tau, keep);

    // Brute-force reference: filter pixel by pixel with its own percentile.
    std::vector<std::size_t> stage2;
    std::vector<float> kept_old_c, kept_new_c;
    for (std::size_t i = 0; i < 16; ++i) {
        if (old_d[i] < 1e-6f || new_d[i] < 1e-6f) continue;
        if (old_c[i] < tau || new_c[i] < tau) continue;
        stage2.push_back(i);
        kept_old_c.push_back(old_c[i]);
        kept_new_c.push_back(new_c[i]);
    }
    auto nearest_rank = [](std::vector<float> v, double q) {
        std::sort(v.begin(), v.end());
        std::size_t rank = static_cast<std::size_t>(std::ceil(q * v.size()));
        if (rank > 0) --rank;
        return v[rank];
    };
    const float thr_old = nearest_rank(kept_old_c, 1.0 - keep);
    const float thr_new = nearest_rank(kept_new_c, 1.0 - keep);
    std::vector<std::pair<float, float>> expected;
    for (std::size_t i : stage2) {
        if (old_c[i] >= thr_old && new_c[i] >= thr_new) expected.push_back({old_d[i], new_d[i]});
    }

    REQUIRE(corr.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(corr.old_depth[i] == expected[i].first);
        CHECK(corr.new_depth[i] == expected[i].second);
    }
    CHECK(corr.after_percentile == expected.size());
}

TEST_CASE("filter stages are monotonically shrinking") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const int w = 8, h = 8;
        DepthMap od(w, h), nd(w, h);
        ConfidenceMap oc(w, h), nc(w, h);
        for (std::size_t i = 0; i < od.size(); ++i) {
            od.data[i] = oracle::unit_double(rng()) < 0.1 ? 0.0f
                         : static_cast<float>(1.0 + oracle::unit_double(rng()) * 10.0);
            nd.data[i] = oracle::unit_double(rng()) < 0.1 ? 0.0f
                         : static_cast<float>(1.0 + oracle::unit_double(rng()) * 10.0);
            oc.data[i] = static_cast<float>(oracle::unit_double(rng()));
            nc.data[i] = static_cast<float>(oracle::unit_double(rng()));
        }
        const CorrespondenceSet corr = filter_correspondences(od, nd, oc, nc, 0.1, 0.6);
        CHECK(corr.after_validity <= corr.total_pixels);
        CHECK(corr.after_confidence <= corr.after_validity);
        CHECK(corr.after_percentile <= corr.after_confidence);
        CHECK(corr.size() == corr.after_percentile);
    }
}

TEST_CASE("filter rejects bad arguments") {
    const DepthMap d(4, 4, 1.0f);
    const DepthMap wrong(3, 4, 1.0f);
    const ConfidenceMap c(4, 4, 1.0f);
    CHECK_THROWS_AS(filter_correspondences(d, wrong, c, c), std::invalid_argument);
    CHECK_THROWS_AS(filter_correspondences(d, d, c, c, 1.5, 0.6), std::invalid_argument);
    CHECK_THROWS_AS(filter_correspondences(d, d, c, c, 0.1, 0.0), std::invalid_argument);
}

TEST_CASE("estimate_scale recovers exact multiplicative scale") {
    std::vector<double> new_d, old_d;
    for (int i = 1; i <= 100; ++i) {
        new_d.push_back(i * 0.25);
        old_d.push_back(i * 0.5);  // old = 2 * new
    }
    CHECK(estimate_scale(pairs_from(old_d, new_d)) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("estimate_scale on a single pair") {
    CHECK(estimate_scale(pairs_from({6.0}, {3.0})) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("estimate_scale raises on degenerate sets") {
    CHECK_THROWS_AS(estimate_scale(pairs_from({}, {})), DegenerateCorrespondences);
    CHECK_THROWS_AS(estimate_scale(pairs_from({1.0}, {0.0})), DegenerateCorrespondences);
    // The pipeline minimum-count guard.
    std::vector<double> few(10, 1.0);
    CHECK_THROWS_AS(estimate_scale(pairs_from(few, few), kMinCorrespondences),
                    DegenerateCorrespondences);
}

TEST_CASE("noisy estimate matches a generic least-squares solver") {
    std::mt19937_64 rng(1234);
    const double target = 1.37;
    std::vector<double> old_d, new_d;
    for (int i = 0; i < 1000; ++i) {
        const double base = 1.0 + oracle::unit_double(rng()) * 20.0;
        const double noise = 1.0 + (oracle::unit_double(rng()) - 0.5) * 0.10;  // 5% rms-ish
        old_d.push_back(base * target * noise);
        new_d.push_back(base);
    }
    const double s = estimate_scale(pairs_from(old_d, new_d));
    CHECK(s == doctest::Approx(target).epsilon(0.02));

    // Independent route: solve the 1-column linear system with Eigen's SVD.
    Eigen::MatrixXd a(new_d.size(), 1);
    Eigen::VectorXd b(new_d.size());
    for (std::size_t i = 0; i < new_d.size(); ++i) {
        a(static_cast<Eigen::Index>(i), 0) = new_d[i];
        b(static_cast<Eigen::Index>(i)) = old_d[i];
    }
    const double svd = a.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b)(0);
    CHECK(s == doctest::Approx(svd).epsilon(1e-12));
}

TEST_CASE("closed form is a local optimum of the squared error") {
    std::mt19937_64 rng(77);
    std::vector<double> old_d, new_d;
    for (int i = 0; i < 200; ++i) {
        old_d.push_back(1.0 + oracle::unit_double(rng()) * 9.0);
        new_d.push_back(1.0 + oracle::unit_double(rng()) * 9.0);
    }
    const CorrespondenceSet corr = pairs_from(old_d, new_d);
    const double s = estimate_scale(corr);
    auto sse = [&](double scale) {
        double total = 0.0;
        for (std::size_t i = 0; i < corr.size(); ++i) {
            const double r = corr.old_depth[i] - scale * corr.new_depth[i];
            total += r * r;
        }
        return total;
    };
    CHECK(sse(s) <= sse(s + 1e-3));
    CHECK(sse(s) <= sse(s - 1e-3));
}

TEST_CASE("estimate_scale is equivariant in the old depths") {
    std::mt19937_64 rng(78);
    std::vector<double> old_d, new_d, old_scaled;
    for (int i = 0; i < 100; ++i) {
        old_d.push_back(1.0 + oracle::unit_double(rng()) * 9.0);
        new_d.push_back(1.0 + oracle::unit_double(rng()) * 9.0);
    }
    const double alpha = 3.0;
    for (double v : old_d) old_scaled.push_back(v * alpha);
    const double s1 = estimate_scale(pairs_from(old_d, new_d));
    const double s2 = estimate_scale(pairs_from(old_scaled, new_d));
    CHECK(s2 == doctest::Approx(alpha * s1).epsilon(1e-12));
}

TEST_CASE("apply_scale: identity, doubling, and invalid preservation") {
    DepthMap d(2, 2);
    d.data = {5.0f, 0.0f, 1e-7f, 2.5f};

    const DepthMap same = apply_scale(d, 1.0);
    CHECK(same.data == d.data);

    const DepthMap doubled = apply_scale(d, 2.0);
    CHECK(doubled.data[0] == 10.0f);
    CHECK(doubled.data[1] == 0.0f);        // invalid: bit-identical
    CHECK(doubled.data[2] == 1e-7f);       // invalid: below threshold
    CHECK(doubled.data[3] == 5.0f);

    CHECK_THROWS_AS(apply_scale(d, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(apply_scale(d, -1.0), std::invalid_argument);
}

TEST_CASE("scaled-then-estimated recovers the inverse factor") {
    std::mt19937_64 rng(79);
    const double s = 2.7;

    // Exact pairs: the estimator itself is accurate to double rounding.
    std::vector<double> original, scaled;
    for (int i = 0; i < 64; ++i) {
        const double v = 1.0 + oracle::unit_double(rng()) * 10.0;
        original.push_back(v);
        scaled.push_back(v * s);
    }
    CHECK(estimate_scale(pairs_from(original, scaled)) ==
          doctest::Approx(1.0 / s).epsilon(1e-12));

    // Through the f32 grid op the recovery is limited by float rounding.
    DepthMap grid(8, 8);
    for (std::size_t i = 0; i < grid.size(); ++i) grid.data[i] = static_cast<float>(original[i]);
    const DepthMap scaled_grid = apply_scale(grid, s);
    CorrespondenceSet corr;
    corr.old_depth.assign(grid.data.begin(), grid.data.end());
    corr.new_depth.assign(scaled_grid.data.begin(), scaled_grid.data.end());
    CHECK(estimate_scale(corr) == doctest::Approx(1.0 / s).epsilon(1e-6));
}

TEST_CASE("first window identity: empty overlap applies scale one") {
    // The fallback is exercised through integrate_window in the store tests;
    // here the pure contract: an empty overlap set means nothing to fit.
    CHECK(detect_overlap({0, 1, 2}, {}).empty());
}
