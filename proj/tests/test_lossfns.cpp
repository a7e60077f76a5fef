#include "cownter/lossfns.hpp"
#include "cownter/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cownter;

namespace {

constexpr double kEps = 1e-6;

// Distinct probabilities on a ladder of step 1/(n+1) (well above the finite
// difference step), shuffled, so +-h never flips thresholding, argmax or
// watershed order.
std::vector<double> ladder_map(Rng& rng, std::size_t n, double lo, double hi)
{
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i)
        p[i] = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    rng.shuffle(std::span<double>(p));
    for (double& v : p)
        if (std::abs(v - 0.5) < 1e-3)
            v += 2e-3;
    return p;
}

std::vector<Point> random_points(Rng& rng, int n, int w, int h)
{
    std::vector<Point> pts;
    for (int i = 0; i < n; ++i)
        pts.push_back({rng.uniform(0, w), rng.uniform(0, h)});
    return pts;
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

std::vector<double> disc_map(int w, int h, double cx, double cy, double r, double in, double out)
{
    std::vector<double> p(static_cast<std::size_t>(w) * h, out);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= r)
                p[static_cast<std::size_t>(y) * w + x] = in;
    return p;
}

} // namespace

TEST(LcfcnLoss, PerfectEmptyPrediction)
{
    const std::vector<double> prob(64, kEps);
    const auto l = lcfcn_loss<double>(prob, 8, 8, {});
    EXPECT_NEAR(l.terms.image_term, -std::log(1 - kEps), 1e-15);
    EXPECT_LT(l.terms.total, 1e-5);
    EXPECT_EQ(l.terms.point_term, 0.0);
    EXPECT_EQ(l.terms.split_term, 0.0);
    EXPECT_EQ(l.terms.fp_term, 0.0);
}

TEST(LcfcnLoss, OneBlobPerObjectFixedPoint)
{
    const auto prob = disc_map(16, 16, 8, 8, 2, 1 - 1e-4, kEps);
    const std::vector<Point> pt{{8.2, 7.9}};
    const auto l = lcfcn_loss<double>(prob, 16, 16, pt);
    EXPECT_NEAR(l.terms.point_term, 0.0, 2e-4);
    EXPECT_NEAR(l.terms.image_term, 0.0, 2e-4);
    EXPECT_EQ(l.terms.split_term, 0.0);
    EXPECT_EQ(l.terms.fp_term, 0.0);
    EXPECT_LT(l.terms.total, 0.01);
}

TEST(LcfcnLoss, SplitTermFallsWhenBoundaryDims)
{
    // One elongated blob holding two points.
    const int w = 16, h = 16;
    std::vector<double> prob(static_cast<std::size_t>(w) * h, 0.01);
    for (int y = 6; y < 10; ++y)
        for (int x = 2; x < 14; ++x)
            prob[static_cast<std::size_t>(y) * w + x] = 0.9 - 0.02 * std::abs(x - 7.5);
    const std::vector<Point> pts{{3.5, 7.5}, {12.5, 7.5}};
    const auto before = lcfcn_loss<double>(prob, w, h, pts);
    EXPECT_GT(before.terms.split_term, 0.0);

    // The boundary pixels are the ones with a split gradient; dim them.
    const auto mask = connected_components(
        [&] {
            Mask m(prob.size());
            for (std::size_t i = 0; i < m.size(); ++i)
                m[i] = prob[i] >= 0.5;
            return m;
        }(),
        w, h);
    const auto blob = blob_pixels(mask)[1];
    const auto line = watershed_split<double>(prob, w, h, blob, pts);
    ASSERT_FALSE(line.empty());
    auto dimmed = prob;
    for (int i : line)
        dimmed[static_cast<std::size_t>(i)] = 0.6;
    const auto after = lcfcn_loss<double>(dimmed, w, h, pts);
    EXPECT_LT(after.terms.split_term, before.terms.split_term);
    // Weight m = 2 on the split sum.
    double line_sum = 0.0;
    for (int i : line)
        line_sum += -std::log(1 - prob[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(before.terms.split_term, 2.0 * line_sum, 1e-12);
}

TEST(LcfcnLoss, FalsePositiveBlobMatchesBruteForce)
{
    const auto prob = disc_map(20, 20, 10, 10, 3.5, 0.8, 0.05);
    const auto l = lcfcn_loss<double>(prob, 20, 20, {});
    double ref = 0.0;
    for (double p : prob)
        if (p >= 0.5)
            ref += -std::log(1 - p);
    EXPECT_NEAR(l.terms.fp_term, ref, 1e-12);
}

TEST(LcfcnLoss, AdjacentPointsDoNotThrow)
{
    const auto prob = disc_map(10, 10, 5, 5, 3, 0.9, 0.1);
    const std::vector<Point> pts{{4.5, 4.5}, {5.5, 4.5}};
    const auto l = lcfcn_loss<double>(prob, 10, 10, pts);
    EXPECT_EQ(l.terms.split_term, 0.0);
}

TEST(LcfcnLoss, PointOutsideRaster)
{
    const std::vector<double> prob(16, 0.5);
    const std::vector<Point> pts{{4.0, 0.0}};
    EXPECT_THROW(lcfcn_loss<double>(prob, 4, 4, pts), DataError);
}

// total = sum of the four non-negative terms, on arbitrary maps.
TEST(LcfcnLoss, TermsNonNegativeAndSum)
{
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const int w = static_cast<int>(rng.between(1, 20));
        const int h = static_cast<int>(rng.between(1, 20));
        std::vector<double> prob(static_cast<std::size_t>(w) * h);
        for (double& p : prob)
            p = rng.uniform() < 0.1 ? (rng.uniform() < 0.5 ? 0.0 : 1.0) : rng.uniform();
        const auto pts = random_points(rng, static_cast<int>(rng.between(0, 10)), w, h);
        const auto t = lcfcn_loss<double>(prob, w, h, pts).terms;
        ASSERT_GE(t.image_term, 0.0);
        ASSERT_GE(t.point_term, 0.0);
        ASSERT_GE(t.split_term, 0.0);
        ASSERT_GE(t.fp_term, 0.0);
        ASSERT_TRUE(std::isfinite(t.total));
        ASSERT_NEAR(t.total, t.image_term + t.point_term + t.split_term + t.fp_term, 1e-12 * (1 + t.total));
    }
}

TEST(LcfcnLoss, GradientMatchesCentralDifferences)
{
    Rng rng(32);
    const double h = 1e-5;
    int with_split = 0;
    for (int trial = 0; trial < 25; ++trial) {
        const int w = 12, ht = 12;
        auto prob = ladder_map(rng, static_cast<std::size_t>(w) * ht, 0.02, 0.98);
        const auto pts = random_points(rng, static_cast<int>(rng.between(0, 8)), w, ht);
        const auto l = lcfcn_loss<double>(prob, w, ht, pts);
        with_split += l.terms.split_term > 0.0;
        for (std::size_t i = 0; i < prob.size(); ++i) {
            const double p0 = prob[i];
            prob[i] = p0 + h;
            const double up = lcfcn_loss<double>(prob, w, ht, pts).terms.total;
            prob[i] = p0 - h;
            const double down = lcfcn_loss<double>(prob, w, ht, pts).terms.total;
            prob[i] = p0;
            const double fd = (up - down) / (2 * h);
            ASSERT_LT(rel_error(l.grad[i], fd), 1e-5) << "trial " << trial << " pixel " << i << " analytic "
                                                      << l.grad[i] << " fd " << fd;
        }
    }
    EXPECT_GT(with_split, 0) << "no instance exercised the split term";
}

TEST(DensityLoss, Examples)
{
    const std::vector<double> t{0.1, 0.2, 0.3, 0.4, 0.0, 0.0};
    const auto same = density_loss<double>(t, t);
    EXPECT_EQ(same.value, 0.0);
    for (double g : same.grad)
        EXPECT_EQ(g, 0.0);

    std::vector<double> shifted = t;
    for (double& v : shifted)
        v += 0.25;
    const auto l = density_loss<double>(shifted, t);
    EXPECT_NEAR(l.value, 6 * 0.25 * 0.25 / 2, 1e-15);
    for (std::size_t i = 0; i < t.size(); ++i)
        EXPECT_EQ(l.grad[i], shifted[i] - t[i]);

    const std::vector<double> short_pred{1.0};
    EXPECT_THROW(density_loss<double>(short_pred, t), DataError);
    EXPECT_THROW(density_loss(DensityMap(3, 2), DensityMap(2, 3)), DataError);
}

TEST(DensityLoss, SymmetricAndConvex)
{
    Rng rng(33);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(30), b(30), target(30), neg(30), mid(30);
        for (std::size_t i = 0; i < 30; ++i) {
            target[i] = rng.uniform();
            a[i] = rng.uniform(-1, 2);
            b[i] = rng.uniform(-1, 2);
            neg[i] = 2 * target[i] - a[i];
            mid[i] = 0.5 * (a[i] + b[i]);
        }
        const double la = density_loss<double>(a, target).value;
        EXPECT_NEAR(la, density_loss<double>(neg, target).value, 1e-12);
        EXPECT_LE(density_loss<double>(mid, target).value,
                  0.5 * (la + density_loss<double>(b, target).value) + 1e-12);
    }
}

TEST(DensityLoss, GradientMatchesCentralDifferences)
{
    Rng rng(34);
    const double h = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> pred(144), target(144);
        for (std::size_t i = 0; i < 144; ++i) {
            pred[i] = rng.uniform(0, 0.1);
            target[i] = rng.uniform(0, 0.1);
        }
        const auto l = density_loss<double>(pred, target);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double p0 = pred[i];
            pred[i] = p0 + h;
            const double up = density_loss<double>(pred, target).value;
            pred[i] = p0 - h;
            const double down = density_loss<double>(pred, target).value;
            pred[i] = p0;
            ASSERT_LT(rel_error(l.grad[i], (up - down) / (2 * h)), 1e-5);
        }
    }
}
