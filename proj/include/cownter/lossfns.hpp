#pragma once

#include "cownter/blobkit.hpp"
#include "cownter/density.hpp"
#include "cownter/error.hpp"
#include "cownter/raster.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace cownter {

inline constexpr double kProbEpsilon = 1e-6;
inline constexpr double kBlobThreshold = 0.5;

template <typename T>
struct LcfcnLossBreakdown {
    T image_term{};
    T point_term{};
    T split_term{};
    T fp_term{};
    T total{};
};

template <typename T>
struct LcfcnLoss {
    LcfcnLossBreakdown<T> terms;
    std::vector<T> grad; // d total / d prob, same layout as prob
};

namespace detail {

/// Distinct seed pixels of `points`, greedily dropping any seed 4-adjacent to one
/// already kept (such pairs cannot be separated by a watershed line).
inline std::vector<Point> separable_seeds(std::span<const Point> points, int width)
{
    std::vector<Point> kept;
    std::vector<int> kept_idx;
    for (const Point& p : points) {
        const int idx = pixel_row(p) * width + pixel_col(p);
        bool ok = true;
        for (int k : kept_idx) {
            const int d = std::abs(k % width - idx % width) + std::abs(k / width - idx / width);
            if (d <= 1) {
                ok = false;
                break;
            }
        }
        if (ok) {
            kept.push_back(p);
            kept_idx.push_back(idx);
        }
    }
    return kept;
}

} // namespace detail

/// Point-supervised blob loss over a foreground probability map.
///
/// Four terms:
///  - image: -log(max prob) when the tile has points, else -log(1 - max prob);
///  - point: -sum log(prob) at each annotated pixel;
///  - split: for every blob (prob >= 0.5) holding m >= 2 points, m times
///    -sum log(1 - prob) over the watershed line separating those points;
///  - fp: -sum log(1 - prob) over every blob that holds no point.
///
/// Blob membership and watershed lines are fixed by the current map, so `grad` is
/// the derivative of the total with that structure held constant. Probabilities
/// are clamped to [eps, 1 - eps] inside the logarithms.
template <typename T>
LcfcnLoss<T> lcfcn_loss(std::span<const T> prob, int width, int height, std::span<const Point> points)
{
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (prob.size() != n)
        throw DataError("probability map size does not match dimensions");
    for (const Point& p : points)
        if (!in_bounds(p, width, height))
            throw DataError("loss point outside raster");

    const T eps = static_cast<T>(kProbEpsilon);
    auto clamp = [&](T p) { return std::clamp(p, eps, T(1) - eps); };
    // -log(p) and -log(1-p) with their derivatives in p.
    auto neg_log = [&](T p) { return -std::log(clamp(p)); };
    auto d_neg_log = [&](T p) { return T(-1) / clamp(p); };
    auto neg_log1m = [&](T p) { return -std::log(T(1) - clamp(p)); };
    auto d_neg_log1m = [&](T p) { return T(1) / (T(1) - clamp(p)); };

    LcfcnLoss<T> out;
    out.grad.assign(n, T(0));
    auto& g = out.grad;
    auto& t = out.terms;

    std::size_t argmax = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (prob[i] > prob[argmax])
            argmax = i;
    if (!points.empty()) {
        t.image_term = neg_log(prob[argmax]);
        g[argmax] += d_neg_log(prob[argmax]);
    } else {
        t.image_term = neg_log1m(prob[argmax]);
        g[argmax] += d_neg_log1m(prob[argmax]);
    }

    for (const Point& p : points) {
        const auto i = static_cast<std::size_t>(pixel_row(p) * width + pixel_col(p));
        t.point_term += neg_log(prob[i]);
        g[i] += d_neg_log(prob[i]);
    }

    Mask mask(n);
    for (std::size_t i = 0; i < n; ++i)
        mask[i] = prob[i] >= static_cast<T>(kBlobThreshold) ? 1 : 0;
    const BlobMap blobs = connected_components(mask, width, height);
    if (blobs.count > 0) {
        const auto pixels = blob_pixels(blobs);
        std::vector<std::vector<Point>> blob_points(pixels.size());
        for (const Point& p : points) {
            const int label = blobs.at(pixel_col(p), pixel_row(p));
            if (label > 0)
                blob_points[static_cast<std::size_t>(label)].push_back(p);
        }
        for (std::size_t b = 1; b < pixels.size(); ++b) {
            const auto& members = blob_points[b];
            if (members.empty()) {
                for (int i : pixels[b]) {
                    t.fp_term += neg_log1m(prob[static_cast<std::size_t>(i)]);
                    g[static_cast<std::size_t>(i)] += d_neg_log1m(prob[static_cast<std::size_t>(i)]);
                }
            } else if (members.size() >= 2) {
                const auto seeds = detail::separable_seeds(members, width);
                if (seeds.size() < 2)
                    continue;
                const T weight = static_cast<T>(members.size());
                for (int i : watershed_split<T>(prob, width, height, pixels[b], seeds)) {
                    t.split_term += weight * neg_log1m(prob[static_cast<std::size_t>(i)]);
                    g[static_cast<std::size_t>(i)] += weight * d_neg_log1m(prob[static_cast<std::size_t>(i)]);
                }
            }
        }
    }
    t.total = t.image_term + t.point_term + t.split_term + t.fp_term;
    return out;
}

template <typename T>
struct DensityLoss {
    T value{};
    std::vector<T> grad;
};

/// Half the summed squared residual; the gradient is the residual itself.
template <typename T>
DensityLoss<T> density_loss(std::span<const T> pred, std::span<const T> target)
{
    if (pred.size() != target.size())
        throw DataError("density loss shape mismatch");
    DensityLoss<T> out;
    out.grad.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T r = pred[i] - target[i];
        out.grad[i] = r;
        out.value += r * r;
    }
    out.value /= T(2);
    return out;
}

inline DensityLoss<double> density_loss(const DensityMap& pred, const DensityMap& target)
{
    if (pred.width != target.width || pred.height != target.height)
        throw DataError("density loss shape mismatch");
    return density_loss<double>(pred.values, target.values);
}

} // namespace cownter
