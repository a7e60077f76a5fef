#pragma once

// Blob machinery for detection-style counting: 4-connected labelling, point
// accounting per blob, and seeded watershed splitting of a blob.

#include "cownter/error.hpp"
#include "cownter/raster.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <tuple>
#include <vector>

namespace cownter {

/// Row-major 0/1 mask.
using Mask = std::vector<std::uint8_t>;

/// Labels are 0 for background and 1..count for blobs.
struct BlobMap {
    int width = 0;
    int height = 0;
    std::vector<int> labels;
    int count = 0;

    int at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

/// 4-connected components. Ids follow the raster-scan order of each blob's first pixel.
inline BlobMap connected_components(std::span<const std::uint8_t> mask, int width, int height)
{
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (mask.size() != n)
        throw DataError("mask size does not match dimensions");

    // Two-pass union-find; roots always carry the smallest raster index of their set.
    std::vector<std::int32_t> parent(n, -1);
    auto find = [&](std::int32_t i) {
        while (parent[static_cast<std::size_t>(i)] != i) {
            auto& p = parent[static_cast<std::size_t>(i)];
            p = parent[static_cast<std::size_t>(p)];
            i = p;
        }
        return i;
    };
    auto unite = [&](std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b)
            return;
        if (a < b)
            parent[static_cast<std::size_t>(b)] = a;
        else
            parent[static_cast<std::size_t>(a)] = b;
    };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const auto i = static_cast<std::int32_t>(y * width + x);
            if (!mask[static_cast<std::size_t>(i)])
                continue;
            parent[static_cast<std::size_t>(i)] = i;
            if (x > 0 && mask[static_cast<std::size_t>(i - 1)])
                unite(i, i - 1);
            if (y > 0 && mask[static_cast<std::size_t>(i - width)])
                unite(i, i - width);
        }
    }

    BlobMap out{width, height, std::vector<int>(n, 0), 0};
    std::vector<int> root_label(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i])
            continue;
        const auto r = static_cast<std::size_t>(find(static_cast<std::int32_t>(i)));
        if (root_label[r] == 0)
            root_label[r] = ++out.count;
        out.labels[i] = root_label[r];
    }
    return out;
}

struct PointsPerBlob {
    std::vector<int> per_blob; // index = blob id; entry 0 is unused
    int background = 0;
};

inline PointsPerBlob points_per_blob(const BlobMap& blobs, std::span<const Point> points)
{
    PointsPerBlob out;
    out.per_blob.assign(static_cast<std::size_t>(blobs.count) + 1, 0);
    for (const Point& p : points) {
        if (!in_bounds(p, blobs.width, blobs.height))
            throw DataError("point out of bounds");
        const int label = blobs.at(pixel_col(p), pixel_row(p));
        if (label == 0)
            ++out.background;
        else
            ++out.per_blob[static_cast<std::size_t>(label)];
    }
    return out;
}

/// Pixel indices of every blob, in raster order. Entry 0 is empty.
inline std::vector<std::vector<int>> blob_pixels(const BlobMap& blobs)
{
    std::vector<std::vector<int>> out(static_cast<std::size_t>(blobs.count) + 1);
    for (std::size_t i = 0; i < blobs.labels.size(); ++i)
        if (blobs.labels[i] > 0)
            out[static_cast<std::size_t>(blobs.labels[i])].push_back(static_cast<int>(i));
    return out;
}

/// Seeded watershed restricted to one blob.
///
/// Regions grow from the seed pixels over the topography -prob, so the most
/// probable pixels are flooded first. Queue order is (probability descending,
/// flood distance from the seed, raster index). A pixel reached by two different
/// regions becomes a watershed-line pixel and stops growing. Returns the line
/// pixels, sorted by raster index. `blob` must be 4-connected.
///
/// Seeds falling in the same pixel are merged. Two seeds in 4-adjacent pixels
/// cannot be separated by a line and are rejected.
template <typename T>
std::vector<int> watershed_split(std::span<const T> prob, int width, int height, std::span<const int> blob,
                                 std::span<const Point> seeds)
{
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (prob.size() != n)
        throw DataError("probability map size does not match dimensions");
    constexpr int kOutside = -2;
    constexpr int kLine = -1;
    constexpr int kUnlabelled = 0;
    std::vector<int> state(n, kOutside);
    for (int i : blob) {
        if (i < 0 || static_cast<std::size_t>(i) >= n)
            throw DataError("blob pixel out of range");
        state[static_cast<std::size_t>(i)] = kUnlabelled;
    }

    std::vector<int> seed_pixels;
    for (const Point& s : seeds) {
        if (!in_bounds(s, width, height))
            throw DataError("watershed seed out of bounds");
        const int idx = pixel_row(s) * width + pixel_col(s);
        if (state[static_cast<std::size_t>(idx)] == kOutside)
            throw DataError("watershed seed outside the blob");
        seed_pixels.push_back(idx);
    }
    std::sort(seed_pixels.begin(), seed_pixels.end());
    seed_pixels.erase(std::unique(seed_pixels.begin(), seed_pixels.end()), seed_pixels.end());
    if (seed_pixels.size() < 2)
        throw DataError("watershed split needs at least two distinct seed pixels");
    for (std::size_t a = 0; a < seed_pixels.size(); ++a) {
        for (std::size_t b = a + 1; b < seed_pixels.size(); ++b) {
            const int pa = seed_pixels[a];
            const int pb = seed_pixels[b];
            const int dx = std::abs(pa % width - pb % width);
            const int dy = std::abs(pa / width - pb / width);
            if (dx + dy == 1)
                throw DataError("watershed seeds in adjacent pixels cannot be separated");
        }
    }

    using Entry = std::tuple<T, int, int>; // (-prob, distance, raster index); smallest first
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
    std::vector<std::uint8_t> queued(n, 0);
    auto push_neighbours = [&](int idx, int dist) {
        const int x = idx % width;
        const int y = idx / width;
        const int nbr[4][2] = {{x, y - 1}, {x - 1, y}, {x + 1, y}, {x, y + 1}};
        for (const auto& q : nbr) {
            if (q[0] < 0 || q[1] < 0 || q[0] >= width || q[1] >= height)
                continue;
            const int j = q[1] * width + q[0];
            if (state[static_cast<std::size_t>(j)] != kUnlabelled || queued[static_cast<std::size_t>(j)])
                continue;
            queued[static_cast<std::size_t>(j)] = 1;
            queue.emplace(-prob[static_cast<std::size_t>(j)], dist + 1, j);
        }
    };

    for (std::size_t s = 0; s < seed_pixels.size(); ++s)
        state[static_cast<std::size_t>(seed_pixels[s])] = static_cast<int>(s) + 1;
    for (int idx : seed_pixels)
        queued[static_cast<std::size_t>(idx)] = 1;
    for (int idx : seed_pixels)
        push_neighbours(idx, 0);

    std::vector<int> line;
    while (!queue.empty()) {
        const auto [neg_p, dist, idx] = queue.top();
        queue.pop();
        const int x = idx % width;
        const int y = idx / width;
        int label = kUnlabelled;
        bool conflict = false;
        const int nbr[4][2] = {{x, y - 1}, {x - 1, y}, {x + 1, y}, {x, y + 1}};
        for (const auto& q : nbr) {
            if (q[0] < 0 || q[1] < 0 || q[0] >= width || q[1] >= height)
                continue;
            const int l = state[static_cast<std::size_t>(q[1] * width + q[0])];
            if (l <= 0)
                continue;
            if (label == kUnlabelled)
                label = l;
            else if (l != label)
                conflict = true;
        }
        if (conflict) {
            state[static_cast<std::size_t>(idx)] = kLine;
            line.push_back(idx);
            continue;
        }
        state[static_cast<std::size_t>(idx)] = label;
        push_neighbours(idx, dist);
    }
    // Pockets walled in by line pixels are never reached; they join the line so
    // every remaining component holds exactly one seed.
    for (int i : blob)
        if (state[static_cast<std::size_t>(i)] == kUnlabelled)
            line.push_back(i);
    std::sort(line.begin(), line.end());
    return line;
}

struct BlobCount {
    int count = 0;
    std::vector<Point> centroids; // mean of pixel centres, per blob id order
};

/// Blobs of (prob >= threshold) and their centroids.
template <typename T>
BlobCount blob_count(std::span<const T> prob, int width, int height, double threshold = 0.5)
{
    Mask mask(prob.size());
    for (std::size_t i = 0; i < prob.size(); ++i)
        mask[i] = prob[i] >= threshold ? 1 : 0;
    const BlobMap blobs = connected_components(mask, width, height);
    BlobCount out;
    out.count = blobs.count;
    std::vector<double> sx(static_cast<std::size_t>(blobs.count) + 1, 0.0);
    std::vector<double> sy(sx.size(), 0.0);
    std::vector<long long> area(sx.size(), 0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const auto l = static_cast<std::size_t>(blobs.at(x, y));
            if (l == 0)
                continue;
            sx[l] += x + 0.5;
            sy[l] += y + 0.5;
            ++area[l];
        }
    }
    for (std::size_t l = 1; l < sx.size(); ++l)
        out.centroids.push_back({sx[l] / static_cast<double>(area[l]), sy[l] / static_cast<double>(area[l])});
    return out;
}

} // namespace cownter
