#pragma once

#include "cownter/error.hpp"
#include "cownter/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cownter {

inline constexpr double kDefaultDensitySigma = 2.0;
inline constexpr double kKernelRadiusSigmas = 4.0;

/// Per-pixel object density; its integral over a region is the expected count there.
struct DensityMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    double sigma = kDefaultDensitySigma;

    DensityMap() = default;
    DensityMap(int w, int h, double s = kDefaultDensitySigma)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0), sigma(s)
    {
    }

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Gaussian density target for a point set.
///
/// Each point's kernel is sampled at pixel centres within 4 sigma, clipped to the
/// image, and renormalised to unit mass, so the map integrates to |points| even
/// for points on the border. Accumulation follows the point-list order.
inline DensityMap render_density(std::span<const Point> points, int width, int height,
                                 double sigma = kDefaultDensitySigma)
{
    if (!(sigma > 0.0))
        throw DataError("density sigma must be positive");
    DensityMap map(width, height, sigma);
    const double radius = kKernelRadiusSigmas * sigma;
    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    std::vector<double> kernel;
    for (const Point& p : points) {
        if (!in_bounds(p, width, height))
            throw DataError("density point out of bounds");
        const int x0 = std::max(0, static_cast<int>(std::floor(p.x - radius - 0.5)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(p.x + radius - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(p.y - radius - 0.5)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(p.y + radius - 0.5)));
        const int kw = x1 - x0 + 1;
        kernel.assign(static_cast<std::size_t>(kw) * (y1 - y0 + 1), 0.0);
        double mass = 0.0;
        for (int y = y0; y <= y1; ++y) {
            const double dy = y + 0.5 - p.y;
            for (int x = x0; x <= x1; ++x) {
                const double dx = x + 0.5 - p.x;
                if (std::abs(dx) > radius || std::abs(dy) > radius)
                    continue;
                const double w = std::exp(-(dx * dx + dy * dy) * inv_two_var);
                kernel[static_cast<std::size_t>(y - y0) * kw + (x - x0)] = w;
                mass += w;
            }
        }
        // The containing pixel centre is within 0.71 px of the point, so mass > 0.
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                map.at(x, y) += kernel[static_cast<std::size_t>(y - y0) * kw + (x - x0)] / mass;
    }
    return map;
}

inline double count_from_density(const DensityMap& m)
{
    double total = 0.0;
    for (double v : m.values)
        total += v;
    return total;
}

/// Row-major grid_n x grid_n matrix of cell sums.
using CellMatrix = std::vector<double>;

/// Half-open block [start, end) of cell `i` when `extent` pixels are cut into `n`
/// blocks; the last block takes the remainder.
inline std::pair<int, int> cell_block(int i, int n, int extent)
{
    const int step = extent / n;
    const int start = i * step;
    return {start, i == n - 1 ? extent : start + step};
}

/// Cell index of a pixel coordinate under cell_block.
inline int cell_of(int pixel, int n, int extent)
{
    const int step = extent / n;
    return std::min(pixel / step, n - 1);
}

/// Integrate a density map over a grid_n x grid_n partition.
inline CellMatrix cell_counts(const DensityMap& m, int grid_n)
{
    if (grid_n < 1 || grid_n > std::min(m.width, m.height))
        throw DataError("grid size " + std::to_string(grid_n) + " invalid for a " + std::to_string(m.width) + "x" +
                        std::to_string(m.height) + " map");
    CellMatrix cells(static_cast<std::size_t>(grid_n) * grid_n, 0.0);
    for (int y = 0; y < m.height; ++y) {
        const int cy = cell_of(y, grid_n, m.height);
        for (int x = 0; x < m.width; ++x)
            cells[static_cast<std::size_t>(cy) * grid_n + cell_of(x, grid_n, m.width)] += m.at(x, y);
    }
    return cells;
}

// Debug dump: "DMAP", u16 width, u16 height (little-endian), then float32 LE values.

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v)
{
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t& offset)
{
    if (offset + sizeof(T) > in.size())
        throw FormatError("truncated file");
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, in.data() + offset, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    offset += sizeof(T);
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

} // namespace detail

inline std::vector<std::uint8_t> encode_density(const DensityMap& m)
{
    if (m.width > 0xFFFF || m.height > 0xFFFF)
        throw DataError("density map too large for the DMAP header");
    std::vector<std::uint8_t> out{'D', 'M', 'A', 'P'};
    detail::put_le(out, static_cast<std::uint16_t>(m.width));
    detail::put_le(out, static_cast<std::uint16_t>(m.height));
    for (double v : m.values)
        detail::put_le(out, static_cast<float>(v));
    return out;
}

inline DensityMap decode_density(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "DMAP", 4) != 0)
        throw FormatError("not a DMAP density dump");
    std::size_t offset = 4;
    const int w = detail::get_le<std::uint16_t>(bytes, offset);
    const int h = detail::get_le<std::uint16_t>(bytes, offset);
    DensityMap m(w, h);
    for (double& v : m.values)
        v = detail::get_le<float>(bytes, offset);
    if (offset != bytes.size())
        throw FormatError("trailing bytes after DMAP payload");
    return m;
}

} // namespace cownter
