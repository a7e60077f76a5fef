#pragma once

#include "cownter/error.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cownter {

/// Ground sample distance used when nothing else is known (metres per pixel).
inline constexpr double kDefaultGsd = 0.4;
inline constexpr int kDefaultTileSize = 500;

/// Row-major, channel-interleaved image with values in [0,1].
///
/// Pixel (x, y) is column x, row y, origin at the top-left corner.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> data;
    double gsd = kDefaultGsd;

    Raster() = default;
    Raster(int w, int h, int c, float fill = 0.0f)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill)
    {
        if (w < 0 || h < 0)
            throw DataError("raster dimensions must be non-negative");
        if (c != 1 && c != 3)
            throw DataError("raster must have 1 or 3 channels, got " + std::to_string(c));
    }

    std::size_t index(int x, int y, int c = 0) const
    {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    float& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    float at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool empty() const { return data.empty(); }

    friend bool operator==(const Raster&, const Raster&) = default;
};

/// A single point annotation in fractional pixel coordinates.
struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

/// Pixel containing a point: (floor(x), floor(y)).
inline int pixel_col(const Point& p) { return static_cast<int>(std::floor(p.x)); }
inline int pixel_row(const Point& p) { return static_cast<int>(std::floor(p.y)); }

inline bool in_bounds(const Point& p, int width, int height)
{
    return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0.0 && p.y >= 0.0 && p.x < width &&
           p.y < height;
}

enum class TileLabel { cow, no_cow };

inline const char* to_string(TileLabel label) { return label == TileLabel::cow ? "cow" : "no cow"; }

inline TileLabel label_for(std::span<const Point> points)
{
    return points.empty() ? TileLabel::no_cow : TileLabel::cow;
}

enum class Split { train, val, test, none };

inline const char* to_string(Split s)
{
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: break;
    }
    return "none";
}

struct TileRecord {
    std::string id;
    Raster image;
    std::vector<Point> points;
    TileLabel label = TileLabel::no_cow;
};

enum class ViolationKind { point_out_of_bounds, label_mismatch, wrong_size, bad_pixels };

struct Violation {
    ViolationKind kind;
    std::string message;
};

/// Every invariant broken by `tile`. Never throws; an empty result means the tile is valid.
inline std::vector<Violation> validate_tile(const TileRecord& tile, int tile_width = kDefaultTileSize,
                                            int tile_height = kDefaultTileSize)
{
    std::vector<Violation> out;
    const Raster& img = tile.image;
    if (img.width != tile_width || img.height != tile_height) {
        out.push_back({ViolationKind::wrong_size,
                       "tile " + tile.id + " is " + std::to_string(img.width) + "x" +
                           std::to_string(img.height) + ", expected " + std::to_string(tile_width) +
                           "x" + std::to_string(tile_height)});
    }
    if (img.data.size() != img.pixel_count() * static_cast<std::size_t>(img.channels)) {
        out.push_back({ViolationKind::bad_pixels, "tile " + tile.id + " pixel buffer has wrong length"});
    } else {
        for (float v : img.data) {
            if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
                out.push_back(
                    {ViolationKind::bad_pixels, "tile " + tile.id + " has pixel values outside [0,1]"});
                break;
            }
        }
    }
    for (std::size_t i = 0; i < tile.points.size(); ++i) {
        const Point& p = tile.points[i];
        if (!in_bounds(p, img.width, img.height)) {
            out.push_back({ViolationKind::point_out_of_bounds,
                           "point out of bounds: #" + std::to_string(i) + " (" + std::to_string(p.x) +
                               ", " + std::to_string(p.y) + ")"});
        }
    }
    if (label_for(tile.points) != tile.label) {
        out.push_back({ViolationKind::label_mismatch,
                       "label/points mismatch: " + std::to_string(tile.points.size()) +
                           " points with label '" + to_string(tile.label) + "'"});
    }
    return out;
}

/// Scale an integer image onto [0,1] by 1/(2^bits - 1).
///
/// `raw` holds width*height*channels samples, channel-interleaved.
inline Raster normalize_ingest(std::span<const std::uint16_t> raw, int width, int height, int channels,
                               int bit_depth, double gsd = kDefaultGsd)
{
    if (bit_depth != 8 && bit_depth != 16)
        throw DataError("unsupported bit depth " + std::to_string(bit_depth) + " (expected 8 or 16)");
    if (channels != 1 && channels != 3) {
        throw DataError("unsupported band count " + std::to_string(channels) +
                        "; only grayscale or RGB rasters are accepted");
    }
    const std::size_t expected = static_cast<std::size_t>(width) * height * channels;
    if (raw.size() != expected)
        throw DataError("raw buffer has " + std::to_string(raw.size()) + " samples, expected " +
                        std::to_string(expected));
    const std::uint32_t max_value = (1u << bit_depth) - 1u;
    Raster r(width, height, channels);
    r.gsd = gsd;
    for (std::size_t i = 0; i < expected; ++i) {
        if (raw[i] > max_value)
            throw DataError("sample value exceeds bit depth");
        r.data[i] = static_cast<float>(static_cast<double>(raw[i]) / max_value);
    }
    return r;
}

/// Mirror-reflect an index into [0, n) without repeating the edge sample (n >= 1).
inline int reflect_index(int i, int n)
{
    if (n == 1)
        return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0)
        i += period;
    return i < n ? i : period - i;
}

/// Copy of the window [x0, x0+w) x [y0, y0+h); samples outside `src` are mirror-reflected.
inline Raster crop_reflect(const Raster& src, int x0, int y0, int w, int h)
{
    Raster out(w, h, src.channels);
    out.gsd = src.gsd;
    for (int y = 0; y < h; ++y) {
        const int sy = reflect_index(y0 + y, src.height);
        for (int x = 0; x < w; ++x) {
            const int sx = reflect_index(x0 + x, src.width);
            for (int c = 0; c < src.channels; ++c)
                out.at(x, y, c) = src.at(sx, sy, c);
        }
    }
    return out;
}

} // namespace cownter
