#pragma once

#include "cownter/error.hpp"
#include "cownter/raster.hpp"

#include <span>
#include <string>
#include <vector>

namespace cownter {

enum class PadPolicy { drop_partial, reflect_pad };

struct TileGrid {
    int tile_size = kDefaultTileSize;
    int stride = kDefaultTileSize;
    PadPolicy pad = PadPolicy::drop_partial;

    void validate() const
    {
        if (tile_size < 32)
            throw DataError("tile size must be at least 32, got " + std::to_string(tile_size));
        if (stride < 1)
            throw DataError("stride must be at least 1");
    }
};

struct Tile {
    Raster image;
    int origin_x = 0;
    int origin_y = 0;
    int valid_width = 0;  // columns backed by real scene pixels
    int valid_height = 0; // rows backed by real scene pixels
};

namespace detail {

inline std::vector<int> tile_origins(int extent, const TileGrid& grid)
{
    std::vector<int> origins;
    if (grid.pad == PadPolicy::drop_partial) {
        for (int o = 0; o + grid.tile_size <= extent; o += grid.stride)
            origins.push_back(o);
    } else {
        for (int o = 0; o < extent; o += grid.stride) {
            origins.push_back(o);
            if (o + grid.tile_size >= extent)
                break;
        }
    }
    return origins;
}

} // namespace detail

/// Cut `scene` into tiles ordered by (origin row, origin column).
///
/// With drop_partial only fully covered tiles are produced; with reflect_pad the
/// scene border is mirror-padded so every scene pixel lands in at least one tile.
inline std::vector<Tile> slice(const Raster& scene, const TileGrid& grid)
{
    grid.validate();
    if (scene.width < 1 || scene.height < 1)
        throw DataError("scene must be at least 1x1");
    const auto xs = detail::tile_origins(scene.width, grid);
    const auto ys = detail::tile_origins(scene.height, grid);
    std::vector<Tile> tiles;
    tiles.reserve(xs.size() * ys.size());
    for (int oy : ys) {
        for (int ox : xs) {
            Tile t;
            t.origin_x = ox;
            t.origin_y = oy;
            t.valid_width = std::min(grid.tile_size, scene.width - ox);
            t.valid_height = std::min(grid.tile_size, scene.height - oy);
            t.image = crop_reflect(scene, ox, oy, grid.tile_size, grid.tile_size);
            tiles.push_back(std::move(t));
        }
    }
    return tiles;
}

/// Scene points split across tiles, in tile-local coordinates.
struct PointAssignment {
    std::vector<std::vector<Point>> per_tile;
    std::vector<Point> orphans; // scene coordinates
};

/// Give each point to the first tile (in output order) whose half-open range
/// [origin, origin + valid extent) contains it. Points no tile covers are orphans.
inline PointAssignment assign_points(std::span<const Point> points, std::span<const Tile> tiles)
{
    PointAssignment out;
    out.per_tile.resize(tiles.size());
    for (const Point& p : points) {
        bool placed = false;
        for (std::size_t i = 0; i < tiles.size() && !placed; ++i) {
            const Tile& t = tiles[i];
            if (p.x >= t.origin_x && p.x < t.origin_x + t.valid_width && p.y >= t.origin_y &&
                p.y < t.origin_y + t.valid_height) {
                out.per_tile[i].push_back({p.x - t.origin_x, p.y - t.origin_y});
                placed = true;
            }
        }
        if (!placed)
            out.orphans.push_back(p);
    }
    return out;
}

/// Paste the real (unpadded) part of each tile back into a scene-sized raster.
inline Raster reassemble(std::span<const Tile> tiles, int width, int height, int channels)
{
    Raster scene(width, height, channels);
    for (const Tile& t : tiles) {
        for (int y = 0; y < t.valid_height; ++y)
            for (int x = 0; x < t.valid_width; ++x)
                for (int c = 0; c < channels; ++c)
                    scene.at(t.origin_x + x, t.origin_y + y, c) = t.image.at(x, y, c);
    }
    return scene;
}

} // namespace cownter
