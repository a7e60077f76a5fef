#pragma once

// Dataset manifest: one JSON document listing every tile, its image path
// (relative to the dataset directory), point annotations, label and split.

#include "cownter/error.hpp"
#include "cownter/io.hpp"
#include "cownter/png_io.hpp"
#include "cownter/raster.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace cownter {

using ojson = nlohmann::ordered_json;

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";

struct ManifestTile {
    std::string id;
    std::string image; // relative to the dataset directory
    int width = 0;
    int height = 0;
    std::vector<Point> points;
    TileLabel label = TileLabel::no_cow;
    Split split = Split::none;
    bool labeled = true;    // false until a human (or generator) has annotated it
    long long revision = 0; // bumped on every accepted annotation write
};

struct DatasetManifest {
    int version = kManifestVersion;
    std::vector<ManifestTile> tiles;

    const ManifestTile* find(const std::string& id) const
    {
        for (const auto& t : tiles)
            if (t.id == id)
                return &t;
        return nullptr;
    }
};

inline TileLabel parse_label(const std::string& s)
{
    if (s == "cow")
        return TileLabel::cow;
    if (s == "no cow")
        return TileLabel::no_cow;
    throw DataError("unknown label '" + s + "' (expected \"cow\" or \"no cow\")");
}

inline Split parse_split(const std::string& s)
{
    if (s == "train")
        return Split::train;
    if (s == "val")
        return Split::val;
    if (s == "test")
        return Split::test;
    throw DataError("unknown split '" + s + "'");
}

inline ojson points_to_json(const std::vector<Point>& points)
{
    ojson arr = ojson::array();
    for (const Point& p : points)
        arr.push_back(ojson{{"x", p.x}, {"y", p.y}});
    return arr;
}

inline std::vector<Point> points_from_json(const ojson& arr)
{
    if (!arr.is_array())
        throw DataError("points must be an array");
    std::vector<Point> out;
    for (const auto& p : arr) {
        if (!p.is_object() || !p.contains("x") || !p.contains("y") || !p["x"].is_number() || !p["y"].is_number())
            throw DataError("each point needs numeric x and y");
        out.push_back({p["x"].get<double>(), p["y"].get<double>()});
    }
    return out;
}

inline ojson to_json(const DatasetManifest& m)
{
    ojson tiles = ojson::array();
    for (const auto& t : m.tiles) {
        tiles.push_back(ojson{{"id", t.id},
                              {"image", t.image},
                              {"width", t.width},
                              {"height", t.height},
                              {"points", points_to_json(t.points)},
                              {"label", to_string(t.label)},
                              {"split", t.split == Split::none ? ojson(nullptr) : ojson(to_string(t.split))},
                              {"labeled", t.labeled},
                              {"revision", t.revision}});
    }
    return ojson{{"version", m.version}, {"tiles", std::move(tiles)}};
}

/// Structural violations of a manifest (unique ids, label/points agreement, bounds).
inline std::vector<std::string> manifest_violations(const DatasetManifest& m)
{
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& t : m.tiles) {
        if (t.id.empty())
            out.push_back("tile with empty id");
        if (!seen.insert(t.id).second)
            out.push_back("duplicate tile id " + t.id);
        if (label_for(t.points) != t.label)
            out.push_back("tile " + t.id + ": label/points mismatch");
        for (const Point& p : t.points)
            if (!in_bounds(p, t.width, t.height))
                out.push_back("tile " + t.id + ": point out of bounds");
    }
    return out;
}

inline DatasetManifest manifest_from_json(const ojson& j)
{
    try {
        DatasetManifest m;
        m.version = j.at("version").get<int>();
        if (m.version != kManifestVersion)
            throw DataError("unsupported manifest version " + std::to_string(m.version));
        for (const auto& t : j.at("tiles")) {
            ManifestTile tile;
            tile.id = t.at("id").get<std::string>();
            tile.image = t.at("image").get<std::string>();
            tile.width = t.at("width").get<int>();
            tile.height = t.at("height").get<int>();
            tile.points = points_from_json(t.at("points"));
            tile.label = parse_label(t.at("label").get<std::string>());
            if (t.contains("split") && !t["split"].is_null())
                tile.split = parse_split(t["split"].get<std::string>());
            tile.labeled = t.value("labeled", true);
            tile.revision = t.value("revision", 0LL);
            m.tiles.push_back(std::move(tile));
        }
        const auto violations = manifest_violations(m);
        if (!violations.empty())
            throw DataError("invalid manifest: " + violations.front());
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
}

/// Load DIR/manifest.json and check that every image exists.
inline DatasetManifest load_manifest(const std::filesystem::path& dir)
{
    const auto path = dir / kManifestFile;
    const auto bytes = read_file_bytes(path);
    ojson j;
    try {
        j = ojson::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse " + path.string() + ": " + e.what());
    }
    DatasetManifest m = manifest_from_json(j);
    for (const auto& t : m.tiles)
        if (!std::filesystem::exists(dir / t.image))
            throw DataError("tile " + t.id + ": image " + t.image + " does not exist");
    return m;
}

inline void save_manifest(const std::filesystem::path& dir, const DatasetManifest& m)
{
    write_file_atomic(dir / kManifestFile, to_json(m).dump(2) + "\n");
}

inline TileRecord load_tile(const std::filesystem::path& dir, const ManifestTile& t)
{
    TileRecord r;
    r.id = t.id;
    r.image = read_png(dir / t.image);
    if (r.image.width != t.width || r.image.height != t.height)
        throw DataError("tile " + t.id + ": image size differs from manifest");
    r.points = t.points;
    r.label = t.label;
    return r;
}

inline std::vector<TileRecord> load_split(const std::filesystem::path& dir, const DatasetManifest& m, Split split)
{
    std::vector<TileRecord> out;
    for (const auto& t : m.tiles)
        if (t.split == split)
            out.push_back(load_tile(dir, t));
    return out;
}

} // namespace cownter
