#pragma once

// HTTP annotation service over a dataset directory.
//
// Readers grab the current immutable manifest snapshot; writers go through one
// mutex, save the new manifest atomically, then publish it as the next snapshot.

#include "cownter/error.hpp"
#include "cownter/io.hpp"
#include "cownter/manifest.hpp"

#include <httplib.h>
#ifdef _res
#undef _res // from <resolv.h>; collides with Eigen parameter names
#endif
#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace cownter {

class AnnotationStore {
public:
    explicit AnnotationStore(std::filesystem::path dir)
        : dir_(std::move(dir)), snap_(std::make_shared<const DatasetManifest>(load_manifest(dir_)))
    {
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::shared_ptr<const DatasetManifest> snapshot() const { return std::atomic_load(&snap_); }

    enum class Status { ok, not_found, invalid, conflict };

    struct Result {
        Status status = Status::ok;
        std::string message;
        std::optional<ManifestTile> tile; // the stored tile on success
    };

    /// Replace a tile's annotations if `expected_revision` matches the stored one.
    Result put(const std::string& id, std::vector<Point> points, TileLabel label, long long expected_revision)
    {
        std::lock_guard lock(write_mutex_);
        auto current = snapshot();
        auto next = std::make_shared<DatasetManifest>(*current);
        ManifestTile* tile = nullptr;
        for (auto& t : next->tiles)
            if (t.id == id)
                tile = &t;
        if (tile == nullptr)
            return {Status::not_found, "unknown tile " + id, std::nullopt};
        if (label_for(points) != label)
            return {Status::invalid, "label/points mismatch", std::nullopt};
        for (const Point& p : points)
            if (!in_bounds(p, tile->width, tile->height))
                return {Status::invalid, "point out of bounds", std::nullopt};
        if (expected_revision != tile->revision)
            return {Status::conflict,
                    "revision mismatch: stored " + std::to_string(tile->revision) + ", got " +
                        std::to_string(expected_revision),
                    std::nullopt};
        tile->points = std::move(points);
        tile->label = label;
        tile->labeled = true;
        tile->revision += 1;
        ManifestTile stored = *tile;
        save_manifest(dir_, *next);
        std::atomic_store(&snap_, std::shared_ptr<const DatasetManifest>(std::move(next)));
        return {Status::ok, {}, std::move(stored)};
    }

private:
    std::filesystem::path dir_;
    std::shared_ptr<const DatasetManifest> snap_;
    std::mutex write_mutex_;
};

inline ojson annotation_body(const ManifestTile& t)
{
    return ojson{{"points", points_to_json(t.points)}, {"label", to_string(t.label)}, {"revision", t.revision}};
}

namespace detail {

inline void json_reply(httplib::Response& res, int status, const ojson& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void error_reply(httplib::Response& res, int status, const std::string& message)
{
    json_reply(res, status, ojson{{"error", message}});
}

inline constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>cownter annotate</title></head>"
    "<body><h1>cownter annotation service</h1>"
    "<p>No frontend bundle configured. Start with <code>--ui DIR</code> to serve one. "
    "The JSON API lives under <code>/api/tiles</code>.</p></body></html>";

} // namespace detail

/// Register the API routes (and the frontend at /) on `server`.
inline void install_routes(httplib::Server& server, AnnotationStore& store,
                           const std::optional<std::filesystem::path>& ui_dir = std::nullopt)
{
    server.Get("/api/tiles", [&store](const httplib::Request&, httplib::Response& res) {
        const auto snap = store.snapshot();
        ojson arr = ojson::array();
        for (const auto& t : snap->tiles)
            arr.push_back(ojson{{"id", t.id}, {"labeled", t.labeled}, {"count", t.points.size()}});
        detail::json_reply(res, 200, arr);
    });

    server.Get(R"(/api/tiles/([^/]+)/image)", [&store](const httplib::Request& req, httplib::Response& res) {
        const auto snap = store.snapshot();
        const ManifestTile* t = snap->find(req.matches[1]);
        if (t == nullptr)
            return detail::error_reply(res, 404, "unknown tile " + std::string(req.matches[1]));
        try {
            const auto bytes = read_file_bytes(store.dir() / t->image);
            res.status = 200;
            res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
        } catch (const DataError& e) {
            detail::error_reply(res, 500, e.what());
        }
    });

    server.Get(R"(/api/tiles/([^/]+)/annotations)", [&store](const httplib::Request& req, httplib::Response& res) {
        const auto snap = store.snapshot();
        const ManifestTile* t = snap->find(req.matches[1]);
        if (t == nullptr)
            return detail::error_reply(res, 404, "unknown tile " + std::string(req.matches[1]));
        detail::json_reply(res, 200, annotation_body(*t));
    });

    server.Put(R"(/api/tiles/([^/]+)/annotations)", [&store](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        if (store.snapshot()->find(id) == nullptr)
            return detail::error_reply(res, 404, "unknown tile " + id);
        std::vector<Point> points;
        TileLabel label{};
        long long revision = 0;
        try {
            const ojson body = ojson::parse(req.body);
            if (!body.is_object() || !body.contains("points") || !body.contains("label") ||
                !body.contains("revision"))
                return detail::error_reply(res, 400, "body needs points, label and revision");
            if (!body["label"].is_string() || !body["revision"].is_number_integer())
                return detail::error_reply(res, 400, "label must be a string and revision an integer");
            points = points_from_json(body["points"]);
            label = parse_label(body["label"].get<std::string>());
            revision = body["revision"].get<long long>();
        } catch (const nlohmann::json::exception& e) {
            return detail::error_reply(res, 400, std::string("malformed JSON: ") + e.what());
        } catch (const DataError& e) {
            return detail::error_reply(res, 400, e.what());
        }
        try {
            auto result = store.put(id, std::move(points), label, revision);
            switch (result.status) {
            case AnnotationStore::Status::ok: return detail::json_reply(res, 200, annotation_body(*result.tile));
            case AnnotationStore::Status::not_found: return detail::error_reply(res, 404, result.message);
            case AnnotationStore::Status::invalid: return detail::error_reply(res, 400, result.message);
            case AnnotationStore::Status::conflict: return detail::error_reply(res, 409, result.message);
            }
        } catch (const std::exception& e) {
            detail::error_reply(res, 500, e.what());
        }
    });

    if (ui_dir) {
        if (!server.set_mount_point("/", ui_dir->string()))
            throw DataError("ui directory " + ui_dir->string() + " does not exist");
    } else {
        server.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(detail::kPlaceholderPage, "text/html");
        });
    }
}

} // namespace cownter
