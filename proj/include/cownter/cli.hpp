#pragma once

// The `cownter` command line: synth | tile | train | eval | predict | annotate.
// run_cli() is the whole program minus main(), so tests can drive it in-process.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure. Errors go to the
// error stream as one JSON object per line.

#include "cownter/annotation_service.hpp"
#include "cownter/error.hpp"
#include "cownter/io.hpp"
#include "cownter/manifest.hpp"
#include "cownter/metrics.hpp"
#include "cownter/png_io.hpp"
#include "cownter/synthgen.hpp"
#include "cownter/tiler.hpp"
#include "cownter/tinyfcn.hpp"
#include "cownter/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace cownter {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// ---------------------------------------------------------------- report JSON

inline ojson stat_json(const Stat& s)
{
    return ojson{{"mean", s.mean ? ojson(*s.mean) : ojson(nullptr)}, {"std", s.std}};
}

inline ojson report_json(const EvalReport& r)
{
    ojson bins = ojson::array();
    for (const BinReport& b : r.bins)
        bins.push_back(ojson{{"bin", bin_name(b.bin)}, {"n", b.n}, {"mape", stat_json(b.mape)},
                             {"gampe", stat_json(b.gampe)}});
    ojson per_seed = ojson::array();
    for (std::size_t s = 0; s < r.presence_per_seed.size(); ++s) {
        const PresenceScore& p = r.presence_per_seed[s];
        per_seed.push_back(ojson{{"precision", p.precision},
                                 {"recall", p.recall},
                                 {"f", p.f},
                                 {"absence_f", r.absence_per_seed[s].f},
                                 {"tp", p.tp},
                                 {"fp", p.fp},
                                 {"fn", p.fn},
                                 {"tn", p.tn}});
    }
    const ojson edges = ojson::array({ojson::array({0, 0}), ojson::array({1, 10}), ojson::array({11, 100}),
                                      ojson::array({ojson(101), ojson(nullptr)})});
    return ojson{{"grid", r.grid_n},
                 {"bin_edges", edges},
                 {"seeds", r.seeds},
                 {"images", r.images},
                 {"decision_threshold", r.decision_threshold},
                 {"bins", std::move(bins)},
                 {"presence",
                  ojson{{"precision", stat_json(r.precision)},
                        {"recall", stat_json(r.recall)},
                        {"f", stat_json(r.fscore)},
                        {"undefined", r.fscore_undefined}}},
                 {"absence", ojson{{"f", stat_json(r.absence_fscore)}}},
                 {"per_seed", std::move(per_seed)}};
}

/// One row per (seed run, image): ground truth, prediction and bin.
inline std::string per_image_csv(std::span<const std::vector<ImageEval>> runs, std::span<const std::string> ids)
{
    std::string out = "seed,image,y,y_hat,bin\n";
    char buf[64];
    for (std::size_t s = 0; s < runs.size(); ++s) {
        for (std::size_t i = 0; i < runs[s].size(); ++i) {
            const CountPair& c = runs[s][i].counts;
            std::snprintf(buf, sizeof buf, "%.17g", c.y_hat);
            out += std::to_string(s) + "," + ids[i] + "," + std::to_string(std::llround(c.y)) + "," + buf + "," +
                   bin_name(bin_of(std::llround(c.y))) + "\n";
        }
    }
    return out;
}

inline ojson epoch_json(const EpochRecord& r)
{
    return ojson{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_metric", r.val_metric}, {"best", r.best}};
}

// ---------------------------------------------------------------- prediction

struct Prediction {
    double count = 0.0;
    std::vector<Point> points;
};

inline ModelKind model_kind(const ModelParams<float>& params)
{
    return params.arch.head == Head::detection ? ModelKind::lcfcn : ModelKind::density;
}

/// Strict local maxima of a map (8-neighbourhood; equal values resolve to the
/// earlier pixel in raster order), strongest first.
inline std::vector<int> local_maxima(std::span<const float> map, int width, int height)
{
    std::vector<int> peaks;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int i = y * width + x;
            const float v = map[static_cast<std::size_t>(i)];
            if (!(v > 0.0f))
                continue;
            bool peak = true;
            for (int dy = -1; dy <= 1 && peak; ++dy) {
                for (int dx = -1; dx <= 1 && peak; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= width || ny >= height)
                        continue;
                    const int j = ny * width + nx;
                    const float u = map[static_cast<std::size_t>(j)];
                    if (u > v || (u == v && j < i))
                        peak = false;
                }
            }
            if (peak)
                peaks.push_back(i);
        }
    }
    std::stable_sort(peaks.begin(), peaks.end(), [&](int a, int b) {
        return map[static_cast<std::size_t>(a)] > map[static_cast<std::size_t>(b)];
    });
    return peaks;
}

/// Predicted points: blob centroids (lcfcn) or the round(count) strongest
/// density peaks at pixel centres (density).
inline Prediction predict_points(const ModelParams<float>& params, const Raster& image)
{
    const auto map = predict_map<float>(params, image);
    Prediction p;
    if (model_kind(params) == ModelKind::lcfcn) {
        BlobCount blobs = blob_count<float>(map, image.width, image.height, kBlobThreshold);
        p.count = blobs.count;
        p.points = std::move(blobs.centroids);
        return p;
    }
    for (float v : map)
        p.count += v;
    const auto peaks = local_maxima(map, image.width, image.height);
    const auto k = std::min(peaks.size(), static_cast<std::size_t>(std::max(0.0, std::round(p.count))));
    for (std::size_t i = 0; i < k; ++i)
        p.points.push_back({peaks[i] % image.width + 0.5, peaks[i] / image.width + 0.5});
    return p;
}

/// RGB copy of `image` with a red cross at every point.
inline Raster overlay(const Raster& image, std::span<const Point> points)
{
    Raster out(image.width, image.height, 3);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = image.at(x, y, image.channels == 3 ? c : 0);
    for (const Point& p : points) {
        const int cx = pixel_col(p), cy = pixel_row(p);
        for (int d = -3; d <= 3; ++d) {
            for (auto [x, y] : {std::pair{cx + d, cy}, std::pair{cx, cy + d}}) {
                if (x < 0 || y < 0 || x >= out.width || y >= out.height)
                    continue;
                out.at(x, y, 0) = 1.0f;
                out.at(x, y, 1) = 0.0f;
                out.at(x, y, 2) = 0.0f;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- commands

inline std::vector<double> parse_number_list(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size())
            throw CLI::ValidationError("list", "'" + s + "' is not a comma-separated list of numbers");
        out.push_back(v);
    }
    return out;
}

struct SynthOptions {
    std::string out;
    std::size_t tiles = 100;
    std::uint64_t seed = 0;
    int tile_size = kDefaultTileSize;
    double positive_fraction = kPositiveFraction;
    std::string weights; // overrides positive_fraction when set
    double distractors = 3.0;
    std::string split = "0.6,0.2,0.2";
};

inline int cmd_synth(const SynthOptions& o, std::ostream& out)
{
    SceneConfig cfg;
    cfg.tile_size = o.tile_size;
    cfg.seed = o.seed;
    cfg.distractor_density = o.distractors;
    if (!o.weights.empty()) {
        const auto w = parse_number_list(o.weights);
        if (w.size() != kCountBins)
            throw DataError("--weights needs four values (bins 0, 1-10, 11-100, 101+)");
        std::copy(w.begin(), w.end(), cfg.count_weights.begin());
    } else {
        if (!(o.positive_fraction >= 0.0 && o.positive_fraction <= 1.0))
            throw DataError("--imbalance must lie in [0, 1]");
        const auto base = default_count_weights();
        const double p = o.positive_fraction;
        cfg.count_weights = {1.0 - p, base[1] / kPositiveFraction * p, base[2] / kPositiveFraction * p,
                             base[3] / kPositiveFraction * p};
    }
    const auto f = parse_number_list(o.split);
    if (f.size() != 3)
        throw DataError("--split needs three fractions (train, val, test)");
    const SyntheticDataset ds = generate_dataset(cfg, o.tiles, SplitFractions{f[0], f[1], f[2]});

    const fs::path dir(o.out);
    fs::create_directories(dir / "images");
    DatasetManifest m;
    for (std::size_t i = 0; i < ds.tiles.size(); ++i) {
        const TileRecord& t = ds.tiles[i];
        ManifestTile mt;
        mt.id = t.id;
        mt.image = "images/" + t.id + ".png";
        mt.width = t.image.width;
        mt.height = t.image.height;
        mt.points = t.points;
        mt.label = t.label;
        mt.split = ds.splits[i];
        write_png(dir / mt.image, t.image);
        m.tiles.push_back(std::move(mt));
    }
    save_manifest(dir, m);
    out << ojson{{"tiles", m.tiles.size()}, {"manifest", (dir / kManifestFile).string()}}.dump() << "\n";
    return kExitOk;
}

struct TileOptions {
    std::string scene;
    std::string points;
    std::string out;
    int tile_size = kDefaultTileSize;
    int stride = 0; // 0: same as tile size
    bool pad = false;
};

inline int cmd_tile(const TileOptions& o, std::ostream& out)
{
    const Raster scene = read_png(o.scene);
    TileGrid grid;
    grid.tile_size = o.tile_size;
    grid.stride = o.stride > 0 ? o.stride : o.tile_size;
    grid.pad = o.pad ? PadPolicy::reflect_pad : PadPolicy::drop_partial;
    const auto tiles = slice(scene, grid);

    std::vector<Point> scene_points;
    const bool labeled = !o.points.empty();
    if (labeled) {
        const auto bytes = read_file_bytes(o.points);
        try {
            scene_points = points_from_json(ojson::parse(bytes.begin(), bytes.end()));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("cannot parse points file: " + std::string(e.what()));
        }
        for (const Point& p : scene_points)
            if (!in_bounds(p, scene.width, scene.height))
                throw DataError("scene point out of bounds");
    }
    const auto assignment = assign_points(scene_points, tiles);

    const fs::path dir(o.out);
    fs::create_directories(dir / "images");
    const std::string stem = fs::path(o.scene).stem().string();
    DatasetManifest m;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "_y%05d_x%05d", tiles[i].origin_y, tiles[i].origin_x);
        ManifestTile mt;
        mt.id = stem + id;
        mt.image = "images/" + mt.id + ".png";
        mt.width = tiles[i].image.width;
        mt.height = tiles[i].image.height;
        mt.points = assignment.per_tile[i];
        mt.label = label_for(mt.points);
        mt.labeled = labeled;
        write_png(dir / mt.image, tiles[i].image);
        m.tiles.push_back(std::move(mt));
    }
    save_manifest(dir, m);
    if (!assignment.orphans.empty())
        write_file_atomic(dir / "orphans.json", points_to_json(assignment.orphans).dump(2) + "\n");
    out << ojson{{"tiles", m.tiles.size()}, {"orphans", assignment.orphans.size()}}.dump() << "\n";
    return kExitOk;
}

struct TrainOptions {
    std::string data;
    std::string model = "lcfcn";
    std::string out;
    std::string log;
    int epochs = 100;
    int batch_size = 8;
    double lr = 1e-4;
    int patience = 10;
    std::string monitor = "mape";
    double sigma = kDefaultDensitySigma;
    std::uint64_t seed = 0;
};

inline int cmd_train(const TrainOptions& o, std::ostream& out)
{
    const fs::path dir(o.data);
    const DatasetManifest m = load_manifest(dir);
    const auto train_tiles = load_split(dir, m, Split::train);
    const auto val_tiles = load_split(dir, m, Split::val);

    TrainConfig cfg;
    cfg.model = o.model == "lcfcn" ? ModelKind::lcfcn : ModelKind::density;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.learning_rate = o.lr;
    cfg.patience = std::min(o.patience, o.epochs);
    cfg.early_stop_metric = o.monitor == "loss" ? Monitor::val_loss : Monitor::val_mape;
    cfg.density_sigma = o.sigma;
    cfg.seed = o.seed;

    std::ofstream log_file;
    if (!o.log.empty()) {
        log_file.open(o.log, std::ios::binary | std::ios::trunc);
        if (!log_file)
            throw DataError("cannot open log file " + o.log);
    }
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
        const std::string line = epoch_json(r).dump() + "\n";
        out << line << std::flush;
        if (log_file)
            log_file << line << std::flush;
    };
    const TrainResult result = train(train_tiles, val_tiles, cfg, hooks);
    save_params(o.out, result.best);
    return kExitOk;
}

struct EvalOptions {
    std::string data;
    std::vector<std::string> models;
    int seeds = 0; // 0: one run per --model
    bool oracle = false;
    int grid = 4;
    std::string split = "test";
    double threshold = 0.5;
    std::string out;
    std::string csv;
};

/// Model paths for each seed run: --seeds N expands "{seed}" in a single --model
/// path to 0..N-1; otherwise the --model list is used as given and must match N.
inline std::vector<std::string> seed_model_paths(const EvalOptions& o)
{
    if (o.seeds == 0 || o.oracle)
        return o.models;
    constexpr std::string_view tag = "{seed}";
    if (o.models.size() == 1 && o.models.front().find(tag) != std::string::npos) {
        std::vector<std::string> out;
        for (int s = 0; s < o.seeds; ++s) {
            std::string p = o.models.front();
            p.replace(p.find(tag), tag.size(), std::to_string(s));
            out.push_back(std::move(p));
        }
        return out;
    }
    if (static_cast<int>(o.models.size()) != o.seeds)
        throw CLI::ValidationError("eval", "--seeds " + std::to_string(o.seeds) + " needs that many --model files " +
                                               "or one path containing {seed}");
    return o.models;
}

struct EvalRun {
    EvalReport report;
    std::vector<std::vector<ImageEval>> runs;
    std::vector<std::string> ids;
};

inline EvalRun run_eval(const EvalOptions& o)
{
    const fs::path dir(o.data);
    const DatasetManifest m = load_manifest(dir);
    const auto tiles = load_split(dir, m, parse_split(o.split));
    if (tiles.empty())
        throw DataError("split '" + o.split + "' has no tiles");
    EvalRun r;
    for (const auto& t : tiles)
        r.ids.push_back(t.id);
    if (o.oracle) {
        r.runs.push_back(evaluate_oracle(tiles, o.grid));
    } else {
        std::optional<Head> head;
        for (const auto& path : seed_model_paths(o)) {
            const ModelParams<float> params = load_params(path);
            if (head && *head != params.arch.head)
                throw DataError("all --model files must share one head type");
            head = params.arch.head;
            r.runs.push_back(evaluate(params, model_kind(params), tiles, o.grid));
        }
    }
    r.report = binned_report(r.runs, o.grid, o.threshold);
    return r;
}

inline int cmd_eval(const EvalOptions& o, std::ostream& out)
{
    if (o.oracle == !o.models.empty())
        throw CLI::ValidationError("eval", "give either --oracle or at least one --model");
    const EvalRun r = run_eval(o);
    const std::string body = report_json(r.report).dump(2) + "\n";
    if (o.out.empty())
        out << body;
    else
        write_file_atomic(o.out, body);
    if (!o.csv.empty())
        write_file_atomic(o.csv, per_image_csv(r.runs, r.ids));
    return kExitOk;
}

struct PredictOptions {
    std::string image;
    std::string model;
    std::string out;
    std::string overlay;
};

inline int cmd_predict(const PredictOptions& o, std::ostream& out)
{
    const Raster image = read_png(o.image);
    const ModelParams<float> params = load_params(o.model);
    if (params.arch.in_channels != image.channels)
        throw DataError("model expects " + std::to_string(params.arch.in_channels) + " channels, image has " +
                        std::to_string(image.channels));
    const Prediction p = predict_points(params, image);
    const ojson body{{"model", to_string(model_kind(params))},
                     {"count", p.count},
                     {"points", points_to_json(p.points)}};
    write_file_atomic(o.out, body.dump(2) + "\n");
    if (!o.overlay.empty())
        write_png(o.overlay, overlay(image, p.points));
    out << ojson{{"count", p.count}, {"points", p.points.size()}}.dump() << "\n";
    return kExitOk;
}

struct AnnotateOptions {
    std::string data;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string ui;
};

inline int cmd_annotate(const AnnotateOptions& o, std::ostream& out)
{
    AnnotationStore store(o.data);
    httplib::Server server;
    install_routes(server, store, o.ui.empty() ? std::nullopt : std::optional<fs::path>(o.ui));
    if (!server.bind_to_port(o.host, o.port))
        throw DataError("cannot bind " + o.host + ":" + std::to_string(o.port));
    out << ojson{{"listening", "http://" + o.host + ":" + std::to_string(o.port)}}.dump() << "\n" << std::flush;
    server.listen_after_bind();
    return kExitOk;
}

// ---------------------------------------------------------------- entry point

inline void print_error(std::ostream& err, const char* kind, const std::string& message)
{
    err << ojson{{"error", kind}, {"message", message}}.dump() << "\n";
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"cownter: point-supervised cattle counting toolkit", "cownter"};
    app.require_subcommand(1);

    SynthOptions so;
    auto* synth = app.add_subcommand("synth", "generate a synthetic pasture dataset");
    synth->add_option("--out", so.out, "output dataset directory")->required();
    synth->add_option("--tiles", so.tiles, "number of tiles")->check(CLI::Range(3, 10000000));
    synth->add_option("--seed", so.seed, "generator seed");
    synth->add_option("--size,--tile-size", so.tile_size, "tile edge in pixels")->check(CLI::Range(32, 4096));
    synth->add_option("--imbalance", so.positive_fraction, "share of tiles with cattle");
    synth->add_option("--weights", so.weights, "bin weights w0,w1,w2,w3 (overrides --imbalance)");
    synth->add_option("--distractors", so.distractors, "mean distractor count per tile");
    synth->add_option("--split", so.split, "train,val,test fractions");

    TileOptions to;
    auto* tile = app.add_subcommand("tile", "slice a scene PNG into tiles");
    tile->add_option("--scene", to.scene, "scene PNG")->required();
    tile->add_option("--points", to.points, "scene point annotations (JSON list of {x, y})");
    tile->add_option("--out", to.out, "output dataset directory")->required();
    tile->add_option("--tile-size", to.tile_size, "tile edge in pixels");
    tile->add_option("--stride", to.stride, "tile stride in pixels (default: tile size)");
    tile->add_flag("--pad", to.pad, "reflect-pad partial tiles instead of dropping them");

    TrainOptions tr;
    auto* trn = app.add_subcommand("train", "train a counting model");
    trn->add_option("--data", tr.data, "dataset directory")->required();
    trn->add_option("--model", tr.model, "lcfcn or density")->check(CLI::IsMember({"lcfcn", "density"}));
    trn->add_option("--out", tr.out, "model file to write")->required();
    trn->add_option("--log", tr.log, "also write the epoch log here");
    trn->add_option("--epochs", tr.epochs, "maximum epochs")->check(CLI::PositiveNumber);
    trn->add_option("--batch-size", tr.batch_size, "tiles per batch")->check(CLI::PositiveNumber);
    trn->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    trn->add_option("--patience", tr.patience, "early-stopping patience")->check(CLI::PositiveNumber);
    trn->add_option("--monitor", tr.monitor, "validation metric: mape or loss")->check(CLI::IsMember({"mape", "loss"}));
    trn->add_option("--sigma", tr.sigma, "density kernel sigma")->check(CLI::PositiveNumber);
    trn->add_option("--seed", tr.seed, "initialisation and shuffling seed");

    EvalOptions eo;
    auto* ev = app.add_subcommand("eval", "binned MAPE/GAMPE and presence F-scores");
    ev->add_option("--data", eo.data, "dataset directory")->required();
    ev->add_option("--model", eo.models, "model file, repeated once per seed run, or one path containing {seed}");
    ev->add_option("--seeds", eo.seeds, "number of seed runs (expands {seed} in --model to 0..N-1)")
        ->check(CLI::PositiveNumber);
    ev->add_flag("--oracle", eo.oracle, "score the ground truth against itself");
    ev->add_option("--grid", eo.grid, "GAMPE grid size")->check(CLI::PositiveNumber);
    ev->add_option("--split", eo.split, "split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_option("--threshold", eo.threshold, "presence decision threshold on the count");
    ev->add_option("--out", eo.out, "write the JSON report here instead of stdout");
    ev->add_option("--csv", eo.csv, "also write per-image rows as CSV");

    PredictOptions po;
    auto* pr = app.add_subcommand("predict", "predict cattle points on one image");
    pr->add_option("--image", po.image, "input PNG")->required();
    pr->add_option("--model", po.model, "model file")->required();
    pr->add_option("--out", po.out, "points JSON to write")->required();
    pr->add_option("--overlay", po.overlay, "overlay PNG to write");

    AnnotateOptions ao;
    auto* an = app.add_subcommand("annotate", "serve the annotation API");
    an->add_option("--data", ao.data, "dataset directory")->required();
    an->add_option("--port", ao.port, "TCP port")->check(CLI::Range(0, 65535));
    an->add_option("--host", ao.host, "bind address");
    an->add_option("--ui", ao.ui, "frontend bundle directory served at /");

    // tile, eval, predict and annotate draw no random numbers; they accept --seed
    // so every command shares one invocation shape.
    std::uint64_t unused_seed = 0;
    for (auto* sub : {tile, ev, pr, an})
        sub->add_option("--seed", unused_seed, "accepted for uniformity; this command is deterministic");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        print_error(err, "usage", e.what());
        return kExitUsage;
    }

    try {
        if (synth->parsed())
            return cmd_synth(so, out);
        if (tile->parsed())
            return cmd_tile(to, out);
        if (trn->parsed())
            return cmd_train(tr, out);
        if (ev->parsed())
            return cmd_eval(eo, out);
        if (pr->parsed())
            return cmd_predict(po, out);
        return cmd_annotate(ao, out);
    } catch (const CLI::ParseError& e) {
        print_error(err, "usage", e.what());
        return kExitUsage;
    } catch (const NumericError& e) {
        print_error(err, "numeric", e.what());
        return kExitNumeric;
    } catch (const DataError& e) {
        print_error(err, "data", e.what());
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        print_error(err, "data", e.what());
        return kExitData;
    }
}

} // namespace cownter
