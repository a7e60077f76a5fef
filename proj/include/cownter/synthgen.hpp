#pragma once

// Procedural pasture scenes with known cattle positions. The generator is a
// test oracle: every (seed, index) pair maps to exactly one tile.

#include "cownter/error.hpp"
#include "cownter/raster.hpp"
#include "cownter/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

namespace cownter {

/// Ground-truth count bins: {0}, [1,10], [11,100], [101,+inf).
enum class CountBin { zero = 0, few = 1, many = 2, crowded = 3 };
inline constexpr int kCountBins = 4;

inline CountBin bin_of(long long count)
{
    if (count <= 0)
        return CountBin::zero;
    if (count <= 10)
        return CountBin::few;
    if (count <= 100)
        return CountBin::many;
    return CountBin::crowded;
}

inline const char* bin_name(CountBin b)
{
    static constexpr const char* names[] = {"0", "1-10", "11-100", "101+"};
    return names[static_cast<int>(b)];
}

/// 903 of 12,252 labelled patches contain cattle; the positive mass is spread
/// over the non-empty bins with a long tail.
inline constexpr double kPositiveFraction = 903.0 / 12252.0;

inline std::array<double, kCountBins> default_count_weights()
{
    const double p = kPositiveFraction;
    return {1.0 - p, 0.55 * p, 0.35 * p, 0.10 * p};
}

struct SceneConfig {
    int tile_size = kDefaultTileSize;
    double gsd = kDefaultGsd;
    double cattle_length_m = 2.0;
    std::array<double, kCountBins> count_weights = default_count_weights();
    double distractor_density = 3.0;
    std::uint64_t seed = 0;

    double cattle_length_px() const { return cattle_length_m / gsd; }

    void validate() const
    {
        if (!(gsd > 0.0))
            throw DataError("gsd must be positive");
        if (tile_size < 32)
            throw DataError("tile size must be at least 32");
        double sum = 0.0;
        for (double w : count_weights) {
            if (!(w >= 0.0))
                throw DataError("count weights must be non-negative");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw DataError("count weights must sum to 1");
        if (!(distractor_density >= 0.0))
            throw DataError("distractor density must be non-negative");
    }
};

/// Inclusive count range of a bin for tiles of this configuration. The open top
/// bin is capped by how many cattle physically fit at the crowded spacing.
inline std::pair<long long, long long> bin_range(const SceneConfig& cfg, CountBin bin)
{
    switch (bin) {
    case CountBin::zero: return {0, 0};
    case CountBin::few: return {1, 10};
    case CountBin::many: return {11, 100};
    case CountBin::crowded: break;
    }
    const double len = cfg.cattle_length_px();
    const double area = static_cast<double>(cfg.tile_size) * cfg.tile_size;
    const auto capacity = static_cast<long long>(0.3 * area / (len * len));
    return {101, std::clamp<long long>(capacity, 101, 1500)};
}

namespace detail {

enum StreamPurpose : std::uint64_t { kCountStream = 1, kBackgroundStream, kPlacementStream, kDistractorStream };

inline CountBin draw_bin(const SceneConfig& cfg, Rng& rng)
{
    const double u = rng.uniform();
    double acc = 0.0;
    for (int b = 0; b < kCountBins; ++b) {
        acc += cfg.count_weights[static_cast<std::size_t>(b)];
        if (u < acc)
            return static_cast<CountBin>(b);
    }
    for (int b = kCountBins - 1; b >= 0; --b)
        if (cfg.count_weights[static_cast<std::size_t>(b)] > 0.0)
            return static_cast<CountBin>(b);
    return CountBin::zero;
}

inline long long draw_in_bin(const SceneConfig& cfg, CountBin bin, Rng& rng)
{
    const auto [lo, hi] = bin_range(cfg, bin);
    return rng.between(lo, hi);
}

using Rgb = std::array<float, 3>;

inline Rgb mix(const Rgb& a, const Rgb& b, float t)
{
    return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

/// Bilinearly interpolated lattice noise in [0,1].
class ValueNoise {
public:
    ValueNoise(int width, int height, int cell, Rng& rng)
        : cell_(cell), nx_(width / cell + 2), ny_(height / cell + 2),
          lattice_(static_cast<std::size_t>(nx_) * ny_)
    {
        for (double& v : lattice_)
            v = rng.uniform();
    }

    double at(double x, double y) const
    {
        const double gx = x / cell_;
        const double gy = y / cell_;
        const int ix = static_cast<int>(gx);
        const int iy = static_cast<int>(gy);
        const double fx = smooth(gx - ix);
        const double fy = smooth(gy - iy);
        const double a = node(ix, iy) + (node(ix + 1, iy) - node(ix, iy)) * fx;
        const double b = node(ix, iy + 1) + (node(ix + 1, iy + 1) - node(ix, iy + 1)) * fx;
        return a + (b - a) * fy;
    }

private:
    static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
    double node(int x, int y) const { return lattice_[static_cast<std::size_t>(y) * nx_ + x]; }

    int cell_;
    int nx_;
    int ny_;
    std::vector<double> lattice_;
};

/// Alpha-blend `color` into every pixel covered by `inside(x, y)`, with 4x4
/// supersampling over the bounding box [x0,x1) x [y0,y1).
template <typename Inside>
void paint(Raster& img, const Rgb& color, double x0, double y0, double x1, double y1, Inside inside)
{
    const int px0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int py0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int px1 = std::min(img.width, static_cast<int>(std::ceil(x1)));
    const int py1 = std::min(img.height, static_cast<int>(std::ceil(y1)));
    for (int y = py0; y < py1; ++y) {
        for (int x = px0; x < px1; ++x) {
            int hits = 0;
            for (int sy = 0; sy < 4; ++sy)
                for (int sx = 0; sx < 4; ++sx)
                    hits += inside(x + (sx + 0.5) / 4.0, y + (sy + 0.5) / 4.0) ? 1 : 0;
            if (hits == 0)
                continue;
            const float alpha = static_cast<float>(hits) / 16.0f;
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = img.at(x, y, c) * (1.0f - alpha) + color[static_cast<std::size_t>(c)] * alpha;
        }
    }
}

struct Disc {
    double x;
    double y;
    double r;
};

struct Ellipse {
    double x;
    double y;
    double semi_major;
    double semi_minor;
    double angle;

    bool contains(double px, double py) const
    {
        const double dx = px - x;
        const double dy = py - y;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double u = (dx * c + dy * s) / semi_major;
        const double v = (-dx * s + dy * c) / semi_minor;
        return u * u + v * v <= 1.0;
    }
};

/// Spatial hash for minimum-separation checks.
class SeparationGrid {
public:
    SeparationGrid(int size, double separation)
        : sep_(separation), cell_(std::max(1.0, separation)),
          n_(static_cast<int>(std::ceil(size / cell_)) + 1), buckets_(static_cast<std::size_t>(n_) * n_)
    {
    }

    bool free(double x, double y) const
    {
        const int cx = static_cast<int>(x / cell_);
        const int cy = static_cast<int>(y / cell_);
        for (int gy = std::max(0, cy - 1); gy <= std::min(n_ - 1, cy + 1); ++gy) {
            for (int gx = std::max(0, cx - 1); gx <= std::min(n_ - 1, cx + 1); ++gx) {
                for (const Point& p : buckets_[static_cast<std::size_t>(gy) * n_ + gx]) {
                    const double dx = p.x - x;
                    const double dy = p.y - y;
                    if (dx * dx + dy * dy < sep_ * sep_)
                        return false;
                }
            }
        }
        return true;
    }

    void add(double x, double y)
    {
        const int cx = static_cast<int>(x / cell_);
        const int cy = static_cast<int>(y / cell_);
        buckets_[static_cast<std::size_t>(cy) * n_ + cx].push_back({x, y});
    }

private:
    double sep_;
    double cell_;
    int n_;
    std::vector<std::vector<Point>> buckets_;
};

inline constexpr int kPlacementAttempts = 1000;
inline constexpr int kCountRedraws = 50;

} // namespace detail

struct CountDraw {
    CountBin bin;
    long long count;
};

/// The bin and initial count for tile `index`; generate_tile starts from this draw.
inline CountDraw draw_count(const SceneConfig& cfg, std::uint64_t index)
{
    Rng rng(derive_seed(cfg.seed, index, detail::kCountStream));
    const CountBin bin = detail::draw_bin(cfg, rng);
    return {bin, detail::draw_in_bin(cfg, bin, rng)};
}

inline std::string synth_tile_id(std::uint64_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth_%06llu", static_cast<unsigned long long>(index));
    return buf;
}

/// Render tile `index`: lattice-noise pasture, unannotated distractors (bare-soil
/// patches and dark bushes), and cattle as small bright oriented ellipses with one
/// point at each ellipse centre. Pixel values lie on the 1/255 grid so the tile
/// survives an 8-bit PNG round trip unchanged.
inline TileRecord generate_tile(const SceneConfig& cfg, std::uint64_t index)
{
    using namespace detail;
    cfg.validate();
    const int size = cfg.tile_size;
    const double len = cfg.cattle_length_px();

    TileRecord tile;
    tile.id = synth_tile_id(index);
    tile.image = Raster(size, size, 3);
    tile.image.gsd = cfg.gsd;
    Raster& img = tile.image;

    Rng bg_rng(derive_seed(cfg.seed, index, kBackgroundStream));
    const Rgb grass{0.24f, 0.42f, 0.17f};
    const Rgb dry{0.47f, 0.42f, 0.26f};
    const ValueNoise coarse(size, size, std::max(8, size / 4), bg_rng);
    const ValueNoise fine(size, size, 6, bg_rng);
    const double dryness = bg_rng.uniform(0.1, 0.7);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double t = std::clamp(dryness + 0.6 * (coarse.at(x, y) - 0.5), 0.0, 1.0);
            const Rgb base = mix(grass, dry, static_cast<float>(t));
            const float shade = static_cast<float>(0.9 + 0.2 * fine.at(x, y) + 0.03 * (bg_rng.uniform() - 0.5));
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = base[static_cast<std::size_t>(c)] * shade;
        }
    }

    // Distractors: irregular bright soil patches (several overlapping discs, much
    // larger than a cow) and dark bush blobs.
    Rng dis_rng(derive_seed(cfg.seed, index, kDistractorStream));
    std::vector<Disc> keep_out;
    const int n_distractors = dis_rng.poisson(cfg.distractor_density);
    for (int d = 0; d < n_distractors; ++d) {
        const double cx = dis_rng.uniform(0.0, size);
        const double cy = dis_rng.uniform(0.0, size);
        if (dis_rng.uniform() < 0.5) {
            const Rgb soil{0.80f, 0.76f, 0.64f};
            const Rgb color = mix(soil, Rgb{0.92f, 0.9f, 0.84f}, static_cast<float>(dis_rng.uniform(0.0, 0.5)));
            const int lobes = static_cast<int>(dis_rng.between(3, 6));
            std::vector<Disc> discs;
            for (int k = 0; k < lobes; ++k) {
                const double r = dis_rng.uniform(0.9, 1.6) * len;
                const double a = dis_rng.uniform(0.0, 2.0 * std::numbers::pi);
                const double off = dis_rng.uniform(0.0, 1.2) * len;
                discs.push_back({cx + off * std::cos(a), cy + off * std::sin(a), r});
            }
            double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
            for (const Disc& q : discs) {
                x0 = std::min(x0, q.x - q.r);
                y0 = std::min(y0, q.y - q.r);
                x1 = std::max(x1, q.x + q.r);
                y1 = std::max(y1, q.y + q.r);
                keep_out.push_back({q.x, q.y, q.r + 0.6 * len});
            }
            paint(img, color, x0, y0, x1, y1, [&](double px, double py) {
                for (const Disc& q : discs)
                    if ((px - q.x) * (px - q.x) + (py - q.y) * (py - q.y) <= q.r * q.r)
                        return true;
                return false;
            });
        } else {
            const Rgb bush{0.09f, 0.17f, 0.07f};
            const double r = dis_rng.uniform(0.5, 1.2) * len;
            paint(img, bush, cx - r, cy - r, cx + r, cy + r, [&](double px, double py) {
                return (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
            });
        }
    }

    // Cattle placement by rejection sampling; a bin whose count cannot be placed
    // within the attempt cap is redrawn from the same bin.
    Rng count_rng(derive_seed(cfg.seed, index, kCountStream));
    const CountBin bin = draw_bin(cfg, count_rng);
    long long count = draw_in_bin(cfg, bin, count_rng);
    Rng place_rng(derive_seed(cfg.seed, index, kPlacementStream));
    const double separation = (bin == CountBin::crowded ? 1.0 : 1.5) * len;
    const double margin = 2.0;
    std::vector<Point> centers;
    for (int redraw = 0;; ++redraw) {
        if (redraw == kCountRedraws)
            throw DataError("cannot place cattle for tile " + tile.id + "; tile too small for its count bin");
        centers.clear();
        SeparationGrid grid(size, separation);
        bool ok = true;
        for (long long i = 0; i < count && ok; ++i) {
            ok = false;
            for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
                const double x = place_rng.uniform(margin, size - margin);
                const double y = place_rng.uniform(margin, size - margin);
                if (!grid.free(x, y))
                    continue;
                bool blocked = false;
                for (const Disc& q : keep_out) {
                    if ((x - q.x) * (x - q.x) + (y - q.y) * (y - q.y) < q.r * q.r) {
                        blocked = true;
                        break;
                    }
                }
                if (blocked)
                    continue;
                grid.add(x, y);
                centers.push_back({x, y});
                ok = true;
                break;
            }
        }
        if (ok)
            break;
        count = draw_in_bin(cfg, bin, count_rng);
    }

    const Rgb coat_light{0.93f, 0.91f, 0.86f};
    const Rgb coat_tan{0.78f, 0.66f, 0.50f};
    for (const Point& c : centers) {
        Ellipse e;
        e.x = c.x;
        e.y = c.y;
        e.semi_major = 0.5 * len * place_rng.uniform(0.85, 1.15);
        e.semi_minor = e.semi_major * place_rng.uniform(0.4, 0.55);
        e.angle = place_rng.uniform(0.0, std::numbers::pi);
        const Rgb coat = mix(coat_light, coat_tan, static_cast<float>(place_rng.uniform(0.0, 0.4)));
        const float bright = static_cast<float>(place_rng.uniform(0.88, 1.0));
        const Rgb color{coat[0] * bright, coat[1] * bright, coat[2] * bright};
        const double r = e.semi_major + 1.0;
        paint(img, color, e.x - r, e.y - r, e.x + r, e.y + r,
              [&](double px, double py) { return e.contains(px, py); });
    }

    for (float& v : img.data)
        v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;

    tile.points = std::move(centers);
    tile.label = label_for(tile.points);
    return tile;
}

struct SplitFractions {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct SyntheticDataset {
    SceneConfig config;
    std::vector<TileRecord> tiles;
    std::vector<Split> splits; // parallel to tiles
};

/// Split sizes by largest remainder, so they always add up to `n`.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& f)
{
    const std::array<double, 3> frac{f.train, f.val, f.test};
    double sum = 0.0;
    for (double x : frac) {
        if (!(x > 0.0))
            throw DataError("split fractions must be positive");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw DataError("split fractions must sum to 1");
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> rem{};
    std::size_t used = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = frac[i] * static_cast<double>(n);
        sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        rem[i] = exact - static_cast<double>(sizes[i]);
        used += sizes[i];
    }
    while (used < n) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < 3; ++i)
            if (rem[i] > rem[best])
                best = i;
        ++sizes[best];
        rem[best] = -1.0;
        ++used;
    }
    return sizes;
}

/// Split of each of `n` tiles: a seeded permutation, cut by split_sizes.
inline std::vector<Split> assign_splits(std::size_t n, const SplitFractions& fractions, std::uint64_t seed)
{
    const auto sizes = split_sizes(n, fractions);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    Rng rng(derive_seed(seed, 0, 0x5B117ULL));
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<Split> splits(n, Split::none);
    for (std::size_t k = 0; k < n; ++k)
        splits[order[k]] = k < sizes[0] ? Split::train : (k < sizes[0] + sizes[1] ? Split::val : Split::test);
    return splits;
}

inline SyntheticDataset generate_dataset(const SceneConfig& cfg, std::size_t n_tiles,
                                         const SplitFractions& fractions = {})
{
    if (n_tiles < 3)
        throw DataError("a dataset needs at least 3 tiles");
    SyntheticDataset ds;
    ds.config = cfg;
    ds.splits = assign_splits(n_tiles, fractions, cfg.seed);
    ds.tiles.reserve(n_tiles);
    for (std::size_t i = 0; i < n_tiles; ++i)
        ds.tiles.push_back(generate_tile(cfg, i));
    return ds;
}

} // namespace cownter
