#pragma once

#include "cownter/density.hpp"
#include "cownter/error.hpp"
#include "cownter/raster.hpp"
#include "cownter/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace cownter {

struct CountPair {
    double y = 0.0;     // ground truth, a non-negative integer
    double y_hat = 0.0; // prediction, non-negative real
};

/// Mean absolute percentage error with the denominator floored at 1:
/// (1/n) sum |y - y_hat| / max(y, 1).
inline double mape(std::span<const CountPair> pairs)
{
    if (pairs.empty())
        throw DataError("mape of an empty evaluation set");
    double sum = 0.0;
    for (const CountPair& p : pairs)
        sum += std::abs(p.y - p.y_hat) / std::max(p.y, 1.0);
    return sum / static_cast<double>(pairs.size());
}

/// Ground-truth cell counts: each point counts in the half-open block holding its pixel.
inline CellMatrix point_cell_counts(std::span<const Point> points, int width, int height, int grid_n)
{
    if (grid_n < 1 || grid_n > std::min(width, height))
        throw DataError("invalid grid size " + std::to_string(grid_n));
    CellMatrix cells(static_cast<std::size_t>(grid_n) * grid_n, 0.0);
    for (const Point& p : points) {
        if (!in_bounds(p, width, height))
            throw DataError("point out of bounds");
        const int cx = cell_of(pixel_col(p), grid_n, width);
        const int cy = cell_of(pixel_row(p), grid_n, height);
        cells[static_cast<std::size_t>(cy) * grid_n + cx] += 1.0;
    }
    return cells;
}

/// Grid-partitioned MAPE: per image, sum over cells of |y_c - y_hat_c| / max(y_c, 1);
/// then the mean over images.
inline double gampe(std::span<const CellMatrix> pred_cells, std::span<const CellMatrix> gt_cells)
{
    if (pred_cells.size() != gt_cells.size())
        throw DataError("gampe: prediction and ground-truth image counts differ");
    if (gt_cells.empty())
        throw DataError("gampe of an empty evaluation set");
    double total = 0.0;
    for (std::size_t i = 0; i < gt_cells.size(); ++i) {
        if (pred_cells[i].size() != gt_cells[i].size() || gt_cells[i].empty())
            throw DataError("gampe: cell grid shape mismatch");
        double image = 0.0;
        for (std::size_t c = 0; c < gt_cells[i].size(); ++c)
            image += std::abs(gt_cells[i][c] - pred_cells[i][c]) / std::max(gt_cells[i][c], 1.0);
        total += image;
    }
    return total / static_cast<double>(gt_cells.size());
}

struct PresenceScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    long long tn = 0;
    bool undefined = false; // no predicted and no true positives anywhere
};

namespace detail {

inline PresenceScore score_from_confusion(long long tp, long long fp, long long fn, long long tn)
{
    PresenceScore s;
    s.tp = tp;
    s.fp = fp;
    s.fn = fn;
    s.tn = tn;
    s.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    s.f = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    s.undefined = tp + fp == 0 && tp + fn == 0;
    return s;
}

} // namespace detail

/// Cattle-present classification: predicted positive iff y_hat >= threshold,
/// truly positive iff y >= 1. F is reported as 0 when P + R = 0.
inline PresenceScore presence_fscore(std::span<const CountPair> pairs, double decision_threshold)
{
    long long tp = 0, fp = 0, fn = 0, tn = 0;
    for (const CountPair& p : pairs) {
        const bool pred = p.y_hat >= decision_threshold;
        const bool truth = p.y >= 1.0;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
        tn += !pred && !truth;
    }
    return detail::score_from_confusion(tp, fp, fn, tn);
}

/// The same decision scored with "no cattle" as the positive class.
inline PresenceScore absence_fscore(std::span<const CountPair> pairs, double decision_threshold)
{
    const PresenceScore s = presence_fscore(pairs, decision_threshold);
    return detail::score_from_confusion(s.tn, s.fn, s.fp, s.tp);
}

/// One evaluated image: counts, cell counts, and the presence decision input.
struct ImageEval {
    CountPair counts;
    CellMatrix pred_cells;
    CellMatrix gt_cells;
};

struct Stat {
    std::optional<double> mean; // empty when no seed had images in the bin
    double std = 0.0;           // population std across seeds
};

struct BinReport {
    CountBin bin;
    long long n = 0; // images per seed run
    Stat mape;
    Stat gampe;
};

struct EvalReport {
    int grid_n = 1;
    int seeds = 0;
    double decision_threshold = 0.5;
    std::array<BinReport, kCountBins> bins{};
    std::vector<PresenceScore> presence_per_seed;
    std::vector<PresenceScore> absence_per_seed;
    Stat precision;
    Stat recall;
    Stat fscore;
    Stat absence_fscore;
    bool fscore_undefined = false;
    long long images = 0;
};

inline Stat summarize(std::span<const double> values)
{
    Stat s;
    if (values.empty())
        return s;
    double sum = 0.0;
    for (double v : values)
        sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values)
        var += (v - mean) * (v - mean);
    s.mean = mean;
    s.std = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

/// Per-bin MAPE and GAMPE plus presence scores, each summarised across seed runs.
///
/// `runs[s]` holds the evaluation of seed run s over the same image set. Images
/// are bucketed by ground-truth count into {0}, [1,10], [11,100], [101,+inf).
inline EvalReport binned_report(std::span<const std::vector<ImageEval>> runs, int grid_n,
                                double decision_threshold = 0.5)
{
    if (runs.empty())
        throw DataError("binned report needs at least one seed run");
    EvalReport report;
    report.grid_n = grid_n;
    report.seeds = static_cast<int>(runs.size());
    report.decision_threshold = decision_threshold;
    report.images = static_cast<long long>(runs.front().size());

    std::array<std::vector<double>, kCountBins> bin_mape, bin_gampe;
    std::vector<double> prec, rec, f, af;
    for (const auto& run : runs) {
        if (static_cast<long long>(run.size()) != report.images)
            throw DataError("seed runs evaluated different image sets");
        std::array<std::vector<CountPair>, kCountBins> pairs;
        std::array<std::vector<CellMatrix>, kCountBins> pred, gt;
        std::vector<CountPair> all;
        for (const ImageEval& img : run) {
            const auto b = static_cast<std::size_t>(bin_of(static_cast<long long>(std::llround(img.counts.y))));
            pairs[b].push_back(img.counts);
            pred[b].push_back(img.pred_cells);
            gt[b].push_back(img.gt_cells);
            all.push_back(img.counts);
        }
        for (std::size_t b = 0; b < kCountBins; ++b) {
            report.bins[b].bin = static_cast<CountBin>(b);
            report.bins[b].n = static_cast<long long>(pairs[b].size());
            if (pairs[b].empty())
                continue;
            bin_mape[b].push_back(mape(pairs[b]));
            bin_gampe[b].push_back(gampe(pred[b], gt[b]));
        }
        const PresenceScore ps = presence_fscore(all, decision_threshold);
        const PresenceScore as = absence_fscore(all, decision_threshold);
        report.presence_per_seed.push_back(ps);
        report.absence_per_seed.push_back(as);
        report.fscore_undefined = report.fscore_undefined || ps.undefined;
        prec.push_back(ps.precision);
        rec.push_back(ps.recall);
        f.push_back(ps.f);
        af.push_back(as.f);
    }
    for (std::size_t b = 0; b < kCountBins; ++b) {
        report.bins[b].mape = summarize(bin_mape[b]);
        report.bins[b].gampe = summarize(bin_gampe[b]);
    }
    report.precision = summarize(prec);
    report.recall = summarize(rec);
    report.fscore = summarize(f);
    report.absence_fscore = summarize(af);
    return report;
}

} // namespace cownter
