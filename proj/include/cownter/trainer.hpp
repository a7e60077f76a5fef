#pragma once

#include "cownter/blobkit.hpp"
#include "cownter/density.hpp"
#include "cownter/error.hpp"
#include "cownter/lossfns.hpp"
#include "cownter/metrics.hpp"
#include "cownter/raster.hpp"
#include "cownter/rng.hpp"
#include "cownter/tinyfcn.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cownter {

enum class ModelKind { lcfcn, density };
enum class Monitor { val_mape, val_loss };

inline const char* to_string(ModelKind m) { return m == ModelKind::lcfcn ? "lcfcn" : "density"; }
inline Head head_for(ModelKind m) { return m == ModelKind::lcfcn ? Head::detection : Head::density; }

struct TrainConfig {
    int batch_size = 8;
    int epochs = 100;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    Monitor early_stop_metric = Monitor::val_mape;
    int patience = 10;
    std::uint64_t seed = 0;
    ModelKind model = ModelKind::lcfcn;
    double density_sigma = kDefaultDensitySigma;
    std::array<int, kStages> stage_channels{16, 32, 64};

    void validate() const
    {
        if (batch_size < 1 || epochs < 1 || patience < 1)
            throw DataError("batch size, epochs and patience must be positive");
        if (patience > epochs)
            throw DataError("patience cannot exceed the epoch limit");
        if (!(learning_rate > 0.0) || !(adam_eps > 0.0) || !(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
            !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
            throw DataError("optimizer hyperparameters out of range");
        if (!(density_sigma > 0.0))
            throw DataError("density sigma must be positive");
    }
};

template <typename T>
struct AdamState {
    std::vector<T> m;
    std::vector<T> v;
};

/// One Adam update at step t >= 1 (bias-corrected first and second moments).
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, long long t,
               const TrainConfig& cfg)
{
    if (grads.size() != params.size())
        throw DataError("gradient and parameter sizes differ");
    if (t < 1)
        throw DataError("adam step index must be at least 1");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw NumericError("non-finite gradient at parameter " + std::to_string(i));
    if (state.m.empty()) {
        state.m.assign(params.size(), T(0));
        state.v.assign(params.size(), T(0));
    }
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        const double m = b1 * state.m[i] + (1.0 - b1) * g;
        const double v = b2 * state.v[i] + (1.0 - b2) * g * g;
        state.m[i] = static_cast<T>(m);
        state.v[i] = static_cast<T>(v);
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        params[i] = static_cast<T>(params[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps));
    }
}

/// Patience-based early stopping on a lower-is-better metric.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    /// Record an epoch's metric; returns true when it is a strict improvement.
    bool observe(int epoch, double metric)
    {
        if (!best_epoch_ || metric < best_metric_) {
            best_metric_ = metric;
            best_epoch_ = epoch;
            stale_ = 0;
            return true;
        }
        ++stale_;
        return false;
    }

    bool should_stop() const { return stale_ >= patience_; }
    std::optional<int> best_epoch() const { return best_epoch_; }
    double best_metric() const { return best_metric_; }

private:
    int patience_;
    int stale_ = 0;
    std::optional<int> best_epoch_;
    double best_metric_ = std::numeric_limits<double>::infinity();
};

/// A tile prepared for the network: planar input padded to a multiple of 8.
struct Sample {
    int width = 0;  // original tile size
    int height = 0;
    int padded_width = 0;
    int padded_height = 0;
    std::vector<float> input;
    std::vector<Point> points;
    std::vector<float> density; // original-size target, density model only
};

inline Sample make_sample(const TileRecord& tile, ModelKind model, double sigma)
{
    Sample s;
    s.width = tile.image.width;
    s.height = tile.image.height;
    const Raster padded = pad_to_network(tile.image);
    s.padded_width = padded.width;
    s.padded_height = padded.height;
    s.input = to_planar<float>(padded);
    s.points = tile.points;
    if (model == ModelKind::density) {
        const DensityMap d = render_density(tile.points, s.width, s.height, sigma);
        s.density.assign(d.values.begin(), d.values.end());
    }
    return s;
}

namespace detail {

/// Copy the original-size window out of a padded map.
inline std::vector<float> crop_map(std::span<const float> padded, const Sample& s)
{
    if (s.padded_width == s.width && s.padded_height == s.height)
        return {padded.begin(), padded.end()};
    std::vector<float> out(static_cast<std::size_t>(s.width) * s.height);
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x)
            out[static_cast<std::size_t>(y) * s.width + x] = padded[static_cast<std::size_t>(y) * s.padded_width + x];
    return out;
}

/// Inverse of crop_map for gradients: the padding receives zero gradient.
inline std::vector<float> uncrop_grad(std::span<const float> grad, const Sample& s)
{
    if (s.padded_width == s.width && s.padded_height == s.height)
        return {grad.begin(), grad.end()};
    std::vector<float> out(static_cast<std::size_t>(s.padded_width) * s.padded_height, 0.0f);
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x)
            out[static_cast<std::size_t>(y) * s.padded_width + x] = grad[static_cast<std::size_t>(y) * s.width + x];
    return out;
}

struct LossAndGrad {
    double loss;
    std::vector<float> grad; // original-size map
};

inline LossAndGrad sample_loss(ModelKind model, std::span<const float> out, const Sample& s)
{
    if (model == ModelKind::lcfcn) {
        auto l = lcfcn_loss<float>(out, s.width, s.height, s.points);
        return {static_cast<double>(l.terms.total), std::move(l.grad)};
    }
    auto l = density_loss<float>(out, s.density);
    return {static_cast<double>(l.value), std::move(l.grad)};
}

} // namespace detail

/// Predicted count from a cropped output map: blob count (lcfcn) or density sum.
inline double predicted_count(ModelKind model, std::span<const float> out, int width, int height)
{
    if (model == ModelKind::lcfcn)
        return blob_count<float>(out, width, height, kBlobThreshold).count;
    double total = 0.0;
    for (float v : out)
        total += v;
    return total;
}

struct EpochRecord {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_metric = 0.0;
    bool best = false;
};

struct TrainResult {
    ModelParams<float> best;
    std::vector<EpochRecord> log;
    int best_epoch = 0;
};

struct TrainHooks {
    /// Replaces the computed validation metric (tests use it to script sequences).
    std::function<double(int epoch, double computed)> val_metric_override;
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Output map of one sample, cropped to the tile.
inline std::vector<float> run_sample(const ModelParams<float>& params, const Sample& s, ForwardCache<float>& cache)
{
    forward<float>(params, s.input, s.padded_height, s.padded_width, cache);
    return detail::crop_map(cache.output, s);
}

/// Validation metric: MAPE of predicted counts, or mean per-tile loss.
inline double validation_metric(const ModelParams<float>& params, std::span<const Sample> val, const TrainConfig& cfg)
{
    ForwardCache<float> cache;
    std::vector<CountPair> pairs;
    double loss = 0.0;
    for (const Sample& s : val) {
        const auto out = run_sample(params, s, cache);
        if (cfg.early_stop_metric == Monitor::val_loss) {
            loss += detail::sample_loss(cfg.model, out, s).loss;
        } else {
            pairs.push_back({static_cast<double>(s.points.size()), predicted_count(cfg.model, out, s.width, s.height)});
        }
    }
    if (cfg.early_stop_metric == Monitor::val_loss)
        return loss / static_cast<double>(val.size());
    return mape(pairs);
}

/// Adam training with seeded shuffling and early stopping on the validation split.
///
/// Each epoch visits every training tile once in batches of cfg.batch_size (the
/// last batch may be short); batch gradients are per-tile means. The returned
/// parameters are the checkpoint with the best validation metric.
inline TrainResult train(std::span<const TileRecord> train_tiles, std::span<const TileRecord> val_tiles,
                         const TrainConfig& cfg, const TrainHooks& hooks = {})
{
    cfg.validate();
    if (train_tiles.empty() || val_tiles.empty())
        throw DataError("training needs non-empty train and val splits");
    const int channels = train_tiles.front().image.channels;

    std::vector<Sample> train_set;
    std::vector<Sample> val_set;
    for (const TileRecord& t : train_tiles)
        train_set.push_back(make_sample(t, cfg.model, cfg.density_sigma));
    for (const TileRecord& t : val_tiles)
        val_set.push_back(make_sample(t, cfg.model, cfg.density_sigma));

    ArchConfig arch;
    arch.in_channels = channels;
    arch.stage_channels = cfg.stage_channels;
    arch.head = head_for(cfg.model);
    ModelParams<float> params = init_params<float>(arch, derive_seed(cfg.seed, 0, 0xA11CEULL));

    TrainResult result;
    result.best = params;
    AdamState<float> adam;
    EarlyStopper stopper(cfg.patience);
    Rng shuffle_rng(derive_seed(cfg.seed, 0, 0x5EEDULL));
    std::vector<std::size_t> order(train_set.size());
    std::vector<float> grad(params.values.size());
    ForwardCache<float> cache;
    long long step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        shuffle_rng.shuffle(std::span<std::size_t>(order));

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const float scale = 1.0f / static_cast<float>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0f);
            for (std::size_t k = start; k < end; ++k) {
                const Sample& s = train_set[order[k]];
                const auto out = run_sample(params, s, cache);
                auto lg = detail::sample_loss(cfg.model, out, s);
                if (!std::isfinite(lg.loss))
                    throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
                epoch_loss += lg.loss;
                for (float& g : lg.grad)
                    g *= scale;
                const auto padded_grad = detail::uncrop_grad(lg.grad, s);
                backward<float>(params, cache, padded_grad, grad);
            }
            adam_step<float>(params.values, grad, adam, ++step, cfg);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(train_set.size());
        rec.val_metric = validation_metric(params, val_set, cfg);
        if (hooks.val_metric_override)
            rec.val_metric = hooks.val_metric_override(epoch, rec.val_metric);
        if (!std::isfinite(rec.val_metric))
            throw NumericError("non-finite validation metric at epoch " + std::to_string(epoch));
        rec.best = stopper.observe(epoch, rec.val_metric);
        if (rec.best) {
            result.best = params;
            result.best_epoch = epoch;
        }
        result.log.push_back(rec);
        if (hooks.on_epoch)
            hooks.on_epoch(rec);
        if (stopper.should_stop())
            break;
    }
    return result;
}

/// Evaluate one model on a set of tiles: counts, grid cell counts, presence inputs.
///
/// Predicted cells come from blob centroids (lcfcn) or density integration (density).
inline std::vector<ImageEval> evaluate(const ModelParams<float>& params, ModelKind model,
                                       std::span<const TileRecord> tiles, int grid_n)
{
    std::vector<ImageEval> out;
    out.reserve(tiles.size());
    for (const TileRecord& t : tiles) {
        const auto map = predict_map<float>(params, t.image);
        ImageEval e;
        e.counts.y = static_cast<double>(t.points.size());
        e.gt_cells = point_cell_counts(t.points, t.image.width, t.image.height, grid_n);
        if (model == ModelKind::lcfcn) {
            const BlobCount blobs = blob_count<float>(map, t.image.width, t.image.height, kBlobThreshold);
            e.counts.y_hat = blobs.count;
            e.pred_cells = point_cell_counts(blobs.centroids, t.image.width, t.image.height, grid_n);
        } else {
            DensityMap d(t.image.width, t.image.height);
            d.values.assign(map.begin(), map.end());
            e.counts.y_hat = count_from_density(d);
            e.pred_cells = cell_counts(d, grid_n);
        }
        out.push_back(std::move(e));
    }
    return out;
}

/// Evaluation of a predictor that reproduces the ground truth exactly.
inline std::vector<ImageEval> evaluate_oracle(std::span<const TileRecord> tiles, int grid_n)
{
    std::vector<ImageEval> out;
    for (const TileRecord& t : tiles) {
        ImageEval e;
        e.counts = {static_cast<double>(t.points.size()), static_cast<double>(t.points.size())};
        e.gt_cells = point_cell_counts(t.points, t.image.width, t.image.height, grid_n);
        e.pred_cells = e.gt_cells;
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace cownter
