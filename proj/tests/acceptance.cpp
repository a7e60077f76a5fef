// Acceptance suite: one PASS/FAIL line per criterion.
//
// Usage: acceptance [N ...]   (criterion numbers; default all)

#include "cownter/blobkit.hpp"
#include "cownter/cli.hpp"
#include "cownter/density.hpp"
#include "cownter/lossfns.hpp"
#include "cownter/metrics.hpp"
#include "cownter/rng.hpp"
#include "cownter/synthgen.hpp"
#include "cownter/tinyfcn.hpp"
#include "cownter/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <deque>
#include <functional>
#include <set>
#include <sstream>

using namespace cownter;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ------------------------------------------------------------------ 1

double brute_mape(const std::vector<double>& y, const std::vector<double>& y_hat)
{
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        s += (y[i] > y_hat[i] ? y[i] - y_hat[i] : y_hat[i] - y[i]) / (y[i] > 1.0 ? y[i] : 1.0);
    return s / static_cast<double>(y.size());
}

Outcome criterion_metric_oracles()
{
    const auto t0 = Clock::now();
    Rng rng(101);
    double worst = 0.0, worst_grid1 = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = static_cast<std::size_t>(rng.between(1, 40));
        const auto g = static_cast<std::size_t>(rng.between(1, 6));
        std::vector<double> y(n), y_hat(n);
        std::vector<CountPair> pairs;
        std::vector<CellMatrix> gt(n, CellMatrix(g * g)), pred(n, CellMatrix(g * g));
        std::vector<CellMatrix> gt1, pred1;
        double brute_g = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<double>(rng.between(0, 400));
            y_hat[i] = rng.uniform() < 0.1 ? y[i] : rng.uniform(0, 420);
            pairs.push_back({y[i], y_hat[i]});
            gt1.push_back({y[i]});
            pred1.push_back({y_hat[i]});
            double img = 0.0;
            for (std::size_t c = 0; c < g * g; ++c) {
                gt[i][c] = static_cast<double>(rng.between(0, 30));
                pred[i][c] = rng.uniform() < 0.1 ? gt[i][c] : rng.uniform(0, 32);
                const double d = gt[i][c] > pred[i][c] ? gt[i][c] - pred[i][c] : pred[i][c] - gt[i][c];
                img += d / (gt[i][c] > 1.0 ? gt[i][c] : 1.0);
            }
            brute_g += img;
        }
        brute_g /= static_cast<double>(n);
        worst = std::max({worst, std::abs(mape(pairs) - brute_mape(y, y_hat)), std::abs(gampe(pred, gt) - brute_g)});
        worst_grid1 = std::max(worst_grid1, std::abs(gampe(pred1, gt1) - mape(pairs)));
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-12 && worst_grid1 == 0.0 && t < 1.0,
            fmt("max |impl - brute| = %.3g (tol 1e-12), grid-1 gampe vs mape diff = %.3g, %.3f s (limit 1 s)", worst,
                worst_grid1, t)};
}

// ------------------------------------------------------------------ 2

Outcome criterion_density_conservation()
{
    const auto t0 = Clock::now();
    Rng rng(202);
    double worst = 0.0;
    int border_points = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const int w = static_cast<int>(rng.between(32, 512));
        const int h = static_cast<int>(rng.between(32, 512));
        const auto n = rng.between(0, 1200);
        std::vector<Point> pts;
        for (long long i = 0; i < n; ++i) {
            Point p{rng.uniform(0, w), rng.uniform(0, h)};
            const double r = rng.uniform();
            if (r < 0.05)
                p.x = 0.0;
            else if (r < 0.10)
                p.y = 0.0;
            else if (r < 0.15)
                p.x = std::nextafter(static_cast<double>(w), 0.0);
            else if (r < 0.20)
                p.y = std::nextafter(static_cast<double>(h), 0.0);
            border_points += r < 0.20;
            pts.push_back(p);
        }
        const double total = count_from_density(render_density(pts, w, h));
        const double k = static_cast<double>(pts.size());
        worst = std::max(worst, std::abs(total - k) / std::max(k, 1.0));
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-9 && t < 10.0,
            fmt("max |total - |P|| / max(|P|,1) = %.3g (tol 1e-9), %d border points, %.2f s (limit 10 s)", worst,
                border_points, t)};
}

// ------------------------------------------------------------------ 3

double rel_error(double a, double b, double floor)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

Outcome criterion_gradient_checks()
{
    const auto t0 = Clock::now();
    Rng rng(303);
    double worst_lcfcn = 0.0, worst_density = 0.0, worst_net = 0.0;
    int split_instances = 0;
    const int instances = 20;

    // lcfcn_loss: probabilities on a shuffled ladder spaced far above the
    // difference step, so no perturbation changes the blob or watershed structure.
    for (int trial = 0; trial < instances; ++trial) {
        const int w = static_cast<int>(rng.between(6, 14)), h = static_cast<int>(rng.between(6, 14));
        const std::size_t n = static_cast<std::size_t>(w) * h;
        std::vector<double> prob(n);
        for (std::size_t i = 0; i < n; ++i)
            prob[i] = 0.02 + 0.96 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        rng.shuffle(std::span<double>(prob));
        for (double& v : prob)
            if (std::abs(v - 0.5) < 1e-3)
                v += 2e-3;
        std::vector<Point> pts;
        for (long long k = rng.between(1, 8); k > 0; --k)
            pts.push_back({rng.uniform(0, w), rng.uniform(0, h)});
        const auto l = lcfcn_loss<double>(prob, w, h, pts);
        split_instances += l.terms.split_term > 0.0;
        const double step = 1e-6;
        for (std::size_t i = 0; i < n; ++i) {
            const double p0 = prob[i];
            prob[i] = p0 + step;
            const double up = lcfcn_loss<double>(prob, w, h, pts).terms.total;
            prob[i] = p0 - step;
            const double down = lcfcn_loss<double>(prob, w, h, pts).terms.total;
            prob[i] = p0;
            worst_lcfcn = std::max(worst_lcfcn, rel_error(l.grad[i], (up - down) / (2 * step), 1e-8));
        }
    }

    for (int trial = 0; trial < instances; ++trial) {
        const auto n = static_cast<std::size_t>(rng.between(16, 400));
        std::vector<double> pred(n), target(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = rng.uniform(0, 0.1);
            target[i] = rng.uniform(0, 0.1);
        }
        const auto l = density_loss<double>(pred, target);
        const double step = 1e-6;
        for (std::size_t i = 0; i < n; ++i) {
            const double p0 = pred[i];
            pred[i] = p0 + step;
            const double up = density_loss<double>(pred, target).value;
            pred[i] = p0 - step;
            const double down = density_loss<double>(pred, target).value;
            pred[i] = p0;
            worst_density = std::max(worst_density, rel_error(l.grad[i], (up - down) / (2 * step), 1e-8));
        }
    }

    // Full network: loss r . output. Biases start positive so that units sit
    // away from the ReLU kink; the floor is 1e-3 of the largest gradient entry.
    for (int trial = 0; trial < instances; ++trial) {
        ArchConfig arch;
        arch.in_channels = trial % 2 == 0 ? 3 : 1;
        arch.stage_channels = {static_cast<int>(rng.between(1, 3)), static_cast<int>(rng.between(1, 4)),
                               static_cast<int>(rng.between(1, 5))};
        arch.head = trial % 4 < 2 ? Head::detection : Head::density;
        auto p = init_params<double>(arch, static_cast<std::uint64_t>(trial));
        const auto layout = param_layout(arch);
        for (std::size_t i = 0; i < layout.size(); ++i)
            if (layout[i].fan_in == 0)
                for (double& b : p.slice(i))
                    b = rng.uniform(0.05, 0.2);
        const int hh = 8 * static_cast<int>(rng.between(1, 2)), ww = 8 * static_cast<int>(rng.between(1, 2));
        std::vector<double> in(static_cast<std::size_t>(arch.in_channels) * hh * ww);
        for (double& v : in)
            v = rng.uniform(-0.5, 0.5);
        std::vector<double> r(static_cast<std::size_t>(hh) * ww);
        for (double& v : r)
            v = rng.uniform(-1, 1);
        auto loss = [&] {
            ForwardCache<double> c;
            forward<double>(p, in, hh, ww, c);
            double s = 0.0;
            for (std::size_t k = 0; k < r.size(); ++k)
                s += r[k] * c.output[k];
            return s;
        };
        ForwardCache<double> cache;
        forward<double>(p, in, hh, ww, cache);
        std::vector<double> grad(p.values.size(), 0.0);
        backward<double>(p, cache, r, grad);
        double scale = 0.0;
        for (double g : grad)
            scale = std::max(scale, std::abs(g));
        const double step = 1e-6;
        for (std::size_t k = 0; k < p.values.size(); ++k) {
            const double v0 = p.values[k];
            p.values[k] = v0 + step;
            const double up = loss();
            p.values[k] = v0 - step;
            const double down = loss();
            p.values[k] = v0;
            worst_net = std::max(worst_net, rel_error(grad[k], (up - down) / (2 * step), 1e-3 * scale));
        }
    }
    const double t = seconds_since(t0);
    const double worst = std::max({worst_lcfcn, worst_density, worst_net});
    return {worst < 1e-4 && split_instances > 0 && t < 120.0,
            fmt("max rel error lcfcn %.2g, density %.2g, network %.2g (tol 1e-4), %d instances each, "
                "%d with a split term, %.1f s (limit 120 s)",
                worst_lcfcn, worst_density, worst_net, instances, split_instances, t)};
}

// ------------------------------------------------------------------ 4

// Breadth-first flood fill labelling in raster-scan order of first pixels.
std::vector<int> flood_labels(const Mask& mask, int w, int h)
{
    std::vector<int> lab(mask.size(), 0);
    int next = 0;
    for (int start = 0; start < w * h; ++start) {
        if (!mask[static_cast<std::size_t>(start)] || lab[static_cast<std::size_t>(start)])
            continue;
        ++next;
        std::deque<int> q{start};
        lab[static_cast<std::size_t>(start)] = next;
        while (!q.empty()) {
            const int i = q.front();
            q.pop_front();
            const int x = i % w, y = i / w;
            const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
            for (const auto& n : nb) {
                if (n[0] < 0 || n[1] < 0 || n[0] >= w || n[1] >= h)
                    continue;
                const int j = n[1] * w + n[0];
                if (mask[static_cast<std::size_t>(j)] && !lab[static_cast<std::size_t>(j)]) {
                    lab[static_cast<std::size_t>(j)] = next;
                    q.push_back(j);
                }
            }
        }
    }
    return lab;
}

Outcome criterion_blob_watershed()
{
    Rng rng(404);
    int cc_mismatch = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const double density = rng.uniform(0.1, 0.9);
        Mask mask(64 * 64);
        for (auto& m : mask)
            m = rng.uniform() < density;
        const BlobMap b = connected_components(mask, 64, 64);
        const auto ref = flood_labels(mask, 64, 64);
        const int ref_count = ref.empty() ? 0 : *std::max_element(ref.begin(), ref.end());
        cc_mismatch += b.labels != ref || b.count != ref_count;
    }

    const int w = 32, h = 32;
    int ws_fail = 0;
    for (int trial = 0; trial < 100; ++trial) {
        // Random accreted blob.
        Mask blob_mask(static_cast<std::size_t>(w) * h, 0);
        std::vector<int> blob{static_cast<int>(rng.between(8, 23)) * w + static_cast<int>(rng.between(8, 23))};
        blob_mask[static_cast<std::size_t>(blob[0])] = 1;
        const auto target = static_cast<std::size_t>(rng.between(20, 300));
        while (blob.size() < target) {
            const int from = blob[static_cast<std::size_t>(rng.between(0, static_cast<long long>(blob.size()) - 1))];
            const int dir = static_cast<int>(rng.between(0, 3));
            const int x = from % w + (dir == 0) - (dir == 1), y = from / w + (dir == 2) - (dir == 3);
            if (x < 0 || y < 0 || x >= w || y >= h || blob_mask[static_cast<std::size_t>(y * w + x)])
                continue;
            blob_mask[static_cast<std::size_t>(y * w + x)] = 1;
            blob.push_back(y * w + x);
        }
        std::sort(blob.begin(), blob.end());
        // Two seeds in distinct, non-4-adjacent pixels.
        int a = 0, c = 0;
        do {
            a = blob[static_cast<std::size_t>(rng.between(0, static_cast<long long>(blob.size()) - 1))];
            c = blob[static_cast<std::size_t>(rng.between(0, static_cast<long long>(blob.size()) - 1))];
        } while (std::abs(a % w - c % w) + std::abs(a / w - c / w) < 2);
        const std::vector<Point> seeds{{a % w + rng.uniform(), a / w + rng.uniform()},
                                       {c % w + rng.uniform(), c / w + rng.uniform()}};
        std::vector<double> prob(static_cast<std::size_t>(w) * h);
        for (double& p : prob)
            p = rng.uniform();
        const auto line = watershed_split<double>(prob, w, h, blob, seeds);

        Mask rest = blob_mask;
        for (int i : line)
            rest[static_cast<std::size_t>(i)] = 0;
        const auto lab = flood_labels(rest, w, h);
        const int comps = *std::max_element(lab.begin(), lab.end());
        const int la = lab[static_cast<std::size_t>(a)], lc = lab[static_cast<std::size_t>(c)];
        ws_fail += !(comps == 2 && la > 0 && lc > 0 && la != lc);
    }
    return {cc_mismatch == 0 && ws_fail == 0,
            fmt("connected components: %d/200 masks differ from flood fill; watershed: %d/100 blobs without exactly "
                "one seed per component",
                cc_mismatch, ws_fail)};
}

// ------------------------------------------------------------------ 5 and 6

constexpr int kSeeds = 3;

struct EndToEnd {
    std::array<std::vector<std::string>, 2> logs;     // [model][seed] serialized epoch log
    std::array<std::vector<std::string>, 2> models;   // [model][seed] model file bytes
    std::array<std::string, 2> reports;               // [model] serialized multi-seed report
    std::array<std::vector<EvalReport>, 2> per_seed;  // [model][seed]
    std::array<EvalReport, 2> combined;
    double seconds = 0.0;
};

EndToEnd run_end_to_end()
{
    const auto t0 = Clock::now();
    SceneConfig scene;
    scene.tile_size = 128;
    scene.seed = 2024;
    scene.count_weights = {0.4, 0.3, 0.2, 0.1};
    SyntheticDataset ds = generate_dataset(scene, 600, SplitFractions{0.6, 0.2, 0.2});
    std::vector<TileRecord> train_tiles, val_tiles, test_tiles;
    for (std::size_t i = 0; i < ds.tiles.size(); ++i)
        (ds.splits[i] == Split::train ? train_tiles : ds.splits[i] == Split::val ? val_tiles : test_tiles)
            .push_back(std::move(ds.tiles[i]));

    EndToEnd out;
    for (int m = 0; m < 2; ++m) {
        const ModelKind kind = m == 0 ? ModelKind::lcfcn : ModelKind::density;
        std::vector<std::vector<ImageEval>> runs;
        for (int s = 0; s < kSeeds; ++s) {
            TrainConfig cfg;
            cfg.model = kind;
            cfg.epochs = 30;
            cfg.batch_size = 8;
            cfg.learning_rate = 1e-4;
            cfg.seed = static_cast<std::uint64_t>(s);
            std::string log;
            TrainHooks hooks;
            hooks.on_epoch = [&](const EpochRecord& r) {
                log += epoch_json(r).dump() + "\n";
                std::fprintf(stderr, "  [%s seed %d] %s\n", to_string(kind), s, epoch_json(r).dump().c_str());
            };
            const TrainResult tr = train(train_tiles, val_tiles, cfg, hooks);
            const auto bytes = encode_params(tr.best);
            out.logs[static_cast<std::size_t>(m)].push_back(log);
            out.models[static_cast<std::size_t>(m)].push_back(std::string(bytes.begin(), bytes.end()));
            runs.push_back(evaluate(tr.best, kind, test_tiles, 4));
            const std::vector<std::vector<ImageEval>> one{runs.back()};
            out.per_seed[static_cast<std::size_t>(m)].push_back(binned_report(one, 4));
        }
        out.combined[static_cast<std::size_t>(m)] = binned_report(runs, 4);
        out.reports[static_cast<std::size_t>(m)] = report_json(out.combined[static_cast<std::size_t>(m)]).dump(2);
        std::fprintf(stderr, "  [%s report] %s\n", to_string(kind), report_json(out.combined[static_cast<std::size_t>(m)]).dump().c_str());
    }
    out.seconds = seconds_since(t0);
    return out;
}

std::optional<EndToEnd> first_run;

const EndToEnd& end_to_end()
{
    if (!first_run)
        first_run = run_end_to_end();
    return *first_run;
}

Outcome criterion_end_to_end()
{
    const EndToEnd& e = end_to_end();
    const EvalReport& lc = e.combined[0];
    const EvalReport& de = e.combined[1];
    const double f_lcfcn = lc.fscore.mean.value_or(0.0);
    const auto few = de.bins[static_cast<std::size_t>(CountBin::few)].mape.mean;
    const bool a = f_lcfcn >= 0.90;
    const bool b = few && *few <= 0.30;

    int crowded_ok = 0, empty_ok = 0, both_ok = 0;
    std::string per_seed;
    for (int s = 0; s < kSeeds; ++s) {
        const auto crowd_l = e.per_seed[0][static_cast<std::size_t>(s)].bins[static_cast<std::size_t>(CountBin::crowded)].mape.mean;
        const auto crowd_d = e.per_seed[1][static_cast<std::size_t>(s)].bins[static_cast<std::size_t>(CountBin::crowded)].mape.mean;
        const double abs_l = e.per_seed[0][static_cast<std::size_t>(s)].absence_fscore.mean.value_or(0.0);
        const double abs_d = e.per_seed[1][static_cast<std::size_t>(s)].absence_fscore.mean.value_or(0.0);
        const bool c1 = crowd_l && crowd_d && *crowd_d <= *crowd_l;
        const bool c2 = abs_l >= abs_d;
        crowded_ok += c1;
        empty_ok += c2;
        both_ok += c1 && c2;
        per_seed += fmt(" seed%d[101+ mape d=%.3f l=%.3f, absence F l=%.3f d=%.3f]", s, crowd_d.value_or(NAN),
                        crowd_l.value_or(NAN), abs_l, abs_d);
    }
    const bool c = both_ok >= 2;
    const bool fast = e.seconds < 1800.0;
    return {a && b && c && fast,
            fmt("(a) lcfcn presence F mean %.3f >= 0.90: %s; (b) density 1-10 MAPE mean %.3f <= 0.30: %s; "
                "(c) trend holds in %d/3 seeds (need 2): %s;",
                f_lcfcn, a ? "ok" : "FAIL", few.value_or(NAN), b ? "ok" : "FAIL", both_ok, c ? "ok" : "FAIL") +
                per_seed + fmt("; runtime %.0f s (target 1800 s)", e.seconds)};
}

Outcome criterion_determinism()
{
    const EndToEnd& a = end_to_end();
    const EndToEnd b = run_end_to_end();
    int log_diff = 0, model_diff = 0, report_diff = 0;
    for (std::size_t m = 0; m < 2; ++m) {
        for (int s = 0; s < kSeeds; ++s) {
            log_diff += a.logs[m][static_cast<std::size_t>(s)] != b.logs[m][static_cast<std::size_t>(s)];
            model_diff += a.models[m][static_cast<std::size_t>(s)] != b.models[m][static_cast<std::size_t>(s)];
        }
        report_diff += a.reports[m] != b.reports[m];
    }
    return {log_diff == 0 && model_diff == 0 && report_diff == 0,
            fmt("rerun with identical seeds: %d/6 training logs, %d/6 model files, %d/2 reports differ", log_diff,
                model_diff, report_diff)};
}

// ------------------------------------------------------------------ 7

Outcome criterion_early_stopping()
{
    SceneConfig scene;
    scene.tile_size = 32;
    scene.seed = 7;
    scene.count_weights = {0.5, 0.5, 0.0, 0.0};
    SyntheticDataset ds = generate_dataset(scene, 10);
    std::vector<TileRecord> tr, va;
    for (std::size_t i = 0; i < ds.tiles.size(); ++i)
        (ds.splits[i] == Split::train ? tr : va).push_back(ds.tiles[i]);

    std::string detail;
    bool ok = true;
    for (int patience : {1, 3, 5}) {
        TrainConfig cfg;
        cfg.epochs = 20;
        cfg.patience = patience;
        cfg.batch_size = 4;
        cfg.stage_channels = {2, 3, 4};
        TrainHooks hooks;
        // Best at epoch 2, then monotonically worse.
        hooks.val_metric_override = [](int epoch, double) { return epoch == 1 ? 5.0 : epoch == 2 ? 1.0 : epoch; };
        const TrainResult r = train(tr, va, cfg, hooks);
        TrainConfig two = cfg;
        two.epochs = 2;
        two.patience = 1;
        const TrainResult ref = train(tr, va, two);
        const bool stop_ok = static_cast<int>(r.log.size()) == 2 + patience;
        const bool best_ok = r.best_epoch == 2 && r.best.values == ref.best.values;
        ok = ok && stop_ok && best_ok;
        detail += fmt("patience %d: stopped at epoch %zu (expect %d), best epoch %d, checkpoint %s; ", patience,
                      r.log.size(), 2 + patience, r.best_epoch, best_ok ? "matches epoch-2 weights" : "WRONG");
    }
    return {ok, detail};
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, criterion_metric_oracles}, {2, criterion_density_conservation}, {3, criterion_gradient_checks},
        {4, criterion_blob_watershed}, {5, criterion_end_to_end},           {6, criterion_determinism},
        {7, criterion_early_stopping}};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i)
        selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& [id, fn] : criteria) {
        if (!selected.empty() && !selected.contains(id))
            continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("CRITERION %d %s: %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
