#pragma once

// A small FCN8-style network: three conv+ReLU+maxpool stages (strides 2, 4, 8),
// 1x1 score layers on the stride-4 and stride-8 features, bilinear x2 fusion at
// stride 4, and bilinear x4 upsampling back to the input grid.
//
// Everything is templated on the scalar so the same code runs in float for
// training and in double for gradient checks.

#include "cownter/density.hpp"
#include "cownter/error.hpp"
#include "cownter/io.hpp"
#include "cownter/raster.hpp"
#include "cownter/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cownter {

enum class Head { detection, density };

inline const char* to_string(Head h) { return h == Head::detection ? "detection" : "density"; }

inline constexpr int kStages = 3;
inline constexpr int kInputMultiple = 8; // 2^kStages

/// The density head emits kDensityHeadScale * max(0, z). Peak target densities are
/// ~0.04 per pixel at sigma 2, so the score z operates on an O(1) scale.
inline constexpr double kDensityHeadScale = 0.01;

struct ArchConfig {
    int in_channels = 3;
    std::array<int, kStages> stage_channels{16, 32, 64};
    Head head = Head::detection;

    void validate() const
    {
        if (in_channels != 1 && in_channels != 3)
            throw DataError("in_channels must be 1 or 3");
        for (int c : stage_channels)
            if (c < 1)
                throw DataError("stage channels must be positive");
    }

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct ParamSlice {
    std::string name;
    std::size_t offset;
    std::size_t size;
    int fan_in;  // 0 for biases
    int fan_out;
};

/// Named slices in declaration order. Conv kernels are laid out [out][in][3][3].
inline std::vector<ParamSlice> param_layout(const ArchConfig& arch)
{
    arch.validate();
    std::vector<ParamSlice> out;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::size_t size, int fan_in, int fan_out) {
        out.push_back({std::move(name), offset, size, fan_in, fan_out});
        offset += size;
    };
    int in = arch.in_channels;
    for (int s = 0; s < kStages; ++s) {
        const int c = arch.stage_channels[static_cast<std::size_t>(s)];
        const std::string prefix = "conv" + std::to_string(s + 1);
        add(prefix + ".weight", static_cast<std::size_t>(c) * in * 9, in * 9, c * 9);
        add(prefix + ".bias", static_cast<std::size_t>(c), 0, 0);
        in = c;
    }
    const int c4 = arch.stage_channels[1];
    const int c8 = arch.stage_channels[2];
    add("score4.weight", static_cast<std::size_t>(c4), c4, 1);
    add("score4.bias", 1, 0, 0);
    add("score8.weight", static_cast<std::size_t>(c8), c8, 1);
    add("score8.bias", 1, 0, 0);
    return out;
}

inline std::size_t param_count(const ArchConfig& arch)
{
    const auto layout = param_layout(arch);
    return layout.back().offset + layout.back().size;
}

inline constexpr std::uint32_t kModelFormatVersion = 1;

template <typename T>
struct ModelParams {
    ArchConfig arch;
    std::vector<T> values;
    std::uint32_t version = kModelFormatVersion;

    std::span<T> slice(std::size_t i) { return slice_of(values, i); }
    std::span<const T> slice(std::size_t i) const { return slice_of(values, i); }

    template <typename U>
    ModelParams<U> cast() const
    {
        ModelParams<U> out;
        out.arch = arch;
        out.version = version;
        out.values.assign(values.begin(), values.end());
        return out;
    }

private:
    template <typename Vec>
    auto slice_of(Vec& v, std::size_t i) const
    {
        const auto layout = param_layout(arch);
        return std::span(v).subspan(layout.at(i).offset, layout.at(i).size);
    }
};

enum class InitScheme { xavier };

/// Xavier-uniform weights, U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); zero biases.
template <typename T>
ModelParams<T> init_params(const ArchConfig& arch, std::uint64_t seed, InitScheme scheme = InitScheme::xavier)
{
    (void)scheme;
    ModelParams<T> p;
    p.arch = arch;
    p.values.assign(param_count(arch), T(0));
    const auto layout = param_layout(arch);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const ParamSlice& s = layout[i];
        if (s.fan_in == 0)
            continue;
        Rng rng(derive_seed(seed, i, 0x1417ULL));
        const double bound = std::sqrt(6.0 / (s.fan_in + s.fan_out));
        // Score features are post-ReLU, so a density head with mixed-sign score
        // weights can start with z < 0 on every pixel and never receive gradient.
        // Its score weights keep the Xavier magnitude but start non-negative.
        const bool fold = arch.head == Head::density && s.name.starts_with("score");
        for (std::size_t k = 0; k < s.size; ++k) {
            const double w = rng.uniform(-bound, bound);
            p.values[s.offset + k] = static_cast<T>(fold ? std::abs(w) : w);
        }
    }
    return p;
}

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

/// 3x3 'same' patches: row (ci*9 + ky*3 + kx), column (y*w + x); zero outside.
template <typename T>
void im2col(std::span<const T> in, int channels, int h, int w, std::vector<T>& cols)
{
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    cols.assign(static_cast<std::size_t>(channels) * 9 * hw, T(0));
    for (int c = 0; c < channels; ++c) {
        const T* plane = in.data() + static_cast<std::size_t>(c) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
                const int dx = kx - 1;
                const int dy = ky - 1;
                const int x0 = std::max(0, -dx);
                const int x1 = std::min(w, w - dx);
                for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
                    const T* src = plane + static_cast<std::size_t>(y + dy) * w + dx;
                    T* dst = row + static_cast<std::size_t>(y) * w;
                    for (int x = x0; x < x1; ++x)
                        dst[x] = src[x];
                }
            }
        }
    }
}

/// Transpose of im2col: scatter-add patch gradients back onto the input planes.
template <typename T>
void col2im(std::span<const T> cols, int channels, int h, int w, std::vector<T>& out)
{
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    out.assign(static_cast<std::size_t>(channels) * hw, T(0));
    for (int c = 0; c < channels; ++c) {
        T* plane = out.data() + static_cast<std::size_t>(c) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
                const int dx = kx - 1;
                const int dy = ky - 1;
                const int x0 = std::max(0, -dx);
                const int x1 = std::min(w, w - dx);
                for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
                    T* dst = plane + static_cast<std::size_t>(y + dy) * w + dx;
                    const T* src = row + static_cast<std::size_t>(y) * w;
                    for (int x = x0; x < x1; ++x)
                        dst[x] += src[x];
                }
            }
        }
    }
}

/// Source taps of a fixed bilinear upsampler (half-pixel centres, clamped edges).
struct Tap {
    int i0;
    int i1;
    double w1; // weight of i1; i0 gets 1 - w1
};

inline std::vector<Tap> bilinear_taps(int src_n, int factor)
{
    std::vector<Tap> taps(static_cast<std::size_t>(src_n) * factor);
    for (std::size_t i = 0; i < taps.size(); ++i) {
        const double u = std::clamp((static_cast<double>(i) + 0.5) / factor - 0.5, 0.0, src_n - 1.0);
        const int i0 = static_cast<int>(std::floor(u));
        const int i1 = std::min(i0 + 1, src_n - 1);
        taps[i] = {i0, i1, u - i0};
    }
    return taps;
}

template <typename T>
void upsample(std::span<const T> in, int h, int w, int factor, std::vector<T>& out)
{
    const auto ty = bilinear_taps(h, factor);
    const auto tx = bilinear_taps(w, factor);
    const int ow = w * factor;
    out.assign(ty.size() * tx.size(), T(0));
    for (std::size_t y = 0; y < ty.size(); ++y) {
        const T* r0 = in.data() + static_cast<std::size_t>(ty[y].i0) * w;
        const T* r1 = in.data() + static_cast<std::size_t>(ty[y].i1) * w;
        const T wy = static_cast<T>(ty[y].w1);
        for (std::size_t x = 0; x < tx.size(); ++x) {
            const T wx = static_cast<T>(tx[x].w1);
            const T a = r0[tx[x].i0] + (r0[tx[x].i1] - r0[tx[x].i0]) * wx;
            const T b = r1[tx[x].i0] + (r1[tx[x].i1] - r1[tx[x].i0]) * wx;
            out[y * static_cast<std::size_t>(ow) + x] = a + (b - a) * wy;
        }
    }
}

/// Adjoint of upsample.
template <typename T>
void upsample_backward(std::span<const T> grad_out, int h, int w, int factor, std::vector<T>& grad_in)
{
    const auto ty = bilinear_taps(h, factor);
    const auto tx = bilinear_taps(w, factor);
    const int ow = w * factor;
    grad_in.assign(static_cast<std::size_t>(h) * w, T(0));
    for (std::size_t y = 0; y < ty.size(); ++y) {
        T* r0 = grad_in.data() + static_cast<std::size_t>(ty[y].i0) * w;
        T* r1 = grad_in.data() + static_cast<std::size_t>(ty[y].i1) * w;
        const T wy = static_cast<T>(ty[y].w1);
        for (std::size_t x = 0; x < tx.size(); ++x) {
            const T g = grad_out[y * static_cast<std::size_t>(ow) + x];
            const T wx = static_cast<T>(tx[x].w1);
            const T ga = g * (T(1) - wy);
            const T gb = g * wy;
            r0[tx[x].i0] += ga * (T(1) - wx);
            r0[tx[x].i1] += ga * wx;
            r1[tx[x].i0] += gb * (T(1) - wx);
            r1[tx[x].i1] += gb * wx;
        }
    }
}

} // namespace detail

/// Activations kept from a forward pass for the matching backward pass.
template <typename T>
struct ForwardCache {
    ArchConfig arch;
    int height = 0;
    int width = 0;
    std::array<std::vector<T>, kStages> cols;      // im2col of each stage input
    std::array<std::vector<T>, kStages> activated; // conv + ReLU output
    std::array<std::vector<int>, kStages> argmax;  // pool routing into `activated`
    std::array<std::vector<T>, kStages> pooled;    // stage outputs (strides 2, 4, 8)
    std::vector<T> pre;                            // fused score at full resolution
    std::vector<T> output;                         // head(pre), height x width
};

/// Network input: channel-interleaved raster to planar [c][y][x], shifted from
/// [0,1] to [-0.5,0.5].
template <typename T>
std::vector<T> to_planar(const Raster& img)
{
    std::vector<T> out(static_cast<std::size_t>(img.channels) * img.pixel_count());
    const std::size_t hw = img.pixel_count();
    for (std::size_t p = 0; p < hw; ++p)
        for (int c = 0; c < img.channels; ++c)
            out[static_cast<std::size_t>(c) * hw + p] = static_cast<T>(img.data[p * img.channels + c]) - T(0.5);
    return out;
}

/// Forward pass on one planar image. Height and width must be multiples of 8.
template <typename T>
void forward(const ModelParams<T>& params, std::span<const T> planar, int height, int width, ForwardCache<T>& cache)
{
    using namespace detail;
    const ArchConfig& arch = params.arch;
    if (height % kInputMultiple != 0 || width % kInputMultiple != 0 || height <= 0 || width <= 0)
        throw DataError("network input " + std::to_string(width) + "x" + std::to_string(height) +
                        " is not a positive multiple of 8");
    if (planar.size() != static_cast<std::size_t>(arch.in_channels) * height * width)
        throw DataError("network input has wrong channel count");
    if (params.values.size() != param_count(arch))
        throw DataError("parameter vector does not match architecture");
    const auto layout = param_layout(arch);
    cache.arch = arch;
    cache.height = height;
    cache.width = width;

    std::span<const T> in = planar;
    int in_c = arch.in_channels;
    int h = height;
    int w = width;
    for (int s = 0; s < kStages; ++s) {
        const auto su = static_cast<std::size_t>(s);
        const int out_c = arch.stage_channels[su];
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        im2col(in, in_c, h, w, cache.cols[su]);
        auto& act = cache.activated[su];
        act.resize(static_cast<std::size_t>(out_c) * hw);
        const ParamSlice& wk = layout[2 * su];
        const ParamSlice& bk = layout[2 * su + 1];
        ConstMapMat<T> kernel(params.values.data() + wk.offset, out_c, in_c * 9);
        ConstMapMat<T> cols(cache.cols[su].data(), in_c * 9, static_cast<Eigen::Index>(hw));
        MapMat<T> out(act.data(), out_c, static_cast<Eigen::Index>(hw));
        out.noalias() = kernel * cols;
        for (int c = 0; c < out_c; ++c) {
            const T b = params.values[bk.offset + static_cast<std::size_t>(c)];
            T* row = act.data() + static_cast<std::size_t>(c) * hw;
            for (std::size_t p = 0; p < hw; ++p)
                row[p] = std::max(row[p] + b, T(0));
        }

        const int ph = h / 2;
        const int pw = w / 2;
        auto& pooled = cache.pooled[su];
        auto& arg = cache.argmax[su];
        pooled.resize(static_cast<std::size_t>(out_c) * ph * pw);
        arg.resize(pooled.size());
        for (int c = 0; c < out_c; ++c) {
            const T* plane = act.data() + static_cast<std::size_t>(c) * hw;
            for (int y = 0; y < ph; ++y) {
                for (int x = 0; x < pw; ++x) {
                    int best = (2 * y) * w + 2 * x;
                    const int cand[3] = {best + 1, best + w, best + w + 1};
                    for (int k : cand)
                        if (plane[k] > plane[best])
                            best = k;
                    const std::size_t o = (static_cast<std::size_t>(c) * ph + y) * pw + x;
                    pooled[o] = plane[best];
                    arg[o] = static_cast<int>(static_cast<std::size_t>(c) * hw) + best;
                }
            }
        }
        in = pooled;
        in_c = out_c;
        h = ph;
        w = pw;
    }

    // Scores: 1x1 convolutions on stride-4 and stride-8 features.
    auto score = [&](int stage, std::size_t weight_slice, int sh, int sw) {
        const auto su = static_cast<std::size_t>(stage);
        const int c = arch.stage_channels[su];
        const std::size_t hw = static_cast<std::size_t>(sh) * sw;
        const ParamSlice& ws = layout[weight_slice];
        const T bias = params.values[layout[weight_slice + 1].offset];
        std::vector<T> out(hw, bias);
        for (int k = 0; k < c; ++k) {
            const T wk = params.values[ws.offset + static_cast<std::size_t>(k)];
            const T* f = cache.pooled[su].data() + static_cast<std::size_t>(k) * hw;
            for (std::size_t p = 0; p < hw; ++p)
                out[p] += wk * f[p];
        }
        return out;
    };
    const int h4 = height / 4, w4 = width / 4, h8 = height / 8, w8 = width / 8;
    std::vector<T> fused = score(1, 2 * kStages, h4, w4);
    const std::vector<T> s8 = score(2, 2 * kStages + 2, h8, w8);
    std::vector<T> up8;
    upsample<T>(s8, h8, w8, 2, up8);
    for (std::size_t i = 0; i < fused.size(); ++i)
        fused[i] += up8[i];
    upsample<T>(fused, h4, w4, 4, cache.pre);

    cache.output.resize(cache.pre.size());
    for (std::size_t i = 0; i < cache.pre.size(); ++i) {
        const T z = cache.pre[i];
        cache.output[i] = arch.head == Head::detection ? T(1) / (T(1) + std::exp(-z))
                                                       : static_cast<T>(kDensityHeadScale) * std::max(z, T(0));
    }
}

/// Reverse pass: adds d loss / d params into `grad` (same layout as params.values).
template <typename T>
void backward(const ModelParams<T>& params, const ForwardCache<T>& cache, std::span<const T> grad_output,
              std::span<T> grad)
{
    using namespace detail;
    const ArchConfig& arch = params.arch;
    if (!(cache.arch == arch) || cache.output.size() != grad_output.size() || cache.output.empty())
        throw DataError("forward cache does not match this backward call");
    if (grad.size() != params.values.size())
        throw DataError("gradient buffer does not match parameters");
    const auto layout = param_layout(arch);
    const int height = cache.height, width = cache.width;
    const int h4 = height / 4, w4 = width / 4, h8 = height / 8, w8 = width / 8;

    std::vector<T> d_pre(grad_output.size());
    for (std::size_t i = 0; i < d_pre.size(); ++i) {
        const T y = cache.output[i];
        d_pre[i] = arch.head == Head::detection ? grad_output[i] * y * (T(1) - y)
                                                : (cache.pre[i] > T(0) ? static_cast<T>(kDensityHeadScale) * grad_output[i] : T(0));
    }
    std::vector<T> d_fused;
    upsample_backward<T>(d_pre, h4, w4, 4, d_fused);
    std::vector<T> d_s8;
    upsample_backward<T>(d_fused, h8, w8, 2, d_s8);

    // Score layers: gradients into their weights and back onto the pooled features.
    std::array<std::vector<T>, kStages> d_pooled;
    auto score_backward = [&](int stage, std::size_t weight_slice, const std::vector<T>& d_score) {
        const auto su = static_cast<std::size_t>(stage);
        const int c = arch.stage_channels[su];
        const std::size_t hw = d_score.size();
        const ParamSlice& ws = layout[weight_slice];
        T db = T(0);
        for (T g : d_score)
            db += g;
        grad[layout[weight_slice + 1].offset] += db;
        d_pooled[su].assign(static_cast<std::size_t>(c) * hw, T(0));
        for (int k = 0; k < c; ++k) {
            const T* f = cache.pooled[su].data() + static_cast<std::size_t>(k) * hw;
            const T wk = params.values[ws.offset + static_cast<std::size_t>(k)];
            T* df = d_pooled[su].data() + static_cast<std::size_t>(k) * hw;
            T dw = T(0);
            for (std::size_t p = 0; p < hw; ++p) {
                dw += d_score[p] * f[p];
                df[p] = d_score[p] * wk;
            }
            grad[ws.offset + static_cast<std::size_t>(k)] += dw;
        }
    };
    score_backward(1, 2 * kStages, d_fused);
    score_backward(2, 2 * kStages + 2, d_s8);
    d_pooled[0].assign(cache.pooled[0].size(), T(0));

    std::vector<T> d_act;
    std::vector<T> d_cols;
    std::vector<T> d_in;
    for (int s = kStages - 1; s >= 0; --s) {
        const auto su = static_cast<std::size_t>(s);
        const int out_c = arch.stage_channels[su];
        const int in_c = s == 0 ? arch.in_channels : arch.stage_channels[su - 1];
        const int h = height >> s;
        const int w = width >> s;
        const std::size_t hw = static_cast<std::size_t>(h) * w;

        // Pool routing, then the ReLU mask.
        d_act.assign(cache.activated[su].size(), T(0));
        const auto& arg = cache.argmax[su];
        for (std::size_t o = 0; o < arg.size(); ++o)
            d_act[static_cast<std::size_t>(arg[o])] += d_pooled[su][o];
        for (std::size_t i = 0; i < d_act.size(); ++i)
            if (!(cache.activated[su][i] > T(0)))
                d_act[i] = T(0);

        const ParamSlice& wk = layout[2 * su];
        const ParamSlice& bk = layout[2 * su + 1];
        ConstMapMat<T> dout(d_act.data(), out_c, static_cast<Eigen::Index>(hw));
        ConstMapMat<T> cols(cache.cols[su].data(), in_c * 9, static_cast<Eigen::Index>(hw));
        MapMat<T> dkernel(grad.data() + wk.offset, out_c, in_c * 9);
        dkernel.noalias() += dout * cols.transpose();
        for (int c = 0; c < out_c; ++c) {
            const T* row = d_act.data() + static_cast<std::size_t>(c) * hw;
            T db = T(0);
            for (std::size_t p = 0; p < hw; ++p)
                db += row[p];
            grad[bk.offset + static_cast<std::size_t>(c)] += db;
        }
        if (s == 0)
            break;
        ConstMapMat<T> kernel(params.values.data() + wk.offset, out_c, in_c * 9);
        d_cols.resize(static_cast<std::size_t>(in_c) * 9 * hw);
        MapMat<T> dcols(d_cols.data(), in_c * 9, static_cast<Eigen::Index>(hw));
        dcols.noalias() = kernel.transpose() * dout;
        col2im<T>(d_cols, in_c, h, w, d_in);
        auto& target = d_pooled[su - 1];
        for (std::size_t i = 0; i < d_in.size(); ++i)
            target[i] += d_in[i];
    }
}

/// Reflect-pad a raster up to the next multiple of 8 in each dimension.
inline Raster pad_to_network(const Raster& img)
{
    const int w = (img.width + kInputMultiple - 1) / kInputMultiple * kInputMultiple;
    const int h = (img.height + kInputMultiple - 1) / kInputMultiple * kInputMultiple;
    if (w == img.width && h == img.height)
        return img;
    return crop_reflect(img, 0, 0, w, h);
}

/// Run the network on a raster of any size, returning the output cropped to the
/// raster's own width x height.
template <typename T>
std::vector<T> predict_map(const ModelParams<T>& params, const Raster& img)
{
    const Raster padded = pad_to_network(img);
    const auto planar = to_planar<T>(padded);
    ForwardCache<T> cache;
    forward<T>(params, planar, padded.height, padded.width, cache);
    if (padded.width == img.width && padded.height == img.height)
        return std::move(cache.output);
    std::vector<T> out(img.pixel_count());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out[static_cast<std::size_t>(y) * img.width + x] =
                cache.output[static_cast<std::size_t>(y) * padded.width + x];
    return out;
}

// Model file: "CWTR", u32 version, u32 in_channels, u32 stage count, u32 per stage,
// u32 head (0 detection, 1 density), then float32 LE parameters in slice order.

inline std::vector<std::uint8_t> encode_params(const ModelParams<float>& params)
{
    if (params.values.size() != param_count(params.arch))
        throw DataError("parameter vector does not match architecture");
    std::vector<std::uint8_t> out{'C', 'W', 'T', 'R'};
    detail::put_le<std::uint32_t>(out, kModelFormatVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.arch.in_channels));
    detail::put_le<std::uint32_t>(out, kStages);
    for (int c : params.arch.stage_channels)
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c));
    detail::put_le<std::uint32_t>(out, params.arch.head == Head::detection ? 0u : 1u);
    for (float v : params.values)
        detail::put_le(out, v);
    return out;
}

inline ModelParams<float> decode_params(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "CWTR", 4) != 0)
        throw FormatError("not a model file (bad magic)");
    std::size_t offset = 4;
    const auto version = detail::get_le<std::uint32_t>(bytes, offset);
    if (version != kModelFormatVersion)
        throw FormatError("model file version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kModelFormatVersion) + ")");
    ModelParams<float> p;
    p.arch.in_channels = static_cast<int>(detail::get_le<std::uint32_t>(bytes, offset));
    const auto stages = detail::get_le<std::uint32_t>(bytes, offset);
    if (stages != kStages)
        throw FormatError("model file has " + std::to_string(stages) + " stages, expected 3");
    for (int& c : p.arch.stage_channels) {
        c = static_cast<int>(detail::get_le<std::uint32_t>(bytes, offset));
        if (c < 1 || c > 4096)
            throw FormatError("model file has an invalid stage width");
    }
    const auto head = detail::get_le<std::uint32_t>(bytes, offset);
    if (head > 1)
        throw FormatError("model file has an unknown head type");
    p.arch.head = head == 0 ? Head::detection : Head::density;
    if (p.arch.in_channels != 1 && p.arch.in_channels != 3)
        throw FormatError("model file has an invalid input channel count");
    p.values.resize(param_count(p.arch));
    if (bytes.size() - offset < p.values.size() * sizeof(float))
        throw FormatError("model file is truncated");
    for (float& v : p.values)
        v = detail::get_le<float>(bytes, offset);
    if (offset != bytes.size())
        throw FormatError("model file has trailing bytes");
    return p;
}

inline void save_params(const std::filesystem::path& path, const ModelParams<float>& params)
{
    write_file_atomic(path, encode_params(params));
}

inline ModelParams<float> load_params(const std::filesystem::path& path)
{
    return decode_params(read_file_bytes(path));
}

} // namespace cownter
