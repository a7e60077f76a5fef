#pragma once

#include "cownter/error.hpp"
#include "cownter/io.hpp"
#include "cownter/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace cownter {

namespace detail {

// libpng is C: errors must leave through png_longjmp, never through a C++ throw.
struct PngErrorSlot {
    char message[256] = {};
};

[[noreturn]] inline void png_error_handler(png_structp png, png_const_charp msg)
{
    auto* slot = static_cast<PngErrorSlot*>(png_get_error_ptr(png));
    if (slot)
        std::snprintf(slot->message, sizeof slot->message, "%s", msg);
    png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t length)
{
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

inline void png_flush_noop(png_structp) {}

struct PngReadSource {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t offset;
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t length)
{
    auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
    if (src->offset + length > src->size)
        png_error(png, "truncated stream");
    std::memcpy(out, src->data + src->offset, length);
    src->offset += length;
}

inline std::uint8_t quantize8(float v)
{
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

} // namespace detail

namespace detail {

// The libpng calls that may longjmp live in these non-inlined bodies. They own
// no objects with destructors; buffers belong to the caller's frame, which
// declares them before setjmp.

[[gnu::noinline]] inline void encode_body(png_structp png, png_infop info, const Raster& img,
                                          std::vector<std::uint8_t>& out, std::vector<std::uint8_t>& row)
{
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        const float* src = img.data.data() + img.index(0, y);
        std::transform(src, src + row.size(), row.begin(), quantize8);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
}

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    int depth = 0;
    std::vector<std::uint8_t> buffer;
    std::vector<png_bytep> rows;
};

[[gnu::noinline]] inline void decode_body(png_structp png, png_infop info, PngReadSource& src, DecodedPng& out)
{
    png_set_read_fn(png, &src, png_read_from_memory);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA)
        png_set_strip_alpha(png);
    if (bit_depth == 16)
        png_set_swap(png);
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.depth = png_get_bit_depth(png, info);
    if (out.channels != 1 && out.channels != 3)
        return;

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    out.buffer.resize(rowbytes * static_cast<std::size_t>(out.height));
    out.rows.resize(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y)
        out.rows[static_cast<std::size_t>(y)] = out.buffer.data() + rowbytes * static_cast<std::size_t>(y);
    png_read_image(png, out.rows.data());
    png_read_end(png, nullptr);
}

} // namespace detail

/// Encode as 8-bit grayscale or RGB PNG. Values are rounded to the nearest 1/255.
inline std::vector<std::uint8_t> encode_png(const Raster& img)
{
    if (img.channels != 1 && img.channels != 3)
        throw DataError("png encoding supports 1 or 3 channels");
    std::vector<std::uint8_t> out;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * img.channels);
    detail::PngErrorSlot err;
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_handler, detail::png_warning_handler);
    if (!png)
        throw FormatError("png: cannot allocate write struct");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};
    if (setjmp(png_jmpbuf(png)))
        throw FormatError(std::string("png: ") + err.message);
    detail::encode_body(png, info, img, out, row);
    return out;
}

/// Decode a PNG into a [0,1] raster. Palette and alpha are flattened away; 16-bit
/// samples are scaled by 1/65535.
inline Raster decode_png(const std::uint8_t* bytes, std::size_t size)
{
    if (size < 8 || png_sig_cmp(bytes, 0, 8) != 0)
        throw FormatError("png: bad signature");
    detail::PngErrorSlot err;
    detail::DecodedPng d;
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_handler, detail::png_warning_handler);
    if (!png)
        throw FormatError("png: cannot allocate read struct");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};
    detail::PngReadSource src{bytes, size, 0};
    if (setjmp(png_jmpbuf(png)))
        throw FormatError(std::string("png: ") + err.message);
    detail::decode_body(png, info, src, d);
    if (d.channels != 1 && d.channels != 3)
        throw DataError("png: unsupported channel count " + std::to_string(d.channels));

    std::vector<std::uint16_t> samples(static_cast<std::size_t>(d.width) * d.height * d.channels);
    if (d.depth == 16) {
        for (std::size_t i = 0; i < samples.size(); ++i)
            std::memcpy(&samples[i], d.buffer.data() + 2 * i, 2);
    } else {
        std::copy(d.buffer.begin(), d.buffer.begin() + static_cast<std::ptrdiff_t>(samples.size()), samples.begin());
    }
    return normalize_ingest(samples, d.width, d.height, d.channels, d.depth == 16 ? 16 : 8);
}

inline Raster read_png(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    return decode_png(bytes.data(), bytes.size());
}

inline void write_png(const std::filesystem::path& path, const Raster& img)
{
    write_file_bytes(path, encode_png(img));
}

} // namespace cownter
