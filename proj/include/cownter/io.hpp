#pragma once

#include "cownter/error.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cownter {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace detail

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    detail::FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f)
        throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes;
    std::uint8_t chunk[1 << 16];
    std::size_t n;
    while ((n = std::fread(chunk, 1, sizeof chunk, f.get())) > 0)
        bytes.insert(bytes.end(), chunk, chunk + n);
    if (std::ferror(f.get()))
        throw DataError("read error on " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    detail::FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f)
        throw DataError("cannot write " + path.string());
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw DataError("short write to " + path.string());
}

/// Replace `path` through a synced temporary file and rename(2): readers see
/// either the old contents or the new ones, never a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    static std::atomic<unsigned> counter{0};
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
    {
        detail::FilePtr f(std::fopen(tmp.string().c_str(), "wb"));
        if (!f)
            throw DataError("cannot write " + tmp.string());
        const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f.get()) == bytes.size() &&
                        std::fflush(f.get()) == 0 && ::fsync(::fileno(f.get())) == 0;
        if (!ok) {
            f.reset();
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw DataError("short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignored;
        std::filesystem::remove(tmp, ignored);
        throw DataError("cannot replace " + path.string() + ": " + ec.message());
    }
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text)
{
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace cownter
