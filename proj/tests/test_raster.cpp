#include "cownter/io.hpp"
#include "cownter/png_io.hpp"
#include "cownter/raster.hpp"
#include "cownter/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <limits>

using namespace cownter;

namespace {

TileRecord blank_tile(int w = 500, int h = 500)
{
    TileRecord t;
    t.id = "t";
    t.image = Raster(w, h, 3);
    return t;
}

bool has_kind(const std::vector<Violation>& v, ViolationKind k)
{
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == k; });
}

std::filesystem::path temp_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("cownter_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST(ValidateTile, EmptyNoCowIsValid)
{
    TileRecord t = blank_tile();
    t.label = TileLabel::no_cow;
    EXPECT_TRUE(validate_tile(t).empty());
}

TEST(ValidateTile, PointOutsideImage)
{
    TileRecord t = blank_tile();
    t.points = {{600, 10}};
    t.label = TileLabel::cow;
    const auto v = validate_tile(t);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, ViolationKind::point_out_of_bounds);
    EXPECT_NE(v[0].message.find("point out of bounds"), std::string::npos);
}

TEST(ValidateTile, PointsWithNoCowLabel)
{
    TileRecord t = blank_tile();
    t.points = {{1, 1}, {2, 2}, {3, 3}};
    t.label = TileLabel::no_cow;
    const auto v = validate_tile(t);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, ViolationKind::label_mismatch);
    EXPECT_NE(v[0].message.find("label/points mismatch"), std::string::npos);
}

TEST(ValidateTile, WrongSizeAndBadPixels)
{
    TileRecord t = blank_tile(64, 64);
    t.image.data[5] = std::numeric_limits<float>::quiet_NaN();
    const auto v = validate_tile(t);
    EXPECT_TRUE(has_kind(v, ViolationKind::wrong_size));
    EXPECT_TRUE(has_kind(v, ViolationKind::bad_pixels));
}

TEST(ValidateTile, EdgeCoordinatesAreHalfOpen)
{
    TileRecord t = blank_tile();
    t.label = TileLabel::cow;
    t.points = {{0, 0}, {499.999, 499.999}};
    EXPECT_TRUE(validate_tile(t).empty());
    t.points = {{500, 0}};
    EXPECT_TRUE(has_kind(validate_tile(t), ViolationKind::point_out_of_bounds));
    t.points = {{-0.001, 3}};
    EXPECT_TRUE(has_kind(validate_tile(t), ViolationKind::point_out_of_bounds));
}

// Totality: arbitrary garbage yields a report, never an exception.
TEST(ValidateTile, TotalOnMalformedInput)
{
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        TileRecord t;
        t.image.width = static_cast<int>(rng.between(-3, 40));
        t.image.height = static_cast<int>(rng.between(-3, 40));
        t.image.channels = static_cast<int>(rng.between(0, 4));
        t.image.data.resize(static_cast<std::size_t>(rng.below(200)));
        for (float& v : t.image.data)
            v = static_cast<float>(rng.uniform(-2.0, 2.0));
        const auto n = rng.below(5);
        for (std::uint64_t i = 0; i < n; ++i) {
            const double special[] = {std::numeric_limits<double>::quiet_NaN(),
                                      std::numeric_limits<double>::infinity(), -1.0, 1e9};
            t.points.push_back({rng.uniform() < 0.2 ? special[rng.below(4)] : rng.uniform(-10, 50),
                                rng.uniform(-10, 50)});
        }
        t.label = rng.uniform() < 0.5 ? TileLabel::cow : TileLabel::no_cow;
        EXPECT_NO_THROW({ (void)validate_tile(t, 32, 32); });
    }
}

TEST(NormalizeIngest, EightBitEndpoints)
{
    const std::vector<std::uint16_t> raw{0, 255};
    const Raster r = normalize_ingest(raw, 2, 1, 1, 8);
    EXPECT_EQ(r.data[0], 0.0f);
    EXPECT_EQ(r.data[1], 1.0f);
}

TEST(NormalizeIngest, SixteenBitMidpoint)
{
    const std::vector<std::uint16_t> raw{32767};
    const Raster r = normalize_ingest(raw, 1, 1, 1, 16);
    EXPECT_NEAR(r.data[0], 32767.0 / 65535.0, 1e-7);
    EXPECT_NEAR(r.data[0], 0.49999, 1e-5);
}

TEST(NormalizeIngest, RejectsBadDepthAndBands)
{
    const std::vector<std::uint16_t> raw(8, 0);
    EXPECT_THROW(normalize_ingest(raw, 1, 1, 8, 8), DataError);
    EXPECT_THROW(normalize_ingest(std::span(raw).first(1), 1, 1, 1, 12), DataError);
    EXPECT_THROW(normalize_ingest(std::span(raw).first(3), 1, 1, 1, 8), DataError);
    const std::vector<std::uint16_t> big{256};
    EXPECT_THROW(normalize_ingest(big, 1, 1, 1, 8), DataError);
}

// Monotone and injective over the whole integer range.
TEST(NormalizeIngest, MonotoneBijectiveGrid)
{
    for (int bits : {8, 16}) {
        const int n = 1 << bits;
        std::vector<std::uint16_t> raw(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            raw[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(i);
        const Raster r = normalize_ingest(raw, n, 1, 1, bits);
        EXPECT_EQ(r.data.front(), 0.0f);
        EXPECT_EQ(r.data.back(), 1.0f);
        for (int i = 1; i < n; ++i)
            ASSERT_LT(r.data[static_cast<std::size_t>(i - 1)], r.data[static_cast<std::size_t>(i)]) << bits << " " << i;
    }
}

TEST(Raster, RejectsEightBands) { EXPECT_THROW(Raster(4, 4, 8), DataError); }

TEST(Raster, PixelOfPointIsFloor)
{
    EXPECT_EQ(pixel_col({3.99, 0}), 3);
    EXPECT_EQ(pixel_row({0, 4.0}), 4);
}

TEST(ReflectIndex, MirrorsWithoutEdgeRepeat)
{
    EXPECT_EQ(reflect_index(-1, 5), 1);
    EXPECT_EQ(reflect_index(5, 5), 3);
    EXPECT_EQ(reflect_index(8, 5), 0);
    EXPECT_EQ(reflect_index(9, 5), 1);
    EXPECT_EQ(reflect_index(7, 1), 0);
}

TEST(Png, RoundTripOnQuantisedGrid)
{
    Rng rng(3);
    for (int c : {1, 3}) {
        Raster r(17, 9, c);
        for (float& v : r.data)
            v = static_cast<float>(rng.below(256)) / 255.0f;
        const auto bytes = encode_png(r);
        const Raster back = decode_png(bytes.data(), bytes.size());
        EXPECT_EQ(back.width, 17);
        EXPECT_EQ(back.height, 9);
        EXPECT_EQ(back.channels, c);
        for (std::size_t i = 0; i < r.data.size(); ++i)
            ASSERT_EQ(back.data[i], r.data[i]);
    }
}

TEST(Png, CorruptStreamsRaiseFormatError)
{
    Raster r(8, 8, 3, 0.5f);
    auto bytes = encode_png(r);
    std::vector<std::uint8_t> junk{1, 2, 3};
    EXPECT_THROW(decode_png(junk.data(), junk.size()), FormatError);
    bytes.resize(bytes.size() / 2);
    EXPECT_THROW(decode_png(bytes.data(), bytes.size()), FormatError);
}

TEST(Io, AtomicWriteReplacesAndLeavesNoTemp)
{
    const auto dir = temp_dir("atomic");
    const auto path = dir / "f.txt";
    write_file_atomic(path, std::string("old"));
    write_file_atomic(path, std::string("new contents"));
    const auto bytes = read_file_bytes(path);
    EXPECT_EQ(std::string(bytes.begin(), bytes.end()), "new contents");
    int files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir))
        ++files;
    EXPECT_EQ(files, 1);
}

TEST(Io, MissingFileIsDataError) { EXPECT_THROW(read_file_bytes("/nonexistent/cownter/x"), DataError); }
