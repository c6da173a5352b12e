#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "svd/container.hpp"
#include "svd/errors.hpp"
#include "svd/events.hpp"
#include "test_util.hpp"

using namespace svd;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const char* name) {
    return fs::temp_directory_path() / name;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& data) {
    std::ofstream out(p, std::ios::binary);
    out.write(data.data(), std::streamsize(data.size()));
}

} // namespace

TEST_CASE("container round-trip is bitwise") {
    std::mt19937_64 rng(5);
    const auto path = tmp_file("svx_roundtrip.svx");
    for (int trial = 0; trial < 25; ++trial) {
        auto t = testutil::random_tensor(rng, {2, 4, 16, 16}, 1 + int(rng() % 6), 40);
        write_container(t, path.string());
        auto back = read_container(path.string());
        CHECK(back.shape() == t.shape());
        CHECK(back.channels() == t.channels());
        CHECK(back.coords() == t.coords());
        CHECK(back.features() == t.features());
    }
    fs::remove(path);
}

TEST_CASE("corrupted magic raises bad-magic error") {
    std::mt19937_64 rng(6);
    auto t = testutil::random_tensor(rng, {1, 4, 8, 8}, 2, 10);
    const auto path = tmp_file("svx_badmagic.svx");
    write_container(t, path.string());
    auto data = slurp(path);
    data[0] = 'X';
    spit(path, data);
    try {
        read_container(path.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::BadMagic);
    }
    fs::remove(path);
}

TEST_CASE("truncation raises truncation error") {
    std::mt19937_64 rng(7);
    SparseTensor3D t({1, 4, 8, 8}, 3, {{0, 1, 2, 3}, {0, 2, 3, 4}},
                     {1, 2, 3, 4, 5, 6});
    const auto path = tmp_file("svx_trunc.svx");
    write_container(t, path.string());
    auto data = slurp(path);
    data.resize(data.size() - 10); // cut mid-features
    spit(path, data);
    try {
        read_container(path.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        // A shortened file fails either the CRC or the size bookkeeping.
        CHECK((e.kind() == FormatError::Kind::Truncated ||
               e.kind() == FormatError::Kind::ChecksumMismatch));
    }
    fs::remove(path);
}

TEST_CASE("payload bit-flip raises checksum error") {
    std::mt19937_64 rng(8);
    auto t = testutil::random_tensor(rng, {1, 4, 8, 8}, 2, 10);
    const auto path = tmp_file("svx_crc.svx");
    write_container(t, path.string());
    auto data = slurp(path);
    data[data.size() / 2] ^= 0x40;
    spit(path, data);
    try {
        read_container(path.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::ChecksumMismatch);
    }
    fs::remove(path);
}

TEST_CASE("version mismatch is named") {
    std::mt19937_64 rng(9);
    auto t = testutil::random_tensor(rng, {1, 4, 8, 8}, 2, 5);
    const auto path = tmp_file("svx_ver.svx");
    write_container(t, path.string());
    auto data = slurp(path);
    data[4] = 99; // bump the version byte, then refresh the CRC trailer
    const uint32_t crc = uint32_t(crc32(
        0, reinterpret_cast<const Bytef*>(data.data() + 4), uInt(data.size() - 8)));
    std::memcpy(data.data() + data.size() - 4, &crc, 4);
    spit(path, data);
    try {
        read_container(path.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::VersionMismatch);
    }
    fs::remove(path);
}

TEST_CASE("event CSV and binary round-trips") {
    EventStream s;
    s.sensor_shape = {480, 640};
    s.events = {{0, 1, 2, 1}, {500, 3, 4, -1}, {33000, 639, 479, 1}};
    const auto csv = tmp_file("events.csv");
    const auto bin = tmp_file("events.evt");
    write_events_csv(s, csv.string());
    write_events_binary(s, bin.string());
    auto from_csv = read_events_csv(csv.string(), s.sensor_shape);
    auto from_bin = read_events_binary(bin.string(), s.sensor_shape);
    REQUIRE(from_csv.events.size() == 3);
    REQUIRE(from_bin.events.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(from_csv.events[i].t == s.events[i].t);
        CHECK(from_bin.events[i].p == s.events[i].p);
    }
    fs::remove(csv);
    fs::remove(bin);
}

TEST_CASE("YOLO label parsing") {
    const auto path = tmp_file("labels.txt");
    {
        std::ofstream out(path);
        out << "0 0.5 0.5 0.1 0.2\n";
    }
    auto boxes = read_yolo_labels(path.string(), 640, 640);
    REQUIRE(boxes.size() == 1);
    CHECK(boxes[0].box[0] == doctest::Approx(288));
    CHECK(boxes[0].box[1] == doctest::Approx(256));
    CHECK(boxes[0].box[2] == doctest::Approx(352));
    CHECK(boxes[0].box[3] == doctest::Approx(384));

    {
        std::ofstream out(path);
    }
    CHECK(read_yolo_labels(path.string(), 640, 640).empty());

    {
        std::ofstream out(path);
        out << "0 1.5 0.5 0.1 0.2\n";
    }
    CHECK_THROWS_AS(read_yolo_labels(path.string(), 640, 640), ValidationError);

    {
        std::ofstream out(path);
        out << "0 abc 0.5 0.1 0.2\n";
    }
    CHECK_THROWS_WITH_AS(read_yolo_labels(path.string(), 640, 640), doctest::Contains(":1:"),
                         ParseError);
    fs::remove(path);
}
