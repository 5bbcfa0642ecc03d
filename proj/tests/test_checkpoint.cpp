// Binary archive round-trips and corruption handling.

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <cstring>
#include <fstream>

#include "dadet/checkpoint.hpp"
#include "dadet/common.hpp"
#include "dadet/rng.hpp"

using namespace dadet;
namespace fs = std::filesystem;

TEST_CASE("archive round-trip is bit exact") {
    fs::path path = fs::temp_directory_path() / "dadet_test_archive.bin";
    Archive a;
    Rng rng(801);
    Tensor<float> w({3, 7});
    for (auto& v : w.data) v = (float)rng.uniform(-10.0, 10.0);
    Tensor<float> b({5});
    for (auto& v : b.data) v = (float)rng.normal();
    Tensor<float> scalar({1});
    scalar.data[0] = -0.0f;  // sign bit must survive
    a.arrays["layer.w"] = w;
    a.arrays["layer.b"] = b;
    a.arrays["s"] = scalar;
    a.meta["iteration"] = "1234";
    a.meta["note"] = "value with spaces and = signs";

    write_archive(path.string(), a);
    Archive back = read_archive(path.string());
    REQUIRE(back.arrays.size() == 3u);
    REQUIRE(back.meta.size() == 2u);
    CHECK(back.meta.at("iteration") == "1234");
    CHECK(back.meta.at("note") == "value with spaces and = signs");
    for (const auto& [name, t] : a.arrays) {
        REQUIRE(back.arrays.count(name) == 1u);
        const auto& r = back.arrays.at(name);
        REQUIRE(r.shape == t.shape);
        for (size_t i = 0; i < t.data.size(); ++i) {
            // compare the bit patterns, not the values
            CHECK(std::memcmp(&r.data[i], &t.data[i], sizeof(float)) == 0);
        }
    }
    fs::remove(path);
}

TEST_CASE("empty archive round-trips") {
    fs::path path = fs::temp_directory_path() / "dadet_test_archive_empty.bin";
    write_archive(path.string(), {});
    Archive back = read_archive(path.string());
    CHECK(back.arrays.empty());
    CHECK(back.meta.empty());
    fs::remove(path);
}

TEST_CASE("reading a missing file raises IoError") {
    CHECK_THROWS_AS(read_archive("/no/such/archive.bin"), IoError);
}

TEST_CASE("a truncated archive raises IoError") {
    fs::path path = fs::temp_directory_path() / "dadet_test_archive_trunc.bin";
    Archive a;
    Tensor<float> w({64});
    for (size_t i = 0; i < w.data.size(); ++i) w.data[i] = (float)i;
    a.arrays["w"] = w;
    write_archive(path.string(), a);
    auto full = fs::file_size(path);
    fs::resize_file(path, full - 40);
    CHECK_THROWS_AS(read_archive(path.string()), IoError);
    // garbage header
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "not an archive at all";
    out.close();
    CHECK_THROWS_AS(read_archive(path.string()), IoError);
    fs::remove(path);
}
