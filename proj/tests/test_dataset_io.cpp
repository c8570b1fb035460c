#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mofs/dataset_io.hpp"
#include "mofs/pde_data.hpp"

using namespace mofs;
namespace fs = std::filesystem;

namespace {

OperatorDataset make_dataset() {
    auto ds = generate_darcy(10.0, 3, 8, 8, 1);
    ds.operator_id = 4;
    ds.description_text = "toy description";
    auto [na, nu] = fit_normalizer(ds);
    ds.norm_a = na;
    ds.norm_u = nu;
    return ds;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("dataset save/load/save round trip is byte-identical") {
    auto ds = make_dataset();
    const fs::path dir = fs::temp_directory_path() / "mofs_io_test";
    fs::create_directories(dir);
    const fs::path p1 = dir / "a.mofs", p2 = dir / "b.mofs";
    save_dataset(ds, p1.string());
    auto loaded = load_dataset(p1.string());
    save_dataset(loaded, p2.string());
    REQUIRE(read_file(p1) == read_file(p2));
    REQUIRE(loaded.name == ds.name);
    REQUIRE(loaded.operator_id == 4);
    REQUIRE(loaded.size() == 3);
    REQUIRE(loaded.generator_params.at("beta") == 10.0);
    // Array contents quantize to float32 exactly once.
    for (int s = 0; s < 3; ++s)
        for (std::int64_t i = 0; i < ds.samples[0].first.values.numel(); ++i) {
            REQUIRE(loaded.samples[s].first.values[i] ==
                    static_cast<double>(static_cast<float>(ds.samples[s].first.values[i])));
            REQUIRE(loaded.samples[s].second.values[i] ==
                    static_cast<double>(static_cast<float>(ds.samples[s].second.values[i])));
        }
}

TEST_CASE("dataset block length must equal 2*N*H*W*4 bytes") {
    auto ds = make_dataset();
    std::string buf = serialize_dataset(ds);
    const std::size_t header_end = buf.size() - 2ull * 3 * 8 * 8 * 4;
    REQUIRE(buf.size() - header_end == 2ull * 3 * 8 * 8 * 4);
    // Dropping the last byte -> truncation error.
    REQUIRE_THROWS_AS(deserialize_dataset(buf.substr(0, buf.size() - 1)), IoError);
    // Extra trailing byte is also a shape mismatch.
    REQUIRE_THROWS_AS(deserialize_dataset(buf + 'x'), IoError);
}

TEST_CASE("dataset loader raises distinct structural errors") {
    auto ds = make_dataset();
    std::string buf = serialize_dataset(ds);

    SECTION("magic-number mismatch") {
        std::string bad = buf;
        bad[0] = 'X';
        REQUIRE_THROWS_WITH(deserialize_dataset(bad),
                            Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("version mismatch") {
        std::string bad = buf;
        bad[4] = 9;
        REQUIRE_THROWS_WITH(deserialize_dataset(bad),
                            Catch::Matchers::ContainsSubstring("version"));
    }
    SECTION("truncated file") {
        REQUIRE_THROWS_WITH(deserialize_dataset(buf.substr(0, 6)),
                            Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("declared shape vs block mismatch") {
        // Flip N=3 to N=4 inside the JSON header text.
        std::string bad = buf;
        const auto pos = bad.find("\"N\":3");
        REQUIRE(pos != std::string::npos);
        bad[pos + 4] = '4';
        REQUIRE_THROWS_WITH(deserialize_dataset(bad),
                            Catch::Matchers::ContainsSubstring("shape mismatch"));
    }
}

TEST_CASE("corrupting structural header bytes never loads silently") {
    auto ds = make_dataset();
    std::string buf = serialize_dataset(ds);
    // Magic, version and length prefix: every single-byte corruption errors.
    for (std::size_t i = 0; i < 9; ++i) {
        std::string bad = buf;
        bad[i] = static_cast<char>(bad[i] ^ 0x5a);
        REQUIRE_THROWS_AS(deserialize_dataset(bad), IoError);
    }
    // Shape digits inside the JSON: flipping any digit breaks the size check.
    for (const char* key : {"\"N\":", "\"H\":", "\"W\":"}) {
        const auto pos = buf.find(key);
        REQUIRE(pos != std::string::npos);
        std::string bad = buf;
        char& digit = bad[pos + std::string(key).size()];
        digit = (digit == '9') ? '8' : digit + 1;
        REQUIRE_THROWS_AS(deserialize_dataset(bad), IoError);
    }
    // JSON structure bytes: breaking a brace fails the parse.
    const auto brace = buf.find('{');
    std::string bad = buf;
    bad[brace] = '[';
    REQUIRE_THROWS_AS(deserialize_dataset(bad), IoError);
}
