#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "vdc/report.hpp"
#include "vdc/tensor_io.hpp"

using namespace vdc;

namespace {

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "vdc_io_test";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("mvdt golden byte layout") {
    const auto path = temp_dir() / "golden.mvdt";
    write_mvdt(Tensor({1, 2}, {1.0, -2.0}), path);

    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const std::vector<unsigned char> expected = {
        0x4D, 0x56, 0x44, 0x54,                          // magic "MVDT"
        0x02, 0x00, 0x00, 0x00,                          // rank
        0x01, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00,  // extents
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F,  // 1.0
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xC0,  // -2.0
    };
    CHECK(bytes == expected);
}

TEST_CASE("mvdt round trips random tensors bit-exactly") {
    Rng rng(41);
    const auto path = temp_dir() / "roundtrip.mvdt";
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor t = test::random_tensor(
            {1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4)}, rng);
        write_mvdt(t, path);
        const Tensor back = read_mvdt(path);
        REQUIRE(back.shape() == t.shape());
        CHECK(max_abs_diff(back, t) == 0.0);
    }
}

TEST_CASE("mvdt rejects corrupt files") {
    const auto path = temp_dir() / "corrupt.mvdt";
    std::ofstream(path, std::ios::binary) << "not a tensor";
    CHECK_THROWS_AS((void)read_mvdt(path), IoError);
    CHECK_THROWS_AS((void)read_mvdt(temp_dir() / "missing.mvdt"), IoError);
}

TEST_CASE("tensor json round trip") {
    const Tensor t({2, 2}, {0.5, -1.0, 3.25, 1.0 / 3.0});
    const Tensor back = tensor_from_json(tensor_to_json(t));
    REQUIRE(back.shape() == t.shape());
    CHECK(max_abs_diff(back, t) == 0.0);
    CHECK_THROWS_AS((void)tensor_from_json("{}"), IoError);
}

TEST_CASE("report serialization is canonical") {
    Report report;
    report.command = "demo";
    report.inputs_digest = "00ff";
    report.metrics["zeta"] = 1.0 / 3.0;
    report.metrics["alpha"] = 0.5;
    report.counters["flops"] = 123456789;
    report.notes["status"] = "pass";

    const std::string a = report.to_json();
    const std::string b = report.to_json();
    CHECK(a == b);
    // Sorted keys: alpha must precede zeta.
    CHECK(a.find("\"alpha\"") < a.find("\"zeta\""));
    // 17 significant digits round-trip 1/3 exactly.
    CHECK(a.find("0.33333333333333331") != std::string::npos);
}

TEST_CASE("format_double round trips") {
    for (double v : {1.0 / 3.0, 0.1, 1e-300, 123456.789, -2.5e17}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("tensor digest is order sensitive and stable") {
    const Tensor a({2}, {1.0, 2.0});
    const Tensor b({2}, {2.0, 1.0});
    CHECK(tensor_digest(a) == tensor_digest(a));
    CHECK(tensor_digest(a) != tensor_digest(b));
    CHECK(digest_hex(tensor_digest(a)).size() == 16);
}
