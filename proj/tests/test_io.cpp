#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "waferwise/dataset_io.hpp"
#include "waferwise/error.hpp"
#include "waferwise/fabsim.hpp"
#include "waferwise/io.hpp"
#include "waferwise/rng.hpp"

using namespace waferwise;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("waferwise_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("doubles print in shortest round-trip form") {
    auto rng = make_rng(1, {});
    for (int i = 0; i < 10000; ++i) {
        const double v = normal(rng, 1.0) * std::pow(10.0, static_cast<int>(uniform01(rng) * 40) - 20);
        CHECK(io::parse_double(io::format_double(v)) == v);
    }
    CHECK(io::format_double(0.1) == "0.1");
    CHECK(io::format_double(32.0) == "32");
    CHECK(io::parse_double(io::format_double(std::numeric_limits<double>::denorm_min())) ==
          std::numeric_limits<double>::denorm_min());
    CHECK_THROWS_AS(io::parse_double("1.5x"), Error);
}

TEST_CASE("CSV parsing and header checks") {
    const auto t = io::parse_csv("a,b\n1,2\n\n3,4\n");
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    CHECK(t.rows.size() == 2);
    CHECK(t.column("b") == 1);
    CHECK_THROWS_AS(t.column("c"), Error);
    static constexpr std::string_view expected[] = {"a", "c"};
    try {
        io::require_header(t, expected, "test.csv");
        FAIL("expected schema_mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == "schema_mismatch");
        CHECK(std::string(e.what()).find("c") != std::string::npos);
    }
}

TEST_CASE("wafer bundles round-trip exactly") {
    auto cfg = fabsim::ScenarioConfig::defaults();
    cfg.n_dies = 37;
    const auto synth = fabsim::generate_scenario(cfg, 12);
    std::vector<WaferDataset> data;
    for (const auto& s : synth) data.push_back(s.data);
    data[1].capacitance[5].flagged_outlier = true;
    const auto dir = temp_dir("bundle");
    io::write_bundle(data, dir);
    for (const auto& s : synth) io::write_truth(s, dir / s.data.wafer_id);
    const auto back = io::read_bundle(dir);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(back[i] == data[i]);

    const auto failures = io::read_injected_failures(dir / "D02");
    std::size_t expected = 0;
    for (bool f : synth[0].truth.injected_failure) expected += f ? 1 : 0;
    CHECK(failures.size() == expected);
    for (auto i : failures) CHECK(synth[0].truth.injected_failure[i]);

    // Without any flagged record the optional column is not written.
    CHECK(io::capacitance_csv(data[0]).find("flagged_outlier") == std::string::npos);
    CHECK(io::capacitance_csv(data[1]).find("flagged_outlier") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("schema mismatches are named") {
    auto cfg = fabsim::ScenarioConfig::defaults();
    cfg.n_dies = 7;
    cfg.wafers.resize(1);
    const auto w = fabsim::generate_scenario(cfg, 1).front().data;
    const auto dir = temp_dir("schema");
    io::write_bundle({w}, dir);
    auto text = io::read_file(dir / "D02" / "cdsem.csv");
    text.replace(text.find("cd2_nm"), 6, "cd_nm");
    io::write_file_atomic(dir / "D02" / "cdsem.csv", text);
    try {
        io::read_bundle(dir);
        FAIL("expected schema_mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == "schema_mismatch");
        CHECK(std::string(e.what()).find("cd2_nm") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("atomic writes replace the whole file") {
    const auto dir = temp_dir("atomic");
    io::write_file_atomic(dir / "f.txt", "long content here");
    io::write_file_atomic(dir / "f.txt", "short");
    CHECK(io::read_file(dir / "f.txt") == "short");
    CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator()) == 1);
    fs::remove_all(dir);
}
