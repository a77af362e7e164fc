#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "waferwise/dbo.hpp"
#include "waferwise/error.hpp"
#include "oracles.hpp"

using namespace waferwise;


TEST_CASE("zero overlay gives an exactly zero differential spectrum") {
    const auto model = dbo::GratingModel::standard(96.0);
    const auto t = dbo::simulate_target(model, 24.0, 3.0, 0.0, 0.0, 1);
    for (double v : dbo::differential_spectrum(t)) CHECK(v == 0.0);
    CHECK(dbo::estimate_overlay(t).overlay_nm == 0.0);
}

TEST_CASE("noiseless estimate matches the closed form") {
    const auto model = dbo::GratingModel::standard(96.0);
    for (double x0 : {24.0, 12.0}) {
        const double delta = x0 == 24.0 ? 3.0 : 6.0;
        for (double eps = -5.0; eps <= 5.0; eps += 0.5) {
            const auto t = dbo::simulate_target(model, x0, delta, eps, 0.0, 3);
            CHECK(dbo::estimate_overlay(t).overlay_nm ==
                  doctest::Approx(oracle::dbo_closed_form(96.0, x0, delta, eps)).epsilon(1e-9));
        }
    }
}

TEST_CASE("default pad design has near-unit small-overlay slope") {
    const double p = 96.0;
    const double x0 = dbo::default_pad_shift(p);
    const double d = dbo::default_extra_offset(p);
    const double h = 1e-4;
    const double slope = (oracle::dbo_closed_form(p, x0, d, h) - oracle::dbo_closed_form(p, x0, d, -h)) / (2 * h);
    CHECK(std::abs(slope - 1.0) < 0.01);
}

TEST_CASE("estimate is linear-exact in sign for symmetric overlay") {
    const auto model = dbo::GratingModel::standard(96.0);
    const auto a = dbo::estimate_overlay(dbo::simulate_target(model, 24.0, 3.0, 2.0, 0.0, 1)).overlay_nm;
    const auto b = dbo::estimate_overlay(dbo::simulate_target(model, 24.0, 3.0, -2.0, 0.0, 1)).overlay_nm;
    CHECK(a > 0.0);
    CHECK(b < 0.0);
    CHECK(b == doctest::Approx(oracle::dbo_closed_form(96.0, 24.0, 3.0, -2.0)).epsilon(1e-9));
}

TEST_CASE("insensitive target is reported") {
    auto t = dbo::simulate_target(dbo::GratingModel::standard(), 24.0, 3.0, 1.0, 0.0, 1);
    t.pad_delta = t.pad_plus;
    CHECK_THROWS_AS(dbo::estimate_overlay(t), Error);
    try {
        dbo::estimate_overlay(t);
    } catch (const Error& e) {
        CHECK(e.code() == "insensitive_target");
    }
}

TEST_CASE("spectra CSV round-trips exactly") {
    const auto t = dbo::simulate_target(dbo::GratingModel::standard(), 24.0, 3.0, 1.3, 1e-4, 9);
    const auto path = std::filesystem::temp_directory_path() / "waferwise_test_spectra.csv";
    dbo::write_spectra_csv(t, path);
    const auto back = dbo::read_spectra_csv(path);
    CHECK(back.pad_plus == t.pad_plus);
    CHECK(back.pad_minus == t.pad_minus);
    CHECK(back.pad_delta == t.pad_delta);
    CHECK(back.wavelengths_nm == t.wavelengths_nm);
    CHECK(dbo::estimate_overlay(back).overlay_nm == dbo::estimate_overlay(t).overlay_nm);
    std::filesystem::remove(path);
}
