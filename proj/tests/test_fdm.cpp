#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "consolida/fdm.hpp"

using namespace consolida;

TEST_CASE("stability report: paper configuration passes with a wide margin") {
    SoilParams soil;  // C_v = 0.05
    double d = 1.0 / 34;
    double dt = 1.0 / 21600;
    StabilityReport rep = stability_check(soil, d, d, d, dt);
    CHECK(rep.r == doctest::Approx(0.05 * dt * 3 * 34 * 34).epsilon(1e-12));
    CHECK(rep.r == doctest::Approx(8.03e-3).epsilon(0.01));
    CHECK(rep.pass);
    CHECK(rep.paper_form_value == doctest::Approx(0.05 * dt / (3 * d * d)).epsilon(1e-12));
}

TEST_CASE("stability report: large step fails, zero diffusivity trivially passes") {
    SoilParams soil;
    double d = 1.0 / 34;
    StabilityReport rep = stability_check(soil, d, d, d, 1.0);
    CHECK(rep.r == doctest::Approx(173.4).epsilon(0.01));
    CHECK_FALSE(rep.pass);

    soil.C_v = 1e-300;  // effectively zero, keeps validate() happy
    StabilityReport zero = stability_check(soil, d, d, d, 1.0);
    CHECK(zero.r < 1e-290);
    CHECK(zero.pass);
}

TEST_CASE("step: zero-flux steady state and zero field preserved") {
    SoilParams soil;
    CaseSpec undrained;
    undrained.faces.fill(FaceCondition::Undrained);
    int n = 7;
    double d = 1.0 / (n - 1);
    std::vector<double> field(static_cast<std::size_t>(n) * n * n, soil.p0), scratch;
    fdm_step(field, scratch, undrained, soil, n, n, n, d, d, d, 1e-4);
    for (double v : field) CHECK(v == doctest::Approx(soil.p0).epsilon(1e-14));

    std::vector<double> zero(field.size(), 0.0);
    fdm_step(zero, scratch, CaseSpec::standard_case(1), soil, n, n, n, d, d, d, 1e-4);
    for (double v : zero) CHECK(v == 0.0);
}

TEST_CASE("step: single eigenmode decays at the analytic rate") {
    SoilParams soil;
    int n = 21;
    double d = 1.0 / (n - 1);
    double dt = 2e-4;
    CaseSpec cs = CaseSpec::standard_case(1);
    std::vector<double> field(static_cast<std::size_t>(n) * n * n), scratch;
    auto at = [&](int i, int j, int k) -> double& {
        return field[static_cast<std::size_t>(k) * n * n + static_cast<std::size_t>(j) * n + i];
    };
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                at(i, j, k) = std::sin(M_PI * i * d) * std::sin(M_PI * j * d) * std::sin(M_PI * k * d);
    double before = at(n / 2, n / 2, n / 2);
    fdm_step(field, scratch, cs, soil, n, n, n, d, d, d, dt);
    double expected = before * std::exp(-3 * M_PI * M_PI * soil.C_v * dt);
    CHECK(at(n / 2, n / 2, n / 2) == doctest::Approx(expected).epsilon(1e-3));
}

TEST_CASE("solve: drained faces exactly zero, dt bookkeeping") {
    SoilParams soil;
    GridSpec grid{9, 9, 9, 3, 1.0};
    FieldGrid fg = fdm_solve(CaseSpec::standard_case(3), soil, grid, 2000, {0.5, 1.0});
    CHECK(fg.slices.size() == 2);
    CHECK(fg.dt == doctest::Approx(1.0 / 2000).epsilon(1e-12));
    for (const FieldSlice& s : fg.slices)
        for (int j = 0; j < 9; ++j)
            for (int i = 0; i < 9; ++i)
                CHECK(s.at(i, j, 8, 9, 9) == 0.0);  // z=h drained in case 3
}

TEST_CASE("solve: stability guard raises without the override") {
    SoilParams soil;
    GridSpec grid{35, 35, 35, 2, 1.0};
    CHECK_THROWS(fdm_solve(CaseSpec::standard_case(1), soil, grid, 2, {1.0}));
    CHECK_NOTHROW(fdm_solve(CaseSpec::standard_case(1), soil, grid, 2, {1.0}, true));
}

TEST_CASE("series: initial condition recovery and drained faces") {
    SoilParams soil;
    double u0 = analytical_series(4, 0.5, 0.37, 0.5, 0.0, soil, 100000);
    CHECK(u0 == doctest::Approx(1.0).epsilon(1e-3));
    for (double t : {0.1, 0.5, 1.0}) {
        CHECK(analytical_series(4, 0.5, 0.0, 0.5, t, soil) == doctest::Approx(0.0));
        CHECK(analytical_series(4, 0.5, 1.0, 0.5, t, soil) == doctest::Approx(0.0));
        CHECK(analytical_series(3, 0.5, 0.5, 1.0, t, soil) == doctest::Approx(0.0));
        CHECK(analytical_series(1, 0.0, 0.5, 0.5, t, soil) == doctest::Approx(0.0));
    }
}

TEST_CASE("series: partial sums self-consistent at Cv*t = 0.02") {
    SoilParams soil;
    soil.C_v = 0.05;
    double t = 0.02 / soil.C_v;
    double a = series_double_drainage(0.5, t, 1.0, soil.C_v, 50);
    double b = series_double_drainage(0.5, t, 1.0, soil.C_v, 5000);
    CHECK(std::abs(a - b) < 1e-10);
    // independent oracle: image-source form u = 1 - 2*erfc(0.25/sqrt(Tv))
    // at the midpoint for small Tv
    double erfc_form = 1.0 - 2.0 * std::erfc(0.25 / std::sqrt(0.02));
    CHECK(a == doctest::Approx(erfc_form).epsilon(1e-4));
}

TEST_CASE("series: case-1 oracle equals the product of 1D profiles") {
    SoilParams soil;
    double x = 0.3, y = 0.7, z = 0.4, t = 0.25;
    double prod = series_double_drainage(x, t, soil.l, soil.C_v, 2000) *
                  series_double_drainage(y, t, soil.b, soil.C_v, 2000) *
                  series_double_drainage(z, t, soil.h, soil.C_v, 2000);
    CHECK(analytical_series(1, x, y, z, t, soil) == doctest::Approx(soil.p0 * prod).epsilon(1e-12));
}

TEST_CASE("solve vs series: case 4 on a desk grid") {
    SoilParams soil;
    GridSpec grid{21, 21, 21, 3, 1.0};
    FieldGrid fg = fdm_solve(CaseSpec::standard_case(4), soil, grid, 8000, {0.2, 0.4, 0.8});
    for (const FieldSlice& s : fg.slices) {
        double num = 0, den = 0;
        for (int j = 0; j < fg.n_y; ++j) {
            double exact = analytical_series(4, 0.5, j * fg.dy, 0.5, s.time, soil);
            double fdm = s.at(fg.n_x / 2, j, fg.n_z / 2, fg.n_x, fg.n_y);
            num += (fdm - exact) * (fdm - exact);
            den += exact * exact;
        }
        CHECK(std::sqrt(num / den) <= 1e-2);
    }
}

TEST_CASE("solve: maximum principle and monotone mean decay on a desk grid") {
    SoilParams soil;
    GridSpec grid{13, 13, 13, 3, 1.0};
    for (int case_id = 1; case_id <= 4; ++case_id) {
        FieldGrid fg = fdm_solve(CaseSpec::standard_case(case_id), soil, grid, 3000,
                                 {0.1, 0.3, 0.6, 1.0});
        double prev_mean = soil.p0;
        for (const FieldSlice& s : fg.slices) {
            double mn = 1e300, mx = -1e300, sum = 0;
            for (double v : s.values) {
                mn = std::min(mn, v);
                mx = std::max(mx, v);
                sum += v;
            }
            CHECK(mn >= -1e-12);
            CHECK(mx <= soil.p0 + 1e-12);
            double mean = sum / s.values.size();
            CHECK(mean <= prev_mean + 1e-12);
            prev_mean = mean;
        }
    }
}

TEST_CASE("solve: case-1 mirror symmetry") {
    SoilParams soil;
    GridSpec grid{11, 11, 11, 2, 1.0};
    FieldGrid fg = fdm_solve(CaseSpec::standard_case(1), soil, grid, 2000, {0.5});
    const FieldSlice& s = fg.slices[0];
    for (int k = 0; k < 11; ++k)
        for (int j = 0; j < 11; ++j)
            for (int i = 0; i < 11; ++i)
                CHECK(s.at(i, j, k, 11, 11) ==
                      doctest::Approx(s.at(10 - i, j, k, 11, 11)).epsilon(1e-10));
}

TEST_CASE("second-order spatial convergence against the series oracle") {
    SoilParams soil;
    auto error_at = [&](int n) {
        GridSpec grid{n, n, n, 1, 0.2};
        // keep r fixed by scaling steps with (n-1)^2
        long steps = 200L * (n - 1) * (n - 1) / (10 * 10);
        FieldGrid fg = fdm_solve(CaseSpec::standard_case(4), soil, grid, steps, {0.2});
        const FieldSlice& s = fg.slices[0];
        double num = 0, den = 0;
        for (int j = 0; j < n; ++j) {
            double exact = analytical_series(4, 0.5, j * fg.dy, 0.5, 0.2, soil);
            double v = s.at(n / 2, j, n / 2, n, n);
            num += (v - exact) * (v - exact);
            den += exact * exact;
        }
        return std::sqrt(num / den);
    };
    double coarse = error_at(11);
    double fine = error_at(21);
    CHECK(coarse / fine >= 2.5);  // ~4x for clean second order
    CHECK(coarse / fine <= 6.0);
}
