#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "consolida/evaluation.hpp"
#include "consolida/fdm.hpp"

using namespace consolida;

TEST_CASE("relative L2: identities, scale covariance, errors") {
    Eigen::VectorXd exact(3);
    exact << 1, 2, 3;
    CHECK(relative_l2(exact, exact) == 0.0);

    Eigen::VectorXd pred = 2 * exact;
    CHECK(relative_l2(pred, exact) == doctest::Approx(1.0).epsilon(1e-14));

    // scaling both vectors leaves the relative error unchanged
    Eigen::VectorXd shifted = exact.array() + 0.1;
    double base = relative_l2(shifted, exact);
    CHECK(relative_l2(7.0 * shifted, 7.0 * exact) == doctest::Approx(base).epsilon(1e-13));

    CHECK_THROWS(relative_l2(exact, Eigen::VectorXd::Zero(3)));
    CHECK_THROWS(relative_l2(Eigen::VectorXd::Zero(2), exact));
}

TEST_CASE("mean absolute error") {
    Eigen::VectorXd a(2), b(2);
    a << 1.1, 1.9;
    b << 1.0, 2.0;
    CHECK(mean_absolute_error(a, b) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(mean_absolute_error(b, b) == 0.0);

    // triangle inequality through an intermediate vector
    Eigen::VectorXd c(2);
    c << 0.5, 3.0;
    CHECK(mean_absolute_error(a, c) <=
          mean_absolute_error(a, b) + mean_absolute_error(b, c) + 1e-15);
}

TEST_CASE("mean relative error skips exact zeros") {
    Eigen::VectorXd pred(3), exact(3);
    pred << 1.1, 0.5, 2.0;
    exact << 1.0, 0.0, 4.0;
    // entries 0 and 2 only: (0.1/1 + 2/4) / 2
    CHECK(mean_relative_error(pred, exact) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("relative error and accuracy for identified coefficients") {
    auto [e1, a1] = relative_error_and_accuracy(0.05, 0.05);
    CHECK(e1 == 0.0);
    CHECK(a1 == 100.0);

    auto [e2, a2] = relative_error_and_accuracy(0.0100198, 0.01);
    CHECK(e2 == doctest::Approx(1.98e-3).epsilon(1e-6));
    CHECK(a2 == doctest::Approx(99.802).epsilon(1e-6));

    auto [e3, a3] = relative_error_and_accuracy(0.02, 0.01);
    CHECK(e3 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a3 == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("column average pressure: trapezoid against sin(pi z)") {
    double avg = column_average_pressure([](double z) { return std::sin(M_PI * z); }, 1.0, 2001);
    CHECK(avg == doctest::Approx(2.0 / M_PI).epsilon(1e-6));

    double flat = column_average_pressure([](double) { return 3.5; }, 2.0, 11);
    CHECK(flat == doctest::Approx(3.5).epsilon(1e-14));

    CHECK_THROWS(column_average_pressure([](double) { return 0.0; }, 1.0, 1));
}

TEST_CASE("volume compressibility") {
    CHECK(volume_compressibility(0.00025, 0.8) == doctest::Approx(0.00025 / 1.8).epsilon(1e-14));
    CHECK(volume_compressibility(0.00025, 0.8) == doctest::Approx(1.3889e-4).epsilon(1e-4));
    CHECK_THROWS(volume_compressibility(-1.0, 0.8));
    CHECK_THROWS(volume_compressibility(0.00025, -1.0));
}

TEST_CASE("settlement: limiting fields") {
    SoilParams soil;
    soil.p0 = 1000.0;  // Pa, so 1 kPa
    std::vector<double> times{0.1, 0.5, 1.0};
    double m_v = volume_compressibility(soil.a_v, soil.e0);

    // undissipated field: u == p0 everywhere, no settlement yet
    SettlementCurve full = settlement_curve(
        [&](double, double, double, double) { return soil.p0; }, soil, times, 0.5, 0.5);
    CHECK(full.final_settlement == doctest::Approx(m_v * 1.0 * soil.h).epsilon(1e-12));
    for (double s : full.settlement) CHECK(std::abs(s) < 1e-15);
    for (double u : full.degree) CHECK(std::abs(u) < 1e-15);

    // fully dissipated: settlement equals the final value, U == 1
    SettlementCurve done = settlement_curve(
        [](double, double, double, double) { return 0.0; }, soil, times, 0.5, 0.5);
    for (double s : done.settlement)
        CHECK(s == doctest::Approx(done.final_settlement).epsilon(1e-12));
    for (double u : done.degree) CHECK(u == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("settlement: degree is in [0,1] and non-decreasing on the reference solver") {
    SoilParams soil;
    GridSpec grid{13, 13, 13, 5, 1.0};
    FieldGrid fg = fdm_solve(CaseSpec::standard_case(1), soil, grid, 3000,
                             {0.1, 0.25, 0.5, 0.75, 1.0});
    auto field = [&](double, double, double, double t) {
        // nearest stored slice at the column midline
        std::size_t best = 0;
        for (std::size_t s = 0; s < fg.slices.size(); ++s)
            if (std::abs(fg.slices[s].time - t) < std::abs(fg.slices[best].time - t)) best = s;
        return fg.slices[best];
    };
    std::vector<double> times{0.1, 0.25, 0.5, 0.75, 1.0};
    SettlementCurve curve = settlement_curve(
        [&](double, double, double z, double t) {
            const FieldSlice& s = field(0, 0, z, t);
            int k = static_cast<int>(std::lround(z / fg.dz));
            return s.at(fg.n_x / 2, fg.n_y / 2, k, fg.n_x, fg.n_y);
        },
        soil, times, 0.5, 0.5, 13);
    double prev = -1e-12;
    for (double u : curve.degree) {
        CHECK(u >= 0.0);
        CHECK(u <= 1.0 + 1e-12);
        CHECK(u >= prev - 1e-12);
        prev = u;
    }
}

TEST_CASE("settlement curve CSV export") {
    SettlementCurve c;
    c.times = {0.5, 1.0};
    c.settlement = {1e-4, 1.3e-4};
    c.degree = {0.7, 0.91};
    c.final_settlement = 1.4e-4;
    std::string path = "test_settlement.csv";
    c.export_csv(path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,S_t,U");
    int rows = 0;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
    std::remove(path.c_str());
}
