#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "consolida/autodiff.hpp"
#include "consolida/network.hpp"

using namespace consolida;

namespace {

// independent finite-difference oracle over the plain forward pass
DerivativeBundle fd_bundle(const NetworkParams& p, const Eigen::Vector4d& pt, double h) {
    auto f = [&](const Eigen::Vector4d& q) { return forward(p, q[0], q[1], q[2], q[3]); };
    DerivativeBundle b;
    b.u = f(pt);
    double first[4], second[4];
    for (int a = 0; a < 4; ++a) {
        Eigen::Vector4d lo = pt, hi = pt;
        lo[a] -= h;
        hi[a] += h;
        first[a] = (f(hi) - f(lo)) / (2 * h);
        second[a] = (f(hi) - 2 * b.u + f(lo)) / (h * h);
    }
    b.du_dx = first[0];
    b.du_dy = first[1];
    b.du_dz = first[2];
    b.du_dt = first[3];
    b.d2u_dx2 = second[0];
    b.d2u_dy2 = second[1];
    b.d2u_dz2 = second[2];
    return b;
}

double rel_err(double a, double b) {
    double scale = std::max({std::abs(a), std::abs(b), 1e-10});
    return std::abs(a - b) / scale;
}

NetworkParams random_net(const std::vector<int>& sizes, std::uint64_t seed) {
    return init_network(sizes, seed);
}

Eigen::Matrix4Xd random_points(long n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::Matrix4Xd pts(4, n);
    for (long i = 0; i < n; ++i)
        for (int d = 0; d < 4; ++d) pts(d, i) = unit(rng);
    return pts;
}

}  // namespace

TEST_CASE("constant network has zero derivatives") {
    NetworkParams p = init_network({4, 8, 1}, 1);
    p.values.setZero();
    p.values[p.bias_offset(1)] = 0.7;  // output bias
    auto bundles = evaluate_with_input_derivatives(p, random_points(5, 2));
    for (const auto& b : bundles) {
        CHECK(b.u == doctest::Approx(0.7).epsilon(1e-15));
        CHECK(b.du_dx == 0.0);
        CHECK(b.du_dy == 0.0);
        CHECK(b.du_dz == 0.0);
        CHECK(b.du_dt == 0.0);
        CHECK(b.d2u_dx2 == 0.0);
        CHECK(b.d2u_dy2 == 0.0);
        CHECK(b.d2u_dz2 == 0.0);
    }
}

TEST_CASE("single tanh unit matches closed form") {
    // u = tanh(x): hidden weight (1,0,0,0), output weight 1
    NetworkParams p = init_network({4, 1, 1}, 0);
    p.values.setZero();
    p.values[0] = 1.0;                  // W0 row (1,0,0,0)
    p.values[p.weight_offset(1)] = 1.0; // output weight
    Eigen::Matrix4Xd pts(4, 1);
    pts.col(0) << 0.5, 0.1, 0.9, 0.3;
    auto b = evaluate_with_input_derivatives(p, pts)[0];
    double th = std::tanh(0.5);
    CHECK(b.u == doctest::Approx(th).epsilon(1e-14));
    CHECK(b.du_dx == doctest::Approx(1 - th * th).epsilon(1e-14));
    CHECK(b.d2u_dx2 == doctest::Approx(-2 * th * (1 - th * th)).epsilon(1e-14));
    CHECK(b.du_dy == 0.0);
    CHECK(b.d2u_dz2 == 0.0);
    CHECK(b.du_dt == 0.0);
}

TEST_CASE("random nets match finite differences") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        NetworkParams p = random_net({4, 8, 8, 1}, seed);
        Eigen::Matrix4Xd pts = random_points(20, seed + 100);
        auto engine = evaluate_with_input_derivatives(p, pts);
        for (long i = 0; i < pts.cols(); ++i) {
            DerivativeBundle fd = fd_bundle(p, pts.col(i), 1e-4);
            CHECK(rel_err(engine[i].du_dx, fd.du_dx) <= 1e-5);
            CHECK(rel_err(engine[i].du_dy, fd.du_dy) <= 1e-5);
            CHECK(rel_err(engine[i].du_dz, fd.du_dz) <= 1e-5);
            CHECK(rel_err(engine[i].du_dt, fd.du_dt) <= 1e-5);
            CHECK(rel_err(engine[i].d2u_dx2, fd.d2u_dx2) <= 1e-4);
            CHECK(rel_err(engine[i].d2u_dy2, fd.d2u_dy2) <= 1e-4);
            CHECK(rel_err(engine[i].d2u_dz2, fd.d2u_dz2) <= 1e-4);
        }
    }
}

TEST_CASE("zero-sensitivity: masked input gives exactly zero derivatives") {
    NetworkParams p = random_net({4, 6, 1}, 42);
    // zero every first-layer weight feeding from z (input index 2)
    for (int row = 0; row < 6; ++row) p.values[row * 4 + 2] = 0.0;
    auto bundles = evaluate_with_input_derivatives(p, random_points(10, 3));
    for (const auto& b : bundles) {
        CHECK(b.du_dz == 0.0);
        CHECK(b.d2u_dz2 == 0.0);
    }
}

TEST_CASE("determinism: identical inputs give bit-identical bundles") {
    NetworkParams p = random_net({4, 10, 10, 1}, 7);
    Eigen::Matrix4Xd pts = random_points(15, 8);
    auto a = evaluate_with_input_derivatives(p, pts);
    auto b = evaluate_with_input_derivatives(p, pts);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].u == b[i].u);
        CHECK(a[i].d2u_dx2 == b[i].d2u_dx2);
        CHECK(a[i].du_dt == b[i].du_dt);
    }
}

TEST_CASE("linearity of derivatives under summed outputs") {
    // same hidden stack, output weights summed: derivatives add exactly
    NetworkParams p1 = random_net({4, 6, 1}, 21);
    NetworkParams p2 = p1;
    std::mt19937_64 rng(22);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (long i = p2.weight_offset(1); i < p2.values.size(); ++i) p2.values[i] = 0.3 * n01(rng);
    NetworkParams sum = p1;
    sum.values.tail(sum.values.size() - sum.weight_offset(1)) =
        p1.values.tail(p1.values.size() - p1.weight_offset(1)) +
        p2.values.tail(p2.values.size() - p2.weight_offset(1));
    Eigen::Matrix4Xd pts = random_points(8, 23);
    auto b1 = evaluate_with_input_derivatives(p1, pts);
    auto b2 = evaluate_with_input_derivatives(p2, pts);
    auto bs = evaluate_with_input_derivatives(sum, pts);
    for (std::size_t i = 0; i < bs.size(); ++i) {
        CHECK(bs[i].u == doctest::Approx(b1[i].u + b2[i].u).epsilon(1e-12));
        CHECK(bs[i].du_dx == doctest::Approx(b1[i].du_dx + b2[i].du_dx).epsilon(1e-12));
        CHECK(bs[i].d2u_dy2 == doctest::Approx(b1[i].d2u_dy2 + b2[i].d2u_dy2).epsilon(1e-12));
    }
}

TEST_CASE("loss gradient: stationary point and scaling") {
    NetworkParams p = random_net({4, 5, 1}, 31);
    Eigen::Matrix4Xd pts = random_points(12, 32);

    auto make_term = [&](double scale, const NetworkParams& target_net) {
        // loss = scale * mean (u - u_target)^2
        MlpTape ttape(target_net, pts, DerivMode::Value);
        Eigen::RowVectorXd targets = ttape.value();
        TapeLoss term;
        term.points = pts;
        term.mode = DerivMode::Value;
        term.seed = [targets, scale](const MlpTape& tape, Eigen::RowVectorXd& vbar,
                                     std::vector<Eigen::RowVectorXd>&,
                                     std::vector<Eigen::RowVectorXd>&) {
            Eigen::RowVectorXd diff = tape.value() - targets;
            double n = static_cast<double>(diff.size());
            vbar = (scale * 2.0 / n) * diff;
            return scale * diff.squaredNorm() / n;
        };
        return term;
    };

    ParamGradient g;
    double at_min = loss_gradient(p, {make_term(1.0, p)}, g);
    CHECK(at_min == doctest::Approx(0.0));
    CHECK(g.norm() == doctest::Approx(0.0));

    NetworkParams target = random_net({4, 5, 1}, 33);
    ParamGradient g1, g3;
    loss_gradient(p, {make_term(1.0, target)}, g1);
    loss_gradient(p, {make_term(3.0, target)}, g3);
    CHECK((g3 - 3.0 * g1).lpNorm<Eigen::Infinity>() <= 1e-14 * g1.lpNorm<Eigen::Infinity>());
}

TEST_CASE("second-derivative self-consistency diagnostic") {
    NetworkParams constant = init_network({4, 4, 1}, 0);
    constant.values.setZero();
    CHECK(second_derivative_consistency(constant, {0.5, 0.5, 0.5, 0.5}));

    NetworkParams p = random_net({4, 8, 1}, 55);
    CHECK(second_derivative_consistency(p, {0.3, 0.6, 0.2, 0.8}));
}

TEST_CASE("consistency check rejects a corrupted second derivative") {
    NetworkParams p = random_net({4, 8, 1}, 56);
    Eigen::Matrix4Xd pts(4, 1);
    pts.col(0) << 0.4, 0.5, 0.6, 0.7;
    auto b = evaluate_with_input_derivatives(p, pts)[0];
    // test double: engine output with a +1e-2 bias on d2u/dx2
    DerivativeBundle fd = fd_bundle(p, pts.col(0), 1e-4);
    CHECK(derivatives_agree(b.d2u_dx2, fd.d2u_dx2));
    CHECK_FALSE(derivatives_agree(b.d2u_dx2 + 1e-2, fd.d2u_dx2));
}
