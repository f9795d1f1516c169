#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "consolida/domain.hpp"

namespace consolida {

struct ComparisonReport {
    std::vector<double> times;
    std::vector<double> relative_l2;   // one per time
    double mae = 0;                    // whole-domain mean absolute error
    double mean_relative_error = 0;    // mean of |pred-exact|/|exact|
    long point_count = 0;
    std::string predicted_source, reference_source;
};

double relative_l2(const Eigen::VectorXd& predicted, const Eigen::VectorXd& exact);
double mean_absolute_error(const Eigen::VectorXd& predicted, const Eigen::VectorXd& exact);
/// The normalized form mean(|pred-exact| / |exact|); entries with exact == 0
/// are skipped.
double mean_relative_error(const Eigen::VectorXd& predicted, const Eigen::VectorXd& exact);

/// E = |pred - exact| / exact, A = (1 - E) * 100.
std::pair<double, double> relative_error_and_accuracy(double C_v_pred, double C_v_exact);

/// Composite trapezoid of u over z in [0, h] at fixed (x, y, t).
double column_average_pressure(const std::function<double(double z)>& field_z,
                               double h, int n_quad);

double volume_compressibility(double a_v, double e0);  // m_v = a_v / (1 + e0)

struct SettlementCurve {
    std::vector<double> times;       // years
    std::vector<double> settlement;  // S_t, m
    std::vector<double> degree;      // U(t) = S_t / S
    double final_settlement = 0;     // S = m_v * p0 * h
    double column_x = 0, column_y = 0;

    void export_csv(const std::string& path) const;
};

/// field(x, y, z, t) in Pa; the kPa bridge for m_v [kPa^-1] is internal.
SettlementCurve settlement_curve(const std::function<double(double, double, double, double)>& field,
                                 const SoilParams& soil, const std::vector<double>& times,
                                 double column_x, double column_y, int n_quad = 35);

}  // namespace consolida
