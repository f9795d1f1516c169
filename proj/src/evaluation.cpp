#include "consolida/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace consolida {

double relative_l2(const Eigen::VectorXd& predicted, const Eigen::VectorXd& exact) {
    if (predicted.size() != exact.size())
        throw std::invalid_argument("relative_l2: shape mismatch");
    double denom = exact.norm();
    if (denom == 0.0) throw std::invalid_argument("relative_l2: exact field has zero norm");
    return (predicted - exact).norm() / denom;
}

double mean_absolute_error(const Eigen::VectorXd& predicted, const Eigen::VectorXd& exact) {
    if (predicted.size() != exact.size())
        throw std::invalid_argument("mae: shape mismatch");
    if (predicted.size() == 0) throw std::invalid_argument("mae: empty input");
    return (predicted - exact).cwiseAbs().mean();
}

double mean_relative_error(const Eigen::VectorXd& predicted, const Eigen::VectorXd& exact) {
    if (predicted.size() != exact.size())
        throw std::invalid_argument("mean_relative_error: shape mismatch");
    double sum = 0.0;
    long n = 0;
    for (long i = 0; i < exact.size(); ++i) {
        if (exact[i] == 0.0) continue;
        sum += std::abs(predicted[i] - exact[i]) / std::abs(exact[i]);
        ++n;
    }
    return n ? sum / n : 0.0;
}

std::pair<double, double> relative_error_and_accuracy(double C_v_pred, double C_v_exact) {
    if (!(C_v_exact > 0))
        throw std::invalid_argument("relative_error: exact C_v must be > 0");
    double e = std::abs(C_v_pred - C_v_exact) / C_v_exact;
    return {e, (1.0 - e) * 100.0};
}

double column_average_pressure(const std::function<double(double z)>& field_z,
                               double h, int n_quad) {
    if (n_quad < 2) throw std::invalid_argument("column_average: n_quad must be >= 2");
    double dz = h / (n_quad - 1);
    double sum = 0.5 * (field_z(0.0) + field_z(h));
    for (int i = 1; i < n_quad - 1; ++i) sum += field_z(i * dz);
    return sum * dz / h;
}

double volume_compressibility(double a_v, double e0) {
    if (!(a_v > 0)) throw std::invalid_argument("m_v: a_v must be > 0");
    if (!(e0 > -1.0)) throw std::invalid_argument("m_v: e0 must exceed -1");
    return a_v / (1.0 + e0);
}

SettlementCurve settlement_curve(const std::function<double(double, double, double, double)>& field,
                                 const SoilParams& soil, const std::vector<double>& times,
                                 double column_x, double column_y, int n_quad) {
    if (times.empty()) throw std::invalid_argument("settlement: empty time list");
    soil.validate();
    const double m_v = volume_compressibility(soil.a_v, soil.e0);  // kPa^-1
    const double p0_kpa = soil.p0 / 1000.0;

    SettlementCurve curve;
    curve.column_x = column_x;
    curve.column_y = column_y;
    curve.final_settlement = m_v * p0_kpa * soil.h;
    for (double t : times) {
        double u_m = column_average_pressure(
            [&](double z) { return field(column_x, column_y, z, t); }, soil.h, n_quad);
        double s_t = m_v * (p0_kpa - u_m / 1000.0) * soil.h;
        curve.times.push_back(t);
        curve.settlement.push_back(s_t);
        curve.degree.push_back(s_t / curve.final_settlement);
    }
    return curve;
}

void SettlementCurve::export_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("settlement: cannot open " + path);
    out << "t,S_t,U\n";
    for (std::size_t i = 0; i < times.size(); ++i)
        out << times[i] << ',' << settlement[i] << ',' << degree[i] << '\n';
}

}  // namespace consolida
