#include "consolida/physics_loss.hpp"

#include <cmath>
#include <stdexcept>

namespace consolida {

namespace {

constexpr long kChunk = 4096;

/// Mean of (u - target)^2 over points; seeds adjoints for weight w.
double value_mse(const NetworkParams& params, const Eigen::Matrix4Xd& points,
                 double target, double w, ParamGradient* grad) {
    const long N = points.cols();
    if (N == 0) return 0.0;
    double sum_sq = 0.0;
    for (long start = 0; start < N; start += kChunk) {
        long n = std::min(kChunk, N - start);
        MlpTape tape(params, points.middleCols(start, n), DerivMode::Value);
        Eigen::RowVectorXd diff = tape.value().array() - target;
        sum_sq += diff.squaredNorm();
        if (grad) {
            Eigen::RowVectorXd value_bar = (w * 2.0 / N) * diff;
            tape.backward(value_bar, {}, {}, *grad);
        }
    }
    return sum_sq / N;
}

/// Mean of (du/daxis)^2 over points.
double neumann_mse(const NetworkParams& params, const Eigen::Matrix4Xd& points,
                   int axis, double w, ParamGradient* grad) {
    const long N = points.cols();
    if (N == 0) return 0.0;
    double sum_sq = 0.0;
    for (long start = 0; start < N; start += kChunk) {
        long n = std::min(kChunk, N - start);
        MlpTape tape(params, points.middleCols(start, n), DerivMode::First, axis);
        sum_sq += tape.first(axis).squaredNorm();
        if (grad) {
            std::vector<Eigen::RowVectorXd> first_bar(4);
            first_bar[axis] = (w * 2.0 / N) * tape.first(axis);
            tape.backward({}, first_bar, {}, *grad);
        }
    }
    return sum_sq / N;
}

struct PdeDataResult {
    double mse_pde = 0;
    double mse_data = 0;
    double dmse_pde_dCv = 0;
};

/// One Full-mode pass shared between the PDE residual and an optional data
/// term at the same points.
PdeDataResult pde_data_mse(const NetworkParams& params, const Eigen::Matrix4Xd& points,
                           double C_v, double w_f, double w_data,
                           const Eigen::VectorXd* data_targets, ParamGradient* grad) {
    const long N = points.cols();
    PdeDataResult out;
    if (N == 0) return out;
    double sum_res = 0.0, sum_data = 0.0, sum_dcv = 0.0;
    for (long start = 0; start < N; start += kChunk) {
        long n = std::min(kChunk, N - start);
        MlpTape tape(params, points.middleCols(start, n), DerivMode::Full);
        Eigen::RowVectorXd lap = tape.second(0) + tape.second(1) + tape.second(2);
        Eigen::RowVectorXd res = tape.first(3) - C_v * lap;
        sum_res += res.squaredNorm();
        sum_dcv += -2.0 * res.dot(lap);

        Eigen::RowVectorXd value_bar;
        if (data_targets) {
            Eigen::RowVectorXd diff =
                tape.value() - data_targets->segment(start, n).transpose();
            sum_data += diff.squaredNorm();
            if (grad) value_bar = (w_data * 2.0 / N) * diff;
        }
        if (grad) {
            std::vector<Eigen::RowVectorXd> first_bar(4), second_bar(3);
            first_bar[3] = (w_f * 2.0 / N) * res;
            for (int k = 0; k < 3; ++k) second_bar[k] = (-C_v * w_f * 2.0 / N) * res;
            tape.backward(value_bar, first_bar, second_bar, *grad);
        }
    }
    out.mse_pde = sum_res / N;
    out.mse_data = data_targets ? sum_data / N : 0.0;
    out.dmse_pde_dCv = sum_dcv / N;
    return out;
}

}  // namespace

double pde_residual(const DerivativeBundle& bundle, double C_v) {
    return bundle.du_dt - C_v * bundle.laplacian();
}

double mse_dirichlet(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    if (predictions.size() != targets.size())
        throw std::invalid_argument("mse_dirichlet: length mismatch");
    if (predictions.size() == 0)
        throw std::invalid_argument("mse_dirichlet: empty point set");
    return (predictions - targets).squaredNorm() / predictions.size();
}

double mse_neumann(const std::vector<DerivativeBundle>& bundles, const std::vector<int>& axes) {
    if (bundles.size() != axes.size())
        throw std::invalid_argument("mse_neumann: missing axis tags");
    if (bundles.empty()) throw std::invalid_argument("mse_neumann: empty point set");
    double sum = 0.0;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        double d;
        switch (axes[i]) {
            case 0: d = bundles[i].du_dx; break;
            case 1: d = bundles[i].du_dy; break;
            case 2: d = bundles[i].du_dz; break;
            default: throw std::invalid_argument("mse_neumann: axis must be 0..2");
        }
        sum += d * d;
    }
    return sum / bundles.size();
}

LossBreakdown forward_loss(const NetworkParams& params, double C_v,
                           const TrainingSets& sets, const CaseSpec& cs, double p0,
                           const LossWeights& weights, ParamGradient* grad) {
    for (int f = 0; f < 6; ++f) {
        if (cs.drained(f) && sets.neumann_points[f].cols() > 0)
            throw std::invalid_argument("forward_loss: neumann points on a drained face");
        if (!cs.drained(f) && sets.dirichlet_points[f].cols() > 0)
            throw std::invalid_argument("forward_loss: dirichlet points on an undrained face");
    }
    if (grad) *grad = Eigen::VectorXd::Zero(params.param_count());

    LossBreakdown out;
    out.weights = weights;
    out.mse_initial = value_mse(params, sets.initial_points, p0, weights.w_ui, grad);

    auto hcat = [](const Eigen::Matrix4Xd& a, const Eigen::Matrix4Xd& b) {
        Eigen::Matrix4Xd m(4, a.cols() + b.cols());
        if (a.cols()) m.leftCols(a.cols()) = a;
        if (b.cols()) m.rightCols(b.cols()) = b;
        return m;
    };
    const double axis_w[3] = {weights.w_ux, weights.w_uy, weights.w_uz};
    double axis_mse[3] = {0, 0, 0};
    for (int axis = 0; axis < 3; ++axis) {
        // both faces of one axis pool into one MSE per condition type
        Eigen::Matrix4Xd dir =
            hcat(sets.dirichlet_points[2 * axis], sets.dirichlet_points[2 * axis + 1]);
        Eigen::Matrix4Xd neu =
            hcat(sets.neumann_points[2 * axis], sets.neumann_points[2 * axis + 1]);
        axis_mse[axis] = value_mse(params, dir, 0.0, axis_w[axis], grad) +
                         neumann_mse(params, neu, axis, axis_w[axis], grad);
    }
    out.mse_bx = axis_mse[0];
    out.mse_by = axis_mse[1];
    out.mse_bz = axis_mse[2];

    out.mse_pde = pde_data_mse(params, sets.collocation_points, C_v, weights.w_f, 0.0,
                               nullptr, grad)
                      .mse_pde;
    out.total = out.weighted_sum();
    if (!std::isfinite(out.total))
        throw std::runtime_error("forward_loss: non-finite loss");
    if (grad && !grad->allFinite())
        throw std::runtime_error("forward_loss: non-finite gradient");
    return out;
}

InverseLossResult inverse_loss(const NetworkParams& params, double C_v_trainable,
                               const Eigen::Matrix4Xd& observation_points,
                               const Eigen::VectorXd& observation_values,
                               const LossWeights& weights, ParamGradient* grad) {
    if (observation_points.cols() == 0)
        throw std::invalid_argument("inverse_loss: empty observations");
    if (observation_points.cols() != observation_values.size())
        throw std::invalid_argument("inverse_loss: point/value length mismatch");
    if (grad) *grad = Eigen::VectorXd::Zero(params.param_count());

    InverseLossResult out;
    out.breakdown.weights = weights;
    PdeDataResult r = pde_data_mse(params, observation_points, C_v_trainable,
                                   weights.w_f, weights.w_data, &observation_values, grad);
    out.breakdown.mse_pde = r.mse_pde;
    out.breakdown.mse_data = r.mse_data;
    out.breakdown.total = out.breakdown.weighted_sum();
    out.dtotal_dCv = weights.w_f * r.dmse_pde_dCv;
    if (!std::isfinite(out.breakdown.total))
        throw std::runtime_error("inverse_loss: non-finite loss");
    return out;
}

}  // namespace consolida
