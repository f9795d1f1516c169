#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "consolida/autodiff.hpp"
#include "consolida/domain.hpp"

namespace consolida {

struct LossWeights {
    double w_ui = 1.0;
    double w_ux = 1.0, w_uy = 1.0, w_uz = 1.0;
    double w_f = 1.0;
    double w_data = 1.0;
};

struct LossBreakdown {
    double mse_initial = 0;
    double mse_bx = 0, mse_by = 0, mse_bz = 0;
    double mse_pde = 0;
    double mse_data = 0;
    LossWeights weights;
    double total = 0;

    /// Weighted sum in the fixed order used everywhere; total is always
    /// stored as exactly this expression.
    double weighted_sum() const {
        return weights.w_ui * mse_initial + weights.w_ux * mse_bx + weights.w_uy * mse_by +
               weights.w_uz * mse_bz + weights.w_f * mse_pde + weights.w_data * mse_data;
    }
};

/// du/dt - C_v * (d2u/dx2 + d2u/dy2 + d2u/dz2)
double pde_residual(const DerivativeBundle& bundle, double C_v);

double mse_dirichlet(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

/// Mean squared face-normal derivative; axes[i] in {0,1,2} tags bundle i.
double mse_neumann(const std::vector<DerivativeBundle>& bundles, const std::vector<int>& axes);

/// Full forward-problem loss (initial + per-axis boundary + PDE residual).
/// When grad is non-null the exact parameter gradient of the total is
/// accumulated there (vector is resized and zeroed first).
LossBreakdown forward_loss(const NetworkParams& params, double C_v,
                           const TrainingSets& sets, const CaseSpec& cs, double p0,
                           const LossWeights& weights, ParamGradient* grad = nullptr);

struct InverseLossResult {
    LossBreakdown breakdown;
    double dtotal_dCv = 0;  // filled when gradient requested
};

/// Data MSE plus PDE-residual MSE evaluated at the observation points, with
/// C_v a trainable scalar.
InverseLossResult inverse_loss(const NetworkParams& params, double C_v_trainable,
                               const Eigen::Matrix4Xd& observation_points,
                               const Eigen::VectorXd& observation_values,
                               const LossWeights& weights, ParamGradient* grad = nullptr);

}  // namespace consolida
