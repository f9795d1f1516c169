#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "consolida/network.hpp"

namespace consolida {

/// Exact derivatives of the network output at one point.
struct DerivativeBundle {
    double u = 0;
    double du_dt = 0;
    double du_dx = 0, du_dy = 0, du_dz = 0;
    double d2u_dx2 = 0, d2u_dy2 = 0, d2u_dz2 = 0;

    double laplacian() const { return d2u_dx2 + d2u_dy2 + d2u_dz2; }
};

/// Gradient of a scalar loss with respect to the flat parameter vector.
using ParamGradient = Eigen::VectorXd;

/// What a tape pass has to propagate. Value: u only. First: u plus du/dn
/// along one axis. Full: u, all four first derivatives and the three spatial
/// second derivatives.
enum class DerivMode { Value, First, Full };

/// Forward tangent propagation through a Tanh MLP for one batch of points,
/// retaining enough state to run the parameter-adjoint pass afterwards.
///
/// First tangents follow p_l = tanh'(z_l) .* (W_l p_{l-1}); second tangents
/// q_l = tanh''(z_l) .* v_l^2 + tanh'(z_l) .* (W_l q_{l-1}) with
/// v_l = W_l p_{l-1}. Both are exact, no finite differencing anywhere.
class MlpTape {
public:
    /// points: 4 x B, rows (x, y, z, t). axis only used in First mode.
    MlpTape(const NetworkParams& params, const Eigen::Matrix4Xd& points,
            DerivMode mode, int axis = 0);

    long batch() const { return points_.cols(); }
    DerivMode mode() const { return mode_; }

    const Eigen::RowVectorXd& value() const { return value_; }
    /// First derivative rows; in Full mode index 0..3 = x,y,z,t, in First
    /// mode only the constructor axis is populated.
    const Eigen::RowVectorXd& first(int axis) const { return first_[axis]; }
    /// Spatial second derivatives, axis 0..2 = x,y,z (Full mode only).
    const Eigen::RowVectorXd& second(int axis) const { return second_[axis]; }

    DerivativeBundle bundle(long i) const;  // Full mode

    /// Accumulate d(loss)/d(params) into grad given the loss adjoints of the
    /// tape outputs. Rows not active under the tape's mode must be empty.
    void backward(const Eigen::RowVectorXd& value_bar,
                  const std::vector<Eigen::RowVectorXd>& first_bar,
                  const std::vector<Eigen::RowVectorXd>& second_bar,
                  Eigen::VectorXd& grad) const;

private:
    const NetworkParams& params_;
    Eigen::MatrixXd points_;  // 4 x B
    DerivMode mode_;
    int axis_;
    std::vector<int> dirs_;  // propagated tangent directions

    // per weight layer l: activations entering layer l+1 (act_[l]) and the
    // pre-activation tangents v, w of layer l, needed by backward
    std::vector<Eigen::MatrixXd> act_;                 // act_[l] = a_l (hidden only)
    std::vector<std::vector<Eigen::MatrixXd>> vpre_;   // vpre_[l][d]
    std::vector<std::vector<Eigen::MatrixXd>> wpre_;   // wpre_[l][d], spatial only

    Eigen::RowVectorXd value_;
    std::vector<Eigen::RowVectorXd> first_;   // indexed by axis 0..3
    std::vector<Eigen::RowVectorXd> second_;  // indexed by axis 0..2

    bool wants_second(int dir) const;
};

/// Batched evaluation; points processed independently. Throws on non-finite
/// results so NaNs never leak into an optimizer.
std::vector<DerivativeBundle> evaluate_with_input_derivatives(
    const NetworkParams& params, const Eigen::Matrix4Xd& points);

/// Exact gradient of an arbitrary smooth scalar loss over the engine's
/// primitives. The loss callback receives the tape outputs for the points it
/// asked for and must fill the adjoint seeds.
struct TapeLoss {
    Eigen::Matrix4Xd points;
    DerivMode mode = DerivMode::Full;
    int axis = 0;
    /// returns loss value, fills adjoints (same shapes as tape outputs)
    std::function<double(const MlpTape&, Eigen::RowVectorXd& value_bar,
                         std::vector<Eigen::RowVectorXd>& first_bar,
                         std::vector<Eigen::RowVectorXd>& second_bar)>
        seed;
};

/// Evaluates loss = sum of terms and its exact parameter gradient.
double loss_gradient(const NetworkParams& params, const std::vector<TapeLoss>& terms,
                     ParamGradient& grad);

/// Agreement rule shared by the self-check: relative tolerance with a small
/// absolute floor so exact zeros compare clean.
bool derivatives_agree(double a, double b, double rel_tol = 1e-4);

/// Diagnostic: symmetric-difference second derivatives vs engine output,
/// 1e-4 relative agreement. Used by `selfcheck` and the test harness.
bool second_derivative_consistency(const NetworkParams& params,
                                   const Eigen::Vector4d& point,
                                   double step = 1e-4, double rel_tol = 1e-4);

}  // namespace consolida
