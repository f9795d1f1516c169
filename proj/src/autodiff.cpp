#include "consolida/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace consolida {

namespace {

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMajorMat> weight_grad(Eigen::VectorXd& grad, const NetworkParams& p, int layer) {
    return {grad.data() + p.weight_offset(layer), p.layer_sizes[layer + 1], p.layer_sizes[layer]};
}

Eigen::Map<Eigen::VectorXd> bias_grad(Eigen::VectorXd& grad, const NetworkParams& p, int layer) {
    return {grad.data() + p.bias_offset(layer), p.layer_sizes[layer + 1]};
}

}  // namespace

bool MlpTape::wants_second(int dir) const { return mode_ == DerivMode::Full && dir < 3; }

MlpTape::MlpTape(const NetworkParams& params, const Eigen::Matrix4Xd& points,
                 DerivMode mode, int axis)
    : params_(params), points_(points), mode_(mode), axis_(axis) {
    params_.validate();
    if (params_.layer_sizes.front() != 4 || params_.layer_sizes.back() != 1)
        throw std::invalid_argument("tape: network must map 4 inputs to 1 output");
    if (mode_ == DerivMode::First && (axis_ < 0 || axis_ > 3))
        throw std::invalid_argument("tape: bad derivative axis");
    if (mode_ == DerivMode::Full) dirs_ = {0, 1, 2, 3};
    else if (mode_ == DerivMode::First) dirs_ = {axis_};

    const long B = points_.cols();
    const int L = params_.num_weight_layers();
    act_.resize(L > 0 ? L - 1 : 0);
    vpre_.resize(L > 0 ? L - 1 : 0);
    wpre_.resize(L > 0 ? L - 1 : 0);

    Eigen::MatrixXd a_prev = points_;
    std::vector<Eigen::MatrixXd> p_prev(4), q_prev(4);
    for (int d : dirs_) {
        p_prev[d] = Eigen::MatrixXd::Zero(4, B);
        p_prev[d].row(d).setOnes();
        if (wants_second(d)) q_prev[d] = Eigen::MatrixXd::Zero(4, B);
    }

    for (int l = 0; l < L - 1; ++l) {
        auto W = params_.weight(l);
        Eigen::MatrixXd z = (W * a_prev).colwise() + params_.bias(l);
        Eigen::MatrixXd a = z.array().tanh().matrix();
        Eigen::ArrayXXd s = 1.0 - a.array().square();

        vpre_[l].resize(4);
        wpre_[l].resize(4);
        std::vector<Eigen::MatrixXd> p_cur(4), q_cur(4);
        for (int d : dirs_) {
            Eigen::MatrixXd v = W * p_prev[d];
            p_cur[d] = (s * v.array()).matrix();
            if (wants_second(d)) {
                Eigen::MatrixXd w2 = W * q_prev[d];
                Eigen::ArrayXXd s2 = -2.0 * a.array() * s;
                q_cur[d] = (s2 * v.array().square() + s * w2.array()).matrix();
                wpre_[l][d] = std::move(w2);
            }
            vpre_[l][d] = std::move(v);
        }
        act_[l] = a;
        a_prev = std::move(a);
        p_prev = std::move(p_cur);
        q_prev = std::move(q_cur);
    }

    // linear output layer
    auto W = params_.weight(L - 1);
    value_ = ((W * a_prev).colwise() + params_.bias(L - 1)).row(0);
    first_.assign(4, Eigen::RowVectorXd());
    second_.assign(3, Eigen::RowVectorXd());
    for (int d : dirs_) {
        first_[d] = (W * p_prev[d]).row(0);
        if (wants_second(d)) second_[d] = (W * q_prev[d]).row(0);
    }
}

DerivativeBundle MlpTape::bundle(long i) const {
    if (mode_ != DerivMode::Full)
        throw std::logic_error("tape: bundles need Full mode");
    DerivativeBundle b;
    b.u = value_[i];
    b.du_dx = first_[0][i];
    b.du_dy = first_[1][i];
    b.du_dz = first_[2][i];
    b.du_dt = first_[3][i];
    b.d2u_dx2 = second_[0][i];
    b.d2u_dy2 = second_[1][i];
    b.d2u_dz2 = second_[2][i];
    return b;
}

void MlpTape::backward(const Eigen::RowVectorXd& value_bar,
                       const std::vector<Eigen::RowVectorXd>& first_bar,
                       const std::vector<Eigen::RowVectorXd>& second_bar,
                       Eigen::VectorXd& grad) const {
    const long B = points_.cols();
    const int L = params_.num_weight_layers();

    auto layer_input = [&](int l) -> const Eigen::MatrixXd& {
        return l == 0 ? points_ : act_[l - 1];
    };

    // recompute post-activation tangents entering weight layer l
    auto input_tangents = [&](int l, int d, Eigen::MatrixXd& p_in, Eigen::MatrixXd* q_in) {
        if (l == 0) {
            p_in = Eigen::MatrixXd::Zero(4, B);
            p_in.row(d).setOnes();
            if (q_in) *q_in = Eigen::MatrixXd::Zero(4, B);
            return;
        }
        const Eigen::MatrixXd& a = act_[l - 1];
        const Eigen::MatrixXd& v = vpre_[l - 1][d];
        Eigen::ArrayXXd s = 1.0 - a.array().square();
        p_in = (s * v.array()).matrix();
        if (q_in) {
            Eigen::ArrayXXd s2 = -2.0 * a.array() * s;
            *q_in = (s2 * v.array().square() + s * wpre_[l - 1][d].array()).matrix();
        }
    };

    bool have_value = value_bar.size() > 0;
    auto have_first = [&](int d) {
        return static_cast<int>(first_bar.size()) > d && first_bar[d].size() > 0;
    };
    auto have_second = [&](int d) {
        return static_cast<int>(second_bar.size()) > d && second_bar[d].size() > 0;
    };

    // output layer
    {
        const int l = L - 1;
        auto W = params_.weight(l);
        const Eigen::MatrixXd& a_in = layer_input(l);
        auto gW = weight_grad(grad, params_, l);
        auto gb = bias_grad(grad, params_, l);

        Eigen::MatrixXd a_bar = Eigen::MatrixXd::Zero(params_.layer_sizes[l], B);
        if (have_value) {
            gW += value_bar * a_in.transpose();
            gb[0] += value_bar.sum();
            a_bar = W.transpose() * value_bar;
        }
        std::vector<Eigen::MatrixXd> p_bar(4), q_bar(4);
        for (int d : dirs_) {
            Eigen::MatrixXd p_in, q_in;
            bool snd = wants_second(d) && have_second(d);
            input_tangents(l, d, p_in, snd ? &q_in : nullptr);
            if (have_first(d)) {
                gW += first_bar[d] * p_in.transpose();
                p_bar[d] = W.transpose() * first_bar[d];
            }
            if (snd) {
                gW += second_bar[d] * q_in.transpose();
                q_bar[d] = W.transpose() * second_bar[d];
            }
        }

        // hidden layers, back to front
        for (int h = L - 2; h >= 0; --h) {
            const Eigen::MatrixXd& a = act_[h];
            Eigen::ArrayXXd s = 1.0 - a.array().square();
            Eigen::ArrayXXd s2 = -2.0 * a.array() * s;

            Eigen::ArrayXXd z_bar = Eigen::ArrayXXd::Zero(a.rows(), B);
            if (a_bar.size()) z_bar += s * a_bar.array();

            std::vector<Eigen::MatrixXd> v_bar(4), w_bar(4);
            for (int d : dirs_) {
                const Eigen::MatrixXd& v = vpre_[h][d];
                if (p_bar[d].size()) {
                    z_bar += s2 * v.array() * p_bar[d].array();
                    v_bar[d] = (s * p_bar[d].array()).matrix();
                }
                if (wants_second(d) && q_bar[d].size()) {
                    Eigen::ArrayXXd s3 = s * (4.0 * a.array().square() - 2.0 * s);
                    z_bar += (s3 * v.array().square() + s2 * wpre_[h][d].array()) * q_bar[d].array();
                    if (v_bar[d].size())
                        v_bar[d] += (2.0 * s2 * v.array() * q_bar[d].array()).matrix();
                    else
                        v_bar[d] = (2.0 * s2 * v.array() * q_bar[d].array()).matrix();
                    w_bar[d] = (s * q_bar[d].array()).matrix();
                }
            }

            auto Wh = params_.weight(h);
            const Eigen::MatrixXd& in = layer_input(h);
            auto gWh = weight_grad(grad, params_, h);
            auto gbh = bias_grad(grad, params_, h);
            Eigen::MatrixXd z_bar_m = z_bar.matrix();
            gWh += z_bar_m * in.transpose();
            gbh += z_bar_m.rowwise().sum();

            for (int d : dirs_) {
                if (v_bar[d].size()) {
                    if (h == 0) {
                        gWh.col(d) += v_bar[d].rowwise().sum();
                    } else {
                        Eigen::MatrixXd p_in, q_in;
                        input_tangents(h, d, p_in, w_bar[d].size() ? &q_in : nullptr);
                        gWh += v_bar[d] * p_in.transpose();
                        if (w_bar[d].size()) gWh += w_bar[d] * q_in.transpose();
                    }
                }
            }

            a_bar = Wh.transpose() * z_bar_m;
            for (int d : dirs_) {
                p_bar[d] = v_bar[d].size() ? Eigen::MatrixXd(Wh.transpose() * v_bar[d])
                                           : Eigen::MatrixXd();
                q_bar[d] = w_bar[d].size() ? Eigen::MatrixXd(Wh.transpose() * w_bar[d])
                                           : Eigen::MatrixXd();
            }
        }
    }
}

std::vector<DerivativeBundle> evaluate_with_input_derivatives(
    const NetworkParams& params, const Eigen::Matrix4Xd& points) {
    if (!points.allFinite())
        throw std::invalid_argument("autodiff: non-finite input point");
    MlpTape tape(params, points, DerivMode::Full);
    std::vector<DerivativeBundle> out(points.cols());
    for (long i = 0; i < points.cols(); ++i) {
        out[i] = tape.bundle(i);
        const DerivativeBundle& b = out[i];
        for (double v : {b.u, b.du_dt, b.du_dx, b.du_dy, b.du_dz,
                         b.d2u_dx2, b.d2u_dy2, b.d2u_dz2})
            if (!std::isfinite(v))
                throw std::runtime_error("autodiff: non-finite derivative encountered");
    }
    return out;
}

double loss_gradient(const NetworkParams& params, const std::vector<TapeLoss>& terms,
                     ParamGradient& grad) {
    grad = Eigen::VectorXd::Zero(params.param_count());
    double total = 0.0;
    for (const TapeLoss& term : terms) {
        if (term.points.cols() == 0) continue;
        MlpTape tape(params, term.points, term.mode, term.axis);
        Eigen::RowVectorXd value_bar;
        std::vector<Eigen::RowVectorXd> first_bar(4), second_bar(3);
        total += term.seed(tape, value_bar, first_bar, second_bar);
        tape.backward(value_bar, first_bar, second_bar, grad);
    }
    if (!std::isfinite(total) || !grad.allFinite())
        throw std::runtime_error("autodiff: non-finite loss or gradient");
    return total;
}

bool derivatives_agree(double a, double b, double rel_tol) {
    double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(a - b) <= rel_tol * scale + 1e-6;
}

bool second_derivative_consistency(const NetworkParams& params,
                                   const Eigen::Vector4d& point,
                                   double step, double rel_tol) {
    Eigen::Matrix4Xd pts(4, 1);
    pts.col(0) = point;
    std::vector<DerivativeBundle> bundles;
    try {
        bundles = evaluate_with_input_derivatives(params, pts);
    } catch (const std::exception&) {
        return false;
    }
    const DerivativeBundle& b = bundles[0];
    const double engine[3] = {b.d2u_dx2, b.d2u_dy2, b.d2u_dz2};
    for (int axis = 0; axis < 3; ++axis) {
        Eigen::Vector4d lo = point, hi = point;
        lo[axis] -= step;
        hi[axis] += step;
        double f0 = forward(params, point[0], point[1], point[2], point[3]);
        double fl = forward(params, lo[0], lo[1], lo[2], lo[3]);
        double fh = forward(params, hi[0], hi[1], hi[2], hi[3]);
        double fd = (fh - 2.0 * f0 + fl) / (step * step);
        if (!derivatives_agree(engine[axis], fd, rel_tol)) return false;
    }
    return true;
}

}  // namespace consolida
