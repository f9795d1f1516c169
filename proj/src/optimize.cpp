#include "consolida/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>
#include <stdexcept>

namespace consolida {

AdamState AdamState::init(long dim, double lr) {
    AdamState s;
    s.m = Eigen::VectorXd::Zero(dim);
    s.v = Eigen::VectorXd::Zero(dim);
    s.lr = lr;
    return s;
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& gradient) {
    if (params.size() != gradient.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam: dimension mismatch");
    if (!gradient.allFinite())
        throw std::invalid_argument("adam: non-finite gradient");
    state.step += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * gradient;
    state.v = state.beta2 * state.v.array().matrix() +
              (1.0 - state.beta2) * gradient.array().square().matrix();
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    Eigen::ArrayXd m_hat = state.m.array() / bc1;
    Eigen::ArrayXd v_hat = state.v.array() / bc2;
    params.array() -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
}

namespace {

struct WolfeResult {
    bool ok = false;
    double alpha = 0, f = 0;
    Eigen::VectorXd x, g;
    int evals = 0;
};

/// Strong-Wolfe line search (bracket + zoom, quadratic interpolation with
/// bisection safeguard).
WolfeResult wolfe_line_search(const Objective& objective, const Eigen::VectorXd& x0,
                              double f0, const Eigen::VectorXd& g0,
                              const Eigen::VectorXd& d, double alpha0,
                              double c1, double c2, int max_evals) {
    WolfeResult res;
    const double dphi0 = g0.dot(d);
    if (dphi0 >= 0) return res;  // not a descent direction

    auto phi = [&](double a, double& dphi, Eigen::VectorXd& x, Eigen::VectorXd& g) {
        x = x0 + a * d;
        double f = objective(x, g);
        dphi = g.dot(d);
        ++res.evals;
        return f;
    };

    auto zoom = [&](double lo, double f_lo, double dphi_lo, double hi, double f_hi) {
        Eigen::VectorXd x, g;
        for (int it = 0; it < max_evals && res.evals < max_evals; ++it) {
            // quadratic interpolation on [lo, hi] using f_lo, dphi_lo, f_hi
            double a = lo + 0.5 * (hi - lo);
            double denom = f_hi - f_lo - dphi_lo * (hi - lo);
            if (std::abs(denom) > 1e-16) {
                double quad = lo - 0.5 * dphi_lo * (hi - lo) * (hi - lo) / denom;
                double lo_m = std::min(lo, hi), hi_m = std::max(lo, hi);
                double margin = 0.1 * (hi_m - lo_m);
                if (quad > lo_m + margin && quad < hi_m - margin) a = quad;
            }
            double dphi_a;
            double f_a = phi(a, dphi_a, x, g);
            if (!std::isfinite(f_a) || f_a > f0 + c1 * a * dphi0 || f_a >= f_lo) {
                hi = a;
                f_hi = f_a;
            } else {
                if (std::abs(dphi_a) <= -c2 * dphi0) {
                    res.ok = true;
                    res.alpha = a;
                    res.f = f_a;
                    res.x = std::move(x);
                    res.g = std::move(g);
                    return;
                }
                if (dphi_a * (hi - lo) >= 0) {
                    hi = lo;
                    f_hi = f_lo;
                }
                lo = a;
                f_lo = f_a;
                dphi_lo = dphi_a;
            }
            if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
        }
    };

    double a_prev = 0.0, f_prev = f0, dphi_prev = dphi0;
    double a = alpha0;
    Eigen::VectorXd x, g;
    for (int it = 0; it < max_evals && res.evals < max_evals; ++it) {
        double dphi_a;
        double f_a = phi(a, dphi_a, x, g);
        if (!std::isfinite(f_a) || f_a > f0 + c1 * a * dphi0 || (it > 0 && f_a >= f_prev)) {
            zoom(a_prev, f_prev, dphi_prev, a, f_a);
            return res;
        }
        if (std::abs(dphi_a) <= -c2 * dphi0) {
            res.ok = true;
            res.alpha = a;
            res.f = f_a;
            res.x = std::move(x);
            res.g = std::move(g);
            return res;
        }
        if (dphi_a >= 0) {
            zoom(a, f_a, dphi_a, a_prev, f_prev);
            return res;
        }
        a_prev = a;
        f_prev = f_a;
        dphi_prev = dphi_a;
        a *= 2.0;
    }
    return res;
}

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& objective, const Eigen::VectorXd& params0,
                           const LbfgsConfig& config,
                           const std::function<void(int, double, const Eigen::VectorXd&)>&
                               on_epoch) {
    if (config.history < 1) throw std::invalid_argument("lbfgs: history must be >= 1");
    LbfgsResult res;
    Eigen::VectorXd x = params0;
    Eigen::VectorXd g(x.size());
    double f = objective(x, g);
    if (!std::isfinite(f)) throw std::invalid_argument("lbfgs: objective not finite at start");

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;
    double gamma = 1.0;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        if (g.lpNorm<Eigen::Infinity>() <= config.grad_tol) {
            res.status = LbfgsStatus::Converged;
            break;
        }

        // two-loop recursion
        Eigen::VectorXd q = g;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        q *= gamma;
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Eigen::VectorXd d = -q;
        if (d.dot(g) >= 0) {  // fall back to steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            gamma = 1.0;
            d = -g;
        }

        double alpha0 = s_hist.empty() ? std::min(config.initial_step, 1.0 / std::max(1.0, g.norm()))
                                       : config.initial_step;
        WolfeResult ls = wolfe_line_search(objective, x, f, g, d, alpha0, config.c1,
                                           config.c2, config.max_line_search);
        if (!ls.ok) {
            res.status = LbfgsStatus::LineSearchFailed;
            break;
        }

        Eigen::VectorXd s = ls.x - x;
        Eigen::VectorXd y = ls.g - g;
        double prev_f = f;
        x = std::move(ls.x);
        g = std::move(ls.g);
        f = ls.f;
        double sy = s.dot(y);
        if (sy > 1e-10 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            gamma = sy / y_hist.back().squaredNorm();
            if (static_cast<int>(s_hist.size()) > config.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        res.trace.push_back(f);
        res.epochs = epoch + 1;
        if (on_epoch) on_epoch(epoch, f, x);

        if (config.loss_tol > 0 &&
            std::abs(prev_f - f) <= config.loss_tol * std::max(1.0, std::abs(f))) {
            res.status = LbfgsStatus::LossTol;
            break;
        }
    }
    if (res.epochs == config.max_epochs) res.status = LbfgsStatus::MaxEpochs;
    if (g.lpNorm<Eigen::Infinity>() <= config.grad_tol) res.status = LbfgsStatus::Converged;

    res.params = std::move(x);
    res.loss = f;
    return res;
}

TrainingSchedule TrainingSchedule::forward_default() {
    TrainingSchedule s;
    s.phases.push_back({OptimizerKind::Lbfgs, 5000, 1.0, 0});
    return s;
}

TrainingSchedule TrainingSchedule::inverse_default() {
    TrainingSchedule s;
    s.phases.push_back({OptimizerKind::Adam, 10000, 0.001, 4000});
    s.phases.push_back({OptimizerKind::Lbfgs, 5000, 1.0, 0});
    return s;
}

void TrainingSchedule::validate() const {
    if (phases.empty()) throw std::invalid_argument("schedule: needs at least one phase");
    for (const Phase& p : phases)
        if (p.epochs < 1) throw std::invalid_argument("schedule: epoch budgets must be >= 1");
}

ScheduleResult run_schedule(const TrainingSchedule& schedule, const Objective& objective,
                            const Eigen::VectorXd& params0, long n_points,
                            const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&,
                                                       const std::vector<long>&)>&
                                batched_objective,
                            std::uint64_t shuffle_seed,
                            const std::function<void(int, double, const Eigen::VectorXd&)>&
                                on_epoch) {
    schedule.validate();
    ScheduleResult res;
    res.params = params0;
    std::mt19937_64 rng(shuffle_seed);

    int global_epoch = 0;
    for (const Phase& phase : schedule.phases) {
        if (phase.kind == OptimizerKind::Adam) {
            AdamState state = AdamState::init(res.params.size(), phase.lr);
            bool batched = phase.batch_size > 0 && batched_objective && n_points > phase.batch_size;
            std::vector<long> order(batched ? n_points : 0);
            std::iota(order.begin(), order.end(), 0L);
            Eigen::VectorXd grad(res.params.size());
            for (int e = 0; e < phase.epochs; ++e) {
                double epoch_loss = 0.0;
                if (batched) {
                    std::shuffle(order.begin(), order.end(), rng);
                    long n_batches = 0;
                    for (long start = 0; start < n_points; start += phase.batch_size) {
                        long n = std::min(phase.batch_size, n_points - start);
                        std::vector<long> batch(order.begin() + start, order.begin() + start + n);
                        epoch_loss += batched_objective(res.params, grad, batch);
                        adam_step(state, res.params, grad);
                        ++n_batches;
                    }
                    epoch_loss /= n_batches;
                } else {
                    epoch_loss = objective(res.params, grad);
                    adam_step(state, res.params, grad);
                }
                res.trace.push_back(epoch_loss);
                res.loss = epoch_loss;
                if (on_epoch) on_epoch(global_epoch, epoch_loss, res.params);
                ++global_epoch;
            }
        } else {
            LbfgsConfig cfg;
            cfg.max_epochs = phase.epochs;
            cfg.initial_step = phase.lr;
            LbfgsResult lr = lbfgs_minimize(
                objective, res.params, cfg,
                [&](int, double f, const Eigen::VectorXd& x) {
                    if (on_epoch) on_epoch(global_epoch, f, x);
                    ++global_epoch;
                });
            res.params = lr.params;
            res.loss = lr.loss;
            res.trace.insert(res.trace.end(), lr.trace.begin(), lr.trace.end());
        }
    }
    res.epochs = global_epoch;
    return res;
}

}  // namespace consolida
