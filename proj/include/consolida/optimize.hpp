#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace consolida {

/// objective(x, grad) -> loss; must fill grad with the exact gradient.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct AdamState {
    long step = 0;
    Eigen::VectorXd m;  // first moment
    Eigen::VectorXd v;  // second moment
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double lr = 0.001;

    static AdamState init(long dim, double lr = 0.001);
};

/// Bias-corrected Adam update; params and state updated in place.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& gradient);

struct LbfgsConfig {
    int history = 50;
    double initial_step = 1.0;   // step tried first in each line search
    double c1 = 1e-4, c2 = 0.9;  // strong-Wolfe constants
    int max_epochs = 5000;
    double grad_tol = 1e-9;
    double loss_tol = 0.0;       // stop when |f_k - f_{k+1}| <= loss_tol * max(1,|f|)
    int max_line_search = 40;
};

enum class LbfgsStatus { Converged, MaxEpochs, LineSearchFailed, LossTol };

struct LbfgsResult {
    Eigen::VectorXd params;
    double loss = 0;
    LbfgsStatus status = LbfgsStatus::MaxEpochs;
    int epochs = 0;
    std::vector<double> trace;  // loss after each accepted step
};

LbfgsResult lbfgs_minimize(const Objective& objective, const Eigen::VectorXd& params0,
                           const LbfgsConfig& config,
                           const std::function<void(int, double, const Eigen::VectorXd&)>&
                               on_epoch = nullptr);

enum class OptimizerKind { Adam, Lbfgs };

struct Phase {
    OptimizerKind kind = OptimizerKind::Lbfgs;
    int epochs = 5000;
    double lr = 1.0;          // Adam learning rate or L-BFGS initial step
    long batch_size = 0;      // 0 = full batch (Adam phases only)
};

struct TrainingSchedule {
    std::vector<Phase> phases;

    static TrainingSchedule forward_default();  // single L-BFGS phase, 5000 epochs
    static TrainingSchedule inverse_default();  // Adam 10000 then L-BFGS
    void validate() const;
};

struct ScheduleResult {
    Eigen::VectorXd params;
    double loss = 0;
    std::vector<double> trace;  // loss per epoch across all phases
    int epochs = 0;
};

/// Runs phases in order threading the variable vector. For Adam phases with a
/// batch size, `batched_objective(x, grad, epoch, batch)` is called once per
/// batch of a reshuffled partition; otherwise the plain objective is used.
ScheduleResult run_schedule(const TrainingSchedule& schedule, const Objective& objective,
                            const Eigen::VectorXd& params0, long n_points = 0,
                            const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&,
                                                       const std::vector<long>&)>&
                                batched_objective = nullptr,
                            std::uint64_t shuffle_seed = 0,
                            const std::function<void(int, double, const Eigen::VectorXd&)>&
                                on_epoch = nullptr);

}  // namespace consolida
