#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "consolida/domain.hpp"
#include "consolida/fdm.hpp"
#include "consolida/network.hpp"
#include "consolida/optimize.hpp"
#include "consolida/physics_loss.hpp"

namespace consolida {

struct ObservationSet {
    Eigen::Matrix4Xd points;
    Eigen::VectorXd values;  // Pa
    double noise_level = 0;  // fraction of STD(u_exact)
    std::string source = "fdm";  // fdm | series | file
    std::uint64_t seed = 0;

    static ObservationSet from_csv(const std::string& path);
    void to_csv(const std::string& path) const;
};

/// u_noise = u_exact + eps * STD(u_exact) * N(0,1); STD is the population
/// standard deviation of the whole vector.
Eigen::VectorXd add_gaussian_noise(const Eigen::VectorXd& values, double eps,
                                   std::uint64_t seed);

/// FDM solution on the grid's time levels, subsampled uniformly at random.
ObservationSet make_observations_fdm(const CaseSpec& cs, const SoilParams& soil,
                                     const GridSpec& grid, long n_t_steps, long n_obs,
                                     std::uint64_t seed);

/// Series-oracle observations (exact for cases 1-4), same sampling scheme.
ObservationSet make_observations_series(int case_id, const SoilParams& soil,
                                        const GridSpec& grid, long n_obs,
                                        std::uint64_t seed);

struct InverseConfig {
    ArchitectureSpec arch{4, 40};
    TrainingSchedule schedule = TrainingSchedule::inverse_default();
    long batch_size = 4000;
    double cv_init = 1.0;
    std::uint64_t seed = 0;
    LossWeights weights;
};

struct InverseResult {
    double cv_predicted = 0;
    std::optional<double> cv_exact;
    double relative_error = 0;  // E, only when cv_exact known
    double accuracy = 0;        // A = (1 - E) * 100
    std::vector<double> cv_trace;
    std::vector<double> loss_trace;
    bool trace_converged = false;  // final 10% peak-to-peak < 1% of final value
    NetworkParams trained_network;

    void export_json(const std::string& path) const;
    void export_cv_trace_csv(const std::string& path) const;
};

InverseResult identify_cv(const ObservationSet& observations, const InverseConfig& config,
                          std::optional<double> cv_exact = std::nullopt);

struct NoiseSweepRow {
    double eps = 0;
    std::vector<double> accuracies;  // one per completed repetition, NaN-free
    double mean_accuracy = 0;
    int failures = 0;
};

/// Runs identify_cv per (eps, seed) on re-noised copies of the exact
/// observations. Per-run failures become missing cells, never abort the sweep.
std::vector<NoiseSweepRow> noise_sweep(const std::vector<double>& eps_levels, int repetitions,
                                       const ObservationSet& exact_observations,
                                       const InverseConfig& base_config, double cv_exact);

void export_accuracy_table_csv(const std::vector<NoiseSweepRow>& rows, const std::string& path);

}  // namespace consolida
