#include "consolida/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "consolida/evaluation.hpp"

namespace consolida {

Eigen::VectorXd add_gaussian_noise(const Eigen::VectorXd& values, double eps,
                                   std::uint64_t seed) {
    if (eps < 0) throw std::invalid_argument("noise: eps must be >= 0");
    if (values.size() < 2) throw std::invalid_argument("noise: need at least 2 values");
    if (eps == 0.0) return values;
    double mean = values.mean();
    double std_dev = std::sqrt((values.array() - mean).square().mean());  // population STD
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd out = values;
    for (long i = 0; i < out.size(); ++i) out[i] += eps * std_dev * normal(rng);
    return out;
}

namespace {

ObservationSet subsample_grid_solution(const Eigen::Matrix4Xd& points,
                                       const Eigen::VectorXd& values, long n_obs,
                                       std::uint64_t seed, const std::string& source) {
    if (n_obs > points.cols())
        throw std::invalid_argument("observations: n_obs exceeds grid point count");
    std::vector<long> order(points.cols());
    std::iota(order.begin(), order.end(), 0L);
    std::mt19937_64 rng(seed);
    std::vector<long> picked;
    std::sample(order.begin(), order.end(), std::back_inserter(picked), n_obs, rng);

    ObservationSet obs;
    obs.points.resize(4, n_obs);
    obs.values.resize(n_obs);
    for (long i = 0; i < n_obs; ++i) {
        obs.points.col(i) = points.col(picked[i]);
        obs.values[i] = values[picked[i]];
    }
    obs.seed = seed;
    obs.source = source;
    return obs;
}

}  // namespace

ObservationSet make_observations_fdm(const CaseSpec& cs, const SoilParams& soil,
                                     const GridSpec& grid, long n_t_steps, long n_obs,
                                     std::uint64_t seed) {
    std::vector<double> times(grid.n_t);
    for (int j = 0; j < grid.n_t; ++j) times[j] = grid.t_max * (j + 1) / grid.n_t;
    FieldGrid fg = fdm_solve(cs, soil, grid, n_t_steps, times);

    long per_slice = static_cast<long>(grid.n_x) * grid.n_y * grid.n_z;
    Eigen::Matrix4Xd pts(4, per_slice * static_cast<long>(fg.slices.size()));
    Eigen::VectorXd vals(pts.cols());
    long c = 0;
    for (const FieldSlice& s : fg.slices)
        for (int k = 0; k < fg.n_z; ++k)
            for (int j = 0; j < fg.n_y; ++j)
                for (int i = 0; i < fg.n_x; ++i) {
                    pts.col(c) << i * fg.dx, j * fg.dy, k * fg.dz, s.time;
                    vals[c] = s.at(i, j, k, fg.n_x, fg.n_y);
                    ++c;
                }
    return subsample_grid_solution(pts, vals, n_obs, seed, "fdm");
}

ObservationSet make_observations_series(int case_id, const SoilParams& soil,
                                        const GridSpec& grid, long n_obs,
                                        std::uint64_t seed) {
    Eigen::Matrix4Xd pts = build_grid(grid, soil, /*include_t0=*/false);
    Eigen::VectorXd vals(pts.cols());
    for (long i = 0; i < pts.cols(); ++i)
        vals[i] = analytical_series(case_id, pts(0, i), pts(1, i), pts(2, i), pts(3, i), soil);
    return subsample_grid_solution(pts, vals, n_obs, seed, "series");
}

InverseResult identify_cv(const ObservationSet& observations, const InverseConfig& config,
                          std::optional<double> cv_exact) {
    if (!observations.points.allFinite() || !observations.values.allFinite())
        throw std::invalid_argument("identify_cv: non-finite observations");
    config.schedule.validate();

    NetworkParams net = init_network(config.arch, config.seed);
    const long n_net = net.param_count();
    Eigen::VectorXd vars(n_net + 1);
    vars.head(n_net) = net.values;
    vars[n_net] = config.cv_init;

    auto split = [&](const Eigen::VectorXd& v, NetworkParams& p, double& cv) {
        p.values = v.head(n_net);
        cv = v[n_net];
    };

    Objective full = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
        NetworkParams p = net;
        double cv;
        split(v, p, cv);
        ParamGradient pg;
        InverseLossResult r = inverse_loss(p, cv, observations.points, observations.values,
                                           config.weights, &pg);
        grad.resize(v.size());
        grad.head(n_net) = pg;
        grad[n_net] = r.dtotal_dCv;
        return r.breakdown.total;
    };

    auto batched = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad,
                       const std::vector<long>& batch) {
        NetworkParams p = net;
        double cv;
        split(v, p, cv);
        Eigen::Matrix4Xd pts(4, batch.size());
        Eigen::VectorXd vals(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            pts.col(i) = observations.points.col(batch[i]);
            vals[i] = observations.values[batch[i]];
        }
        ParamGradient pg;
        InverseLossResult r = inverse_loss(p, cv, pts, vals, config.weights, &pg);
        grad.resize(v.size());
        grad.head(n_net) = pg;
        grad[n_net] = r.dtotal_dCv;
        return r.breakdown.total;
    };

    InverseResult res;
    ScheduleResult sr = run_schedule(
        config.schedule, full, vars, observations.points.cols(), batched,
        config.seed ^ 0xa5a5a5a5ULL,
        [&](int, double loss, const Eigen::VectorXd& x) {
            res.cv_trace.push_back(x[n_net]);
            res.loss_trace.push_back(loss);
        });

    res.cv_predicted = sr.params[n_net];
    net.values = sr.params.head(n_net);
    res.trained_network = net;
    if (cv_exact) {
        res.cv_exact = cv_exact;
        auto [e, a] = relative_error_and_accuracy(res.cv_predicted, *cv_exact);
        res.relative_error = e;
        res.accuracy = a;
    }
    if (res.cv_trace.size() >= 10) {
        std::size_t tail = res.cv_trace.size() / 10;
        auto begin = res.cv_trace.end() - tail;
        double lo = *std::min_element(begin, res.cv_trace.end());
        double hi = *std::max_element(begin, res.cv_trace.end());
        res.trace_converged = (hi - lo) < 0.01 * std::abs(res.cv_trace.back());
    }
    return res;
}

std::vector<NoiseSweepRow> noise_sweep(const std::vector<double>& eps_levels, int repetitions,
                                       const ObservationSet& exact_observations,
                                       const InverseConfig& base_config, double cv_exact) {
    if (!std::is_sorted(eps_levels.begin(), eps_levels.end()))
        throw std::invalid_argument("noise_sweep: eps levels must be ascending");
    std::vector<NoiseSweepRow> rows;
    for (double eps : eps_levels) {
        NoiseSweepRow row;
        row.eps = eps;
        for (int rep = 0; rep < repetitions; ++rep) {
            try {
                ObservationSet noisy = exact_observations;
                std::uint64_t seed = base_config.seed + 7919ULL * rep + 104729ULL *
                                     static_cast<std::uint64_t>(std::lround(eps * 1000));
                noisy.values = add_gaussian_noise(exact_observations.values, eps, seed);
                noisy.noise_level = eps;
                InverseConfig cfg = base_config;
                cfg.seed = base_config.seed + rep;
                InverseResult r = identify_cv(noisy, cfg, cv_exact);
                row.accuracies.push_back(r.accuracy);
            } catch (const std::exception&) {
                ++row.failures;  // missing cell
            }
        }
        row.mean_accuracy =
            row.accuracies.empty()
                ? std::numeric_limits<double>::quiet_NaN()
                : std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) /
                      row.accuracies.size();
        rows.push_back(std::move(row));
    }
    return rows;
}

ObservationSet ObservationSet::from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("observations: cannot open " + path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<Eigen::Vector4d> pts;
    std::vector<double> vals;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        double x, y, z, t, u;
        char comma;
        if (!(ss >> x >> comma >> y >> comma >> z >> comma >> t >> comma >> u))
            throw std::runtime_error("observations: malformed row in " + path);
        pts.push_back({x, y, z, t});
        vals.push_back(u);
    }
    ObservationSet obs;
    obs.points.resize(4, pts.size());
    obs.values.resize(vals.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        obs.points.col(i) = pts[i];
        obs.values[i] = vals[i];
    }
    obs.source = "file";
    return obs;
}

void ObservationSet::to_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("observations: cannot open " + path);
    out << "x,y,z,t,u\n";
    for (long i = 0; i < points.cols(); ++i)
        out << points(0, i) << ',' << points(1, i) << ',' << points(2, i) << ','
            << points(3, i) << ',' << values[i] << '\n';
}

void InverseResult::export_json(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("inverse: cannot open " + path);
    out << "{\n  \"cv_predicted\": " << cv_predicted;
    if (cv_exact) {
        out << ",\n  \"cv_exact\": " << *cv_exact << ",\n  \"relative_error\": " << relative_error
            << ",\n  \"accuracy\": " << accuracy;
    }
    out << ",\n  \"epochs\": " << cv_trace.size()
        << ",\n  \"trace_converged\": " << (trace_converged ? "true" : "false") << "\n}\n";
}

void InverseResult::export_cv_trace_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("inverse: cannot open " + path);
    out << "epoch,cv,loss\n";
    for (std::size_t i = 0; i < cv_trace.size(); ++i)
        out << i << ',' << cv_trace[i] << ','
            << (i < loss_trace.size() ? loss_trace[i] : 0.0) << '\n';
}

void export_accuracy_table_csv(const std::vector<NoiseSweepRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("sweep: cannot open " + path);
    out << "eps,mean_accuracy,runs,failures\n";
    for (const NoiseSweepRow& r : rows)
        out << r.eps << ',' << r.mean_accuracy << ',' << r.accuracies.size() << ','
            << r.failures << '\n';
}

}  // namespace consolida
