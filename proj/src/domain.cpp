#include "consolida/domain.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace consolida {

void SoilParams::validate() const {
    if (!(C_v > 0)) throw std::invalid_argument("soil.C_v must be > 0");
    if (!(p0 > 0)) throw std::invalid_argument("soil.p0 must be > 0");
    if (!(l > 0 && b > 0 && h > 0)) throw std::invalid_argument("soil dimensions must be > 0");
    if (!(a_v >= 0)) throw std::invalid_argument("soil.a_v must be >= 0");
    if (!(e0 > -1)) throw std::invalid_argument("soil.e0 must be > -1");
}

CaseSpec CaseSpec::standard_case(int id) {
    using FC = FaceCondition;
    CaseSpec cs;
    switch (id) {
        case 1:
            cs.faces = {FC::Drained, FC::Drained, FC::Drained, FC::Drained, FC::Drained, FC::Drained};
            break;
        case 2:
            cs.faces = {FC::Drained, FC::Drained, FC::Drained, FC::Drained, FC::Undrained, FC::Undrained};
            break;
        case 3:
            cs.faces = {FC::Undrained, FC::Undrained, FC::Undrained, FC::Undrained, FC::Undrained, FC::Drained};
            break;
        case 4:
            cs.faces = {FC::Undrained, FC::Undrained, FC::Drained, FC::Drained, FC::Undrained, FC::Undrained};
            break;
        default:
            throw std::invalid_argument("case id must be 1..4");
    }
    return cs;
}

void GridSpec::validate() const {
    if (n_x < 2 || n_y < 2 || n_z < 2)
        throw std::invalid_argument("grid: spatial counts must be >= 2");
    if (n_t < 1) throw std::invalid_argument("grid: n_t must be >= 1");
    if (!(t_max > 0)) throw std::invalid_argument("grid: t_max must be > 0");
}

long TrainingSets::total_condition_points() const {
    long n = initial_points.cols();
    for (const auto& m : dirichlet_points) n += m.cols();
    for (const auto& m : neumann_points) n += m.cols();
    return n;
}

Eigen::MatrixXd latin_hypercube(long n, int dims, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("lhs: n must be >= 1");
    if (dims < 1) throw std::invalid_argument("lhs: dims must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd pts(dims, n);
    std::vector<long> strata(n);
    for (int d = 0; d < dims; ++d) {
        std::iota(strata.begin(), strata.end(), 0L);
        std::shuffle(strata.begin(), strata.end(), rng);
        for (long i = 0; i < n; ++i)
            pts(d, i) = (static_cast<double>(strata[i]) + unit(rng)) / static_cast<double>(n);
    }
    return pts;
}

Eigen::Matrix4Xd build_grid(const GridSpec& spec, const SoilParams& soil, bool include_t0) {
    spec.validate();
    soil.validate();
    auto coord = [](int i, int n, double len) { return len * i / (n - 1); };
    std::vector<double> ts(spec.n_t);
    for (int j = 0; j < spec.n_t; ++j)
        ts[j] = include_t0 ? spec.t_max * j / std::max(1, spec.n_t - 1)
                           : spec.t_max * (j + 1) / spec.n_t;

    Eigen::Matrix4Xd pts(4, spec.total_points());
    long c = 0;
    for (int jt = 0; jt < spec.n_t; ++jt)
        for (int iz = 0; iz < spec.n_z; ++iz)
            for (int iy = 0; iy < spec.n_y; ++iy)
                for (int ix = 0; ix < spec.n_x; ++ix)
                    pts.col(c++) << coord(ix, spec.n_x, soil.l), coord(iy, spec.n_y, soil.b),
                        coord(iz, spec.n_z, soil.h), ts[jt];
    return pts;
}

namespace {

struct PoolEntry {
    // kind: 6 = initial plane, 0..5 = face id
    std::uint8_t kind;
    int i, j, k, t;  // t unused for initial
};

}  // namespace

TrainingSets generate_training_sets(const CaseSpec& cs, const SoilParams& soil,
                                    const GridSpec& grid, const TrainingConfig& cfg,
                                    std::uint64_t seed) {
    grid.validate();
    soil.validate();

    auto xc = [&](int i) { return soil.l * i / (grid.n_x - 1); };
    auto yc = [&](int j) { return soil.b * j / (grid.n_y - 1); };
    auto zc = [&](int k) { return soil.h * k / (grid.n_z - 1); };
    auto tc = [&](int jt) { return grid.t_max * (jt + 1) / grid.n_t; };  // t in (0, t_max]

    // condition pool: open spatial interior of the t=0 plane, plus the six
    // full face planes at each t > 0
    std::vector<PoolEntry> pool;
    for (int k = 1; k < grid.n_z - 1; ++k)
        for (int j = 1; j < grid.n_y - 1; ++j)
            for (int i = 1; i < grid.n_x - 1; ++i)
                pool.push_back({6, i, j, k, 0});
    for (int jt = 0; jt < grid.n_t; ++jt) {
        for (int k = 0; k < grid.n_z; ++k)
            for (int j = 0; j < grid.n_y; ++j) {
                pool.push_back({XLo, 0, j, k, jt});
                pool.push_back({XHi, grid.n_x - 1, j, k, jt});
            }
        for (int k = 0; k < grid.n_z; ++k)
            for (int i = 0; i < grid.n_x; ++i) {
                pool.push_back({YLo, i, 0, k, jt});
                pool.push_back({YHi, i, grid.n_y - 1, k, jt});
            }
        for (int j = 0; j < grid.n_y; ++j)
            for (int i = 0; i < grid.n_x; ++i) {
                pool.push_back({ZLo, i, j, 0, jt});
                pool.push_back({ZHi, i, j, grid.n_z - 1, jt});
            }
    }

    std::mt19937_64 rng(seed);
    std::vector<PoolEntry> sampled;
    if (cfg.sample_with_replacement) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        sampled.reserve(cfg.n_u);
        for (long i = 0; i < cfg.n_u; ++i) sampled.push_back(pool[pick(rng)]);
    } else {
        if (cfg.n_u > static_cast<long>(pool.size()))
            throw std::invalid_argument("training: N_u exceeds condition point pool (" +
                                        std::to_string(pool.size()) + ")");
        std::sample(pool.begin(), pool.end(), std::back_inserter(sampled), cfg.n_u, rng);
    }

    auto to_point = [&](const PoolEntry& e) {
        Eigen::Vector4d p;
        p << xc(e.i), yc(e.j), zc(e.k), e.kind == 6 ? 0.0 : tc(e.t);
        return p;
    };

    std::vector<Eigen::Vector4d> initial;
    std::array<std::vector<Eigen::Vector4d>, 6> faces;
    for (const PoolEntry& e : sampled) {
        if (e.kind == 6) initial.push_back(to_point(e));
        else faces[e.kind].push_back(to_point(e));
    }

    auto pack = [](const std::vector<Eigen::Vector4d>& v) {
        Eigen::Matrix4Xd m(4, v.size());
        for (std::size_t i = 0; i < v.size(); ++i) m.col(i) = v[i];
        return m;
    };

    TrainingSets sets;
    sets.initial_points = pack(initial);
    for (int f = 0; f < 6; ++f) {
        if (cs.drained(f)) {
            sets.dirichlet_points[f] = pack(faces[f]);
            sets.neumann_points[f] = Eigen::Matrix4Xd(4, 0);
        } else {
            sets.neumann_points[f] = pack(faces[f]);
            sets.dirichlet_points[f] = Eigen::Matrix4Xd(4, 0);
        }
    }

    // collocation: LHS over the open domain, optionally extended with the
    // whole condition grid (paper composition)
    Eigen::MatrixXd unit = latin_hypercube(cfg.n_f_interior, 4, seed ^ 0x9e3779b97f4a7c15ULL);
    long extra = cfg.collocation_includes_condition_grid ? static_cast<long>(pool.size()) : 0;
    sets.collocation_points.resize(4, cfg.n_f_interior + extra);
    for (long i = 0; i < cfg.n_f_interior; ++i)
        sets.collocation_points.col(i) << unit(0, i) * soil.l, unit(1, i) * soil.b,
            unit(2, i) * soil.h, unit(3, i) * grid.t_max;
    if (extra)
        for (std::size_t i = 0; i < pool.size(); ++i)
            sets.collocation_points.col(cfg.n_f_interior + i) = to_point(pool[i]);

    return sets;
}

void TrainingSets::export_csv(const std::string& path, double p0) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("training: cannot open " + path);
    out << "x,y,z,t,kind,face,target\n";
    auto dump = [&](const Eigen::Matrix4Xd& m, const char* kind, int face, double target,
                    bool has_target) {
        for (long i = 0; i < m.cols(); ++i) {
            out << m(0, i) << ',' << m(1, i) << ',' << m(2, i) << ',' << m(3, i) << ','
                << kind << ',' << face << ',';
            if (has_target) out << target;
            out << '\n';
        }
    };
    dump(initial_points, "initial", -1, p0, true);
    for (int f = 0; f < 6; ++f) dump(dirichlet_points[f], "dirichlet", f, 0.0, true);
    for (int f = 0; f < 6; ++f) dump(neumann_points[f], "neumann", f, 0.0, false);
    dump(collocation_points, "collocation", -1, 0.0, false);
}

}  // namespace consolida
