#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace consolida {

struct SoilParams {
    double C_v = 0.05;     // m^2/year
    double p0 = 1.0;       // Pa
    double l = 1.0, b = 1.0, h = 1.0;  // m
    double a_v = 0.00025;  // kPa^-1
    double e0 = 0.8;

    void validate() const;
};

enum class FaceCondition { Drained, Undrained };

/// Face order: x=0, x=l, y=0, y=b, z=0, z=h.
enum Face { XLo = 0, XHi, YLo, YHi, ZLo, ZHi };

struct CaseSpec {
    std::array<FaceCondition, 6> faces{};

    bool drained(int face) const { return faces[face] == FaceCondition::Drained; }
    /// 0 for x faces, 1 for y, 2 for z.
    static int face_axis(int face) { return face / 2; }

    /// The four catalogued drainage configurations.
    static CaseSpec standard_case(int id);
};

struct GridSpec {
    int n_x = 35, n_y = 35, n_z = 35;
    int n_t = 19;
    double t_max = 1.0;  // years

    long total_points() const {
        return static_cast<long>(n_x) * n_y * n_z * n_t;
    }
    void validate() const;
};

enum class PointKind { Initial, Dirichlet, Neumann, Collocation };

struct TrainingSets {
    // columns are points (x, y, z, t)
    Eigen::Matrix4Xd initial_points;                    // targets all p0
    std::array<Eigen::Matrix4Xd, 6> dirichlet_points;   // targets all 0
    std::array<Eigen::Matrix4Xd, 6> neumann_points;     // face-normal = face axis
    Eigen::Matrix4Xd collocation_points;

    long total_condition_points() const;
    void export_csv(const std::string& path, double p0) const;
};

/// Stratified sampling on [0,1)^dims: one sample per stratum per dimension.
Eigen::MatrixXd latin_hypercube(long n, int dims, std::uint64_t seed);

/// Uniform lattice over [0,l]x[0,b]x[0,h] x time samples. include_t0 selects
/// [0, t_max] (n_t samples incl. both ends) vs (0, t_max] (n_t samples).
Eigen::Matrix4Xd build_grid(const GridSpec& spec, const SoilParams& soil,
                            bool include_t0 = false);

struct TrainingConfig {
    long n_u = 80000;           // sampled initial+boundary training points
    long n_f_interior = 300000; // LHS collocation points in the open domain
    bool collocation_includes_condition_grid = true;  // paper composition
    bool sample_with_replacement = false;
};

TrainingSets generate_training_sets(const CaseSpec& cs, const SoilParams& soil,
                                    const GridSpec& grid, const TrainingConfig& cfg,
                                    std::uint64_t seed);

}  // namespace consolida
