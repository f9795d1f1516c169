#pragma once

#include <string>
#include <vector>

#include "consolida/domain.hpp"

namespace consolida {

struct StabilityReport {
    double r = 0;                 // C_v * dt * (1/dx^2 + 1/dy^2 + 1/dz^2)
    double limit = 0.5;
    bool pass = false;
    double paper_form_value = 0;  // C_v * dt / (dx^2 + dy^2 + dz^2), reported only
};

StabilityReport stability_check(const SoilParams& soil, double dx, double dy, double dz,
                                double dt);

/// One stored time level of the explicit solution.
struct FieldSlice {
    double time = 0;
    std::vector<double> values;  // n_x*n_y*n_z, x-fastest ordering

    double& at(int i, int j, int k, int n_x, int n_y) {
        return values[static_cast<std::size_t>(k) * n_x * n_y + static_cast<std::size_t>(j) * n_x + i];
    }
    double at(int i, int j, int k, int n_x, int n_y) const {
        return values[static_cast<std::size_t>(k) * n_x * n_y + static_cast<std::size_t>(j) * n_x + i];
    }
};

struct FieldGrid {
    int n_x = 0, n_y = 0, n_z = 0;
    double dx = 0, dy = 0, dz = 0;  // m
    double dt = 0;                  // years
    CaseSpec case_spec;
    SoilParams soil;
    std::vector<FieldSlice> slices;

    double value(std::size_t slice, int i, int j, int k) const {
        return slices[slice].at(i, j, k, n_x, n_y);
    }
    void export_csv(const std::string& path, std::size_t slice) const;
    /// Binary block: little-endian doubles, z-fastest, plus JSON header file.
    void export_binary(const std::string& data_path, const std::string& header_path,
                       std::size_t slice) const;
};

/// One explicit Euler step of the central-difference stencil. Drained faces
/// held at 0, undrained faces use mirrored ghost points.
void fdm_step(std::vector<double>& field, std::vector<double>& scratch,
              const CaseSpec& cs, const SoilParams& soil,
              int n_x, int n_y, int n_z, double dx, double dy, double dz, double dt);

/// Runs N_t steps from the discontinuous initial state (p0 interior, 0 on
/// drained faces), storing only the requested time levels. Throws on a
/// failing stability check unless allow_unstable.
FieldGrid fdm_solve(const CaseSpec& cs, const SoilParams& soil, const GridSpec& grid,
                    long n_t_steps, const std::vector<double>& stored_times,
                    bool allow_unstable = false);

/// Fourier-series solution for the separable configurations.
/// Case 4: double drainage along y. Case 3: single drainage at z = h.
/// Case 1: product of three double-drainage profiles. Case 2: product of the
/// x and y profiles.
double analytical_series(int case_id, double x, double y, double z, double t,
                         const SoilParams& soil, int n_terms = 2000);

/// Normalized 1D double-drainage profile f(c, t; length L), f in [0, 1].
double series_double_drainage(double c, double t, double length, double C_v, int n_terms);
/// Normalized 1D single-drainage profile, drained end at c = L.
double series_single_drainage(double c, double t, double length, double C_v, int n_terms);

}  // namespace consolida
