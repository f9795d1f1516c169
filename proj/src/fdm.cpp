#include "consolida/fdm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace consolida {

StabilityReport stability_check(const SoilParams& soil, double dx, double dy, double dz,
                                double dt) {
    StabilityReport rep;
    rep.r = soil.C_v * dt * (1.0 / (dx * dx) + 1.0 / (dy * dy) + 1.0 / (dz * dz));
    rep.pass = rep.r <= rep.limit;
    rep.paper_form_value = soil.C_v * dt / (dx * dx + dy * dy + dz * dz);
    return rep;
}

namespace {

inline std::size_t idx(int i, int j, int k, int n_x, int n_y) {
    return static_cast<std::size_t>(k) * n_x * n_y + static_cast<std::size_t>(j) * n_x + i;
}

}  // namespace

void fdm_step(std::vector<double>& field, std::vector<double>& scratch,
              const CaseSpec& cs, const SoilParams& soil,
              int n_x, int n_y, int n_z, double dx, double dy, double dz, double dt) {
    const double rx = soil.C_v * dt / (dx * dx);
    const double ry = soil.C_v * dt / (dy * dy);
    const double rz = soil.C_v * dt / (dz * dz);
    scratch.resize(field.size());

    // mirrored ghost: u_{-1} = u_{1}, u_{n} = u_{n-2}
    auto xm = [&](int i) { return i < 0 ? 1 : (i >= n_x ? n_x - 2 : i); };
    auto ym = [&](int j) { return j < 0 ? 1 : (j >= n_y ? n_y - 2 : j); };
    auto zm = [&](int k) { return k < 0 ? 1 : (k >= n_z ? n_z - 2 : k); };

    for (int k = 0; k < n_z; ++k) {
        bool z_dirichlet = (k == 0 && cs.drained(ZLo)) || (k == n_z - 1 && cs.drained(ZHi));
        for (int j = 0; j < n_y; ++j) {
            bool y_dirichlet = (j == 0 && cs.drained(YLo)) || (j == n_y - 1 && cs.drained(YHi));
            for (int i = 0; i < n_x; ++i) {
                bool dirichlet = z_dirichlet || y_dirichlet ||
                                 (i == 0 && cs.drained(XLo)) ||
                                 (i == n_x - 1 && cs.drained(XHi));
                std::size_t c = idx(i, j, k, n_x, n_y);
                if (dirichlet) {
                    scratch[c] = 0.0;
                    continue;
                }
                double u = field[c];
                double lap =
                    rx * (field[idx(xm(i + 1), j, k, n_x, n_y)] - 2.0 * u +
                          field[idx(xm(i - 1), j, k, n_x, n_y)]) +
                    ry * (field[idx(i, ym(j + 1), k, n_x, n_y)] - 2.0 * u +
                          field[idx(i, ym(j - 1), k, n_x, n_y)]) +
                    rz * (field[idx(i, j, zm(k + 1), n_x, n_y)] - 2.0 * u +
                          field[idx(i, j, zm(k - 1), n_x, n_y)]);
                scratch[c] = u + lap;
            }
        }
    }
    field.swap(scratch);
}

FieldGrid fdm_solve(const CaseSpec& cs, const SoilParams& soil, const GridSpec& grid,
                    long n_t_steps, const std::vector<double>& stored_times,
                    bool allow_unstable) {
    grid.validate();
    soil.validate();
    if (n_t_steps < 1) throw std::invalid_argument("fdm: need at least one step");

    FieldGrid fg;
    fg.n_x = grid.n_x;
    fg.n_y = grid.n_y;
    fg.n_z = grid.n_z;
    fg.dx = soil.l / (grid.n_x - 1);
    fg.dy = soil.b / (grid.n_y - 1);
    fg.dz = soil.h / (grid.n_z - 1);
    fg.dt = grid.t_max / n_t_steps;
    fg.case_spec = cs;
    fg.soil = soil;

    StabilityReport rep = stability_check(soil, fg.dx, fg.dy, fg.dz, fg.dt);
    if (!rep.pass && !allow_unstable)
        throw std::runtime_error("fdm: stability violation, r = " + std::to_string(rep.r) +
                                 " > 1/2 (reduce dt or pass the override flag)");

    // map requested times to step numbers
    std::vector<long> store_steps;
    for (double t : stored_times) {
        if (t < -1e-12 || t > grid.t_max * (1.0 + 1e-12))
            throw std::invalid_argument("fdm: stored time outside [0, t_max]");
        store_steps.push_back(std::lround(t / fg.dt));
    }

    std::vector<double> field(static_cast<std::size_t>(fg.n_x) * fg.n_y * fg.n_z, soil.p0);
    // drained faces start at 0 (boundary value wins at t = 0)
    for (int k = 0; k < fg.n_z; ++k)
        for (int j = 0; j < fg.n_y; ++j)
            for (int i = 0; i < fg.n_x; ++i) {
                bool d = (i == 0 && cs.drained(XLo)) || (i == fg.n_x - 1 && cs.drained(XHi)) ||
                         (j == 0 && cs.drained(YLo)) || (j == fg.n_y - 1 && cs.drained(YHi)) ||
                         (k == 0 && cs.drained(ZLo)) || (k == fg.n_z - 1 && cs.drained(ZHi));
                if (d) field[idx(i, j, k, fg.n_x, fg.n_y)] = 0.0;
            }

    auto maybe_store = [&](long step) {
        for (std::size_t s = 0; s < store_steps.size(); ++s)
            if (store_steps[s] == step) {
                FieldSlice slice;
                slice.time = step * fg.dt;
                slice.values = field;
                fg.slices.push_back(std::move(slice));
            }
    };

    std::vector<double> scratch;
    maybe_store(0);
    for (long step = 1; step <= n_t_steps; ++step) {
        fdm_step(field, scratch, cs, soil, fg.n_x, fg.n_y, fg.n_z, fg.dx, fg.dy, fg.dz, fg.dt);
        maybe_store(step);
    }
    return fg;
}

double series_double_drainage(double c, double t, double length, double C_v, int n_terms) {
    if (t <= 0) return 1.0;
    double sum = 0.0;
    for (int m = 0; m < n_terms; ++m) {
        double k = 2.0 * m + 1.0;
        double envelope =
            4.0 / (k * M_PI) * std::exp(-k * k * M_PI * M_PI * C_v * t / (length * length));
        sum += envelope * std::sin(k * M_PI * c / length);
        // truncate on the sin-free envelope: the term itself can vanish at
        // isolated points long before the tail is negligible
        if (envelope < 1e-12 && m > 0) break;
    }
    return sum;
}

double series_single_drainage(double c, double t, double length, double C_v, int n_terms) {
    if (t <= 0) return 1.0;
    double sum = 0.0;
    const double two_l = 2.0 * length;
    for (int m = 0; m < n_terms; ++m) {
        double k = 2.0 * m + 1.0;
        double envelope =
            4.0 / (k * M_PI) * std::exp(-k * k * M_PI * M_PI * C_v * t / (two_l * two_l));
        sum += envelope * std::sin(k * M_PI * (length - c) / two_l);
        if (envelope < 1e-12 && m > 0) break;
    }
    return sum;
}

double analytical_series(int case_id, double x, double y, double z, double t,
                         const SoilParams& soil, int n_terms) {
    if (n_terms < 1) throw std::invalid_argument("series: n_terms must be >= 1");
    switch (case_id) {
        case 1:
            return soil.p0 * series_double_drainage(x, t, soil.l, soil.C_v, n_terms) *
                   series_double_drainage(y, t, soil.b, soil.C_v, n_terms) *
                   series_double_drainage(z, t, soil.h, soil.C_v, n_terms);
        case 2:
            return soil.p0 * series_double_drainage(x, t, soil.l, soil.C_v, n_terms) *
                   series_double_drainage(y, t, soil.b, soil.C_v, n_terms);
        case 3:
            return soil.p0 * series_single_drainage(z, t, soil.h, soil.C_v, n_terms);
        case 4:
            return soil.p0 * series_double_drainage(y, t, soil.b, soil.C_v, n_terms);
        default:
            throw std::invalid_argument("series: case must be 1..4");
    }
}

void FieldGrid::export_csv(const std::string& path, std::size_t slice) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("fdm: cannot open " + path);
    out << "x,y,z,u\n";
    const FieldSlice& s = slices.at(slice);
    for (int k = 0; k < n_z; ++k)
        for (int j = 0; j < n_y; ++j)
            for (int i = 0; i < n_x; ++i)
                out << i * dx << ',' << j * dy << ',' << k * dz << ','
                    << s.at(i, j, k, n_x, n_y) << '\n';
}

void FieldGrid::export_binary(const std::string& data_path, const std::string& header_path,
                              std::size_t slice) const {
    const FieldSlice& s = slices.at(slice);
    // z-fastest order
    std::vector<double> buf;
    buf.reserve(s.values.size());
    for (int i = 0; i < n_x; ++i)
        for (int j = 0; j < n_y; ++j)
            for (int k = 0; k < n_z; ++k) buf.push_back(s.at(i, j, k, n_x, n_y));
    std::ofstream out(data_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("fdm: cannot open " + data_path);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(double)));

    std::ofstream hdr(header_path, std::ios::trunc);
    hdr << "{\n"
        << "  \"shape\": [" << n_x << ", " << n_y << ", " << n_z << "],\n"
        << "  \"order\": \"z-fastest\",\n"
        << "  \"spacing\": [" << dx << ", " << dy << ", " << dz << "],\n"
        << "  \"time\": " << s.time << ",\n"
        << "  \"dtype\": \"float64-le\"\n"
        << "}\n";
}

}  // namespace consolida
