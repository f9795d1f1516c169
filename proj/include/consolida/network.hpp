#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace consolida {

/// Fully connected Tanh network: 4 inputs (x, y, z, t), 1 linear output.
/// Parameters are stored as one flat vector, layer by layer: weight matrix
/// (row-major, out x in), then bias vector.
struct NetworkParams {
    std::vector<int> layer_sizes;   // first entry 4, last entry 1
    Eigen::VectorXd values;         // flat weights and biases
    std::optional<std::uint64_t> seed;

    int num_weight_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

    static long param_count(const std::vector<int>& sizes);
    long param_count() const { return param_count(layer_sizes); }

    /// Offset of layer l's weight block in the flat vector.
    long weight_offset(int layer) const;
    long bias_offset(int layer) const;

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    weight(int layer) const;
    Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

    void validate() const;  // throws std::invalid_argument on malformed shapes
};

struct ArchitectureSpec {
    int hidden_layers = 4;
    int neurons_per_layer = 40;

    std::vector<int> layer_sizes() const;
    /// True for the studied grid {1,2,4} x {10,20,40}; other values work but
    /// carry no accuracy expectations.
    bool in_validated_grid() const;
};

/// Gaussian init, std sqrt(1/fan_in) per layer, zero biases. Deterministic per seed.
NetworkParams init_network(const ArchitectureSpec& spec, std::uint64_t seed);
NetworkParams init_network(const std::vector<int>& layer_sizes, std::uint64_t seed);

/// Plain forward pass, tanh hidden layers, linear output.
double forward(const NetworkParams& params, double x, double y, double z, double t);

/// Binary checkpoint, magic "TZPN", version 1, CRC32 trailer.
void save_checkpoint(const NetworkParams& params, const std::string& path);
NetworkParams load_checkpoint(const std::string& path);

}  // namespace consolida
