#include "consolida/network.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

namespace consolida {

long NetworkParams::param_count(const std::vector<int>& sizes) {
    long n = 0;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
        n += static_cast<long>(sizes[i]) * sizes[i + 1] + sizes[i + 1];
    return n;
}

long NetworkParams::weight_offset(int layer) const {
    long off = 0;
    for (int l = 0; l < layer; ++l)
        off += static_cast<long>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
    return off;
}

long NetworkParams::bias_offset(int layer) const {
    return weight_offset(layer) + static_cast<long>(layer_sizes[layer]) * layer_sizes[layer + 1];
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
NetworkParams::weight(int layer) const {
    return {values.data() + weight_offset(layer), layer_sizes[layer + 1], layer_sizes[layer]};
}

Eigen::Map<const Eigen::VectorXd> NetworkParams::bias(int layer) const {
    return {values.data() + bias_offset(layer), layer_sizes[layer + 1]};
}

void NetworkParams::validate() const {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("network: need at least input and output layer");
    for (int s : layer_sizes)
        if (s < 1) throw std::invalid_argument("network: zero-sized layer");
    if (values.size() != param_count())
        throw std::invalid_argument("network: flat vector length " +
                                    std::to_string(values.size()) + " does not match layer sizes (expect " +
                                    std::to_string(param_count()) + ")");
}

std::vector<int> ArchitectureSpec::layer_sizes() const {
    std::vector<int> sizes;
    sizes.push_back(4);
    for (int i = 0; i < hidden_layers; ++i) sizes.push_back(neurons_per_layer);
    sizes.push_back(1);
    return sizes;
}

bool ArchitectureSpec::in_validated_grid() const {
    auto in = [](int v, std::initializer_list<int> set) {
        for (int s : set) if (v == s) return true;
        return false;
    };
    return in(hidden_layers, {1, 2, 4}) && in(neurons_per_layer, {10, 20, 40});
}

NetworkParams init_network(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    NetworkParams p;
    p.layer_sizes = layer_sizes;
    p.seed = seed;
    p.values = Eigen::VectorXd::Zero(NetworkParams::param_count(layer_sizes));
    p.validate();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int l = 0; l + 1 < static_cast<int>(layer_sizes.size()); ++l) {
        const double std_dev = std::sqrt(1.0 / layer_sizes[l]);
        long off = p.weight_offset(l);
        long n_w = static_cast<long>(layer_sizes[l]) * layer_sizes[l + 1];
        for (long i = 0; i < n_w; ++i) p.values[off + i] = std_dev * normal(rng);
        // biases stay zero
    }
    return p;
}

NetworkParams init_network(const ArchitectureSpec& spec, std::uint64_t seed) {
    return init_network(spec.layer_sizes(), seed);
}

double forward(const NetworkParams& params, double x, double y, double z, double t) {
    params.validate();
    Eigen::VectorXd a(4);
    a << x, y, z, t;
    const int L = params.num_weight_layers();
    for (int l = 0; l < L; ++l) {
        Eigen::VectorXd zv = params.weight(l) * a + params.bias(l);
        if (l + 1 < L)
            a = zv.array().tanh().matrix();
        else
            a = zv;
    }
    return a[0];
}

namespace {

constexpr char kMagic[4] = {'T', 'Z', 'P', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const NetworkParams& params, const std::string& path) {
    params.validate();
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(params.layer_sizes.size()));
    for (int s : params.layer_sizes) put_u32(buf, static_cast<std::uint32_t>(s));
    // doubles are written little-endian; on x86 a memcpy is already that
    std::size_t payload = static_cast<std::size_t>(params.values.size()) * sizeof(double);
    std::size_t head = buf.size();
    buf.resize(head + payload);
    std::memcpy(buf.data() + head, params.values.data(), payload);
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
    put_u32(buf, crc);

    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("checkpoint: cannot open " + tmp);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("checkpoint: rename failed for " + path);
}

NetworkParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::uint32_t crc_stored = get_u32(buf, buf.size() - 4);
    std::uint32_t crc_actual = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
    if (crc_stored != crc_actual)
        throw std::runtime_error("checkpoint: CRC mismatch in " + path);

    std::size_t off = 4;
    std::uint32_t version = get_u32(buf, off); off += 4;
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    std::uint32_t n_layers = get_u32(buf, off); off += 4;
    if (n_layers < 2 || n_layers > 1024)
        throw std::runtime_error("checkpoint: implausible layer count");
    NetworkParams p;
    p.layer_sizes.resize(n_layers);
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        p.layer_sizes[i] = static_cast<int>(get_u32(buf, off));
        off += 4;
    }
    long n_params = NetworkParams::param_count(p.layer_sizes);
    std::size_t payload = static_cast<std::size_t>(n_params) * sizeof(double);
    if (buf.size() != off + payload + 4)
        throw std::runtime_error("checkpoint: truncated file " + path);
    p.values.resize(n_params);
    std::memcpy(p.values.data(), buf.data() + off, payload);
    p.validate();
    return p;
}

}  // namespace consolida
