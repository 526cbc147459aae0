#include <numeric>
#include <sstream>

#include "carenet/autonn.hpp"
#include "carenet/error.hpp"
#include "carenet/rng.hpp"

namespace carenet::nn {

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        require(d > 0, ErrorKind::Graph, "tensor dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << ')';
    return out.str();
}

Tensor::Tensor(std::vector<int> shape_) : shape(std::move(shape_)) {
    v.assign(shape_size(shape), 0.0);
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

void Tensor::fill(double value) { std::fill(v.begin(), v.end(), value); }

Tensor he_normal_init(const std::vector<int>& shape, int fan_in, std::uint64_t seed) {
    require(fan_in >= 1, ErrorKind::Input, "fan_in must be >= 1");
    Tensor t(shape);
    Rng rng(seed);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& x : t.v) x = stddev * rng.normal();
    return t;
}

}  // namespace carenet::nn
