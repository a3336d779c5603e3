#pragma once

// Bundled networks: two desk-scale demo nets with seeded random weights, and
// the SqueezeNet v1.1 topology (shapes only) for cost reports.

#include <cstdint>
#include <string>
#include <vector>

#include "sqj/network.hpp"
#include "sqj/quantizer.hpp"
#include "sqj/tensor.hpp"

namespace sqj {

/// 39x39x3 input, conv1 (3x3/2), pool, three fire modules (one pool between
/// a concat and the next fire), conv10, global average pool, softmax.
NetworkGraph mini_squeezenet();
/// 32x32x3 input, all downsampling by stride-2 convs, including 1x1/2 expands.
NetworkGraph mini_zynqnet();
/// Full SqueezeNet v1.1 with floor-mode pooling.
NetworkGraph squeezenet_v11();

std::vector<std::string> demo_names();
NetworkGraph demo_graph(const std::string& name);

/// Weights uniform in +-sqrt(3 / (K*K*CHI)), biases in +-0.1.
RParamSet random_params(const NetworkGraph& g, std::uint64_t seed);
std::vector<RMap> random_inputs(Shape shape, int count, std::uint64_t seed);

struct QuantizedNet {
    NetworkGraph graph;
    QParamSet params;
    QuantScheme scheme;
};

QuantizedNet quantize_network(const NetworkGraph& g, const RParamSet& params,
                              std::span<const RMap> samples);

struct DemoBundle {
    std::string name;
    NetworkGraph graph;          // real-valued, no FLs
    RParamSet real;
    std::vector<RMap> samples;
    QuantizedNet quantized;
};

/// Deterministic for a given (name, seed).
DemoBundle make_demo(const std::string& name, std::uint64_t seed, int samples = 4);

}  // namespace sqj
