#include "sqj/demo.hpp"

#include <cmath>
#include <stdexcept>

#include "sqj/random.hpp"

namespace sqj {

namespace {

class Builder {
public:
    explicit Builder(Shape input) : input_(input) {}

    std::string conv(const std::string& name, const std::string& src, int k, int s, int p, int co,
                     bool relu = true) {
        LayerNode n = node(name, LayerKind::Conv, {src});
        n.kernel = k;
        n.stride = s;
        n.pad = p;
        n.ch_out = co;
        n.use_relu = relu;
        nodes_.push_back(n);
        return name;
    }

    std::string pool(const std::string& name, const std::string& src, int k, int s) {
        LayerNode n = node(name, LayerKind::MaxPool, {src});
        n.kernel = k;
        n.stride = s;
        nodes_.push_back(n);
        return name;
    }

    /// squeeze 1x1, expand 1x1 and 3x3 (both with the given stride), concat.
    std::string fire(const std::string& name, const std::string& src, int squeeze, int expand,
                     int stride = 1) {
        const auto sq = conv(name + "_squeeze1x1", src, 1, 1, 0, squeeze);
        const auto e1 = conv(name + "_expand1x1", sq, 1, stride, 0, expand);
        const auto e3 = conv(name + "_expand3x3", sq, 3, stride, 1, expand);
        nodes_.push_back(node(name + "_concat", LayerKind::Concat, {e1, e3}));
        return name + "_concat";
    }

    std::string tail(const std::string& src, int classes) {
        const auto c10 = conv("conv10", src, 1, 1, 0, classes);
        nodes_.push_back(node("pool10", LayerKind::GlobalAvgPool, {c10}));
        nodes_.push_back(node("prob", LayerKind::Softmax, {"pool10"}));
        return "prob";
    }

    NetworkGraph build() { return NetworkGraph(std::move(nodes_)); }

private:
    LayerNode node(const std::string& name, LayerKind kind, std::vector<std::string> inputs) const {
        LayerNode n;
        n.name = name;
        n.kind = kind;
        n.inputs = std::move(inputs);
        if (n.inputs.size() == 1 && n.inputs[0] == kGraphInput) n.in_shape = input_;
        return n;
    }

    Shape input_;
    std::vector<LayerNode> nodes_;
};

}  // namespace

NetworkGraph mini_squeezenet() {
    Builder b({39, 39, 3});
    auto x = b.conv("conv1", std::string(kGraphInput), 3, 2, 0, 16);
    x = b.pool("pool1", x, 3, 2);
    x = b.fire("fire2", x, 8, 16);
    x = b.fire("fire3", x, 8, 16);
    x = b.pool("pool3", x, 3, 2);
    x = b.fire("fire4", x, 16, 32);
    b.tail(x, 10);
    return b.build();
}

NetworkGraph mini_zynqnet() {
    Builder b({32, 32, 3});
    auto x = b.conv("conv1", std::string(kGraphInput), 3, 2, 1, 16);
    x = b.fire("fire2", x, 8, 16, 2);
    x = b.fire("fire3", x, 16, 32);
    x = b.fire("fire4", x, 16, 32, 2);
    b.tail(x, 10);
    return b.build();
}

NetworkGraph squeezenet_v11() {
    Builder b({227, 227, 3});
    auto x = b.conv("conv1", std::string(kGraphInput), 3, 2, 0, 64);
    x = b.pool("pool1", x, 3, 2);
    x = b.fire("fire2", x, 16, 64);
    x = b.fire("fire3", x, 16, 64);
    x = b.pool("pool3", x, 3, 2);
    x = b.fire("fire4", x, 32, 128);
    x = b.fire("fire5", x, 32, 128);
    x = b.pool("pool5", x, 3, 2);
    x = b.fire("fire6", x, 48, 192);
    x = b.fire("fire7", x, 48, 192);
    x = b.fire("fire8", x, 64, 256);
    x = b.fire("fire9", x, 64, 256);
    b.tail(x, 1000);
    return b.build();
}

std::vector<std::string> demo_names() { return {"mini-squeezenet", "mini-zynqnet"}; }

NetworkGraph demo_graph(const std::string& name) {
    if (name == "mini-squeezenet") return mini_squeezenet();
    if (name == "mini-zynqnet") return mini_zynqnet();
    if (name == "squeezenet-v1.1") return squeezenet_v11();
    throw std::invalid_argument("unknown demo network '" + name + "'");
}

RParamSet random_params(const NetworkGraph& g, std::uint64_t seed) {
    Rng rng(seed);
    RParamSet out;
    for (const auto& n : g.nodes()) {
        if (n.kind != LayerKind::Conv) continue;
        RBlob b;
        b.name = n.name;
        b.co = n.ch_out;
        b.k = n.kernel;
        b.ci = n.in_shape.c;
        const double a = std::sqrt(3.0 / static_cast<double>(b.kkc()));
        b.weights.resize(static_cast<std::size_t>(b.co) * b.kkc());
        for (auto& w : b.weights) w = static_cast<float>(rng.uniform(-a, a));
        b.bias.resize(static_cast<std::size_t>(b.co));
        for (auto& v : b.bias) v = static_cast<float>(rng.uniform(-0.1, 0.1));
        out.emplace(n.name, std::move(b));
    }
    return out;
}

std::vector<RMap> random_inputs(Shape shape, int count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<RMap> out;
    for (int i = 0; i < count; ++i) {
        RMap m(shape);
        for (auto& v : m.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        out.push_back(std::move(m));
    }
    return out;
}

QuantizedNet quantize_network(const NetworkGraph& g, const RParamSet& params,
                              std::span<const RMap> samples) {
    QuantizedNet q;
    q.scheme = calibrate_network(g, params, samples);
    q.graph = apply_scheme(g, q.scheme);
    q.params = quantize_params(params, q.scheme);
    return q;
}

DemoBundle make_demo(const std::string& name, std::uint64_t seed, int samples) {
    DemoBundle d;
    d.name = name;
    d.graph = demo_graph(name);
    d.real = random_params(d.graph, seed);
    d.samples = random_inputs(d.graph.input_shape(), samples, seed ^ 0x5eed5eedULL);
    d.quantized = quantize_network(d.graph, d.real, d.samples);
    return d;
}

}  // namespace sqj
