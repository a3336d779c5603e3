#include "sqj/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sqj/runtime.hpp"

namespace sqj {

FxpFormat format_for_max_abs(double max_abs, int word_len) {
    if (word_len < 2 || word_len > 16) throw FxpError("word length must lie in [2, 16]");
    if (!std::isfinite(max_abs)) throw FxpError("cannot calibrate a non-finite range");
    if (max_abs == 0.0) return {word_len, word_len - 1};
    // max_abs = f * 2^e with f in [0.5, 1): ceil(log2) is e, or e - 1 when f == 0.5.
    int e = 0;
    const double f = std::frexp(std::fabs(max_abs), &e);
    const int int_len = f == 0.5 ? e - 1 : e;
    return {word_len, std::clamp(word_len - 1 - int_len, kMinFrac, kMaxFrac)};
}

namespace {

template <typename T>
FxpFormat choose_impl(std::span<const T> samples, int word_len) {
    if (samples.empty()) throw FxpError("choose_format needs at least one sample");
    double m = 0.0;
    for (T v : samples) m = std::max(m, std::fabs(static_cast<double>(v)));
    return format_for_max_abs(m, word_len);
}

// Union-find over value names.
class Groups {
public:
    void add(const std::string& k) {
        if (!parent_.count(k)) parent_[k] = k;
    }
    std::string find(const std::string& k) {
        add(k);
        std::string r = k;
        while (parent_[r] != r) r = parent_[r];
        for (std::string c = k; parent_[c] != r;) {
            std::string next = parent_[c];
            parent_[c] = r;
            c = next;
        }
        return r;
    }
    void unite(const std::string& a, const std::string& b) {
        const std::string ra = find(a);
        const std::string rb = find(b);
        if (ra != rb) parent_[std::max(ra, rb)] = std::min(ra, rb);
    }

private:
    std::map<std::string, std::string> parent_;
};

}  // namespace

FxpFormat choose_format(std::span<const double> samples, int word_len) {
    return choose_impl(samples, word_len);
}

FxpFormat choose_format(std::span<const float> samples, int word_len) {
    return choose_impl(samples, word_len);
}

void Extrema::observe(const std::string& key, std::span<const float> values) {
    double m = 0.0;
    for (float v : values) m = std::max(m, std::fabs(static_cast<double>(v)));
    auto [it, fresh] = max_abs.emplace(key, m);
    if (!fresh) it->second = std::max(it->second, m);
}

void Extrema::merge(const Extrema& other) {
    for (const auto& [k, v] : other.max_abs) {
        auto [it, fresh] = max_abs.emplace(k, v);
        if (!fresh) it->second = std::max(it->second, v);
    }
}

QuantScheme calibrate_network(const NetworkGraph& g, const RParamSet& params,
                              std::span<const RMap> samples) {
    if (samples.empty()) throw NetworkError("calibration needs at least one sample input");
    for (const auto& s : samples) {
        if (!(s.shape() == g.input_shape())) {
            throw ShapeError("sample is " + s.shape().str() + ", network expects " +
                             g.input_shape().str());
        }
    }
    const std::string input_key(kGraphInput);

    std::vector<Extrema> per_sample(samples.size());
    const auto n = static_cast<long>(samples.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        auto& ex = per_sample[static_cast<std::size_t>(i)];
        const RMap& in = samples[static_cast<std::size_t>(i)];
        ex.observe(input_key, in.data());
        forward_real(g, params, in, false,
                     [&ex](const LayerNode& node, const RMap& m) { ex.observe(node.name, m.data()); });
    }
    Extrema all;
    for (const auto& e : per_sample) all.merge(e);

    Groups groups;
    groups.add(input_key);
    for (const auto& node : g.nodes()) {
        groups.add(node.name);
        switch (node.kind) {
        case LayerKind::MaxPool:
        case LayerKind::Reshape:
        case LayerKind::Concat:
            for (const auto& src : node.inputs) groups.unite(node.name, src);
            break;
        default:
            break;
        }
    }
    std::map<std::string, double> group_max;
    for (const auto& [key, m] : all.max_abs) {
        double& gm = group_max[groups.find(key)];
        gm = std::max(gm, m);
    }
    auto fl_of = [&](const std::string& key) {
        return format_for_max_abs(group_max[groups.find(key)]).frac_len;
    };

    QuantScheme scheme;
    scheme.input_fl = fl_of(input_key);
    for (const auto& node : g.nodes()) {
        NodeFormats f;
        f.fl_in = fl_of(node.inputs[0]);
        f.fl_out = node.kind == LayerKind::Softmax ? f.fl_in : fl_of(node.name);
        if (node.kind == LayerKind::Conv) {
            auto it = params.find(node.name);
            if (it == params.end()) throw NetworkError("no parameters for layer '" + node.name + "'");
            const int acc = f.fl_in + choose_format(std::span<const float>(it->second.weights)).frac_len;
            f.fl_w = acc - f.fl_in;
            const int bias_fl = choose_format(std::span<const float>(it->second.bias)).frac_len;
            f.fl_b = std::clamp(bias_fl, acc - kMaxBiasShift, acc);
        }
        scheme.nodes[node.name] = f;
    }
    return scheme;
}

NetworkGraph apply_scheme(const NetworkGraph& g, const QuantScheme& scheme) {
    std::vector<LayerNode> nodes;
    for (auto n : g.nodes()) {
        auto it = scheme.nodes.find(n.name);
        if (it == scheme.nodes.end()) throw NetworkError("scheme has no formats for '" + n.name + "'");
        const NodeFormats& f = it->second;
        n.fl_in = n.reads_graph_input() ? scheme.input_fl : f.fl_in;
        if (n.kind == LayerKind::Softmax) {
            n.fl_out.reset();
        } else {
            n.fl_out = f.fl_out;
        }
        if (n.kind == LayerKind::Conv) {
            n.fl_w = f.fl_w;
            n.fl_b = f.fl_b;
        }
        nodes.push_back(std::move(n));
    }
    return NetworkGraph(std::move(nodes));
}

QParamSet quantize_params(const RParamSet& params, const QuantScheme& scheme) {
    QParamSet out;
    for (const auto& [name, blob] : params) {
        auto it = scheme.nodes.find(name);
        if (it == scheme.nodes.end() || !it->second.fl_w || !it->second.fl_b) {
            throw NetworkError("scheme has no parameter formats for '" + name + "'");
        }
        QBlob q;
        q.name = blob.name;
        q.co = blob.co;
        q.k = blob.k;
        q.ci = blob.ci;
        q.w_fmt = {8, *it->second.fl_w};
        q.b_fmt = {8, *it->second.fl_b};
        q.weights.reserve(blob.weights.size());
        for (float w : blob.weights) q.weights.push_back(static_cast<std::int8_t>(quantize(w, q.w_fmt)));
        q.bias.reserve(blob.bias.size());
        for (float b : blob.bias) q.bias.push_back(static_cast<std::int8_t>(quantize(b, q.b_fmt)));
        out.emplace(name, std::move(q));
    }
    return out;
}

}  // namespace sqj
