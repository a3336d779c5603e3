#include "sqj/transforms.hpp"

#include <algorithm>
#include <set>

#include "sqj/reference.hpp"

namespace sqj {

int reshaped_channels(int kernel, int ch_in, int chi_num) {
    return ceil_div(kernel * kernel * ch_in, chi_num) * chi_num;
}

template <typename T>
FeatureMap<T> InputRewriter::operator()(const FeatureMap<T>& in) const {
    const int h_out = window_out_dim(in.height(), kernel, stride, pad);
    const int w_out = window_out_dim(in.width(), kernel, stride, pad);
    if (h_out < 1 || w_out < 1) throw ShapeError("reshape window does not fit " + in.shape().str());
    if (channels < kernel * kernel * in.channels()) {
        throw ShapeError("reshape channel count below K*K*C");
    }
    FeatureMap<T> out(Shape{h_out, w_out, channels}, in.fmt());
    const int c = in.channels();
    for (int ho = 0; ho < h_out; ++ho) {
        for (int wo = 0; wo < w_out; ++wo) {
            auto dst = out.pixel(ho, wo);
            for (int kh = 0; kh < kernel; ++kh) {
                const int h = ho * stride - pad + kh;
                if (h < 0 || h >= in.height()) continue;
                for (int kw = 0; kw < kernel; ++kw) {
                    const int w = wo * stride - pad + kw;
                    if (w < 0 || w >= in.width()) continue;
                    auto src = in.pixel(h, w);
                    std::copy(src.begin(), src.end(), dst.begin() + (kh * kernel + kw) * c);
                }
            }
        }
    }
    return out;
}

template QMap InputRewriter::operator()(const QMap&) const;
template RMap InputRewriter::operator()(const RMap&) const;

template <typename T>
std::optional<FirstLayerReshape<T>> reshape_first_layer(const ConvSpec& spec,
                                                        const ParamBlob<T>& blob, int chi_num,
                                                        std::string* warning) {
    spec.validate();
    if (spec.ch_in >= chi_num) {
        if (warning) {
            *warning = "CHI " + std::to_string(spec.ch_in) + " >= chi_num " +
                       std::to_string(chi_num) + ": layer left unchanged";
        }
        return std::nullopt;
    }
    FirstLayerReshape<T> r;
    r.rewriter = {spec.kernel, spec.stride, spec.pad,
                  reshaped_channels(spec.kernel, spec.ch_in, chi_num)};
    r.spec = spec;
    r.spec.h_in = spec.h_out();
    r.spec.w_in = spec.w_out();
    r.spec.ch_in = r.rewriter.channels;
    r.spec.kernel = 1;
    r.spec.stride = 1;
    r.spec.pad = 0;

    r.blob = blob;
    r.blob.k = 1;
    r.blob.ci = r.rewriter.channels;
    r.blob.weights.assign(static_cast<std::size_t>(blob.co) * r.blob.ci, T{});
    for (int co = 0; co < blob.co; ++co) {
        for (int kh = 0; kh < blob.k; ++kh) {
            for (int kw = 0; kw < blob.k; ++kw) {
                for (int ci = 0; ci < blob.ci; ++ci) {
                    r.blob.weights[r.blob.weight_index(co, 0, 0, (kh * blob.k + kw) * blob.ci + ci)] =
                        blob.weight(co, kh, kw, ci);
                }
            }
        }
    }
    return r;
}

template std::optional<FirstLayerReshape<std::int8_t>> reshape_first_layer(const ConvSpec&,
                                                                           const QBlob&, int,
                                                                           std::string*);
template std::optional<FirstLayerReshape<float>> reshape_first_layer(const ConvSpec&, const RBlob&,
                                                                     int, std::string*);

namespace {

std::string geometry(const ConvSpec& s) {
    return "(" + s.in_shape().str() + ", " + std::to_string(s.kernel) + ", " +
           std::to_string(s.stride) + ", " + std::to_string(s.pad) + ", " +
           std::to_string(s.ch_out) + ")";
}

}  // namespace

namespace {

bool reshapes(const LayerNode& n, int chi_num) {
    return n.kind == LayerKind::Conv && n.inputs.size() == 1 && n.inputs[0] == kGraphInput &&
           n.in_shape.c < chi_num;
}

}  // namespace

NetworkGraph reshape_first_layers(const NetworkGraph& g, int chi_num, std::vector<std::string>* log) {
    std::vector<LayerNode> nodes;
    std::set<std::string> names;
    for (const auto& n : g.nodes()) names.insert(n.name);

    for (const auto& n : g.nodes()) {
        if (n.kind != LayerKind::Conv || n.inputs.size() != 1 || n.inputs[0] != kGraphInput) {
            nodes.push_back(n);
            continue;
        }
        const ConvSpec spec = g.conv_spec(n);
        if (!reshapes(n, chi_num)) {
            if (log) {
                log->push_back(n.name + ": CHI " + std::to_string(spec.ch_in) + " >= chi_num " +
                               std::to_string(chi_num) + ": layer left unchanged");
            }
            nodes.push_back(n);
            continue;
        }
        std::string rname = n.name + "_reshape";
        while (names.count(rname)) rname += "_";
        names.insert(rname);

        LayerNode rs;
        rs.name = rname;
        rs.kind = LayerKind::Reshape;
        rs.inputs = {std::string(kGraphInput)};
        rs.in_shape = n.in_shape;
        rs.kernel = spec.kernel;
        rs.stride = spec.stride;
        rs.pad = spec.pad;
        rs.ch_out = reshaped_channels(spec.kernel, spec.ch_in, chi_num);
        rs.fl_in = n.fl_in;
        rs.fl_out = n.fl_in;
        nodes.push_back(rs);

        LayerNode conv = n;
        conv.inputs = {rname};
        conv.in_shape = {};
        conv.kernel = 1;
        conv.stride = 1;
        conv.pad = 0;
        conv.fl_in.reset();  // inherited from the reshape node
        nodes.push_back(conv);

        if (log) {
            ConvSpec after = spec;
            after.h_in = spec.h_out();
            after.w_in = spec.w_out();
            after.ch_in = rs.ch_out;
            after.kernel = 1;
            after.stride = 1;
            after.pad = 0;
            log->push_back(n.name + ": reshaped " + geometry(spec) + " -> " + geometry(after));
        }
    }
    return NetworkGraph(std::move(nodes));
}

template <typename T>
GraphRewrite<T> reshape_first_layers(const NetworkGraph& g, const ParamSet<T>& params,
                                     int chi_num) {
    GraphRewrite<T> out;
    out.params = params;
    for (const auto& n : g.nodes()) {
        if (!reshapes(n, chi_num)) continue;
        auto it = params.find(n.name);
        if (it == params.end()) throw NetworkError("no parameters for layer '" + n.name + "'");
        out.params[n.name] = reshape_first_layer(g.conv_spec(n), it->second, chi_num)->blob;
    }
    out.graph = reshape_first_layers(g, chi_num, &out.log);
    return out;
}

NetworkGraph map_for_accel(const NetworkGraph& g, int chi_num) {
    return reshape_first_layers(reorder_maxpool_before_concat(g), chi_num);
}

template GraphRewrite<std::int8_t> reshape_first_layers(const NetworkGraph&, const QParamSet&, int);
template GraphRewrite<float> reshape_first_layers(const NetworkGraph&, const RParamSet&, int);

NetworkGraph reorder_maxpool_before_concat(const NetworkGraph& g, std::vector<std::string>* log) {
    std::set<std::string> names;
    for (const auto& n : g.nodes()) names.insert(n.name);

    // concat name -> pool name for every rewritable pair.
    std::map<std::string, std::string> pairs;
    for (const auto& n : g.nodes()) {
        if (n.kind != LayerKind::MaxPool) continue;
        const auto* src = g.find(n.inputs[0]);
        if (!src || src->kind != LayerKind::Concat) continue;
        if (g.consumers(src->name).size() != 1) continue;
        pairs[src->name] = n.name;
    }
    if (pairs.empty()) return g;

    std::vector<LayerNode> nodes;
    for (const auto& n : g.nodes()) {
        if (pairs.count(n.name)) continue;  // concat re-emitted at its pool
        bool is_pool_of_pair = false;
        for (const auto& [c, p] : pairs) is_pool_of_pair = is_pool_of_pair || p == n.name;
        if (!is_pool_of_pair) {
            nodes.push_back(n);
            continue;
        }
        const LayerNode& concat = g.node(n.inputs[0]);
        LayerNode merged = concat;
        merged.name = n.name;
        merged.inputs.clear();
        merged.in_shape = {};
        merged.fl_in.reset();
        merged.fl_out = concat.fl_out;
        for (const auto& src : concat.inputs) {
            std::string pname = n.name + "_" + src;
            while (names.count(pname)) pname += "_";
            names.insert(pname);
            LayerNode pool = n;
            pool.name = pname;
            pool.inputs = {src};
            pool.in_shape = {};
            pool.fl_in.reset();
            pool.fl_out.reset();
            nodes.push_back(pool);
            merged.inputs.push_back(pname);
        }
        nodes.push_back(merged);
        if (log) {
            std::string ins;
            for (const auto& s : concat.inputs) ins += (ins.empty() ? "" : ", ") + s;
            log->push_back(n.name + ": pool moved before concat '" + concat.name + "' into {" +
                           ins + "}");
        }
    }
    return NetworkGraph(std::move(nodes));
}

int channel_capacity(const ConvInvocation& inv, const AccelConfig& cfg) {
    const int kkc = inv.kxkxchi();
    const long long per_pe = std::min<long long>(cfg.q_cho_max, cfg.q_choxkxkxchi_max / kkc);
    return static_cast<int>(std::min<long long>(cfg.cho_max, per_pe * cfg.par_fact));
}

PartitionPlan partition_output_channels(const ConvInvocation& inv, const AccelConfig& cfg) {
    // Bounds that splitting CHO cannot fix.
    ConvInvocation probe = inv;
    probe.spec.ch_out = 1;
    auto hard = capacity_violations(probe, cfg);
    if (!hard.empty()) {
        std::string msg = "layer cannot be mapped even one channel at a time:";
        for (const auto& s : hard) msg += " " + s + ";";
        throw CapacityError(msg);
    }
    PartitionPlan plan;
    plan.capacity_channels = channel_capacity(inv, cfg);
    if (plan.capacity_channels < 1) throw CapacityError("a single output channel exceeds the caches");
    const int cho = inv.spec.ch_out;
    const int n = ceil_div(cho, plan.capacity_channels);
    const int base = cho / n;
    const int extra = cho % n;
    int begin = 0;
    for (int i = 0; i < n; ++i) {
        const int size = base + (i < extra ? 1 : 0);
        plan.ranges.push_back({begin, begin + size});
        begin += size;
    }
    return plan;
}

ConvInvocation sub_invocation(const ConvInvocation& inv, ChannelRange r) {
    ConvInvocation sub = inv;
    sub.spec.ch_out = r.size();
    return sub;
}

QBlob slice_blob(const QBlob& blob, ChannelRange r) {
    if (r.begin < 0 || r.end > blob.co || r.size() < 1) throw ShapeError("bad channel range");
    QBlob out = blob;
    out.co = r.size();
    const auto kkc = blob.kkc();
    out.weights.assign(blob.weights.begin() + static_cast<std::ptrdiff_t>(r.begin * kkc),
                       blob.weights.begin() + static_cast<std::ptrdiff_t>(r.end * kkc));
    out.bias.assign(blob.bias.begin() + r.begin, blob.bias.begin() + r.end);
    return out;
}

QMap merge_partials(std::span<const QMap> parts) {
    if (parts.empty()) throw ShapeError("nothing to merge");
    return ref::concat(parts, parts.front().fmt());
}

std::vector<AccelStep> plan_accel_steps(const NetworkGraph& g) {
    std::vector<AccelStep> steps;
    std::set<std::string> fused;
    for (const auto& n : g.nodes()) {
        switch (n.kind) {
        case LayerKind::Conv: {
            AccelStep s{StepKind::Conv, n.name, std::nullopt};
            auto cons = g.consumers(n.name);
            if (cons.size() == 1 && g.node(cons[0]).kind == LayerKind::MaxPool) {
                s.pool = cons[0];
                fused.insert(cons[0]);
            }
            steps.push_back(s);
            break;
        }
        case LayerKind::MaxPool:
            if (!fused.count(n.name)) steps.push_back({StepKind::StandalonePool, n.name, {}});
            break;
        case LayerKind::Concat:
        case LayerKind::GlobalAvgPool:
        case LayerKind::Softmax:
        case LayerKind::Reshape:
            steps.push_back({StepKind::Cpu, n.name, {}});
            break;
        }
    }
    return steps;
}

}  // namespace sqj
