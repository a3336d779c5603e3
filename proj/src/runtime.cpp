#include "sqj/runtime.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "sqj/kernels.hpp"
#include "sqj/reference.hpp"
#include "sqj/transforms.hpp"

namespace sqj {

std::optional<Engine> parse_engine(std::string_view name) {
    if (name == "ref-float") return Engine::RefFloat;
    if (name == "ref-fixed") return Engine::RefFixed;
    if (name == "accel") return Engine::Accel;
    return std::nullopt;
}

std::string_view engine_name(Engine e) {
    switch (e) {
    case Engine::RefFloat: return "ref-float";
    case Engine::RefFixed: return "ref-fixed";
    case Engine::Accel: return "accel";
    }
    return "?";
}

namespace {

template <typename T>
using Env = std::map<std::string, FeatureMap<T>, std::less<>>;

template <typename T>
const FeatureMap<T>& lookup(const Env<T>& env, const std::string& name) {
    auto it = env.find(name);
    if (it == env.end()) throw NetworkError("no value for '" + name + "'");
    return it->second;
}

template <typename T>
const ParamBlob<T>& blob_for(const ParamSet<T>& params, const LayerNode& n) {
    auto it = params.find(n.name);
    if (it == params.end()) throw NetworkError("no parameters for layer '" + n.name + "'");
    return it->second;
}

void check_fixed_blob(const LayerNode& n, const QBlob& b) {
    if ((n.fl_w && *n.fl_w != b.w_fmt.frac_len) || (n.fl_b && *n.fl_b != b.b_fmt.frac_len)) {
        throw NetworkError("layer '" + n.name + "': parameter FLs disagree with the network config");
    }
}

FxpFormat out_fmt(const LayerNode& n) {
    if (!n.fl_out) throw NetworkError("layer '" + n.name + "' has no output FL");
    return {8, *n.fl_out};
}

void check_fixed_input(const NetworkGraph& g, const QMap& input) {
    if (!g.quantized()) throw NetworkError("network has no fixed-point formats; quantize it first");
    if (!(input.shape() == g.input_shape())) {
        throw ShapeError("input is " + input.shape().str() + ", network expects " +
                         g.input_shape().str());
    }
    if (input.fmt().frac_len != *g.input_fl()) {
        throw NetworkError("input FL " + std::to_string(input.fmt().frac_len) +
                           " differs from the network input FL " + std::to_string(*g.input_fl()));
    }
}

std::vector<double> to_doubles(const QMap& m) {
    std::vector<double> v;
    v.reserve(m.data().size());
    for (auto c : m.data()) v.push_back(dequantize(c, m.fmt()));
    return v;
}

std::vector<double> to_doubles(const RMap& m) { return {m.data().begin(), m.data().end()}; }

template <typename T>
Forward<T> finish(const NetworkGraph& g, Env<T>& env) {
    Forward<T> f;
    const LayerNode& last = g.output();
    if (last.kind == LayerKind::Softmax) {
        f.logits = lookup(env, last.inputs[0]);
        f.probs = ref::softmax(to_doubles(f.logits));
    } else {
        f.logits = lookup(env, last.name);
    }
    return f;
}

// CPU-side nodes shared by the fixed and accelerator paths.
QMap cpu_fixed(const LayerNode& n, const Env<std::int8_t>& env) {
    switch (n.kind) {
    case LayerKind::Concat: {
        std::vector<QMap> parts;
        for (const auto& src : n.inputs) parts.push_back(lookup(env, src));
        return ref::concat(parts, out_fmt(n));
    }
    case LayerKind::GlobalAvgPool:
        return ref::global_avgpool(lookup(env, n.inputs[0]), out_fmt(n));
    case LayerKind::Reshape:
        return InputRewriter{n.kernel, n.stride, n.pad, n.ch_out}(lookup(env, n.inputs[0]));
    default:
        throw NetworkError("layer '" + n.name + "' is not a CPU-side layer");
    }
}

}  // namespace

Forward<float> forward_real(const NetworkGraph& g, const RParamSet& params, const RMap& input,
                            bool parallel, const RealObserver& observe) {
    if (!(input.shape() == g.input_shape())) {
        throw ShapeError("input is " + input.shape().str() + ", network expects " +
                         g.input_shape().str());
    }
    Env<float> env;
    env.emplace(std::string(kGraphInput), input);
    for (const auto& n : g.nodes()) {
        if (n.kind == LayerKind::Softmax) break;
        const RMap& in = lookup(env, n.inputs[0]);
        RMap out;
        switch (n.kind) {
        case LayerKind::Conv: {
            ConvSpec spec = g.conv_spec(n);
            spec.use_relu = false;
            const auto& blob = blob_for(params, n);
            out = parallel ? par::conv(in, spec, blob) : ref::conv(in, spec, blob);
            if (observe) observe(n, out);
            if (n.use_relu) {
                for (auto& v : out.data()) v = std::max(v, 0.0f);
            }
            env.insert_or_assign(n.name, std::move(out));
            continue;
        }
        case LayerKind::MaxPool:
            out = parallel ? par::maxpool(in, g.pool_spec(n)) : ref::maxpool(in, g.pool_spec(n));
            break;
        case LayerKind::Concat: {
            std::vector<RMap> parts;
            for (const auto& src : n.inputs) parts.push_back(lookup(env, src));
            out = ref::concat(parts);
            break;
        }
        case LayerKind::GlobalAvgPool:
            out = ref::global_avgpool(in);
            break;
        case LayerKind::Reshape:
            out = InputRewriter{n.kernel, n.stride, n.pad, n.ch_out}(in);
            break;
        case LayerKind::Softmax:
            break;
        }
        if (observe) observe(n, out);
        env.insert_or_assign(n.name, std::move(out));
    }
    return finish(g, env);
}

Forward<std::int8_t> forward_fixed(const NetworkGraph& g, const QParamSet& params,
                                   const QMap& input, bool parallel,
                                   const FixedObserver& observe) {
    check_fixed_input(g, input);
    Env<std::int8_t> env;
    env.emplace(std::string(kGraphInput), input);
    for (const auto& n : g.nodes()) {
        if (n.kind == LayerKind::Softmax) break;
        const QMap& in = lookup(env, n.inputs[0]);
        QMap out;
        switch (n.kind) {
        case LayerKind::Conv: {
            const auto& blob = blob_for(params, n);
            check_fixed_blob(n, blob);
            const ConvSpec spec = g.conv_spec(n);
            out = parallel ? par::conv(in, spec, blob, out_fmt(n))
                           : ref::conv(in, spec, blob, out_fmt(n));
            break;
        }
        case LayerKind::MaxPool:
            out = parallel ? par::maxpool(in, g.pool_spec(n)) : ref::maxpool(in, g.pool_spec(n));
            break;
        default:
            out = cpu_fixed(n, env);
            break;
        }
        if (observe) observe(n.name, out);
        env.insert_or_assign(n.name, std::move(out));
    }
    return finish(g, env);
}

QMap run_accel_conv(const NetworkGraph& g, const LayerNode& conv, const LayerNode* pool,
                    const QBlob& blob, const QMap& in, const RunOptions& opts, int* invocations) {
    check_fixed_blob(conv, blob);
    ConvSpec spec = g.conv_spec(conv);
    if (pool) spec.fused_pool = g.pool_spec(*pool);
    if (!conv.fl_in) throw NetworkError("layer '" + conv.name + "' has no input FL");
    const ConvInvocation inv = make_invocation(spec, blob, {8, *conv.fl_in}, out_fmt(conv));

    auto banks_for = [&](const QBlob& b, int first_channel) {
        WeightBanks banks = partition_weights(b, opts.accel);
        if (opts.fault && opts.fault->layer == conv.name) {
            const int local = opts.fault->channel - first_channel;
            if (local >= 0 && local < b.co) {
                auto& w = banks.weights[static_cast<std::size_t>(local % banks.par_fact)];
                const auto kkc = static_cast<std::size_t>(banks.kxkxchi);
                const auto base = static_cast<std::size_t>(local / banks.par_fact) * kkc;
                for (std::size_t i = 0; i < kkc; ++i) w[base + i] = static_cast<std::int8_t>(~w[base + i]);
            }
        }
        return banks;
    };

    if (capacity_violations(inv, opts.accel).empty()) {
        if (invocations) *invocations = 1;
        return accel_conv(inv, in, banks_for(blob, 0), opts.accel);
    }
    const PartitionPlan plan = partition_output_channels(inv, opts.accel);
    std::vector<QMap> parts(plan.ranges.size());
    const auto n = static_cast<long>(plan.ranges.size());
#pragma omp parallel for if (opts.parallel) schedule(static)
    for (long i = 0; i < n; ++i) {
        const ChannelRange r = plan.ranges[static_cast<std::size_t>(i)];
        const QBlob sub_blob = slice_blob(blob, r);
        parts[static_cast<std::size_t>(i)] =
            accel_conv(sub_invocation(inv, r), in, banks_for(sub_blob, r.begin), opts.accel);
    }
    if (invocations) *invocations = static_cast<int>(plan.ranges.size());
    return merge_partials(parts);
}

Forward<std::int8_t> forward_accel(const NetworkGraph& g, const QParamSet& params,
                                   const QMap& input, const RunOptions& opts,
                                   const FixedObserver& observe) {
    check_fixed_input(g, input);
    opts.accel.validate();
    Env<std::int8_t> env;
    env.emplace(std::string(kGraphInput), input);
    for (const auto& step : plan_accel_steps(g)) {
        const LayerNode& n = g.node(step.node);
        if (n.kind == LayerKind::Softmax) break;
        QMap out;
        std::string name = n.name;
        switch (step.kind) {
        case StepKind::Conv: {
            const LayerNode* pool = step.pool ? &g.node(*step.pool) : nullptr;
            out = run_accel_conv(g, n, pool, blob_for(params, n), lookup(env, n.inputs[0]), opts);
            if (pool) name = pool->name;
            break;
        }
        case StepKind::StandalonePool:
            out = accel_maxpool(lookup(env, n.inputs[0]), g.pool_spec(n));
            break;
        case StepKind::Cpu:
            out = cpu_fixed(n, env);
            break;
        }
        if (observe) observe(name, out);
        env.insert_or_assign(name, std::move(out));
    }
    return finish(g, env);
}

std::vector<int> top_k(const std::vector<double>& v, int k) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    k = std::clamp(k, 0, static_cast<int>(v.size()));
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        return v[static_cast<std::size_t>(a)] != v[static_cast<std::size_t>(b)]
                   ? v[static_cast<std::size_t>(a)] > v[static_cast<std::size_t>(b)]
                   : a < b;
    });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace sqj
