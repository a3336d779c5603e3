#include "sqj/check.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <sstream>

#include "sqj/reference.hpp"
#include "sqj/resources.hpp"
#include "sqj/transforms.hpp"

namespace sqj {

namespace {

QMap random_codes(Rng& rng, Shape s, FxpFormat fmt) {
    QMap m(s, fmt);
    for (auto& c : m.data()) c = static_cast<std::int8_t>(rng.range(-128, 127));
    return m;
}

QBlob random_qblob(Rng& rng, const std::string& name, int co, int k, int ci, FxpFormat w_fmt,
                   FxpFormat b_fmt) {
    QBlob b;
    b.name = name;
    b.co = co;
    b.k = k;
    b.ci = ci;
    b.w_fmt = w_fmt;
    b.b_fmt = b_fmt;
    b.weights.resize(static_cast<std::size_t>(co) * b.kkc());
    for (auto& w : b.weights) w = static_cast<std::int8_t>(rng.range(-128, 127));
    b.bias.resize(static_cast<std::size_t>(co));
    for (auto& v : b.bias) v = static_cast<std::int8_t>(rng.range(-128, 127));
    return b;
}

// Runs fn(i) for every trial, concurrently, and returns the failure messages
// in trial order (empty string = pass).
std::vector<std::string> run_trials(int trials, const std::function<std::string(int)>& fn) {
    std::vector<std::string> out(static_cast<std::size_t>(std::max(trials, 0)));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < trials; ++i) {
        std::string msg;
        try {
            msg = fn(i);
        } catch (const std::exception& e) {
            msg = std::string("exception: ") + e.what();
        }
        out[static_cast<std::size_t>(i)] = std::move(msg);
    }
    return out;
}

CheckItem summarize(const std::string& suite, const std::vector<std::string>& results) {
    CheckItem item;
    item.suite = suite;
    int ok = 0;
    std::string first;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].empty()) {
            ++ok;
        } else if (first.empty()) {
            first = "trial " + std::to_string(i) + ": " + results[i];
        }
    }
    item.name = std::to_string(ok) + "/" + std::to_string(results.size());
    item.pass = ok == static_cast<int>(results.size()) && !results.empty();
    item.detail = first;
    return item;
}

// Per-trial seed: independent of thread scheduling.
std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t salt, int trial) {
    std::uint64_t x = seed * 0x9E3779B97F4A7C15ULL + salt * 0xBF58476D1CE4E5B9ULL +
                      static_cast<std::uint64_t>(trial);
    x ^= x >> 31;
    x *= 0x94D049BB133111EBULL;
    return x ^ (x >> 29);
}

}  // namespace

LayerCase random_layer_case(Rng& rng, const LayerLimits& lim) {
    LayerCase c;
    ConvSpec& s = c.inv.spec;
    s.kernel = rng.pick(lim.kernels);
    s.stride = rng.pick(lim.strides);
    s.pad = rng.pick(lim.pads);
    const int min_hw = std::max(1, s.kernel - 2 * s.pad);
    s.h_in = rng.range(min_hw, lim.max_hw);
    s.w_in = rng.range(min_hw, lim.max_hw);
    s.ch_in = rng.range(1, lim.max_chi);
    s.ch_out = rng.range(1, lim.max_cho);
    s.use_relu = rng.coin();
    if (lim.fused_pool && rng.coin()) {
        PoolSpec p;
        p.kernel = rng.range(2, 3);
        p.stride = rng.range(1, 2);
        p.pad = p.kernel == 3 ? rng.range(0, 1) : 0;
        const Shape conv = s.conv_shape();
        if (conv.h + 2 * p.pad >= p.kernel && conv.w + 2 * p.pad >= p.kernel) s.fused_pool = p;
    }
    const int fl_in = rng.range(-2, 9);
    const int fl_w = rng.range(3, 9);
    const int acc = fl_in + fl_w;
    c.inv.in_fmt = {8, fl_in};
    c.inv.w_fmt = {8, fl_w};
    c.inv.b_fmt = {8, acc - rng.range(0, 8)};
    c.inv.out_fmt = {8, acc - rng.range(4, 12)};
    c.blob = random_qblob(rng, "layer", s.ch_out, s.kernel, s.ch_in, c.inv.w_fmt, c.inv.b_fmt);
    c.input = random_codes(rng, s.in_shape(), c.inv.in_fmt);
    return c;
}

std::string first_mismatch(const QMap& expected, const QMap& got) {
    if (!(expected.shape() == got.shape())) {
        return "shape " + got.shape().str() + " != expected " + expected.shape().str();
    }
    const Shape s = expected.shape();
    for (int h = 0; h < s.h; ++h) {
        for (int w = 0; w < s.w; ++w) {
            for (int c = 0; c < s.c; ++c) {
                if (expected.at(h, w, c) != got.at(h, w, c)) {
                    return "first mismatch at (" + std::to_string(h) + "," + std::to_string(w) +
                           "," + std::to_string(c) + "): expected " +
                           std::to_string(expected.at(h, w, c)) + ", got " +
                           std::to_string(got.at(h, w, c));
                }
            }
        }
    }
    if (!(expected.fmt() == got.fmt())) return "format FL " + std::to_string(got.fmt().frac_len) + " != expected " + std::to_string(expected.fmt().frac_len);
    return {};
}

std::string compare_layer(const LayerCase& c, const AccelConfig& cfg) {
    const QMap expected = ref::conv(c.input, c.inv.spec, c.blob, c.inv.out_fmt);
    const QMap got = accel_conv(c.inv, c.input, partition_weights(c.blob, cfg), cfg);
    return first_mismatch(expected, got);
}

RandomNet random_concat_pool_net(Rng& rng) {
    const Shape in{rng.range(4, 14), rng.range(4, 14), rng.range(1, 8)};
    int fl = rng.range(3, 7);
    RandomNet net;
    std::vector<LayerNode> nodes;

    auto add_conv = [&](const std::string& name, const std::string& src, int src_fl, int k, int co) {
        LayerNode n;
        n.name = name;
        n.kind = LayerKind::Conv;
        n.inputs = {src};
        n.kernel = k;
        n.stride = 1;
        n.pad = k / 2;
        n.ch_out = co;
        n.use_relu = rng.coin();
        const int fl_w = rng.range(4, 8);
        n.fl_w = fl_w;
        n.fl_b = src_fl + fl_w - rng.range(0, 6);
        n.fl_out = src_fl + fl_w - rng.range(5, 10);
        if (src == kGraphInput) {
            n.in_shape = in;
            n.fl_in = src_fl;
        }
        nodes.push_back(n);
        return *n.fl_out;
    };

    const int sq_fl = add_conv("squeeze", std::string(kGraphInput), fl, 1, rng.range(2, 12));
    const int branches = rng.range(2, 3);
    std::vector<std::string> names;
    std::vector<int> fls;
    for (int b = 0; b < branches; ++b) {
        const std::string name = "expand" + std::to_string(b);
        fls.push_back(add_conv(name, "squeeze", sq_fl, rng.coin() ? 3 : 1, rng.range(1, 12)));
        names.push_back(name);
    }
    LayerNode cat;
    cat.name = "merge";
    cat.kind = LayerKind::Concat;
    cat.inputs = names;
    nodes.push_back(cat);

    LayerNode pool;
    pool.name = "pool";
    pool.kind = LayerKind::MaxPool;
    pool.inputs = {"merge"};
    pool.kernel = rng.range(2, 3);
    pool.stride = rng.range(1, 2);
    pool.pad = rng.range(0, pool.kernel - 2);
    nodes.push_back(pool);
    add_conv("final", "pool", *std::min_element(fls.begin(), fls.end()), rng.coin() ? 3 : 1,
             rng.range(1, 10));

    net.graph = NetworkGraph(std::move(nodes));
    for (const auto& n : net.graph.nodes()) {
        if (n.kind != LayerKind::Conv) continue;
        net.params.emplace(n.name, random_qblob(rng, n.name, n.ch_out, n.kernel, n.in_shape.c,
                                                {8, *n.fl_w}, {8, *n.fl_b}));
    }
    net.input = random_codes(rng, in, {8, fl});
    return net;
}

PerfCase random_perf_case(Rng& rng) {
    PerfCase c;
    ConvSpec& s = c.inv.spec;
    s.kernel = rng.range(1, 3);
    s.stride = rng.range(1, 4);
    s.pad = rng.range(0, s.kernel - 1);
    const int min_hw = std::max(1, s.kernel - 2 * s.pad);
    s.h_in = rng.range(min_hw, 40);
    s.w_in = rng.range(min_hw, 40);
    s.ch_in = rng.range(1, 96);
    s.ch_out = rng.range(1, 128);
    s.use_relu = rng.coin();

    const std::vector<int> widths{1, 2, 4, 8, 16, 32};
    c.cfg.par_fact = rng.pick(widths);
    c.cfg.chi_num = rng.pick(widths);
    c.cfg.wi_x_chi_max = std::max(c.cfg.wi_x_chi_max, c.inv.wi_x_chi());
    c.cfg.kxkxchi_max = std::max(c.cfg.kxkxchi_max, c.inv.kxkxchi());
    c.cfg.q_cho_max = std::max(c.cfg.q_cho_max, c.inv.q_cho(c.cfg.par_fact));
    c.cfg.q_choxkxkxchi_max =
        std::max(c.cfg.q_choxkxkxchi_max, c.inv.q_cho(c.cfg.par_fact) * c.inv.kxkxchi());
    if (rng.coin()) {  // force output-channel partitioning
        c.cfg.q_choxkxkxchi_max = c.inv.kxkxchi() * rng.range(1, std::max(1, c.inv.q_cho(c.cfg.par_fact) - 1));
    }

    auto r = [&rng](int hi) { return static_cast<std::int64_t>(rng.range(0, hi)); };
    ModelParams& p = c.params;
    p.pipe_cco_fill = r(20);
    p.cco_over = r(20);
    p.shift_iter_lat = r(20);
    p.shift_over = r(20);
    p.init_win_iter_lat = r(20);
    p.init_win_over = r(20);
    p.update_iter_lat = r(40);
    p.update_over = r(40);
    p.write_back_iter_lat = r(40);
    p.write_back_over = r(40);
    p.precalc_cc = r(100);
    p.init_caches_cc = r(3);
    p.dataflow_over = r(10);
    p.invocation_over = r(3000);
    p.pool_iter_lat = r(10);
    p.pool_over = r(10);
    return c;
}

// ---- suites ----------------------------------------------------------------

CheckItem check_random_layers(int trials, std::uint64_t seed, const AccelConfig& cfg) {
    LayerLimits lim;
    lim.fused_pool = true;
    auto results = run_trials(trials, [&](int i) {
        Rng rng(trial_seed(seed, 1, i));
        return compare_layer(random_layer_case(rng, lim), cfg);
    });
    return summarize("random-layers", results);
}

CheckItem check_reorder(int trials, std::uint64_t seed) {
    auto results = run_trials(trials, [&](int i) -> std::string {
        Rng rng(trial_seed(seed, 2, i));
        const RandomNet net = random_concat_pool_net(rng);
        std::vector<std::string> log;
        const NetworkGraph moved = reorder_maxpool_before_concat(net.graph, &log);
        if (log.empty()) return "reorder did not fire";
        const auto before = forward_fixed(net.graph, net.params, net.input);
        const auto after = forward_fixed(moved, net.params, net.input);
        if (auto m = first_mismatch(before.logits, after.logits); !m.empty()) return "ref-fixed: " + m;
        RunOptions opts;
        const auto accel = forward_accel(moved, net.params, net.input, opts);
        if (auto m = first_mismatch(before.logits, accel.logits); !m.empty()) return "accel: " + m;
        return {};
    });
    return summarize("reorder", results);
}

CheckItem check_partition(int trials, std::uint64_t seed) {
    auto results = run_trials(trials, [&](int i) -> std::string {
        Rng rng(trial_seed(seed, 3, i));
        const RandomNet net = random_concat_pool_net(rng);
        AccelConfig base;
        base.par_fact = rng.pick(std::vector<int>{1, 2, 4});
        const NetworkGraph graphs[] = {net.graph};
        RunOptions opts;
        opts.accel = size_caches(graphs, base, 1);  // weight cache: one channel group
        opts.parallel = rng.coin();
        int split = 0;
        for (const auto& n : net.graph.nodes()) {
            if (n.kind != LayerKind::Conv) continue;
            const ConvInvocation inv = make_invocation(net.graph.conv_spec(n), net.params.at(n.name),
                                                       {8, *n.fl_in}, {8, *n.fl_out});
            split += partition_output_channels(inv, opts.accel).partitioned();
        }
        if (split == 0) return {};  // every layer fits one group: nothing to split
        const auto expected = forward_fixed(net.graph, net.params, net.input);
        const auto got = forward_accel(net.graph, net.params, net.input, opts);
        if (auto m = first_mismatch(expected.logits, got.logits); !m.empty()) return m;
        return {};
    });
    return summarize("partition", results);
}

CheckItem check_model_vs_sim(int trials, std::uint64_t seed) {
    auto results = run_trials(trials, [&](int i) -> std::string {
        Rng rng(trial_seed(seed, 4, i));
        const PerfCase c = random_perf_case(rng);
        const auto model = layer_latency(c.inv, c.cfg, c.params);
        const auto sim = simulate_layer(c.inv, c.cfg, c.params);
        if (model == sim) return {};
        return "model " + std::to_string(model.total()) + " vs simulator " +
               std::to_string(sim.total()) + " cycles";
    });
    return summarize("model-vs-sim", results);
}

CheckReport run_checks(const NetworkGraph& g, const QParamSet& params, const CheckOptions& opt) {
    if (!g.quantized()) throw NetworkError("network has no fixed-point formats; quantize it first");
    CheckReport rep;
    rep.seed = opt.seed;
    rep.trials = opt.trials;

    // Layer by layer: accelerator fed the reference activations.
    Rng rng(trial_seed(opt.seed, 0, 0));
    std::vector<QMap> inputs;
    for (int i = 0; i < opt.inputs; ++i) {
        inputs.push_back(random_codes(rng, g.input_shape(), {8, *g.input_fl()}));
    }
    const auto steps = plan_accel_steps(g);
    std::map<std::string, std::string> layer_fail;
    for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
        std::map<std::string, QMap> acts;
        acts.emplace(std::string(kGraphInput), inputs[idx]);
        forward_fixed(g, params, inputs[idx], opt.run.parallel,
                      [&](const std::string& name, const QMap& m) { acts.insert_or_assign(name, m); });
        for (const auto& step : steps) {
            if (step.kind == StepKind::Cpu) continue;
            const LayerNode& n = g.node(step.node);
            const std::string out_name = step.pool ? *step.pool : n.name;
            std::string msg;
            try {
                const QMap& in = acts.at(n.inputs[0]);
                QMap got;
                if (step.kind == StepKind::Conv) {
                    const LayerNode* pool = step.pool ? &g.node(*step.pool) : nullptr;
                    got = run_accel_conv(g, n, pool, params.at(n.name), in, opt.run);
                } else {
                    got = accel_maxpool(in, g.pool_spec(n));
                }
                msg = first_mismatch(acts.at(out_name), got);
            } catch (const std::exception& e) {
                msg = std::string("exception: ") + e.what();
            }
            if (!msg.empty() && !layer_fail.count(n.name)) {
                layer_fail[n.name] = "input " + std::to_string(idx) + ": " + msg;
            }
        }
    }
    for (const auto& step : steps) {
        if (step.kind == StepKind::Cpu) continue;
        CheckItem item;
        item.suite = "layer";
        item.name = step.pool ? step.node + "+" + *step.pool : step.node;
        if (auto it = layer_fail.find(step.node); it != layer_fail.end()) {
            item.pass = false;
            item.detail = it->second;
        }
        rep.items.push_back(item);
    }

    // End to end.
    {
        CheckItem item;
        item.suite = "network";
        item.name = "accel==ref-fixed";
        for (std::size_t idx = 0; idx < inputs.size() && item.pass; ++idx) {
            try {
                const auto ref = forward_fixed(g, params, inputs[idx], opt.run.parallel);
                const auto acc = forward_accel(g, params, inputs[idx], opt.run);
                std::string msg = first_mismatch(ref.logits, acc.logits);
                if (msg.empty() && ref.probs != acc.probs) msg = "softmax outputs differ";
                if (!msg.empty()) {
                    item.pass = false;
                    item.detail = "input " + std::to_string(idx) + ": " + msg;
                }
            } catch (const std::exception& e) {
                item.pass = false;
                item.detail = std::string("exception: ") + e.what();
            }
        }
        rep.items.push_back(item);
    }
    {
        CheckItem item;
        item.suite = "network";
        item.name = "model==simulator";
        try {
            const CycleReport r = network_latency(g, opt.run.accel, ModelParams{}, 100.0);
            for (const auto& l : r.layers) {
                if (l.cycles_model != l.cycles_sim && item.pass) {
                    item.pass = false;
                    item.detail = l.name + ": model " + std::to_string(l.cycles_model) +
                                  ", simulator " + std::to_string(l.cycles_sim);
                }
            }
        } catch (const std::exception& e) {
            item.pass = false;
            item.detail = std::string("exception: ") + e.what();
        }
        rep.items.push_back(item);
    }

    rep.items.push_back(check_random_layers(opt.trials, opt.seed, opt.run.accel));
    rep.items.push_back(check_reorder(opt.trials, opt.seed));
    rep.items.push_back(check_partition(opt.trials, opt.seed));
    rep.items.push_back(check_model_vs_sim(opt.trials, opt.seed));
    return rep;
}

bool CheckReport::passed() const {
    return std::all_of(items.begin(), items.end(), [](const CheckItem& i) { return i.pass; });
}

std::string CheckReport::text() const {
    std::ostringstream out;
    out << "# sqj2 check v1 seed=" << seed << " trials=" << trials << '\n';
    for (const auto& i : items) {
        out << (i.pass ? "PASS " : "FAIL ") << i.suite << ' ' << i.name;
        if (!i.detail.empty()) out << "  " << i.detail;
        out << '\n';
    }
    out << (passed() ? "result PASS" : "result FAIL") << '\n';
    return out.str();
}

}  // namespace sqj
