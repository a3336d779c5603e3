// Acceptance runner: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "sqj/accel.hpp"
#include "sqj/check.hpp"
#include "sqj/cli.hpp"
#include "sqj/demo.hpp"
#include "sqj/perf.hpp"
#include "sqj/quantizer.hpp"
#include "sqj/reference.hpp"
#include "sqj/resources.hpp"
#include "sqj/runtime.hpp"
#include "sqj/transforms.hpp"

using namespace sqj;
using namespace sqj::testing;
namespace fs = std::filesystem;

namespace {

// Pinned thresholds.
constexpr int kLayerTrials = 1000;
constexpr double kLayerBudgetSec = 60.0;
constexpr int kTransformTrials = 100;
constexpr int kFusedTrials = 300;
constexpr int kPerfDraws = 1000;
constexpr std::int64_t kCycleTolerance = 0;
constexpr int kQuantFracLo = kMinFrac;
constexpr int kQuantFracHi = kMaxFrac;
constexpr long long kDspFloor = 128;
constexpr long long kDspCeil = 220;
constexpr std::uint64_t kSeed = 20240501;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string str(double v, int prec = 2) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(prec);
    o << v;
    return o.str();
}

// 1: accel_conv vs the reference on random layers.
Outcome bit_exact_layers() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(kSeed);
    LayerLimits lim;
    int fails = 0;
    std::string first;
    for (int i = 0; i < kLayerTrials; ++i) {
        const LayerCase c = random_layer_case(rng, lim);
        AccelConfig cfg;
        cfg.par_fact = rng.pick(std::vector{4, 8, 16});
        cfg.chi_num = rng.pick(std::vector{4, 8, 16});
        const auto m = compare_layer(c, cfg);
        if (!m.empty() && fails++ == 0) first = "trial " + std::to_string(i) + ": " + m;
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Outcome o;
    o.pass = fails == 0 && sec < kLayerBudgetSec;
    o.detail = std::to_string(kLayerTrials) + " layers, " + std::to_string(fails) + " mismatches, " +
               str(sec) + " s (limit " + str(kLayerBudgetSec, 0) + " s)";
    if (!first.empty()) o.detail += "; " + first;
    return o;
}

// 2: the 227x227x3 K3 S2 instance.
Outcome first_layer_reshape() {
    Rng rng(kSeed + 2);
    ConvSpec s{227, 227, 3, 3, 2, 0, 64};
    s.use_relu = true;
    const auto blob = random_qblob(rng, s, {8, 7}, {8, 9});
    const auto r = reshape_first_layer(s, blob, 16);
    if (!r) return {false, "reshape declined"};
    const bool geom = r->spec.in_shape() == Shape{113, 113, 32} && r->spec.kernel == 1 &&
                      r->spec.stride == 1 && r->spec.pad == 0 && r->spec.ch_out == 64 &&
                      r->blob.ci == 32 && r->blob.k == 1;
    int equal = 0;
    constexpr int inputs = 5;
    for (int t = 0; t < inputs; ++t) {
        const auto in = random_qmap(rng, s.in_shape(), {8, 5});
        const FxpFormat out{8, 3};
        equal += ref::conv(r->rewriter(in), r->spec, r->blob, out) == ref::conv(in, s, blob, out);
    }
    std::ostringstream d;
    d << "(" << s.in_shape().str() << ", 3, 2, 0, 64) -> (" << r->spec.in_shape().str() << ", "
      << r->spec.kernel << ", " << r->spec.pad << ", " << r->spec.ch_out << "), " << equal << "/"
      << inputs << " random inputs bit-exact";
    return {geom && equal == inputs, d.str()};
}

// 3: reorder and output-channel partitioning on random concat/pool graphs.
Outcome transform_preservation() {
    const CheckItem reorder = check_reorder(kTransformTrials, kSeed + 3);

    // Keep drawing until enough nets actually split a layer.
    Rng rng(kSeed + 33);
    int split_trials = 0, draws = 0, fails = 0;
    std::string first;
    while (split_trials < kTransformTrials && draws < 20 * kTransformTrials) {
        ++draws;
        const RandomNet net = random_concat_pool_net(rng);
        AccelConfig base;
        base.par_fact = rng.pick(std::vector{1, 2, 4});
        const NetworkGraph graphs[] = {net.graph};
        RunOptions opts;
        opts.accel = size_caches(graphs, base, 1);
        opts.parallel = rng.coin();
        bool split = false;
        for (const auto& n : net.graph.nodes()) {
            if (n.kind != LayerKind::Conv) continue;
            const auto inv = make_invocation(net.graph.conv_spec(n), net.params.at(n.name),
                                             {8, *n.fl_in}, {8, *n.fl_out});
            split = split || partition_output_channels(inv, opts.accel).partitioned();
        }
        if (!split) continue;
        ++split_trials;
        const auto expected = forward_fixed(net.graph, net.params, net.input);
        const auto got = forward_accel(net.graph, net.params, net.input, opts);
        if (auto m = first_mismatch(expected.logits, got.logits); !m.empty() && fails++ == 0) first = m;
    }
    Outcome o;
    o.pass = reorder.pass && fails == 0 && split_trials >= kTransformTrials;
    o.detail = "reorder " + std::to_string(kTransformTrials) + " trials " +
               (reorder.pass ? "ok" : "FAILED (" + reorder.detail + ")") + ", partition " +
               std::to_string(split_trials) + " split nets " + std::to_string(fails) + " mismatches";
    if (!first.empty()) o.detail += "; " + first;
    return o;
}

// 4: fused maxpool and bypass.
Outcome fused_pool() {
    Rng rng(kSeed + 4);
    LayerLimits lim;
    lim.fused_pool = true;
    const AccelConfig cfg;
    int fused = 0, bypass = 0, fails = 0;
    std::string first;
    for (int i = 0; i < kFusedTrials; ++i) {
        LayerCase c = random_layer_case(rng, lim);
        const auto banks = partition_weights(c.blob, cfg);
        ConvSpec plain = c.inv.spec;
        plain.fused_pool.reset();
        QMap expected = ref::conv(c.input, plain, c.blob, c.inv.out_fmt);
        if (c.inv.spec.fused_pool) {
            // Sequential form: unpooled conv, then a separate maxpool pass.
            expected = ref::maxpool(expected, *c.inv.spec.fused_pool);
            ++fused;
        } else {
            ++bypass;
        }
        auto m = first_mismatch(expected, accel_conv(c.inv, c.input, banks, cfg));
        // The same layer with the pool stage bypassed is the plain conv.
        c.inv.spec.fused_pool.reset();
        if (m.empty()) {
            m = first_mismatch(ref::conv(c.input, plain, c.blob, c.inv.out_fmt),
                               accel_conv(c.inv, c.input, banks, cfg));
        }
        if (!m.empty() && fails++ == 0) first = m;
    }
    Outcome o;
    o.pass = fails == 0 && fused > 0;
    o.detail = std::to_string(fused) + " fused, " + std::to_string(kFusedTrials) +
               " bypassed (" + std::to_string(bypass) + " drawn unfused), " +
               std::to_string(fails) + " mismatches";
    if (!first.empty()) o.detail += "; " + first;
    return o;
}

// 5: closed form vs event simulator.
Outcome model_vs_sim() {
    Rng rng(kSeed + 5);
    std::int64_t worst = 0;
    for (int i = 0; i < kPerfDraws; ++i) {
        const PerfCase c = random_perf_case(rng);
        const auto model = layer_latency(c.inv, c.cfg, c.params);
        const auto sim = simulate_layer(c.inv, c.cfg, c.params);
        worst = std::max(worst, std::abs(model.total() - sim.total()));
        if (!(model == sim)) worst = std::max<std::int64_t>(worst, 1);  // breakdown differs
    }
    return {worst <= kCycleTolerance,
            std::to_string(kPerfDraws) + " draws, max difference " + std::to_string(worst) + " cycles"};
}

// 6: zero overheads leave exactly the MAC work.
Outcome work_conservation() {
    const auto z = ModelParams::zero();
    const AccelConfig cfg;
    std::ostringstream d;
    bool pass = true;
    for (const auto& name : demo_names()) {
        const auto g = map_for_accel(demo_graph(name), cfg.chi_num);
        const auto r = network_latency(g, cfg, z, 100.0);
        std::int64_t got = 0, expect = 0;
        for (const auto& l : r.layers) got += l.breakdown.pixel_loop;
        for (const auto& n : g.nodes()) {
            if (n.kind != LayerKind::Conv) continue;
            const auto s = g.conv_spec(n);
            expect += std::int64_t{s.h_out()} * s.w_out() * ceil_div(s.ch_out, 16) * s.kernel *
                      s.kernel * ceil_div(s.ch_in, 16);
        }
        pass = pass && got == expect;
        d << name << " " << got << (got == expect ? " == " : " != ") << expect << "; ";
    }
    std::string s = d.str();
    s.resize(s.size() - 2);
    return {pass, s};
}

// 7: cycles to ms/fps rendering.
Outcome reporting() {
    CycleReport r;
    r.clock_mhz = 100.0;
    LayerReport l;
    l.name = "total";
    l.kind = "conv";
    l.invocations = 1;
    l.cycles_model = l.cycles_sim = 7491000;
    r.layers.push_back(l);
    const std::string csv = profile_csv(r);
    const std::string footer = csv.substr(csv.rfind("# total"));
    const bool pass = footer == "# total_cycles=7491000 total_ms=74.91 fps=13.34\n";
    return {pass, footer.substr(2, footer.size() - 3)};
}

// 8: resource estimator at the default and an oversized point.
Outcome resources() {
    const auto budget = DeviceBudget::xc7z020();
    const auto def = estimate_resources(AccelConfig{}, budget);
    AccelConfig big;
    big.par_fact = 32;
    big.dsp_share = 1.0;
    const auto over = estimate_resources(big, budget);
    const bool budget_ok = budget.dsp == 220 && budget.bram_36k == 140 && budget.lut == 53200;
    const bool pass = budget_ok && def.macs == 256 && def.dsp_macs == 128 && def.feasible &&
                      def.dsp >= kDspFloor && def.dsp <= kDspCeil && !over.feasible;
    std::ostringstream d;
    d << "default " << def.macs << " MACs, " << def.dsp_macs << " on DSP, dsp=" << def.dsp
      << " bram=" << def.bram() << " lut=" << def.lut << (def.feasible ? " feasible" : " infeasible")
      << "; pf=32 share=1: dsp=" << over.dsp << (over.feasible ? " feasible" : " infeasible");
    return {pass, d.str()};
}

// 9: exhaustive round trip and calibration order invariance.
Outcome quantization() {
    long long probes = 0, bad = 0;
    for (int fl = kQuantFracLo; fl <= kQuantFracHi; ++fl) {
        const FxpFormat f{8, fl};
        const double lsb = std::ldexp(1.0, -fl);
        for (int code = -128; code <= 127; ++code) {
            for (double t : {-0.5, -0.3, 0.0, 0.3, 0.4999}) {
                const double x = (code + t) * lsb;
                if (x < -128 * lsb || x > 127 * lsb) continue;
                ++probes;
                const double back = dequantize(quantize(x, f), f);
                bad += !(std::fabs(back - x) <= lsb / 2);
            }
        }
    }
    const auto d = make_demo("mini-squeezenet", kSeed, 6);
    auto samples = d.samples;
    const auto base = calibrate_network(d.graph, d.real, samples);
    std::mt19937 shuffle(static_cast<unsigned>(kSeed));
    constexpr int orders = 5;
    int same = 0;
    for (int t = 0; t < orders; ++t) {
        std::shuffle(samples.begin(), samples.end(), shuffle);
        same += calibrate_network(d.graph, d.real, samples) == base;
    }
    return {bad == 0 && same == orders,
            std::to_string(probes) + " probes over FL " + std::to_string(kQuantFracLo) + ".." +
                std::to_string(kQuantFracHi) + ", " + std::to_string(bad) + " beyond half LSB; " +
                std::to_string(same) + "/" + std::to_string(orders) + " shuffled orders identical"};
}

struct CliRun {
    int code;
    std::string out;
};

CliRun cli(std::vector<std::string> args) {
    args.insert(args.begin(), "sqj2");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str()};
}

// 10: check and profile output is a function of the inputs and the seed.
Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / "sqj_acceptance";
    fs::remove_all(dir);
    if (cli({"demo", "--seed", "7", "--out", dir.string()}).code != kExitOk) return {false, "demo failed"};
    const auto at = [&](const char* f) { return (dir / f).string(); };
    const std::vector<std::string> check{"check", "--net", at("mini-squeezenet.cfg"), "--params",
                                         at("mini-squeezenet.sqj2"), "--trials", "20", "--seed", "11"};
    auto check_par = check;
    check_par.push_back("--parallel");
    const std::vector<std::string> profile{"profile", "--net", at("squeezenet_v1.1.cfg")};

    const auto c1 = cli(check), c2 = cli(check), c3 = cli(check_par);
    const auto p1 = cli(profile), p2 = cli(profile);
    fs::remove_all(dir);
    const bool ok = c1.code == kExitOk && p1.code == kExitOk && !c1.out.empty() && !p1.out.empty();
    const bool pass = ok && c1.out == c2.out && c1.out == c3.out && p1.out == p2.out;
    return {pass, "check " + std::to_string(c1.out.size()) + " bytes x3 (one parallel) " +
                      (c1.out == c2.out && c1.out == c3.out ? "identical" : "DIFFER") + ", profile " +
                      std::to_string(p1.out.size()) + " bytes x2 " +
                      (p1.out == p2.out ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"bit-exact accelerator vs reference", bit_exact_layers},
        {"first-layer reshape", first_layer_reshape},
        {"reorder and partition preserve outputs", transform_preservation},
        {"fused maxpool and bypass", fused_pool},
        {"cost model equals simulator", model_vs_sim},
        {"work conservation", work_conservation},
        {"cycle reporting", reporting},
        {"resource estimator", resources},
        {"quantization properties", quantization},
        {"deterministic check and profile", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
