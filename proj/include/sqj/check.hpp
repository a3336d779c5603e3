#pragma once

// Randomized oracle suites: accelerator vs reference, graph transforms, and
// cost model vs event simulator. Every suite is a pure function of its seed.

#include <cstdint>
#include <string>
#include <vector>

#include "sqj/accel.hpp"
#include "sqj/perf.hpp"
#include "sqj/random.hpp"
#include "sqj/runtime.hpp"

namespace sqj {

struct LayerLimits {
    std::vector<int> kernels{1, 3};
    std::vector<int> strides{1, 2};
    std::vector<int> pads{0, 1};
    int max_hw = 32;
    int max_chi = 64;
    int max_cho = 64;
    bool fused_pool = false;  // sometimes attach a fused pool
};

struct LayerCase {
    ConvInvocation inv;
    QBlob blob;
    QMap input;
};

LayerCase random_layer_case(Rng& rng, const LayerLimits& lim = {});

/// Describes the first difference between two maps, empty when equal.
std::string first_mismatch(const QMap& expected, const QMap& got);

/// accel_conv against ref::conv (plus ref::maxpool when fused).
std::string compare_layer(const LayerCase& c, const AccelConfig& cfg);

/// Small quantized graph: squeeze conv, 2-3 parallel convs, concat, maxpool,
/// final conv. Concat inputs may disagree on FL.
struct RandomNet {
    NetworkGraph graph;
    QParamSet params;
    QMap input;
};
RandomNet random_concat_pool_net(Rng& rng);

/// Geometry and ModelParams draw for model-vs-simulator comparisons.
struct PerfCase {
    ConvInvocation inv;
    AccelConfig cfg;
    ModelParams params;
};
PerfCase random_perf_case(Rng& rng);

struct CheckItem {
    std::string suite;
    std::string name;
    bool pass = true;
    std::string detail;
};

struct CheckReport {
    std::uint64_t seed = 0;
    int trials = 0;
    std::vector<CheckItem> items;

    bool passed() const;
    std::string text() const;
};

struct CheckOptions {
    int trials = 100;
    std::uint64_t seed = 1;
    int inputs = 2;            // random network inputs per network check
    RunOptions run;
};

// Individual suites; trial loops fan out over OpenMP and are merged in order.
CheckItem check_random_layers(int trials, std::uint64_t seed, const AccelConfig& cfg);
CheckItem check_reorder(int trials, std::uint64_t seed);
CheckItem check_partition(int trials, std::uint64_t seed);
CheckItem check_model_vs_sim(int trials, std::uint64_t seed);

/// Per-layer and end-to-end accelerator checks on the given network plus
/// the randomized suites above.
CheckReport run_checks(const NetworkGraph& g, const QParamSet& params, const CheckOptions& opt);

}  // namespace sqj
