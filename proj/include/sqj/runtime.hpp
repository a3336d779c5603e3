#pragma once

// Whole-network forward passes on the three engines.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sqj/accel.hpp"
#include "sqj/network.hpp"
#include "sqj/tensor.hpp"

namespace sqj {

enum class Engine { RefFloat, RefFixed, Accel };

std::optional<Engine> parse_engine(std::string_view name);
std::string_view engine_name(Engine e);

/// Corrupts the accelerator copy of one output channel's weights (every code
/// is bit-inverted). Used to prove the checks catch a broken datapath.
struct WeightFault {
    std::string layer;
    int channel = 0;
};

struct RunOptions {
    AccelConfig accel;
    bool parallel = false;              // OpenMP kernels / concurrent partitions
    std::optional<WeightFault> fault;
};

template <typename T>
struct Forward {
    FeatureMap<T> logits;               // output of the last non-softmax node
    std::vector<double> probs;          // softmax output when the net ends in one
};

/// Called for every node output in graph order. For convs the real-valued
/// observer sees the map before ReLU (calibration needs the signed range).
using RealObserver = std::function<void(const LayerNode&, const RMap&)>;
using FixedObserver = std::function<void(const std::string& node, const QMap&)>;

Forward<float> forward_real(const NetworkGraph& g, const RParamSet& params, const RMap& input,
                            bool parallel = false, const RealObserver& observe = {});
Forward<std::int8_t> forward_fixed(const NetworkGraph& g, const QParamSet& params,
                                   const QMap& input, bool parallel = false,
                                   const FixedObserver& observe = {});
/// Accelerator mapping of plan_accel_steps; a fused pool's output is reported
/// under the pool's name and the conv itself is not observed.
Forward<std::int8_t> forward_accel(const NetworkGraph& g, const QParamSet& params,
                                   const QMap& input, const RunOptions& opts,
                                   const FixedObserver& observe = {});

/// One conv layer (with an optional fused pool) on the accelerator, split over
/// output channels when it exceeds the caches.
QMap run_accel_conv(const NetworkGraph& g, const LayerNode& conv, const LayerNode* pool,
                    const QBlob& blob, const QMap& in, const RunOptions& opts,
                    int* invocations = nullptr);

/// Indices of the k largest values, ties to the lower index.
std::vector<int> top_k(const std::vector<double>& v, int k);

}  // namespace sqj
