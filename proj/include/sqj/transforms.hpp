#pragma once

// Graph rewrites applied before mapping a network onto the accelerator.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqj/accel.hpp"
#include "sqj/network.hpp"

namespace sqj {

// ---- first-layer reshape --------------------------------------------------

/// Smallest multiple of chi_num holding one K x K x CHI receptive field.
int reshaped_channels(int kernel, int ch_in, int chi_num);

/// Rewrites an input map so that each original receptive field becomes one
/// pixel: channel index (kh * K + kw) * CHI + ci, zero-filled up to channels.
struct InputRewriter {
    int kernel = 1;
    int stride = 1;
    int pad = 0;
    int channels = 1;

    template <typename T>
    FeatureMap<T> operator()(const FeatureMap<T>& in) const;
};

template <typename T>
struct FirstLayerReshape {
    ConvSpec spec;           // K=1, S=1, P=0 on the rewritten input
    ParamBlob<T> blob;       // CO x 1 x 1 x CHI'
    InputRewriter rewriter;
};

/// nullopt (with *warning set) when CHI >= chi_num: nothing to gain.
template <typename T>
std::optional<FirstLayerReshape<T>> reshape_first_layer(const ConvSpec& spec,
                                                        const ParamBlob<T>& blob, int chi_num,
                                                        std::string* warning = nullptr);

template <typename T>
struct GraphRewrite {
    NetworkGraph graph;
    ParamSet<T> params;
    std::vector<std::string> log;
};

/// Graph form: every conv reading the network input with CHI < chi_num gets a
/// CPU-side `reshape` node in front and becomes a 1x1 layer.
template <typename T>
GraphRewrite<T> reshape_first_layers(const NetworkGraph& g, const ParamSet<T>& params, int chi_num);
/// Graph-only form for callers without parameters (cost models).
NetworkGraph reshape_first_layers(const NetworkGraph& g, int chi_num,
                                  std::vector<std::string>* log = nullptr);

// ---- maxpool / concat reorder --------------------------------------------

/// pool(concat(a, b, ...)) -> concat(pool(a), pool(b), ...) whenever the
/// concat feeds only the pool. The new concat takes the pool's name.
NetworkGraph reorder_maxpool_before_concat(const NetworkGraph& g,
                                           std::vector<std::string>* log = nullptr);

// ---- output-channel partitioning -----------------------------------------

struct ChannelRange {
    int begin = 0;
    int end = 0;
    int size() const { return end - begin; }
    friend bool operator==(const ChannelRange&, const ChannelRange&) = default;
};

struct PartitionPlan {
    std::vector<ChannelRange> ranges;
    int capacity_channels = 0;
    bool partitioned() const { return ranges.size() > 1; }
};

/// Output channels one invocation of this geometry can hold.
int channel_capacity(const ConvInvocation& inv, const AccelConfig& cfg);

/// Minimal number of contiguous, equal-as-possible channel blocks that each
/// fit the caches. Throws CapacityError when even one channel does not fit or
/// a bound unrelated to CHO is exceeded.
PartitionPlan partition_output_channels(const ConvInvocation& inv, const AccelConfig& cfg);

ConvInvocation sub_invocation(const ConvInvocation& inv, ChannelRange r);
QBlob slice_blob(const QBlob& blob, ChannelRange r);
/// Channel-wise merge of partial results in range order.
QMap merge_partials(std::span<const QMap> parts);

// ---- accelerator mapping -------------------------------------------------

enum class StepKind { Conv, StandalonePool, Cpu };

struct AccelStep {
    StepKind kind = StepKind::Cpu;
    std::string node;                 // conv / pool / cpu node
    std::optional<std::string> pool;  // maxpool fused into the conv
};

/// Reorder then reshape: the graph the accelerator runs for this chi_num.
NetworkGraph map_for_accel(const NetworkGraph& g, int chi_num);

/// Conv nodes whose only consumer is a maxpool absorb that pool.
std::vector<AccelStep> plan_accel_steps(const NetworkGraph& g);

}  // namespace sqj
