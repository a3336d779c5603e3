#pragma once

// Max-abs calibration of per-blob fractional lengths.

#include <map>
#include <span>
#include <string>

#include "sqj/fxp.hpp"
#include "sqj/network.hpp"
#include "sqj/tensor.hpp"

namespace sqj {

inline constexpr int kMinFrac = -32;
inline constexpr int kMaxFrac = 32;
/// Largest left shift align_bias may apply; bias FLs are raised to respect it.
inline constexpr int kMaxBiasShift = 23;

/// FL = word_len - 1 - ceil(log2(max_abs)), clamped to [kMinFrac, kMaxFrac].
/// A power-of-two max_abs lands one LSB above the positive rail.
FxpFormat format_for_max_abs(double max_abs, int word_len = 8);
FxpFormat choose_format(std::span<const double> samples, int word_len = 8);
FxpFormat choose_format(std::span<const float> samples, int word_len = 8);

struct NodeFormats {
    int fl_in = 0;
    int fl_out = 0;
    std::optional<int> fl_w;
    std::optional<int> fl_b;
    friend bool operator==(const NodeFormats&, const NodeFormats&) = default;
};

struct QuantScheme {
    int input_fl = 0;
    std::map<std::string, NodeFormats, std::less<>> nodes;
    friend bool operator==(const QuantScheme&, const QuantScheme&) = default;
};

/// Running max-abs per observed value; merging is order-free.
struct Extrema {
    std::map<std::string, double, std::less<>> max_abs;
    void observe(const std::string& key, std::span<const float> values);
    void merge(const Extrema& other);
};

/// Forward passes over every sample, recording pre-ReLU conv outputs and all
/// other activations. Values that must share a format (pool and reshape
/// pass-through, concat inputs) are grouped and get one FL from the group max.
QuantScheme calibrate_network(const NetworkGraph& g, const RParamSet& params,
                              std::span<const RMap> samples);

/// Graph with every FL field filled from the scheme.
NetworkGraph apply_scheme(const NetworkGraph& g, const QuantScheme& scheme);

QParamSet quantize_params(const RParamSet& params, const QuantScheme& scheme);

}  // namespace sqj
