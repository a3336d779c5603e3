#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqj/fxp.hpp"
#include "sqj/tensor.hpp"

namespace sqj {

/// Output extent of a sliding window along one axis (floor mode).
constexpr int window_out_dim(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

struct PoolSpec {
    int kernel = 1;
    int stride = 1;
    int pad = 0;

    Shape out_shape(Shape in) const {
        return {window_out_dim(in.h, kernel, stride, pad), window_out_dim(in.w, kernel, stride, pad),
                in.c};
    }
    friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

/// Geometry of one convolution layer.
struct ConvSpec {
    int h_in = 1;
    int w_in = 1;
    int ch_in = 1;
    int kernel = 1;
    int stride = 1;
    int pad = 0;
    int ch_out = 1;
    bool use_relu = false;
    std::optional<PoolSpec> fused_pool;

    int h_out() const { return window_out_dim(h_in, kernel, stride, pad); }
    int w_out() const { return window_out_dim(w_in, kernel, stride, pad); }
    Shape in_shape() const { return {h_in, w_in, ch_in}; }
    /// Shape of the convolution result, before any fused pooling.
    Shape conv_shape() const { return {h_out(), w_out(), ch_out}; }
    /// Shape leaving the layer (after fused pooling, if any).
    Shape out_shape() const {
        return fused_pool ? fused_pool->out_shape(conv_shape()) : conv_shape();
    }
    std::size_t weight_count() const {
        return static_cast<std::size_t>(ch_out) * kernel * kernel * ch_in;
    }
    /// Throws ShapeError when the geometry is unusable.
    void validate() const;

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Weights in canonical CO x K x K x CI order (CO-major, CI innermost) plus
/// one bias per output channel.
template <typename T>
struct ParamBlob {
    std::string name;
    int co = 0;
    int k = 0;
    int ci = 0;
    std::vector<T> weights;
    std::vector<T> bias;
    FxpFormat w_fmt;
    FxpFormat b_fmt;

    std::size_t kkc() const { return static_cast<std::size_t>(k) * k * ci; }
    std::size_t weight_index(int o, int kh, int kw, int c) const {
        return ((static_cast<std::size_t>(o) * k + kh) * k + kw) * ci + c;
    }
    T weight(int o, int kh, int kw, int c) const { return weights[weight_index(o, kh, kw, c)]; }
    bool consistent() const {
        return weights.size() == static_cast<std::size_t>(co) * kkc() &&
               bias.size() == static_cast<std::size_t>(co);
    }

    friend bool operator==(const ParamBlob&, const ParamBlob&) = default;
};

using QBlob = ParamBlob<std::int8_t>;
using RBlob = ParamBlob<float>;

template <typename T>
using ParamSet = std::map<std::string, ParamBlob<T>, std::less<>>;
using QParamSet = ParamSet<std::int8_t>;
using RParamSet = ParamSet<float>;

enum class LayerKind { Conv, MaxPool, Concat, GlobalAvgPool, Softmax, Reshape };

std::string_view kind_name(LayerKind k);

/// Reserved input name referring to the network input tensor.
inline constexpr std::string_view kGraphInput = "input";

struct LayerNode {
    std::string name;
    LayerKind kind = LayerKind::Conv;
    std::vector<std::string> inputs;

    // Geometry fields as given in the config (0 = not applicable).
    int kernel = 0;
    int stride = 0;
    int pad = 0;
    int ch_out = 0;
    bool use_relu = false;

    // Dynamic fixed-point fractional lengths. Unset on float-only graphs.
    std::optional<int> fl_in;
    std::optional<int> fl_out;
    std::optional<int> fl_w;
    std::optional<int> fl_b;

    // Filled by shape inference.
    Shape in_shape;
    Shape out_shape;

    bool reads_graph_input() const;
};

class NetworkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Ordered, validated DAG of layers. Nodes appear in topological order and
/// the last node is the network output.
class NetworkGraph {
public:
    NetworkGraph() = default;
    /// Validates and infers shapes/formats. Throws NetworkError.
    explicit NetworkGraph(std::vector<LayerNode> nodes);

    const std::vector<LayerNode>& nodes() const { return nodes_; }
    const LayerNode& node(std::string_view name) const;
    const LayerNode* find(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;
    const LayerNode& output() const { return nodes_.back(); }

    Shape input_shape() const { return input_shape_; }
    std::optional<int> input_fl() const { return input_fl_; }
    std::vector<std::string> consumers(std::string_view name) const;

    /// Conv geometry for a conv node (no fused pool attached).
    ConvSpec conv_spec(const LayerNode& n) const;
    PoolSpec pool_spec(const LayerNode& n) const;

    /// True when every node carries the formats needed for fixed-point runs.
    bool quantized() const;

private:
    void infer();

    std::vector<LayerNode> nodes_;
    Shape input_shape_;
    std::optional<int> input_fl_;
};

NetworkGraph load_network(std::string_view config_text);
std::string write_network(const NetworkGraph& g);

}  // namespace sqj
