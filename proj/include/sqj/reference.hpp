#pragma once

// Golden operators. Direct loop nests, single-threaded, no blocking: these
// are the oracle every faster path is checked against.

#include <span>
#include <vector>

#include "sqj/network.hpp"
#include "sqj/tensor.hpp"

namespace sqj::ref {

/// out(ho,wo,co) = requantize(align_bias(b[co]) + sum w*x), zero padding,
/// ReLU on the output code, then the fused pool when spec carries one.
QMap conv(const QMap& in, const ConvSpec& spec, const QBlob& blob, FxpFormat out_fmt);
RMap conv(const RMap& in, const ConvSpec& spec, const RBlob& blob);

/// Per-channel window max; padding never wins.
QMap maxpool(const QMap& in, const PoolSpec& pool);
RMap maxpool(const RMap& in, const PoolSpec& pool);

/// Channel-wise concatenation in argument order. Inputs whose format differs
/// from out_fmt are rescaled with requantize.
QMap concat(std::span<const QMap> in, FxpFormat out_fmt);
QMap concat(std::span<const QMap> in);
RMap concat(std::span<const RMap> in);

/// Per-channel mean, one rounding at the end.
QMap global_avgpool(const QMap& in, FxpFormat out_fmt);
RMap global_avgpool(const RMap& in);

/// Max-subtracted softmax in double precision.
std::vector<double> softmax(std::span<const double> logits);

QMap relu(const QMap& in);

}  // namespace sqj::ref
