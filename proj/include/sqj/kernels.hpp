#pragma once

// OpenMP-parallel versions of the hot reference operators. Same contracts
// and bit-identical results as sqj::ref; each output element is produced by
// exactly one thread with the same summation order as the serial path.

#include "sqj/network.hpp"
#include "sqj/tensor.hpp"

namespace sqj::par {

QMap conv(const QMap& in, const ConvSpec& spec, const QBlob& blob, FxpFormat out_fmt);
RMap conv(const RMap& in, const ConvSpec& spec, const RBlob& blob);

QMap maxpool(const QMap& in, const PoolSpec& pool);
RMap maxpool(const RMap& in, const PoolSpec& pool);

/// Threads OpenMP will use for the next parallel region (1 without OpenMP).
int max_threads();

}  // namespace sqj::par
