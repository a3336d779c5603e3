#include "sqj/kernels.hpp"

#include <algorithm>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sqj::par {

namespace {

template <typename T>
FeatureMap<T> maxpool_impl(const FeatureMap<T>& in, const PoolSpec& p) {
    if (p.kernel < 1 || p.stride < 1 || p.pad < 0 || p.pad >= p.kernel) {
        throw ShapeError("invalid pool geometry");
    }
    const Shape os = p.out_shape(in.shape());
    if (os.h < 1 || os.w < 1) throw ShapeError("pool output would be empty for " + in.shape().str());
    FeatureMap<T> out(os, in.fmt());
    const int rows = os.h;
    const int cols = os.w;

#pragma omp parallel for collapse(2) schedule(static)
    for (int ho = 0; ho < rows; ++ho) {
        for (int wo = 0; wo < cols; ++wo) {
            const int h0 = std::max(0, ho * p.stride - p.pad);
            const int h1 = std::min(in.height(), ho * p.stride - p.pad + p.kernel);
            const int w0 = std::max(0, wo * p.stride - p.pad);
            const int w1 = std::min(in.width(), wo * p.stride - p.pad + p.kernel);
            auto dst = out.pixel(ho, wo);
            for (int c = 0; c < os.c; ++c) dst[c] = std::numeric_limits<T>::lowest();
            for (int h = h0; h < h1; ++h) {
                for (int w = w0; w < w1; ++w) {
                    auto src = in.pixel(h, w);
                    for (int c = 0; c < os.c; ++c) dst[c] = std::max(dst[c], src[c]);
                }
            }
        }
    }
    return out;
}

void check_conv(Shape in, const ConvSpec& spec, int co, int k, int ci) {
    spec.validate();
    if (!(in == spec.in_shape()) || co != spec.ch_out || k != spec.kernel || ci != spec.ch_in) {
        throw ShapeError("conv input/parameters do not match the layer geometry");
    }
}

}  // namespace

QMap conv(const QMap& in, const ConvSpec& spec, const QBlob& blob, FxpFormat out_fmt) {
    check_conv(in.shape(), spec, blob.co, blob.k, blob.ci);
    const int acc_frac = in.fmt().frac_len + blob.w_fmt.frac_len;
    // Aligned biases are loop invariant; align_bias may throw, so do it serially.
    std::vector<std::int32_t> bias(static_cast<std::size_t>(spec.ch_out));
    for (int co = 0; co < spec.ch_out; ++co) {
        bias[co] = align_bias(blob.bias[co], blob.b_fmt, acc_frac).value;
    }
    QMap out(spec.conv_shape(), out_fmt);
    const int rows = spec.h_out();
    const int cols = spec.w_out();
    const std::size_t kkc = blob.kkc();

#pragma omp parallel for collapse(2) schedule(static)
    for (int ho = 0; ho < rows; ++ho) {
        for (int wo = 0; wo < cols; ++wo) {
            auto dst = out.pixel(ho, wo);
            for (int co = 0; co < spec.ch_out; ++co) {
                std::int32_t acc = bias[co];
                const std::int8_t* wrow = blob.weights.data() + co * kkc;
                for (int kh = 0; kh < spec.kernel; ++kh) {
                    const int h = ho * spec.stride - spec.pad + kh;
                    if (h < 0 || h >= spec.h_in) continue;
                    for (int kw = 0; kw < spec.kernel; ++kw) {
                        const int w = wo * spec.stride - spec.pad + kw;
                        if (w < 0 || w >= spec.w_in) continue;
                        auto src = in.pixel(h, w);
                        const std::int8_t* wk = wrow + (kh * spec.kernel + kw) * spec.ch_in;
                        for (int ci = 0; ci < spec.ch_in; ++ci) acc += src[ci] * wk[ci];
                    }
                }
                auto code = static_cast<std::int8_t>(requantize(Accum{acc, acc_frac}, out_fmt));
                dst[co] = spec.use_relu ? relu_code(code) : code;
            }
        }
    }
    if (spec.fused_pool) return maxpool(out, *spec.fused_pool);
    return out;
}

RMap conv(const RMap& in, const ConvSpec& spec, const RBlob& blob) {
    check_conv(in.shape(), spec, blob.co, blob.k, blob.ci);
    RMap out(spec.conv_shape());
    const int rows = spec.h_out();
    const int cols = spec.w_out();
    const std::size_t kkc = blob.kkc();

#pragma omp parallel for collapse(2) schedule(static)
    for (int ho = 0; ho < rows; ++ho) {
        for (int wo = 0; wo < cols; ++wo) {
            auto dst = out.pixel(ho, wo);
            for (int co = 0; co < spec.ch_out; ++co) {
                double acc = blob.bias[co];
                const float* wrow = blob.weights.data() + co * kkc;
                for (int kh = 0; kh < spec.kernel; ++kh) {
                    const int h = ho * spec.stride - spec.pad + kh;
                    if (h < 0 || h >= spec.h_in) continue;
                    for (int kw = 0; kw < spec.kernel; ++kw) {
                        const int w = wo * spec.stride - spec.pad + kw;
                        if (w < 0 || w >= spec.w_in) continue;
                        auto src = in.pixel(h, w);
                        const float* wk = wrow + (kh * spec.kernel + kw) * spec.ch_in;
                        for (int ci = 0; ci < spec.ch_in; ++ci) {
                            acc += double{src[ci]} * double{wk[ci]};
                        }
                    }
                }
                if (spec.use_relu && acc < 0) acc = 0;
                dst[co] = static_cast<float>(acc);
            }
        }
    }
    if (spec.fused_pool) return maxpool(out, *spec.fused_pool);
    return out;
}

QMap maxpool(const QMap& in, const PoolSpec& pool) { return maxpool_impl(in, pool); }
RMap maxpool(const RMap& in, const PoolSpec& pool) { return maxpool_impl(in, pool); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace sqj::par
