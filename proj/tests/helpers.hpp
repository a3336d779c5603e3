#pragma once

// Small generators shared by the unit tests.

#include <cmath>

#include "sqj/network.hpp"
#include "sqj/random.hpp"
#include "sqj/tensor.hpp"

namespace sqj::testing {

inline QMap random_qmap(Rng& rng, Shape s, FxpFormat fmt, int lo = -128, int hi = 127) {
    QMap m(s, fmt);
    for (auto& v : m.data()) v = static_cast<std::int8_t>(rng.range(lo, hi));
    return m;
}

inline RMap random_rmap(Rng& rng, Shape s, double lo = -1, double hi = 1) {
    RMap m(s);
    for (auto& v : m.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return m;
}

inline QBlob random_qblob(Rng& rng, const ConvSpec& spec, FxpFormat w, FxpFormat b, int mag = 127) {
    QBlob blob;
    blob.name = "conv";
    blob.co = spec.ch_out;
    blob.k = spec.kernel;
    blob.ci = spec.ch_in;
    blob.w_fmt = w;
    blob.b_fmt = b;
    blob.weights.resize(spec.weight_count());
    blob.bias.resize(static_cast<std::size_t>(spec.ch_out));
    for (auto& v : blob.weights) v = static_cast<std::int8_t>(rng.range(-mag - 1, mag));
    for (auto& v : blob.bias) v = static_cast<std::int8_t>(rng.range(-mag - 1, mag));
    return blob;
}

inline RBlob random_rblob(Rng& rng, const ConvSpec& spec) {
    RBlob blob;
    blob.name = "conv";
    blob.co = spec.ch_out;
    blob.k = spec.kernel;
    blob.ci = spec.ch_in;
    blob.weights.resize(spec.weight_count());
    blob.bias.resize(static_cast<std::size_t>(spec.ch_out));
    for (auto& v : blob.weights) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : blob.bias) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    return blob;
}

// Real-valued oracle for the fixed conv: exact sums in double, one rounding.
inline QMap oracle_conv(const QMap& in, const ConvSpec& s, const QBlob& blob, FxpFormat out) {
    QMap o({s.h_out(), s.w_out(), s.ch_out}, out);
    for (int ho = 0; ho < s.h_out(); ++ho)
        for (int wo = 0; wo < s.w_out(); ++wo)
            for (int co = 0; co < s.ch_out; ++co) {
                double acc = std::ldexp(blob.bias[static_cast<std::size_t>(co)], -blob.b_fmt.frac_len);
                for (int kh = 0; kh < s.kernel; ++kh)
                    for (int kw = 0; kw < s.kernel; ++kw)
                        for (int ci = 0; ci < s.ch_in; ++ci) {
                            const int h = ho * s.stride + kh - s.pad;
                            const int w = wo * s.stride + kw - s.pad;
                            if (h < 0 || w < 0 || h >= s.h_in || w >= s.w_in) continue;
                            acc += std::ldexp(in.at(h, w, ci), -in.fmt().frac_len) *
                                   std::ldexp(blob.weight(co, kh, kw, ci), -blob.w_fmt.frac_len);
                        }
                auto code = quantize(acc, out);
                if (s.use_relu && code < 0) code = 0;
                o.at(ho, wo, co) = static_cast<std::int8_t>(code);
            }
    return o;
}

template <typename T>
FeatureMap<T> oracle_maxpool(const FeatureMap<T>& in, const PoolSpec& p) {
    const Shape os = p.out_shape(in.shape());
    FeatureMap<T> o(os, in.fmt());
    for (int ho = 0; ho < os.h; ++ho)
        for (int wo = 0; wo < os.w; ++wo)
            for (int c = 0; c < os.c; ++c) {
                bool any = false;
                T best{};
                for (int h = ho * p.stride - p.pad; h < ho * p.stride - p.pad + p.kernel; ++h)
                    for (int w = wo * p.stride - p.pad; w < wo * p.stride - p.pad + p.kernel; ++w) {
                        if (h < 0 || w < 0 || h >= in.height() || w >= in.width()) continue;
                        if (!any || in.at(h, w, c) > best) best = in.at(h, w, c);
                        any = true;
                    }
                o.at(ho, wo, c) = best;
            }
    return o;
}

}  // namespace sqj::testing
