#include "sqj/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sqj::ref {

namespace {

void check_conv(Shape in, const ConvSpec& spec, int blob_co, int blob_k, int blob_ci) {
    spec.validate();
    if (!(in == spec.in_shape())) {
        throw ShapeError("conv input is " + in.str() + ", layer expects " + spec.in_shape().str());
    }
    if (blob_co != spec.ch_out || blob_k != spec.kernel || blob_ci != spec.ch_in) {
        throw ShapeError("conv parameter blob does not match the layer geometry");
    }
}

void check_pool(Shape in, const PoolSpec& p) {
    if (p.kernel < 1 || p.stride < 1 || p.pad < 0 || p.pad >= p.kernel) {
        throw ShapeError("invalid pool geometry");
    }
    auto o = p.out_shape(in);
    if (o.h < 1 || o.w < 1) throw ShapeError("pool output would be empty for " + in.str());
}

template <typename T>
FeatureMap<T> maxpool_impl(const FeatureMap<T>& in, const PoolSpec& p) {
    check_pool(in.shape(), p);
    FeatureMap<T> out(p.out_shape(in.shape()), in.fmt());
    const auto os = out.shape();
    for (int ho = 0; ho < os.h; ++ho) {
        for (int wo = 0; wo < os.w; ++wo) {
            for (int c = 0; c < os.c; ++c) {
                T best = std::numeric_limits<T>::lowest();
                bool any = false;
                for (int kh = 0; kh < p.kernel; ++kh) {
                    const int h = ho * p.stride - p.pad + kh;
                    if (h < 0 || h >= in.height()) continue;
                    for (int kw = 0; kw < p.kernel; ++kw) {
                        const int w = wo * p.stride - p.pad + kw;
                        if (w < 0 || w >= in.width()) continue;
                        const T v = in.at(h, w, c);
                        if (!any || v > best) best = v;
                        any = true;
                    }
                }
                out.at(ho, wo, c) = best;
            }
        }
    }
    return out;
}

template <typename T>
Shape concat_shape(std::span<const FeatureMap<T>> in) {
    if (in.empty()) throw ShapeError("concat needs at least one input");
    Shape s = in.front().shape();
    s.c = 0;
    for (const auto& m : in) {
        if (m.height() != s.h || m.width() != s.w) {
            throw ShapeError("concat inputs disagree on spatial size: " +
                             in.front().shape().str() + " vs " + m.shape().str());
        }
        s.c += m.channels();
    }
    return s;
}

template <typename T, typename Convert>
FeatureMap<T> concat_impl(std::span<const FeatureMap<T>> in, FxpFormat fmt, Convert convert) {
    FeatureMap<T> out(concat_shape(in), fmt);
    for (int h = 0; h < out.height(); ++h) {
        for (int w = 0; w < out.width(); ++w) {
            auto dst = out.pixel(h, w);
            std::size_t off = 0;
            for (const auto& m : in) {
                auto src = m.pixel(h, w);
                for (std::size_t c = 0; c < src.size(); ++c) dst[off + c] = convert(m, src[c]);
                off += src.size();
            }
        }
    }
    return out;
}

}  // namespace

QMap conv(const QMap& in, const ConvSpec& spec, const QBlob& blob, FxpFormat out_fmt) {
    check_conv(in.shape(), spec, blob.co, blob.k, blob.ci);
    const int acc_frac = in.fmt().frac_len + blob.w_fmt.frac_len;
    QMap out(spec.conv_shape(), out_fmt);
    for (int ho = 0; ho < spec.h_out(); ++ho) {
        for (int wo = 0; wo < spec.w_out(); ++wo) {
            for (int co = 0; co < spec.ch_out; ++co) {
                Accum acc = align_bias(blob.bias[co], blob.b_fmt, acc_frac);
                for (int kh = 0; kh < spec.kernel; ++kh) {
                    const int h = ho * spec.stride - spec.pad + kh;
                    if (h < 0 || h >= spec.h_in) continue;
                    for (int kw = 0; kw < spec.kernel; ++kw) {
                        const int w = wo * spec.stride - spec.pad + kw;
                        if (w < 0 || w >= spec.w_in) continue;
                        for (int ci = 0; ci < spec.ch_in; ++ci) {
                            acc = mac(acc, in.at(h, w, ci), blob.weight(co, kh, kw, ci));
                        }
                    }
                }
                auto code = static_cast<std::int8_t>(requantize(acc, out_fmt));
                out.at(ho, wo, co) = spec.use_relu ? relu_code(code) : code;
            }
        }
    }
    if (spec.fused_pool) return maxpool(out, *spec.fused_pool);
    return out;
}

RMap conv(const RMap& in, const ConvSpec& spec, const RBlob& blob) {
    check_conv(in.shape(), spec, blob.co, blob.k, blob.ci);
    RMap out(spec.conv_shape());
    for (int ho = 0; ho < spec.h_out(); ++ho) {
        for (int wo = 0; wo < spec.w_out(); ++wo) {
            for (int co = 0; co < spec.ch_out; ++co) {
                double acc = blob.bias[co];
                for (int kh = 0; kh < spec.kernel; ++kh) {
                    const int h = ho * spec.stride - spec.pad + kh;
                    if (h < 0 || h >= spec.h_in) continue;
                    for (int kw = 0; kw < spec.kernel; ++kw) {
                        const int w = wo * spec.stride - spec.pad + kw;
                        if (w < 0 || w >= spec.w_in) continue;
                        for (int ci = 0; ci < spec.ch_in; ++ci) {
                            acc += double{in.at(h, w, ci)} * double{blob.weight(co, kh, kw, ci)};
                        }
                    }
                }
                if (spec.use_relu && acc < 0) acc = 0;
                out.at(ho, wo, co) = static_cast<float>(acc);
            }
        }
    }
    if (spec.fused_pool) return maxpool(out, *spec.fused_pool);
    return out;
}

QMap maxpool(const QMap& in, const PoolSpec& pool) { return maxpool_impl(in, pool); }
RMap maxpool(const RMap& in, const PoolSpec& pool) { return maxpool_impl(in, pool); }

QMap concat(std::span<const QMap> in, FxpFormat out_fmt) {
    return concat_impl(in, out_fmt, [out_fmt](const QMap& m, std::int8_t c) {
        if (m.fmt() == out_fmt) return c;
        return static_cast<std::int8_t>(requantize(Accum{c, m.fmt().frac_len}, out_fmt));
    });
}

QMap concat(std::span<const QMap> in) {
    if (in.empty()) throw ShapeError("concat needs at least one input");
    return concat(in, in.front().fmt());
}

RMap concat(std::span<const RMap> in) {
    return concat_impl(in, FxpFormat{}, [](const RMap&, float v) { return v; });
}

QMap global_avgpool(const QMap& in, FxpFormat out_fmt) {
    QMap out(Shape{1, 1, in.channels()}, out_fmt);
    const std::int64_t count = static_cast<std::int64_t>(in.height()) * in.width();
    // code_out = round(sum * 2^(fl_out - fl_in) / count)
    const int d = out_fmt.frac_len - in.fmt().frac_len;
    for (int c = 0; c < in.channels(); ++c) {
        std::int64_t sum = 0;
        for (int h = 0; h < in.height(); ++h) {
            for (int w = 0; w < in.width(); ++w) sum += in.at(h, w, c);
        }
        std::int64_t num = sum;
        std::int64_t den = count;
        if (d >= 0) {
            num = round_shift(sum, -std::min(d, 62));
        } else if (-d < 40) {
            den = count << -d;
        } else {
            num = 0;
        }
        out.at(0, 0, c) = static_cast<std::int8_t>(saturate(round_div(num, den), out_fmt));
    }
    return out;
}

RMap global_avgpool(const RMap& in) {
    RMap out(Shape{1, 1, in.channels()});
    const double count = static_cast<double>(in.height()) * in.width();
    for (int c = 0; c < in.channels(); ++c) {
        double sum = 0;
        for (int h = 0; h < in.height(); ++h) {
            for (int w = 0; w < in.width(); ++w) sum += in.at(h, w, c);
        }
        out.at(0, 0, c) = static_cast<float>(sum / count);
    }
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) return out;
    const double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        total += out[i];
    }
    for (auto& v : out) v /= total;
    return out;
}

QMap relu(const QMap& in) {
    QMap out = in;
    for (auto& c : out.data()) c = relu_code(c);
    return out;
}

}  // namespace sqj::ref
