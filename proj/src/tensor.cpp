#include "sqj/tensor.hpp"

namespace sqj {

QMap quantize_map(const RMap& m, FxpFormat fmt) {
    QMap out(m.shape(), fmt);
    auto src = m.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<std::int8_t>(quantize(src[i], fmt));
    }
    return out;
}

RMap dequantize_map(const QMap& m) {
    RMap out(m.shape());
    auto src = m.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<float>(dequantize(src[i], m.fmt()));
    }
    return out;
}

}  // namespace sqj
