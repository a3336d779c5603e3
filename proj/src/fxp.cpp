#include "sqj/fxp.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <string>

namespace sqj {

namespace {

using u128 = unsigned __int128;

std::int64_t apply_sign(u128 mag, bool negative) {
    constexpr auto kMax = static_cast<u128>(std::numeric_limits<std::int64_t>::max());
    if (mag > kMax) {
        return negative ? std::numeric_limits<std::int64_t>::min()
                        : std::numeric_limits<std::int64_t>::max();
    }
    auto v = static_cast<std::int64_t>(mag);
    return negative ? -v : v;
}

u128 magnitude(std::int64_t v) {
    return v < 0 ? static_cast<u128>(-(static_cast<__int128>(v))) : static_cast<u128>(v);
}

double round_real(double x) {
    if constexpr (kRounding == Rounding::HalfAwayFromZero) {
        return std::round(x);
    } else {
        return std::nearbyint(x);
    }
}

}  // namespace

std::int64_t round_shift(std::int64_t v, int shift) {
    if (v == 0) return 0;
    const bool negative = v < 0;
    const u128 mag = magnitude(v);
    if (shift <= 0) {
        if (shift < -63) return apply_sign(~u128{0}, negative);
        const u128 limit = u128{1} << 63;
        if (mag >= (limit >> -shift)) return apply_sign(~u128{0}, negative);
        return apply_sign(mag << -shift, negative);
    }
    if (shift > 120) return 0;
    const u128 half = u128{1} << (shift - 1);
    u128 q = mag >> shift;
    const u128 rem = mag & ((u128{1} << shift) - 1);
    if constexpr (kRounding == Rounding::HalfAwayFromZero) {
        if (rem >= half) ++q;
    } else {
        if (rem > half || (rem == half && (q & 1))) ++q;
    }
    return apply_sign(q, negative);
}

std::int64_t round_div(std::int64_t num, std::int64_t den) {
    if (den <= 0) throw FxpError("round_div: divisor must be positive");
    const bool negative = num < 0;
    const u128 mag = magnitude(num);
    const u128 d = static_cast<u128>(den);
    u128 q = mag / d;
    const u128 twice_rem = (mag % d) * 2;
    if constexpr (kRounding == Rounding::HalfAwayFromZero) {
        if (twice_rem >= d) ++q;
    } else {
        if (twice_rem > d || (twice_rem == d && (q & 1))) ++q;
    }
    return apply_sign(q, negative);
}

std::int32_t quantize(double x, FxpFormat fmt) {
    if (std::isnan(x)) return 0;
    const double scaled = round_real(std::ldexp(x, fmt.frac_len));
    if (scaled <= static_cast<double>(fmt.min_code())) return fmt.min_code();
    if (scaled >= static_cast<double>(fmt.max_code())) return fmt.max_code();
    return static_cast<std::int32_t>(scaled);
}

double dequantize(std::int32_t code, FxpFormat fmt) {
    return std::ldexp(static_cast<double>(code), -fmt.frac_len);
}

double dequantize(Accum acc) {
    return std::ldexp(static_cast<double>(acc.value), -acc.frac_len);
}

Accum mac(Accum acc, std::int32_t a, std::int32_t w) {
    const std::int64_t next = std::int64_t{acc.value} + std::int64_t{a} * std::int64_t{w};
    assert(next >= std::numeric_limits<std::int32_t>::min() &&
           next <= std::numeric_limits<std::int32_t>::max() && "accumulator overflow");
    acc.value = static_cast<std::int32_t>(next);
    return acc;
}

Accum align_bias(std::int32_t b, FxpFormat b_fmt, int acc_frac) {
    const int shift = acc_frac - b_fmt.frac_len;
    if (shift < 0) {
        throw FxpError("align_bias: accumulator FL " + std::to_string(acc_frac) +
                       " is below bias FL " + std::to_string(b_fmt.frac_len));
    }
    if (b == 0) return Accum{0, acc_frac};
    const std::int64_t aligned = round_shift(b, -shift);
    if (shift > 31 || aligned < std::numeric_limits<std::int32_t>::min() ||
        aligned > std::numeric_limits<std::int32_t>::max()) {
        throw FxpError("align_bias: bias " + std::to_string(b) + " shifted by " +
                       std::to_string(shift) + " overflows the 32-bit accumulator");
    }
    return Accum{static_cast<std::int32_t>(aligned), acc_frac};
}

std::int32_t requantize(Accum acc, FxpFormat out_fmt) {
    return saturate(round_shift(acc.value, acc.frac_len - out_fmt.frac_len), out_fmt);
}

}  // namespace sqj
