#pragma once

// Dynamic fixed-point arithmetic shared by the reference operators and the
// accelerator model. Every helper here is a pure function on value types.

#include <cstdint>
#include <stdexcept>

namespace sqj {

enum class Rounding { HalfAwayFromZero, HalfToEven };

/// Rounding used by quantize / requantize / average pooling.
inline constexpr Rounding kRounding = Rounding::HalfAwayFromZero;

/// Word length plus fractional length. value = code * 2^-frac_len.
struct FxpFormat {
    int word_len = 8;
    int frac_len = 0;

    constexpr std::int32_t min_code() const {
        return word_len >= 32 ? INT32_MIN : -(std::int32_t{1} << (word_len - 1));
    }
    constexpr std::int32_t max_code() const {
        return word_len >= 32 ? INT32_MAX : (std::int32_t{1} << (word_len - 1)) - 1;
    }
    bool valid() const { return word_len == 8 || word_len == 16 || word_len == 32; }

    friend constexpr bool operator==(const FxpFormat&, const FxpFormat&) = default;
};

/// 32-bit MAC accumulator tagged with its fractional length
/// (input FL + parameter FL).
struct Accum {
    std::int32_t value = 0;
    int frac_len = 0;

    friend constexpr bool operator==(const Accum&, const Accum&) = default;
};

class FxpError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::int32_t quantize(double x, FxpFormat fmt);
double dequantize(std::int32_t code, FxpFormat fmt);
double dequantize(Accum acc);

/// acc.value += a * w. Overflow past 32 bits is a contract violation
/// (asserted in debug builds).
Accum mac(Accum acc, std::int32_t a, std::int32_t w);

/// Initial accumulator holding bias code b shifted to acc_frac.
/// Throws FxpError when acc_frac < bias FL or the aligned value leaves int32.
Accum align_bias(std::int32_t b, FxpFormat b_fmt, int acc_frac);

/// Rescale the accumulator to out_fmt with rounding and saturation.
std::int32_t requantize(Accum acc, FxpFormat out_fmt);

/// Round num/den (den > 0) to an integer under kRounding.
std::int64_t round_div(std::int64_t num, std::int64_t den);

/// Round v * 2^-shift to an integer; shift may be negative (exact left shift,
/// saturating at the int64 range).
std::int64_t round_shift(std::int64_t v, int shift);

constexpr std::int32_t saturate(std::int64_t v, FxpFormat fmt) {
    if (v < fmt.min_code()) return fmt.min_code();
    if (v > fmt.max_code()) return fmt.max_code();
    return static_cast<std::int32_t>(v);
}

constexpr std::int8_t relu_code(std::int8_t c) { return c < 0 ? std::int8_t{0} : c; }

}  // namespace sqj
